"""Risk bounds, rate regimes, coefficient recursions and optimal bandwidths"""

import logging
import math
from fractions import Fraction
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy import optimize

from .models import ProblemParams, RiskKind, RegimeCell, BandwidthKind

logger = logging.getLogger(__name__)

Number = Union[float, Fraction]

# log-spaced grid scanned before golden-section refinement
GRID_SIZE = 2000
BRACKET_HI = 10.0
BRUTE_FORCE_POINTS = 100_000
# floats this close to a small-denominator rational are treated as that rational
RATIONAL_MAX_DENOMINATOR = 10 ** 6


class NoAsymptoticFormulaError(ValueError):
    """The regime has no closed-form bandwidth"""
    pass


class Regime(BaseModel):
    """Rate cell of (r, s) with its exponents and recursion coefficients"""
    cell: RegimeCell
    r: float = Field(..., ge=0, description="Effective signal exponent")
    s: float = Field(..., ge=0, description="Effective noise exponent")
    k: Optional[int] = Field(None, ge=0, description="Interval index of lambda or mu")
    lambda_or_mu: Optional[float] = Field(None, gt=0, lt=1)
    xi: Optional[float] = Field(None, description="Log exponent (Equal only)")
    coeffs: List[float] = Field(default_factory=list, description="b_0..b_k or d_0..d_k")

    model_config = {"frozen": True}

    @model_validator(mode="after")
    def validate_interval(self) -> "Regime":
        """k/(k+1) < lambda <= (k+1)/(k+2) for the unequal supersmooth cells"""
        if self.cell in (RegimeCell.BIAS_DOMINANT, RegimeCell.VARIANCE_DOMINANT):
            if self.k is None or self.lambda_or_mu is None:
                raise ValueError(f"{self.cell.value} needs k and lambda_or_mu")
            if len(self.coeffs) != self.k + 1:
                raise ValueError("coefficient vector must have k + 1 entries")
        elif self.coeffs:
            raise ValueError(f"{self.cell.value} carries no coefficients")
        return self


def alpha(params: ProblemParams) -> float:
    """Exponent of h in exp(2b/h^s + 2a/h^r) h^alpha = O(n)"""
    sig, noi = params.signal, params.noise
    if params.risk_kind == RiskKind.MISE:
        return sig.r - 2 * sig.delta - 2 * noi.gamma - 1
    return -2 * sig.delta - 2 * noi.gamma + max(noi.s - 1, 0.0)


def _check_n(n: float, minimum: float = 1) -> None:
    if n < minimum:
        raise ValueError(f"n must be at least {minimum}, got {n}")


def log_risk_bound(h, n: float, params: ProblemParams):
    """Natural log of risk_bound, vectorized over h"""
    h = np.asarray(h, dtype=float)
    sig, noi = params.signal, params.noise
    log_h = np.log(h)
    exp_bias = -2.0 * sig.a / h ** sig.r
    exp_var = 2.0 * noi.b / h ** noi.s
    if params.risk_kind == RiskKind.MISE:
        log_bias = 2 * sig.delta * log_h + exp_bias
        log_var = (noi.s - 1 - 2 * noi.gamma) * log_h + exp_var - math.log(n)
    else:
        log_bias = (2 * sig.delta + sig.r - 1) * log_h + exp_bias
        log_var = (
            np.minimum(0.0, (noi.s - 1) * log_h)
            + (noi.s - 1 - 2 * noi.gamma) * log_h
            + exp_var
            - math.log(n)
        )
    return np.logaddexp(log_bias, log_var)


def risk_bound(h: float, n: float, params: ProblemParams) -> float:
    """
    Order of the kernel estimator risk with implicit constant 1.

    MISE: h^{2delta} exp(-2a/h^r) + h^{s-1-2gamma} exp(2b/h^s) / n
    MSE:  h^{2delta+r-1} exp(-2a/h^r) + min(1, h^{s-1}) h^{s-1-2gamma} exp(2b/h^s) / n

    Raises:
        ValueError: If h is not positive or n < 1
    """
    if not h > 0:
        raise ValueError(f"Bandwidth must be positive, got {h}")
    _check_n(n)
    with np.errstate(over="ignore"):
        return float(np.exp(log_risk_bound(h, n, params)))


def risk_bound_projection(L_m: float, n: float, params: ProblemParams) -> float:
    """
    MISE order of the projection estimator:
    L_m^{-2delta} exp(-2a pi^r L_m^r) + L_m^{2gamma+1-s} exp(2b pi^s L_m^s) / n
    """
    if not L_m > 0:
        raise ValueError(f"L_m must be positive, got {L_m}")
    _check_n(n)
    sig, noi = params.signal, params.noise
    log_bias = -2 * sig.delta * math.log(L_m) - 2 * sig.a * (math.pi * L_m) ** sig.r
    log_var = (
        (2 * noi.gamma + 1 - noi.s) * math.log(L_m)
        + 2 * noi.b * (math.pi * L_m) ** noi.s
        - math.log(n)
    )
    with np.errstate(over="ignore"):
        return float(np.exp(np.logaddexp(log_bias, log_var)))


def projection_resolution(h: float) -> float:
    """L_m matching bandwidth h (h^{-1} = pi L_m)"""
    return 1.0 / (math.pi * h)


def as_rational(x: Number) -> Number:
    """Fraction for x when it is a small-denominator rational, else float"""
    if isinstance(x, Fraction):
        return x
    near = Fraction(float(x)).limit_denominator(RATIONAL_MAX_DENOMINATOR)
    if abs(float(near) - float(x)) <= 1e-15 * max(1.0, abs(float(x))):
        return near
    return float(x)


def interval_index(lam: Number) -> int:
    """The k with k/(k+1) < lam <= (k+1)/(k+2), for 0 < lam < 1"""
    q = as_rational(lam)
    if not 0 < q < 1:
        raise ValueError(f"ratio must lie in (0, 1), got {float(q)}")
    # k/(k+1) < q  <=>  k < q/(1-q);  q <= (k+1)/(k+2)  <=>  k >= q/(1-q) - 1
    return math.ceil(q / (1 - q)) - 1


def compositions(total: int, parts: int) -> Iterator[Tuple[int, ...]]:
    """Ordered tuples of `parts` positive integers summing to `total`"""
    if parts == 1:
        if total >= 1:
            yield (total,)
        return
    for first in range(1, total - parts + 2):
        for rest in compositions(total - first, parts - 1):
            yield (first,) + rest


def binomial(lam: Number, j: int) -> Number:
    """lam (lam-1) ... (lam-j+1) / j!"""
    out = Fraction(1) if isinstance(lam, Fraction) else 1.0
    for i in range(j):
        out = out * (lam - i) / (i + 1)
    return out


def expansion_term(coeffs: Sequence[Number], lam: Number, i: int) -> Number:
    """
    sum_j binom(lam, j) sum_{p_1+..+p_j=i} b_{p_1-1}..b_{p_j-1}, by enumeration.

    Entries past the coefficient vector count as 0. Exponential in i; the
    recursion itself uses power_series_terms.
    """
    total = 0
    for j in range(1, i + 1):
        inner = 0
        for parts in compositions(i, j):
            if max(parts) > len(coeffs):
                continue
            term = 1
            for p in parts:
                term = term * coeffs[p - 1]
            inner = inner + term
        total = total + binomial(lam, j) * inner
    return total


def _next_power_term(coeffs: Sequence[Number], lam: Number, series: Sequence[Number], m: int) -> Number:
    # m c_m = sum_j ((lam+1) j - m) a_j c_{m-j} with a_j = coeffs[j-1]
    total = 0
    for j in range(1, min(m, len(coeffs)) + 1):
        total = total + ((lam + 1) * j - m) * coeffs[j - 1] * series[m - j]
    return total / m


def power_series_terms(coeffs: Sequence[Number], lam: Number, order: int) -> List[Number]:
    """
    [x^0..x^order] of (1 + sum_p b_{p-1} x^p)^lam.

    The x^i term equals expansion_term(coeffs, lam, i) for i >= 1.
    """
    one = Fraction(1) if isinstance(lam, Fraction) else 1.0
    series: List[Number] = [one]
    for m in range(1, order + 1):
        series.append(_next_power_term(coeffs, lam, series, m))
    return series


def recursion_weights(lam: Number, k: int) -> List[Number]:
    """
    Weights w_i with b_i = w_i * c^(i+1), c = 2a/(2b)^lam.

    M_i = b_i + c [x^i](1 + sum_p b_{p-1} x^p)^lam, and solving
    M_0 = ... = M_k = 0 in order makes every b_i homogeneous of degree
    i+1 in c, so the recursion runs on the weights alone. Exact when lam
    is rational.
    """
    q = as_rational(lam)
    one = Fraction(1) if isinstance(q, Fraction) else 1.0
    weights: List[Number] = [-one]
    series: List[Number] = [one]
    for m in range(1, k + 1):
        series.append(_next_power_term(weights, q, series, m))
        weights.append(-series[m])
    return weights


def recursion_terms(coeffs: Sequence[float], lam: float, scale: float, order: int) -> List[float]:
    """M_0..M_order for a coefficient vector (b_i beyond the vector are 0), by enumeration"""
    lam = float(lam)
    terms = [(coeffs[0] if coeffs else 0.0) + scale]
    for i in range(1, order + 1):
        b_i = coeffs[i] if i < len(coeffs) else 0.0
        terms.append(b_i + scale * expansion_term(list(coeffs), lam, i))
    return terms


def _check_ratio(value: Number, name: str) -> None:
    if not 0 < float(value) < 1:
        raise ValueError(f"{name} must lie in (0, 1), got {float(value)}")


def _scaled_coefficients(lam: Number, scale: float, k: int) -> List[float]:
    if k < 0:
        raise ValueError(f"k must be nonnegative, got {k}")
    expected = interval_index(lam)
    if k != expected:
        logger.debug(f"recursion order k={k} differs from the interval index {expected}")
    return [float(w) * scale ** (i + 1) for i, w in enumerate(recursion_weights(lam, k))]


def bias_scale(lam: Number, a: float, b: float) -> float:
    """2a / (2b)^lambda"""
    return 2 * a / (2 * b) ** float(lam)


def variance_scale(mu: Number, a: float, b: float) -> float:
    """2b / (2a)^mu"""
    return 2 * b / (2 * a) ** float(mu)


def coeffs_bias_dominant(lam: Number, a: float, b: float, k: int) -> List[float]:
    """
    Coefficients b_0..b_k of the r < s rate.

    b_0 = -2a/(2b)^lambda and each later b_i cancels the (ln n)^{(i+1)lambda-i}
    term left in the bandwidth equation by the earlier ones.

    Raises:
        ValueError: If lambda is outside (0, 1), a < 0 or b <= 0
    """
    _check_ratio(lam, "lambda")
    if a < 0 or not b > 0:
        raise ValueError(f"need a >= 0 and b > 0, got a={a}, b={b}")
    return _scaled_coefficients(lam, bias_scale(lam, a, b), k)


def coeffs_variance_dominant(mu: Number, a: float, b: float, k: int) -> List[float]:
    """
    Coefficients d_0..d_k of the r > s rate, the mirror of coeffs_bias_dominant.

    d_0 = -2b/(2a)^mu; the rate carries exp[-sum d_i (ln n)^{(i+1)mu-i}].

    Raises:
        ValueError: If mu is outside (0, 1), b < 0 or a <= 0
    """
    _check_ratio(mu, "mu")
    if b < 0 or not a > 0:
        raise ValueError(f"need b >= 0 and a > 0, got a={a}, b={b}")
    return _scaled_coefficients(mu, variance_scale(mu, a, b), k)


def effective_exponents(params: ProblemParams) -> Tuple[float, float]:
    """(r, s) with an exponent dropped to 0 when its scale is 0"""
    r = params.signal.r if params.signal.a > 0 else 0.0
    s = params.noise.s if params.noise.b > 0 else 0.0
    return r, s


def regime_cell(r: float, s: float) -> RegimeCell:
    """Cell of the effective exponents (r, s)"""
    if r < 0 or s < 0:
        raise ValueError(f"exponents must be nonnegative, got r={r}, s={s}")
    if r == 0:
        return RegimeCell.ORD_ORD if s == 0 else RegimeCell.ORD_SUPER
    if s == 0:
        return RegimeCell.SUPER_ORD
    if r == s:
        return RegimeCell.EQUAL
    return RegimeCell.BIAS_DOMINANT if r < s else RegimeCell.VARIANCE_DOMINANT


def classify_regime(params: ProblemParams) -> Regime:
    """
    Select the rate cell of (r, s) and fill its exponents and coefficients.

    A supersmooth exponent with zero scale (a = 0 or b = 0) is treated as
    ordinary smooth.
    """
    r, s = effective_exponents(params)
    a, b = params.signal.a, params.noise.b
    delta, gamma = params.signal.delta, params.noise.gamma
    cell = regime_cell(r, s)
    if cell == RegimeCell.EQUAL:
        xi = (2 * delta * b + (s - 2 * gamma - 1) * a) / ((a + b) * s)
        return Regime(cell=cell, r=r, s=s, xi=xi)
    if cell == RegimeCell.BIAS_DOMINANT:
        lam = as_rational(r) / as_rational(s)
        k = interval_index(lam)
        return Regime(
            cell=cell, r=r, s=s, k=k,
            lambda_or_mu=float(lam), coeffs=coeffs_bias_dominant(lam, a, b, k)
        )
    if cell == RegimeCell.VARIANCE_DOMINANT:
        mu = as_rational(s) / as_rational(r)
        k = interval_index(mu)
        return Regime(
            cell=cell, r=r, s=s, k=k,
            lambda_or_mu=float(mu), coeffs=coeffs_variance_dominant(mu, a, b, k)
        )
    return Regime(cell=cell, r=r, s=s)


def has_asymptotic_formula(regime: Regime) -> bool:
    return regime.cell != RegimeCell.ORD_ORD


def asymptotic_bandwidth(
    n: float,
    params: ProblemParams,
    coeffs: Optional[Sequence[float]] = None
) -> float:
    """
    Closed-form h* of the regime.

    Equal:            (2a+2b)^{1/s} (ln n + (alpha/s) ln ln n)^{-1/s}
    BiasDominant:     (2b)^{1/s} [ln n + (alpha/s) ln ln n + sum b_i (ln n)^{(i+1)lambda-i}]^{-1/s}
    VarianceDominant: (2a)^{1/r} [ln n + (alpha/r) ln ln n + sum d_i (ln n)^{(i+1)mu-i}]^{-1/r}
    OrdSuper / SuperOrd are the same forms with the other scale absent.

    Args:
        n: Sample size (>= 3)
        params: Problem parameters
        coeffs: Override of the regime's coefficient vector (e.g. truncated)

    Raises:
        NoAsymptoticFormulaError: For the ordinary/ordinary cell
        ValueError: If the bracketed expansion is not positive at this n
    """
    _check_n(n, 3)
    regime = classify_regime(params)
    if not has_asymptotic_formula(regime):
        raise NoAsymptoticFormulaError("no closed-form bandwidth when r = 0 and s = 0")
    a, b = params.signal.a, params.noise.b
    if regime.cell == RegimeCell.EQUAL:
        power, scale = regime.s, 2 * a + 2 * b
    elif regime.cell in (RegimeCell.ORD_SUPER, RegimeCell.BIAS_DOMINANT):
        power, scale = regime.s, 2 * b
    else:
        power, scale = regime.r, 2 * a
    log_n = math.log(n)
    bracket = log_n + alpha(params) / power * math.log(log_n)
    vector = regime.coeffs if coeffs is None else list(coeffs)
    ratio = regime.lambda_or_mu or 0.0
    for i, c in enumerate(vector):
        bracket += c * log_n ** ((i + 1) * ratio - i)
    if not bracket > 0:
        raise ValueError(f"asymptotic expansion is not positive at n={n:g}")
    return scale ** (1 / power) * bracket ** (-1 / power)


def _bracket(n: float, params: ProblemParams) -> Tuple[float, float]:
    s, b = params.noise.s, params.noise.b
    if s > 0 and b > 0:
        return (2 * b / math.log(n)) ** (1 / s) / 10, BRACKET_HI
    return 1.0 / n, BRACKET_HI


def grid_scan_bandwidth(n: float, params: ProblemParams, points: int = BRUTE_FORCE_POINTS) -> float:
    """Exhaustive log-grid argmin of risk_bound over the bracket"""
    lo, hi = _bracket(n, params)
    log_h = np.linspace(math.log(lo), math.log(hi), points)
    return float(np.exp(log_h[int(np.nanargmin(log_risk_bound(np.exp(log_h), n, params)))]))


def numeric_bandwidth(n: float, params: ProblemParams, grid_size: int = GRID_SIZE) -> float:
    """
    argmin of risk_bound: log-grid scan refined by golden-section search.

    The bracket is widened and the scan retried once if the argmin sits on
    an edge.
    """
    _check_n(n, 3)
    lo, hi = _bracket(n, params)
    for attempt in range(2):
        log_h = np.linspace(math.log(lo), math.log(hi), grid_size)
        values = log_risk_bound(np.exp(log_h), n, params)
        i = int(np.nanargmin(values))
        interior = 0 < i < grid_size - 1
        if interior or attempt == 1:
            break
        logger.warning(f"bandwidth argmin on bracket edge at n={n:g}; widening [{lo:.3g}, {hi:.3g}]")
        lo, hi = lo / 10, hi * 10
    if not interior:
        logger.warning(f"bandwidth argmin still on bracket edge at n={n:g}")
        return float(np.exp(log_h[i]))

    def objective(u: float) -> float:
        return float(log_risk_bound(math.exp(u), n, params))

    best = log_h[i]
    try:
        result = optimize.minimize_scalar(
            objective,
            bracket=(log_h[i - 1], log_h[i], log_h[i + 1]),
            method="golden",
            options={"xtol": 1e-10}
        )
        if objective(result.x) <= values[i]:
            best = result.x
    except ValueError:
        # flat neighbourhood, keep the grid point
        pass
    return float(math.exp(best))


def optimal_bandwidth(
    n: float,
    params: ProblemParams,
    kind: Union[BandwidthKind, str] = BandwidthKind.NUMERIC
) -> float:
    """
    Optimal bandwidth of the kernel estimator.

    Args:
        n: Sample size (>= 3)
        params: Problem parameters
        kind: numeric (risk_bound minimizer) or asymptotic (regime formula)

    Returns:
        h* > 0. For the ordinary/ordinary cell the asymptotic kind falls back
        to the numeric minimizer and logs a warning.
    """
    kind = BandwidthKind(kind)
    if kind == BandwidthKind.NUMERIC:
        return numeric_bandwidth(n, params)
    try:
        return asymptotic_bandwidth(n, params)
    except NoAsymptoticFormulaError:
        logger.warning("no asymptotic bandwidth for r = 0, s = 0; using the numeric minimizer")
        return numeric_bandwidth(n, params)


def verify_equation_residual(h: float, n: float, params: ProblemParams) -> float:
    """ln[exp(2b/h^s + 2a/h^r) h^alpha] - ln n, in log space"""
    if not h > 0:
        raise ValueError(f"Bandwidth must be positive, got {h}")
    sig, noi = params.signal, params.noise
    return (
        2 * noi.b / h ** noi.s
        + 2 * sig.a / h ** sig.r
        + alpha(params) * math.log(h)
        - math.log(n)
    )


def _exp_sum(coeffs: Sequence[float], ratio: float, log_n: float) -> float:
    return sum(c * log_n ** ((i + 1) * ratio - i) for i, c in enumerate(coeffs))


def log_theoretical_rate(n: float, params: ProblemParams, regime: Optional[Regime] = None) -> float:
    """Natural log of theoretical_rate"""
    _check_n(n, 3)
    regime = regime or classify_regime(params)
    sig, noi = params.signal, params.noise
    delta, gamma, a, b = sig.delta, noi.gamma, sig.a, noi.b
    r, s = regime.r, regime.s
    mise = params.risk_kind == RiskKind.MISE
    log_n = math.log(n)
    log_log_n = math.log(log_n)
    cell = regime.cell
    if cell == RegimeCell.ORD_ORD:
        if mise:
            return -2 * delta / (2 * delta + 2 * gamma + 1) * log_n
        return (1 - 2 * delta) / (2 * delta + 2 * gamma) * log_n
    if cell == RegimeCell.ORD_SUPER:
        return (-2 * delta if mise else 1 - 2 * delta) / s * log_log_n
    if cell == RegimeCell.SUPER_ORD:
        return (2 * gamma + 1) / r * log_log_n - log_n
    if cell == RegimeCell.EQUAL:
        log_power = -regime.xi
        if not mise:
            log_power += max(1 - s, 0.0) * b / ((a + b) * s)
        return -a / (a + b) * log_n + log_power * log_log_n
    ratio = regime.lambda_or_mu
    if cell == RegimeCell.BIAS_DOMINANT:
        log_power = (-2 * delta if mise else -2 * delta - r + 1) / s
        return log_power * log_log_n + _exp_sum(regime.coeffs, ratio, log_n)
    numerator = 1 + 2 * gamma - s if mise else 1 + 2 * gamma - s - max(s - 1, 0.0)
    return numerator / r * log_log_n - log_n - _exp_sum(regime.coeffs, ratio, log_n)


def theoretical_rate(n: float, params: ProblemParams) -> float:
    """Theoretical convergence rate of the regime, with implicit constant 1"""
    return math.exp(log_theoretical_rate(n, params))


def rate_power_exponent(params: ProblemParams, regime: Optional[Regime] = None) -> float:
    """Exponent p of the pure power part n^p of the rate (0 for logarithmic cells)"""
    regime = regime or classify_regime(params)
    sig, noi = params.signal, params.noise
    cell = regime.cell
    if cell == RegimeCell.ORD_ORD:
        if params.risk_kind == RiskKind.MISE:
            return -2 * sig.delta / (2 * sig.delta + 2 * noi.gamma + 1)
        return (1 - 2 * sig.delta) / (2 * sig.delta + 2 * noi.gamma)
    if cell == RegimeCell.EQUAL:
        return -sig.a / (sig.a + noi.b)
    if cell in (RegimeCell.SUPER_ORD, RegimeCell.VARIANCE_DOMINANT):
        return -1.0
    return 0.0


def rate_log_factor(n: float, params: ProblemParams, regime: Optional[Regime] = None) -> float:
    """theoretical_rate / n^p: the logarithmic (and exp-of-log) part of the rate"""
    regime = regime or classify_regime(params)
    p = rate_power_exponent(params, regime)
    return math.exp(log_theoretical_rate(n, params, regime) - p * math.log(n))
