"""Named acceptance suites run by `verify`"""

import logging
import time
from fractions import Fraction
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np

from .catalog import builtin_noise, builtin_signal, sample_pair
from .estimators import kernel_deconv, projection_deconv
from .models import (
    CriterionResult,
    EstimatorKind,
    KernelConfig,
    ProblemParams,
    ProjectionConfig,
    RegimeCell,
    RiskKind,
)
from .rates import (
    asymptotic_bandwidth,
    classify_regime,
    coeffs_bias_dominant,
    coeffs_variance_dominant,
    grid_scan_bandwidth,
    interval_index,
    numeric_bandwidth,
    regime_cell,
    verify_equation_residual,
)
from .risk_lab import ExperimentConfig, numeric_rule, run_experiment
from .spectral import (
    FreqGrid,
    SpectralSymmetryError,
    extended_nodes,
    forward_fourier_grid,
    reciprocal_xgrid,
)

logger = logging.getLogger(__name__)

Check = Callable[[], Tuple[bool, str]]

RESIDUAL_NS = (1e6, 1e9, 1e12)
RESIDUAL_CONSTANT = 10.0
# (lambda, a, b, k)
BIAS_RECURSION_SETS = [
    (Fraction(2, 5), 1.0, 1.0, 0),
    (Fraction(3, 5), 0.5, 1.0, 1),
    (Fraction(3, 4), 1.0, 0.5, 2),
]
# (mu, a, b, k)
VARIANCE_RECURSION_SETS = [
    (Fraction(1, 2), 1.0, 1.0, 0),
    (Fraction(7, 10), 1.0, 1.0, 1),
]
EQUAL_PARAMS = ProblemParams.from_values(delta=0.0, r=2.0, a=0.5, gamma=0.0, b=0.5, s=2.0)
SANITY_SIGNALS = ("gaussian", "gaussian_mixture", "laplace", "cauchy")
SANITY_NOISES = ("identity", "laplace", "gaussian", "cauchy")


def recursion_params(ratio: Fraction, a: float, b: float, mirrored: bool) -> ProblemParams:
    """
    Parameters realizing a (ratio, a, b) recursion set with alpha = 0 (MISE).

    The smoother exponent is 2 and gamma = 0; delta is chosen so that
    alpha vanishes.
    """
    if mirrored:
        return ProblemParams.from_values(delta=0.5, r=2.0, a=a, gamma=0.0, b=b, s=float(2 * ratio))
    r = float(2 * ratio)
    return ProblemParams.from_values(delta=(r - 1) / 2, r=r, a=a, gamma=0.0, b=b, s=2.0)


def balance_anchor(params: ProblemParams, h: float, ratio: Fraction, mirrored: bool) -> float:
    """
    Leading coefficient read off the balance equation at bandwidth h.

    With u the dominant term (2b/h^s, or 2a/h^r when mirrored), the other
    term equals c u^ratio for every h, and the leading coefficient is -c.
    """
    signal_term = 2 * params.signal.a * h ** -params.signal.r
    noise_term = 2 * params.noise.b * h ** -params.noise.s
    if mirrored:
        return -noise_term / signal_term ** float(ratio)
    return -signal_term / noise_term ** float(ratio)


def _residual_check(sets, mirrored: bool) -> Tuple[bool, str]:
    failures = []
    for ratio, a, b, k in sets:
        params = recursion_params(ratio, a, b, mirrored)
        if mirrored:
            coeffs = coeffs_variance_dominant(ratio, a, b, k)
        else:
            coeffs = coeffs_bias_dominant(ratio, a, b, k)
        for h in (0.3, 1.0):
            anchor = balance_anchor(params, h, ratio, mirrored)
            if not np.isclose(coeffs[0], anchor, rtol=1e-12, atol=0.0):
                failures.append(f"{ratio}: leading coefficient {coeffs[0]!r} != {anchor!r} at h={h}")
        exponent = (k + 2) * float(ratio) - (k + 1)
        for n in RESIDUAL_NS:
            h = asymptotic_bandwidth(n, params, coeffs=coeffs)
            residual = abs(verify_equation_residual(h, n, params))
            bound = RESIDUAL_CONSTANT * np.log(n) ** exponent
            if residual > bound:
                failures.append(f"{ratio}, n={n:.0e}: residual {residual:.3g} > {bound:.3g}")
        n = RESIDUAL_NS[-1]
        full = abs(verify_equation_residual(asymptotic_bandwidth(n, params, coeffs=coeffs), n, params))
        truncated = abs(verify_equation_residual(
            asymptotic_bandwidth(n, params, coeffs=coeffs[:-1]), n, params
        ))
        if not full < truncated:
            failures.append(f"{ratio}: full residual {full:.3g} does not beat truncated {truncated:.3g}")
    if failures:
        return False, "; ".join(failures)
    return True, f"{len(sets)} parameter sets, residuals within bound"


def check_bias_recursion() -> Tuple[bool, str]:
    return _residual_check(BIAS_RECURSION_SETS, mirrored=False)


def check_variance_recursion() -> Tuple[bool, str]:
    return _residual_check(VARIANCE_RECURSION_SETS, mirrored=True)


def check_kernel_projection_equivalence(seed: int = 2024) -> Tuple[bool, str]:
    """Kernel at h = 1/(pi L_m) against the projection estimator, L_m = 2, K_n = 4096"""
    signal = builtin_signal("gaussian", 1.0)
    L_m = 2.0
    h = 1.0 / (np.pi * L_m)
    x = np.linspace(-5.0, 5.0, 201)
    worst = 0.0
    for noise_name in ("identity", "laplace"):
        noise = builtin_noise(noise_name, 1.0)
        Y = sample_pair(signal, noise, 2000, seed).Y
        kernel = kernel_deconv(Y, KernelConfig(h=h), noise, x, n_points=16384)
        projection = projection_deconv(Y, ProjectionConfig(L_m=L_m, K_n=4096), noise, x, n_points=16384)
        worst = max(worst, float(np.max(np.abs(kernel.values - projection.values))))
    return worst <= 1e-3, f"sup difference {worst:.2e}"


def check_fourier_identity(seeds: Sequence[int] = range(5)) -> Tuple[bool, str]:
    """
    Forward transform of the kernel estimate reproduces ecf/f_eps* inside the cutoff, 0 outside.

    The target is summed directly from the sample and the noise's closed-form
    cf; at |t| = 1/h it is the midpoint of the jump.
    """
    signal = builtin_signal("gaussian", 1.0)
    noise = builtin_noise("laplace", 1.0)
    h = 0.5
    grid = FreqGrid(t_max=1.0 / h, n_points=1024)
    n_x = 2 * grid.n_points
    x = reciprocal_xgrid(grid, n_x)
    t = extended_nodes(grid, n_x)
    inside = t[:grid.n_points]
    jump = np.where(np.isclose(np.abs(inside), 1.0 / h, rtol=1e-12), 0.5, 1.0)
    worst = 0.0
    for seed in seeds:
        Y = sample_pair(signal, noise, 500, seed).Y
        estimate = kernel_deconv(Y, KernelConfig(h=h), noise, x, n_points=grid.n_points)
        expected = np.zeros(n_x, dtype=complex)
        direct = np.exp(1j * np.outer(inside, Y)).mean(axis=1)
        expected[:grid.n_points] = jump * direct / noise.cf(inside)
        forward = forward_fourier_grid(estimate.values, x, t)
        worst = max(worst, float(np.max(np.abs(forward - expected))))
    return worst <= 1e-8, f"max deviation {worst:.2e} over {len(seeds)} seeds"


def _rate_reproduction(
    signal_name: str,
    noise_name: str,
    n_grid: Sequence[int],
    tolerance: float,
    reps: int,
    seed: int
) -> Tuple[bool, str]:
    signal = builtin_signal(signal_name, 1.0)
    noise = builtin_noise(noise_name, 1.0)
    params = ProblemParams(signal=signal.smoothness, noise=noise.smoothness)
    cfg = ExperimentConfig(
        signal=signal,
        noise=noise,
        estimator=EstimatorKind.KERNEL,
        bandwidth_rule=numeric_rule(params),
        n_grid=tuple(n_grid),
        reps=reps,
        seed=seed
    )
    report = run_experiment(cfg)
    slope = report.power_fit.slope
    expected = report.expected_power_slope
    return abs(slope - expected) <= tolerance, f"slope {slope:.3f}, expected {expected:.3f} +/- {tolerance}"


def check_ordinary_rate(reps: int = 100, seed: int = 5) -> Tuple[bool, str]:
    return _rate_reproduction("laplace", "laplace", (250, 500, 1000, 2000, 4000), 0.15, reps, seed)


def check_equal_rate(reps: int = 100, seed: int = 6) -> Tuple[bool, str]:
    return _rate_reproduction("gaussian", "gaussian", (500, 1000, 2000, 4000, 8000), 0.2, reps, seed)


def _cell_predicates(r: float, s: float) -> List[bool]:
    return [
        r == 0 and s == 0,
        r == 0 and s > 0,
        r > 0 and s == 0,
        r == s > 0,
        0 < r < s,
        r > s > 0,
    ]


CELL_ORDER = [
    RegimeCell.ORD_ORD,
    RegimeCell.ORD_SUPER,
    RegimeCell.SUPER_ORD,
    RegimeCell.EQUAL,
    RegimeCell.BIAS_DOMINANT,
    RegimeCell.VARIANCE_DOMINANT,
]


def check_regime_partition(pairs: int = 10_000, seed: int = 7) -> Tuple[bool, str]:
    """Random (r, s) land in exactly one cell; interval boundaries map to the right k"""
    rng = np.random.default_rng(seed)
    rs = rng.uniform(0.0, 5.0, size=(pairs, 2))
    # exact zeros and ties so every cell is visited
    quarter = pairs // 4
    rs[:quarter // 3, 0] = 0.0
    rs[quarter // 3:2 * (quarter // 3), 1] = 0.0
    rs[2 * (quarter // 3):quarter, 1] = rs[2 * (quarter // 3):quarter, 0]
    rs[:quarter // 6] = 0.0
    failures = 0
    for r, s in rs:
        r, s = float(r), float(s)
        hits = _cell_predicates(r, s)
        if sum(hits) != 1 or CELL_ORDER[hits.index(True)] != regime_cell(r, s):
            failures += 1
            continue
        if 0 < r != s > 0:
            ratio = min(r, s) / max(r, s)
            k = interval_index(ratio)
            if not k / (k + 1) < ratio <= (k + 1) / (k + 2):
                failures += 1
    boundary = {Fraction(1, 2): 0, Fraction(2, 3): 1, Fraction(3, 4): 2}
    for lam, k in boundary.items():
        if interval_index(lam) != k:
            failures += 1
        params = ProblemParams.from_values(
            delta=1.0, r=float(lam.numerator), a=1.0, gamma=1.0, b=1.0, s=float(lam.denominator)
        )
        if classify_regime(params).k != k:
            failures += 1
    if interval_index(0.5 + 1e-9) != 1:
        failures += 1
    return failures == 0, f"{pairs} pairs, {failures} failures"


def check_estimator_sanity(n: int = 1000, seed: int = 11) -> Tuple[bool, str]:
    """Mass, imaginary residue, shift equivariance and sample linearity over the catalog matrix"""
    h = 0.5
    x = np.linspace(-8.0, 8.0, 201)
    shift = 1.75
    problems = []
    for signal_name in SANITY_SIGNALS:
        signal = builtin_signal(signal_name, 1.0)
        for noise_name in SANITY_NOISES:
            noise = builtin_noise(noise_name, 1.0)
            label = f"{signal_name}/{noise_name}"
            Y = sample_pair(signal, noise, n, seed).Y
            cfg = KernelConfig(h=h)
            # heavy tails leave observations far out; their mass stays with them
            half_width = 250.0 if "cauchy" in (signal_name, noise_name) else 60.0
            wide = np.linspace(-half_width, half_width, int(2 * half_width / 0.05) + 1)
            try:
                mass = kernel_deconv(Y, cfg, noise, wide, n_points=4096).mass()
                base = kernel_deconv(Y, cfg, noise, x, n_points=1024).values
                shifted = kernel_deconv(Y + shift, cfg, noise, x + shift, n_points=1024).values
                first = kernel_deconv(Y[: n // 3], cfg, noise, x, n_points=1024).values
                rest = kernel_deconv(Y[n // 3:], cfg, noise, x, n_points=1024).values
            except SpectralSymmetryError as e:
                problems.append(f"{label}: {e}")
                continue
            pooled = ((n // 3) * first + (n - n // 3) * rest) / n
            if not 0.98 <= mass <= 1.02:
                problems.append(f"{label}: mass {mass:.4f}")
            if np.max(np.abs(shifted - base)) > 1e-8:
                problems.append(f"{label}: shift error {np.max(np.abs(shifted - base)):.2e}")
            if np.max(np.abs(pooled - base)) > 1e-10:
                problems.append(f"{label}: linearity error {np.max(np.abs(pooled - base)):.2e}")
    if problems:
        return False, "; ".join(problems)
    return True, f"{len(SANITY_SIGNALS) * len(SANITY_NOISES)} signal/noise pairs"


def check_bandwidth_coherence() -> Tuple[bool, str]:
    """Numeric/asymptotic ratio at n = 1e8 and numeric argmin against a 1e5-point scan"""
    problems = []
    for risk in RiskKind:
        params = EQUAL_PARAMS.with_risk(risk)
        ratio = numeric_bandwidth(1e8, params) / asymptotic_bandwidth(1e8, params)
        if not 0.8 <= ratio <= 1.25:
            problems.append(f"{risk.value}: ratio {ratio:.3f}")
        for n in (1e4, 1e8):
            numeric = numeric_bandwidth(n, params)
            scanned = grid_scan_bandwidth(n, params)
            if abs(numeric / scanned - 1) > 0.01:
                problems.append(f"{risk.value}, n={n:.0e}: numeric {numeric:.5g} vs scan {scanned:.5g}")
    if problems:
        return False, "; ".join(problems)
    return True, "ratios in [0.8, 1.25], scans within 1%"


CRITERIA: Dict[str, Check] = {
    "bias_recursion": check_bias_recursion,
    "variance_recursion": check_variance_recursion,
    "kernel_projection_equivalence": check_kernel_projection_equivalence,
    "fourier_identity": check_fourier_identity,
    "ordinary_rate": check_ordinary_rate,
    "equal_rate": check_equal_rate,
    "regime_partition": check_regime_partition,
    "estimator_sanity": check_estimator_sanity,
    "bandwidth_coherence": check_bandwidth_coherence,
}

SLOW_CRITERIA = ("ordinary_rate", "equal_rate")

SUITES: Dict[str, List[str]] = {
    "recursion": ["bias_recursion", "variance_recursion"],
    "estimators": ["kernel_projection_equivalence", "fourier_identity", "estimator_sanity"],
    "rates": ["bias_recursion", "variance_recursion", "regime_partition", "bandwidth_coherence"],
    "mc": list(SLOW_CRITERIA),
    "fast": [name for name in CRITERIA if name not in SLOW_CRITERIA],
    "all": list(CRITERIA),
}
SUITES.update({name: [name] for name in CRITERIA})


def run_suite(suite: str) -> List[CriterionResult]:
    """
    Run every criterion of a named suite.

    A criterion that raises is reported as failed with the exception text.

    Raises:
        ValueError: If the suite name is unknown
    """
    if suite not in SUITES:
        raise ValueError(f"Unknown suite: {suite}. Available: {', '.join(SUITES)}")
    results = []
    for name in SUITES[suite]:
        start = time.time()
        try:
            passed, detail = CRITERIA[name]()
        except Exception as e:
            logger.exception(f"criterion {name} raised")
            passed, detail = False, f"{type(e).__name__}: {e}"
        elapsed = time.time() - start
        logger.info(f"{name}: {'PASS' if passed else 'FAIL'} ({elapsed:.2f}s) {detail}")
        results.append(CriterionResult(name=name, passed=passed, detail=detail, seconds=elapsed))
    return results
