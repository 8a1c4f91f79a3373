"""Noise and signal model catalog with exact characteristic functions"""

import logging
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence, Tuple, Dict, Union

import numpy as np
from scipy import integrate, special

from .models import NoiseSmoothness, SignalSmoothness, N1Report, ClassReport, ModelDescriptor

logger = logging.getLogger(__name__)

Array = np.ndarray

# |g*| below this is treated as zero when sizing membership grids
CF_FLOOR = 1e-12
# Mass allowed outside a support hint
SUPPORT_TAIL = 1e-6
# Cauchy estimation window in scale units; g^2 integrates below 1e-7 outside it
CAUCHY_WINDOW = 100.0
# Laplace signal sits just inside the open boundary delta < 3/2
LAPLACE_DELTA_MARGIN = 0.01
# Recorded L is this multiple of the numerically evaluated class integral
L_FACTOR = 10.0
# Membership grids are capped at this many scale units
MEMBERSHIP_CAP = 1e4
MEMBERSHIP_POINTS = 200_001


class ModelCatalogError(ValueError):
    """Unknown catalog name, invalid scale or invalid sample request"""
    pass


@dataclass(frozen=True)
class NoiseModel:
    """Noise distribution with exact cf, log-modulus of the cf, and sampler"""
    name: str
    scale: float
    smoothness: NoiseSmoothness
    cf: Callable[[Array], Array]
    log_modulus: Callable[[Array], Array]
    sampler: Callable[[np.random.Generator, int], Array]
    density: Optional[Callable[[Array], Array]] = None

    @property
    def test_only(self) -> bool:
        return self.smoothness.test_only

    def sample(self, n: int, seed: int) -> Array:
        return self.sampler(np.random.default_rng(seed), n)


@dataclass(frozen=True)
class SignalModel:
    """
    Target density with exact cf, cdf, sampler and class parameters.

    support_hint holds all but SUPPORT_TAIL of the mass. window is the
    narrower range where estimates are drawn and ISE is integrated.
    """
    name: str
    scale: float
    smoothness: SignalSmoothness
    cf: Callable[[Array], Array]
    log_modulus: Callable[[Array], Array]
    density: Callable[[Array], Array]
    sampler: Callable[[np.random.Generator, int], Array]
    support_hint: Tuple[float, float]
    cdf: Callable[[Array], Array]
    window: Tuple[float, float]

    def sample(self, n: int, seed: int) -> Array:
        return self.sampler(np.random.default_rng(seed), n)


@dataclass(frozen=True)
class SamplePair:
    """Contaminated observations Y = X + eps"""
    X: Array
    eps: Array
    Y: Array


def _as_array(t) -> Array:
    return np.asarray(t, dtype=float)


def _gaussian_noise(sigma: float) -> NoiseModel:
    return NoiseModel(
        name="gaussian",
        scale=sigma,
        smoothness=NoiseSmoothness(s=2.0, b=sigma ** 2 / 2, gamma=0.0, k0=1.0, k1=1.0),
        cf=lambda t: np.exp(-0.5 * (sigma * _as_array(t)) ** 2) + 0j,
        log_modulus=lambda t: -0.5 * (sigma * _as_array(t)) ** 2,
        sampler=lambda rng, n: rng.normal(0.0, sigma, n),
        density=lambda x: np.exp(-0.5 * (_as_array(x) / sigma) ** 2) / (sigma * np.sqrt(2 * np.pi))
    )


def _laplace_noise(sigma: float) -> NoiseModel:
    # (t^2+1)/(1+sigma^2 t^2) lies between min(1, sigma^-2) and max(1, sigma^-2)
    k0 = min(1.0, sigma ** -2)
    k1 = max(1.0, sigma ** -2)
    return NoiseModel(
        name="laplace",
        scale=sigma,
        smoothness=NoiseSmoothness(s=0.0, b=0.0, gamma=2.0, k0=k0, k1=k1),
        cf=lambda t: 1.0 / (1.0 + (sigma * _as_array(t)) ** 2) + 0j,
        log_modulus=lambda t: -np.log1p((sigma * _as_array(t)) ** 2),
        sampler=lambda rng, n: rng.laplace(0.0, sigma, n),
        density=lambda x: np.exp(-np.abs(_as_array(x)) / sigma) / (2 * sigma)
    )


def _cauchy_noise(sigma: float) -> NoiseModel:
    return NoiseModel(
        name="cauchy",
        scale=sigma,
        smoothness=NoiseSmoothness(s=1.0, b=sigma, gamma=0.0, k0=1.0, k1=1.0),
        cf=lambda t: np.exp(-sigma * np.abs(_as_array(t))) + 0j,
        log_modulus=lambda t: -sigma * np.abs(_as_array(t)),
        sampler=lambda rng, n: sigma * rng.standard_cauchy(n),
        density=lambda x: sigma / (np.pi * (_as_array(x) ** 2 + sigma ** 2))
    )


def _identity_noise(_scale: float) -> NoiseModel:
    return NoiseModel(
        name="identity",
        scale=1.0,
        smoothness=NoiseSmoothness(s=0.0, b=0.0, gamma=0.0, k0=1.0, k1=1.0, test_only=True),
        cf=lambda t: np.ones_like(_as_array(t)) + 0j,
        log_modulus=lambda t: np.zeros_like(_as_array(t)),
        sampler=lambda rng, n: np.zeros(n),
        density=None
    )


def _mixture_sampler(sigma: float) -> Callable[[np.random.Generator, int], Array]:
    def sampler(rng: np.random.Generator, n: int) -> Array:
        # one row of two uniforms per draw keeps prefixes stable in n
        u = rng.random((n, 2))
        centers = np.where(u[:, 1] < 0.5, -2.0 * sigma, 2.0 * sigma)
        return centers + sigma * special.ndtri(u[:, 0])
    return sampler


def _laplace_cdf(sigma: float) -> Callable[[Array], Array]:
    def cdf(x) -> Array:
        x = _as_array(x)
        half = 0.5 * np.exp(-np.abs(x) / sigma)
        return np.where(x < 0, half, 1.0 - half)
    return cdf


def _signal_parts(name: str, sigma: float) -> Dict[str, object]:
    """Closed forms of the catalog signals"""
    if name == "gaussian":
        return dict(
            r=2.0, a=sigma ** 2 / 2, delta=0.0,
            cf=lambda t: np.exp(-0.5 * (sigma * _as_array(t)) ** 2) + 0j,
            log_modulus=lambda t: -0.5 * (sigma * _as_array(t)) ** 2,
            density=lambda x: np.exp(-0.5 * (_as_array(x) / sigma) ** 2) / (sigma * np.sqrt(2 * np.pi)),
            sampler=lambda rng, n: rng.normal(0.0, sigma, n),
            support_hint=(-5.0 * sigma, 5.0 * sigma),
            cdf=lambda x: special.ndtr(_as_array(x) / sigma),
            window=(-5.0 * sigma, 5.0 * sigma)
        )
    if name == "cauchy":
        half_width = 2.0 * sigma / (np.pi * SUPPORT_TAIL)
        return dict(
            r=1.0, a=sigma, delta=0.0,
            cf=lambda t: np.exp(-sigma * np.abs(_as_array(t))) + 0j,
            log_modulus=lambda t: -sigma * np.abs(_as_array(t)),
            density=lambda x: sigma / (np.pi * (_as_array(x) ** 2 + sigma ** 2)),
            sampler=lambda rng, n: sigma * rng.standard_cauchy(n),
            support_hint=(-half_width, half_width),
            cdf=lambda x: 0.5 + np.arctan(_as_array(x) / sigma) / np.pi,
            window=(-CAUCHY_WINDOW * sigma, CAUCHY_WINDOW * sigma)
        )
    if name == "laplace":
        return dict(
            r=0.0, a=0.0, delta=1.5 - LAPLACE_DELTA_MARGIN,
            cf=lambda t: 1.0 / (1.0 + (sigma * _as_array(t)) ** 2) + 0j,
            log_modulus=lambda t: -np.log1p((sigma * _as_array(t)) ** 2),
            density=lambda x: np.exp(-np.abs(_as_array(x)) / sigma) / (2 * sigma),
            sampler=lambda rng, n: rng.laplace(0.0, sigma, n),
            support_hint=(-14.0 * sigma, 14.0 * sigma),
            cdf=_laplace_cdf(sigma),
            window=(-14.0 * sigma, 14.0 * sigma)
        )
    if name == "gaussian_mixture":
        return dict(
            r=2.0, a=sigma ** 2 / 2, delta=0.0,
            cf=lambda t: np.cos(2 * sigma * _as_array(t)) * np.exp(-0.5 * (sigma * _as_array(t)) ** 2) + 0j,
            log_modulus=lambda t: (
                np.log(np.abs(np.cos(2 * sigma * _as_array(t))) + 1e-300)
                - 0.5 * (sigma * _as_array(t)) ** 2
            ),
            density=lambda x: 0.5 * (
                np.exp(-0.5 * ((_as_array(x) + 2 * sigma) / sigma) ** 2)
                + np.exp(-0.5 * ((_as_array(x) - 2 * sigma) / sigma) ** 2)
            ) / (sigma * np.sqrt(2 * np.pi)),
            sampler=_mixture_sampler(sigma),
            support_hint=(-7.0 * sigma, 7.0 * sigma),
            cdf=lambda x: 0.5 * (
                special.ndtr((_as_array(x) + 2 * sigma) / sigma)
                + special.ndtr((_as_array(x) - 2 * sigma) / sigma)
            ),
            window=(-7.0 * sigma, 7.0 * sigma)
        )
    raise ModelCatalogError(
        f"Unknown signal: {name}. Available: {', '.join(SIGNAL_NAMES)}"
    )


NOISE_FACTORIES: Dict[str, Callable[[float], NoiseModel]] = {
    "gaussian": _gaussian_noise,
    "laplace": _laplace_noise,
    "cauchy": _cauchy_noise,
    "identity": _identity_noise,
}

SIGNAL_NAMES = ("gaussian", "cauchy", "laplace", "gaussian_mixture")


def builtin_noise(name: str, scale: float = 1.0) -> NoiseModel:
    """
    Instantiate a catalog noise model.

    Args:
        name: gaussian, laplace, cauchy or identity
        scale: Scale parameter sigma (ignored for identity)

    Returns:
        NoiseModel with its recorded N1 parameters

    Raises:
        ModelCatalogError: If the name is unknown or the scale is not positive
    """
    key = name.strip().lower()
    if key not in NOISE_FACTORIES:
        raise ModelCatalogError(
            f"Unknown noise: {name}. Available: {', '.join(NOISE_FACTORIES)}"
        )
    if key != "identity" and not scale > 0:
        raise ModelCatalogError(f"Noise scale must be positive, got {scale}")
    return NOISE_FACTORIES[key](float(scale))


def builtin_signal(name: str, scale: float = 1.0) -> SignalModel:
    """
    Instantiate a catalog signal model.

    The recorded class radius L is L_FACTOR times the class integral
    evaluated on the model's membership grid.

    Raises:
        ModelCatalogError: If the name is unknown or the scale is not positive
    """
    key = name.strip().lower()
    if key in SIGNAL_NAMES and not scale > 0:
        raise ModelCatalogError(f"Signal scale must be positive, got {scale}")
    parts = _signal_parts(key, float(scale))
    provisional = SignalSmoothness(delta=parts["delta"], r=parts["r"], a=parts["a"])
    model = SignalModel(
        name=key,
        scale=float(scale),
        smoothness=provisional,
        cf=parts["cf"],
        log_modulus=parts["log_modulus"],
        density=parts["density"],
        sampler=parts["sampler"],
        support_hint=parts["support_hint"],
        cdf=parts["cdf"],
        window=parts["window"]
    )
    integral = class_integral(model, membership_grid(model))
    smoothness = provisional.model_copy(update={"L": L_FACTOR * integral})
    return replace(model, smoothness=smoothness)


def parse_model_spec(text: str) -> Tuple[str, float]:
    """
    Parse the command-line model syntax ``name:scale``.

    A bare name means scale 1.

    Raises:
        ModelCatalogError: If the scale is not a number
    """
    name, _, scale_text = text.partition(":")
    if not scale_text:
        return name.strip().lower(), 1.0
    try:
        return name.strip().lower(), float(scale_text)
    except ValueError as e:
        raise ModelCatalogError(f"Invalid model scale in '{text}'. Expected name:scale") from e


def describe(model: Union[NoiseModel, SignalModel]) -> dict:
    """JSON descriptor {"name", "scale", "smoothness": {...}}"""
    return {
        "name": model.name,
        "scale": model.scale,
        "smoothness": model.smoothness.descriptor()
    }


def noise_from_descriptor(doc: ModelDescriptor) -> NoiseModel:
    """Catalog noise with optional recorded-parameter overrides"""
    model = builtin_noise(doc.name, doc.scale)
    if doc.smoothness:
        merged = {**model.smoothness.model_dump(), **doc.smoothness}
        model = replace(model, smoothness=NoiseSmoothness(**merged))
    return model


def signal_from_descriptor(doc: ModelDescriptor) -> SignalModel:
    """Catalog signal with optional recorded-parameter overrides"""
    model = builtin_signal(doc.name, doc.scale)
    if doc.smoothness:
        merged = {**model.smoothness.model_dump(), **doc.smoothness}
        model = replace(model, smoothness=SignalSmoothness(**merged))
    return model


def n1_envelope_log(smoothness: NoiseSmoothness, t: Array) -> Array:
    """log of (t^2+1)^(-gamma/2) exp(-b|t|^s)"""
    t = _as_array(t)
    return -0.5 * smoothness.gamma * np.log1p(t ** 2) - smoothness.b * np.abs(t) ** smoothness.s


def check_n1_membership(model: NoiseModel, tgrid: Array, rtol: float = 1e-12) -> N1Report:
    """
    Check the N1 sandwich on a frequency grid.

    Ratios |cf| / envelope are formed in log space so Gaussian tails do
    not underflow.

    Args:
        model: Noise model with recorded (s, b, gamma, k0, k1)
        tgrid: Finite, nonempty grid of frequencies

    Returns:
        N1Report with the extreme observed ratios
    """
    t = _as_array(tgrid).ravel()
    if t.size == 0:
        raise ValueError("tgrid must be nonempty")
    log_ratio = model.log_modulus(t) - n1_envelope_log(model.smoothness, t)
    low = float(np.exp(log_ratio.min()))
    high = float(np.exp(log_ratio.max()))
    ok = (
        low >= model.smoothness.k0 * (1 - rtol)
        and high <= model.smoothness.k1 * (1 + rtol)
    )
    if not ok:
        logger.info(
            f"N1 check failed for {model.name}: ratios in [{low:.3g}, {high:.3g}], "
            f"declared [{model.smoothness.k0}, {model.smoothness.k1}]"
        )
    return N1Report(ok=ok, worst_ratio_low=low, worst_ratio_high=high)


def class_integral(model: SignalModel, tgrid: Array) -> float:
    """Trapezoid estimate of the integral of |g*|^2 (t^2+1)^delta exp(2a|t|^r)"""
    t = _as_array(tgrid).ravel()
    sm = model.smoothness
    log_integrand = (
        2.0 * model.log_modulus(t)
        + sm.delta * np.log1p(t ** 2)
        + 2.0 * sm.a * np.abs(t) ** sm.r
    )
    return float(integrate.trapezoid(np.exp(log_integrand), t))


def check_class_membership(model: SignalModel, tgrid: Array) -> ClassReport:
    """
    Check membership in A_{delta,r,a}(L) on a symmetric frequency grid.

    Returns:
        ClassReport with the trapezoid integral and ok iff it is <= L
    """
    estimate = class_integral(model, tgrid)
    ok = bool(np.isfinite(estimate) and estimate <= model.smoothness.L)
    return ClassReport(integral_estimate=estimate, ok=ok)


def membership_grid(model: SignalModel, n_points: int = MEMBERSHIP_POINTS) -> Array:
    """Symmetric grid covering the region where |g*| exceeds CF_FLOOR"""
    cap = MEMBERSHIP_CAP / model.scale
    log_floor = np.log(CF_FLOOR)
    t_cut = 1.0 / model.scale
    while t_cut < cap and model.log_modulus(np.array([t_cut]))[0] > log_floor:
        t_cut *= 2.0
    t_cut = min(t_cut, cap)
    return np.linspace(-t_cut, t_cut, n_points)


def validate_noise(model: NoiseModel, tgrid: Optional[Array] = None) -> bool:
    """
    Validate cf(0) = 1, |cf| <= 1, Hermitian symmetry and cf != 0.

    Returns:
        True if valid, False otherwise
    """
    t = _as_array(tgrid if tgrid is not None else np.linspace(-50.0, 50.0, 2001))
    cf_pos = model.cf(t)
    cf_neg = model.cf(-t)
    if abs(model.cf(np.array([0.0]))[0] - 1.0) > 1e-12:
        return False
    if np.any(np.abs(cf_pos) > 1.0 + 1e-12):
        return False
    if np.any(np.abs(cf_neg - np.conj(cf_pos)) > 1e-12):
        return False
    # zero modulus shows up as -inf in log space
    if not np.all(np.isfinite(model.log_modulus(t))):
        return False
    return True


def validate_signal(model: SignalModel, n_points: int = 200_001) -> bool:
    """
    Validate the density against its cdf.

    The density must be nonnegative over the support hint, the cdf must
    give mass in [1 - 1e-4, 1] to the hint, and quadrature of the density
    over the window must match the cdf increment within 1e-7.

    Returns:
        True if valid, False otherwise
    """
    lo, hi = model.support_hint
    if abs(model.cf(np.array([0.0]))[0] - 1.0) > 1e-12:
        return False
    x = np.linspace(lo, hi, n_points)
    if np.any(model.density(x) < 0):
        return False
    bounds = model.cdf(np.array([lo, hi]))
    mass = float(bounds[1] - bounds[0])
    if not 1.0 - 1e-4 <= mass <= 1.0 + 1e-12:
        logger.info(f"{model.name}: mass {mass:.8f} over the support hint")
        return False
    w_lo, w_hi = model.window
    inside, _ = integrate.quad(model.density, w_lo, w_hi, points=[0.0], limit=500, epsabs=1e-11)
    increment = model.cdf(np.array([w_lo, w_hi]))
    return bool(abs(inside - (increment[1] - increment[0])) <= 1e-7)


def sample_pair(
    signal: SignalModel,
    noise: NoiseModel,
    n: int,
    seed: Union[int, Sequence[int]]
) -> SamplePair:
    """
    Draw Y = X + eps from independent seeded sub-streams.

    The X and eps streams are spawned from one SeedSequence, so a
    larger n extends the same draws. `seed` may be an entropy tuple such
    as (seed, n, rep).

    Raises:
        ModelCatalogError: If n < 1
    """
    if n < 1:
        raise ModelCatalogError(f"Sample size must be at least 1, got {n}")
    x_seq, eps_seq = np.random.SeedSequence(seed).spawn(2)
    X = signal.sampler(np.random.default_rng(x_seq), n)
    eps = noise.sampler(np.random.default_rng(eps_seq), n)
    return SamplePair(X=X, eps=eps, Y=X + eps)
