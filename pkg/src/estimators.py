"""Kernel and sinc-projection deconvolution density estimators"""

import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd
from scipy import integrate

from .catalog import NoiseModel, SignalModel
from .models import KernelConfig, ProjectionConfig, EstimateMeta, EstimatorKind
from .spectral import (
    FreqGrid,
    SpectrumValues,
    ecf,
    inverse_fourier_grid,
    kernel_K,
    check_overflow,
    row_chunks,
)

logger = logging.getLogger(__name__)

Array = np.ndarray

DEFAULT_X_POINTS = 1024
# default K_n = ceil(K_N_FACTOR * n)
K_N_FACTOR = 1.0
# default xgrid widening, in units of h (or 1/(pi L_m))
SPILL_WIDTHS = 4.0
# default xgrid spacing is at most resolution / POINTS_PER_WIDTH
POINTS_PER_WIDTH = 4.0
MAX_X_POINTS = 1 << 16


@dataclass(frozen=True)
class DensityEstimate:
    """Estimated density values on an x-grid"""
    xgrid: Array
    values: Array
    meta: EstimateMeta

    def mass(self) -> float:
        """Trapezoid integral of the estimate over its grid"""
        return float(integrate.trapezoid(self.values, self.xgrid))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"x": self.xgrid, "ghat": self.values})

    def to_csv(self, path: Optional[Union[str, Path]] = None) -> Optional[str]:
        """CSV with header x,ghat and 17 significant digits"""
        return self.to_frame().to_csv(path, index=False, float_format="%.17g")


def _sample(Y: Array) -> Array:
    y = np.asarray(Y, dtype=float).ravel()
    if y.size == 0:
        raise ValueError("Sample is empty")
    return y


def _oscillation_range(x: Array, y: Array) -> float:
    """Largest |x - Y| over grid and sample"""
    if x.size == 0:
        return 0.0
    return float(max(abs(x.max() - y.min()), abs(x.min() - y.max())))


def default_xgrid(
    signal: Optional[SignalModel],
    spread: float,
    sample: Optional[Array] = None,
    n_x: Optional[int] = None,
    resolution: Optional[float] = None
) -> Array:
    """
    Uniform grid over the signal's window widened by SPILL_WIDTHS * spread.

    Without a signal model the sample range is used instead. When n_x is
    not given the grid has at least DEFAULT_X_POINTS points and spacing at
    most resolution / POINTS_PER_WIDTH (resolution defaults to spread).
    """
    if signal is not None:
        lo, hi = signal.window
    elif sample is not None:
        y = _sample(sample)
        lo, hi = float(y.min()), float(y.max())
    else:
        raise ValueError("default_xgrid needs a signal model or a sample")
    pad = SPILL_WIDTHS * spread
    lo, hi = lo - pad, hi + pad
    if n_x is None:
        step = (resolution or spread) / POINTS_PER_WIDTH
        n_x = max(DEFAULT_X_POINTS, math.ceil((hi - lo) / step) + 1)
        if n_x > MAX_X_POINTS:
            logger.warning(f"xgrid over [{lo:.4g}, {hi:.4g}] capped at {MAX_X_POINTS} points")
            n_x = MAX_X_POINTS
    return np.linspace(lo, hi, n_x)


def default_K_n(n: int) -> int:
    return max(1, math.ceil(K_N_FACTOR * n))


def kernel_grid(Y: Array, h: float, xgrid: Array, n_points: Optional[int] = None) -> FreqGrid:
    """Frequency grid on [-1/h, 1/h] resolving exp(it(x - Y)) over grid and sample"""
    if n_points is not None:
        return FreqGrid(t_max=1.0 / h, n_points=n_points)
    x = np.asarray(xgrid, dtype=float).ravel()
    return FreqGrid.for_range(1.0 / h, _oscillation_range(x, _sample(Y)))


def kernel_spectrum(
    Y: Array,
    h: float,
    noise: NoiseModel,
    grid: FreqGrid
) -> SpectrumValues:
    """ecf_Y(t) / f_eps*(t) on a grid with t_max = 1/h"""
    if not math.isclose(grid.t_max, 1.0 / h, rel_tol=1e-12):
        raise ValueError(f"grid cutoff {grid.t_max} does not match 1/h = {1.0 / h}")
    empirical = ecf(_sample(Y), grid)
    return SpectrumValues(grid=grid, values=empirical.values / noise.cf(grid.nodes))


def kernel_deconv(
    Y: Array,
    cfg: KernelConfig,
    noise: NoiseModel,
    xgrid: Array,
    n_points: Optional[int] = None
) -> DensityEstimate:
    """
    Fourier-cutoff kernel deconvolution estimator.

    Computed in the Fourier domain: ecf_Y(t) 1_{|t|<=1/h} / f_eps*(t),
    inverted onto xgrid. Equal to (1/nh) sum K((x - Y_i)/h).

    Args:
        Y: Contaminated observations
        cfg: Bandwidth
        noise: Known noise model
        xgrid: Evaluation points
        n_points: Frequency grid size (default from the oscillation range)

    Raises:
        ValueError: If the sample is empty
        BandwidthTooSmallError: If the overflow guard trips
    """
    y = _sample(Y)
    x = np.asarray(xgrid, dtype=float).ravel()
    check_overflow(noise, 1.0 / cfg.h, h=cfg.h)
    grid = kernel_grid(y, cfg.h, x, n_points)
    spectrum = kernel_spectrum(y, cfg.h, noise, grid)
    values = inverse_fourier_grid(spectrum, x)
    logger.debug(f"kernel_deconv: n={y.size}, h={cfg.h:.4g}, grid={grid.n_points} nodes")
    meta = EstimateMeta(estimator=EstimatorKind.KERNEL, n=y.size, noise=noise.name, h=cfg.h)
    return DensityEstimate(xgrid=x, values=values, meta=meta)


def direct_kernel_estimate(
    Y: Array,
    h: float,
    noise: NoiseModel,
    xgrid: Array,
    n_points: Optional[int] = None
) -> Array:
    """Convolution form (1/nh) sum K((x - Y_i)/h), kept as an oracle"""
    y = _sample(Y)
    x = np.asarray(xgrid, dtype=float).ravel()
    u = (x[:, None] - y[None, :]) / h
    K = kernel_K(h, noise, u, n_points=n_points)
    return K.sum(axis=1) / (y.size * h)


def _projection_spectrum(
    y: Array,
    L_m: float,
    noise: NoiseModel,
    x_range: float,
    n_points: Optional[int]
) -> SpectrumValues:
    t_max = math.pi * L_m
    check_overflow(noise, t_max, h=1.0 / t_max)
    if n_points is None:
        grid = FreqGrid.for_range(t_max, x_range)
    else:
        grid = FreqGrid(t_max=t_max, n_points=n_points)
    empirical = ecf(y, grid)
    return SpectrumValues(grid=grid, values=empirical.values / noise.cf(grid.nodes))


def projection_coefficients(
    Y: Array,
    L_m: float,
    js: Array,
    noise: NoiseModel,
    n_points: Optional[int] = None
) -> Array:
    """
    Coefficients a_{m,j} = (1/n) sum_i u*_{phi_{m,j}}(Y_i) for several j.

    phi_{m,j}* is (1/sqrt(L_m)) exp(ijx/L_m) on |x| <= pi L_m, so each
    coefficient is an inverse grid transform of ecf/f_eps* at j/L_m.
    """
    if not L_m > 0:
        raise ValueError(f"L_m must be positive, got {L_m}")
    y = _sample(Y)
    points = np.asarray(js, dtype=float).ravel() / L_m
    x_range = float(np.max(np.abs(points))) + float(np.max(np.abs(y)))
    spectrum = _projection_spectrum(y, L_m, noise, x_range, n_points)
    return inverse_fourier_grid(spectrum, points) / math.sqrt(L_m)


def projection_coefficient(
    Y: Array,
    L_m: float,
    j: int,
    noise: NoiseModel,
    n_points: Optional[int] = None
) -> float:
    """Single coefficient a_{m,j}, by quadrature over [-pi L_m, pi L_m]"""
    return float(projection_coefficients(Y, L_m, np.array([j]), noise, n_points)[0])


def sinc_basis(L_m: float, js: Array, xgrid: Array) -> Array:
    """phi_{m,j}(x) = sqrt(L_m) sinc(L_m x - j), rows x, columns j"""
    x = np.asarray(xgrid, dtype=float).ravel()
    j = np.asarray(js, dtype=float).ravel()
    return math.sqrt(L_m) * np.sinc(L_m * x[:, None] - j[None, :])


def synthesize(coefficients: Array, L_m: float, js: Array, xgrid: Array) -> Array:
    """sum_j a_j phi_{m,j}(x) on xgrid"""
    x = np.asarray(xgrid, dtype=float).ravel()
    a = np.asarray(coefficients, dtype=float).ravel()
    out = np.empty(x.size)
    for rows in row_chunks(x.size, a.size):
        out[rows] = sinc_basis(L_m, js, x[rows]) @ a
    return out


def projection_deconv(
    Y: Array,
    cfg: ProjectionConfig,
    noise: NoiseModel,
    xgrid: Array,
    n_points: Optional[int] = None
) -> DensityEstimate:
    """
    Sinc projection estimator sum_{|j|<=K_n} a_{m,j} phi_{m,j}.

    Raises:
        ValueError: If the sample is empty
        BandwidthTooSmallError: If the overflow guard trips at pi L_m
    """
    y = _sample(Y)
    x = np.asarray(xgrid, dtype=float).ravel()
    js = np.arange(-cfg.K_n, cfg.K_n + 1)
    coefficients = projection_coefficients(y, cfg.L_m, js, noise, n_points)
    values = synthesize(coefficients, cfg.L_m, js, x)
    logger.debug(f"projection_deconv: n={y.size}, L_m={cfg.L_m:.4g}, K_n={cfg.K_n}")
    meta = EstimateMeta(
        estimator=EstimatorKind.PROJECTION,
        n=y.size,
        noise=noise.name,
        L_m=cfg.L_m,
        K_n=cfg.K_n
    )
    return DensityEstimate(xgrid=x, values=values, meta=meta)


def clip_nonnegative(estimate: DensityEstimate) -> DensityEstimate:
    """Post-processing: negative values set to zero"""
    return replace(
        estimate,
        values=np.maximum(estimate.values, 0.0),
        meta=estimate.meta.model_copy(update={"clipped": True})
    )


def estimate_density(
    Y: Array,
    estimator: Union[EstimatorKind, str],
    h: float,
    noise: NoiseModel,
    xgrid: Array,
    n_points: Optional[int] = None,
    K_n: Optional[int] = None
) -> DensityEstimate:
    """
    Fit either estimator at bandwidth h.

    The projection estimator uses L_m = 1/(pi h) and K_n = ceil(n) unless
    K_n is given.
    """
    kind = EstimatorKind(estimator)
    if kind == EstimatorKind.KERNEL:
        return kernel_deconv(Y, KernelConfig(h=h), noise, xgrid, n_points=n_points)
    y = _sample(Y)
    cfg = ProjectionConfig(L_m=1.0 / (math.pi * h), K_n=K_n or default_K_n(y.size))
    return projection_deconv(y, cfg, noise, xgrid, n_points=n_points)
