"""Fourier machinery: frequency grids, empirical cf, grid transforms, deconvolution kernel"""

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np
import pandas as pd
from scipy import integrate

from .catalog import NoiseModel

logger = logging.getLogger(__name__)

Array = np.ndarray

# 1/|f_eps*| above this on a cutoff grid is refused
OVERFLOW_GUARD = 1e280
LOG_OVERFLOW_GUARD = math.log(OVERFLOW_GUARD)
SYMMETRY_RTOL = 1e-8
IMAG_RTOL = 1e-8
MIN_POINTS = 256
DEFAULT_MIN_POINTS = 4096
# complex entries per chunk of an outer-product evaluation
CHUNK_ELEMENTS = 1 << 21


class BandwidthTooSmallError(ValueError):
    """Raised when 1/|f_eps*| on the cutoff grid would overflow"""

    def __init__(self, h: float, min_feasible_h: float, noise: str):
        self.h = h
        self.min_feasible_h = min_feasible_h
        self.noise = noise
        super().__init__(
            f"bandwidth_too_small: h={h:.6g} makes 1/|f_eps*| exceed {OVERFLOW_GUARD:.0e} "
            f"for {noise} noise; minimum feasible h is {min_feasible_h:.6g}"
        )


class SpectralSymmetryError(RuntimeError):
    """Hermitian symmetry or real-valuedness violated (upstream bug)"""
    pass


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class FreqGrid:
    """Uniform grid on [-t_max, t_max], symmetric bit for bit"""
    t_max: float
    n_points: int

    def __post_init__(self):
        if not self.t_max > 0:
            raise ValueError(f"t_max must be positive, got {self.t_max}")
        if self.n_points < MIN_POINTS or not _is_power_of_two(self.n_points):
            raise ValueError(
                f"n_points must be a power of two >= {MIN_POINTS}, got {self.n_points}"
            )

    @classmethod
    def for_range(
        cls,
        t_max: float,
        x_range: float,
        min_points: int = DEFAULT_MIN_POINTS
    ) -> "FreqGrid":
        """Smallest power-of-two grid with spacing <= pi / x_range"""
        needed = 2.0 * t_max * max(x_range, 0.0) / math.pi + 1.0
        n_points = max(min_points, MIN_POINTS)
        while n_points < needed:
            n_points *= 2
        return cls(t_max=float(t_max), n_points=n_points)

    @property
    def spacing(self) -> float:
        return 2.0 * self.t_max / (self.n_points - 1)

    @cached_property
    def nodes(self) -> Array:
        positive = self.t_max * np.arange(1, self.n_points, 2) / (self.n_points - 1)
        return np.concatenate([-positive[::-1], positive])

    @cached_property
    def weights(self) -> Array:
        w = np.full(self.n_points, self.spacing)
        w[0] = w[-1] = 0.5 * self.spacing
        return w


@dataclass(frozen=True)
class SpectrumValues:
    """Complex values aligned with the nodes of a FreqGrid"""
    grid: FreqGrid
    values: Array

    def __post_init__(self):
        if np.shape(self.values) != (self.grid.n_points,):
            raise ValueError("spectrum values must align with the grid nodes")

    def symmetry_error(self) -> float:
        """max |v(-t) - conj(v(t))| relative to max |v|"""
        scale = float(np.max(np.abs(self.values))) if self.values.size else 0.0
        if scale == 0.0:
            return 0.0
        return float(np.max(np.abs(self.values[::-1] - np.conj(self.values)))) / scale

    def to_frame(self) -> pd.DataFrame:
        """Debugging dump with columns t, re, im"""
        return pd.DataFrame({
            "t": self.grid.nodes,
            "re": self.values.real,
            "im": self.values.imag
        })


def row_chunks(n_rows: int, n_cols: int):
    step = max(1, CHUNK_ELEMENTS // max(n_cols, 1))
    for start in range(0, n_rows, step):
        yield slice(start, min(start + step, n_rows))


def empirical_cf(sample: Array, t: Array) -> Array:
    """(1/n) sum_j exp(i t Y_j) at arbitrary frequencies, by direct summation"""
    y = np.asarray(sample, dtype=float).ravel()
    if y.size == 0:
        raise ValueError("ecf requires a nonempty sample")
    t = np.asarray(t, dtype=float).ravel()
    out = np.empty(t.size, dtype=complex)
    for rows in row_chunks(t.size, y.size):
        out[rows] = np.exp(1j * np.outer(t[rows], y)).mean(axis=1)
    return out


def ecf(sample: Array, grid: FreqGrid) -> SpectrumValues:
    """
    Empirical characteristic function on the grid nodes.

    Computed on the positive half of the grid; the negative half is its
    conjugate mirror, so Hermitian symmetry is exact.

    Raises:
        ValueError: If the sample is empty
    """
    half = grid.n_points // 2
    positive = empirical_cf(sample, grid.nodes[half:])
    values = np.concatenate([np.conj(positive[::-1]), positive])
    return SpectrumValues(grid=grid, values=values)


def inverse_fourier_grid(spec: SpectrumValues, xgrid: Array) -> Array:
    """
    (1/2pi) * integral of exp(-ixt) spec(t) dt by trapezoid quadrature.

    The imaginary part is asserted to be rounding noise and dropped.

    Raises:
        SpectralSymmetryError: If spec is not Hermitian within SYMMETRY_RTOL or
            the imaginary residue exceeds IMAG_RTOL * (1 + max|result|)
    """
    sym_err = spec.symmetry_error()
    if sym_err > SYMMETRY_RTOL:
        raise SpectralSymmetryError(
            f"spectrum is not Hermitian: relative asymmetry {sym_err:.3e}"
        )
    x = np.asarray(xgrid, dtype=float).ravel()
    t = spec.grid.nodes
    result = np.empty(x.size, dtype=complex)
    for rows in row_chunks(x.size, t.size):
        integrand = np.exp(-1j * np.outer(x[rows], t)) * spec.values
        result[rows] = integrate.trapezoid(integrand, t, axis=1)
    result /= 2.0 * np.pi
    residue = float(np.max(np.abs(result.imag))) if result.size else 0.0
    bound = IMAG_RTOL * (1.0 + (float(np.max(np.abs(result.real))) if result.size else 0.0))
    if residue > bound:
        raise SpectralSymmetryError(
            f"imaginary residue {residue:.3e} exceeds tolerance {bound:.3e}"
        )
    return result.real


def forward_fourier_grid(values: Array, xgrid: Array, tnodes: Array) -> Array:
    """integral of exp(itx) f(x) dx by trapezoid quadrature over xgrid"""
    x = np.asarray(xgrid, dtype=float).ravel()
    f = np.asarray(values).ravel()
    t = np.asarray(tnodes, dtype=float).ravel()
    out = np.empty(t.size, dtype=complex)
    for rows in row_chunks(t.size, x.size):
        out[rows] = integrate.trapezoid(np.exp(1j * np.outer(t[rows], x)) * f, x, axis=1)
    return out


def reciprocal_xgrid(grid: FreqGrid, n_x: int) -> Array:
    """
    n_x + 1 equispaced points covering one period 2pi/dt of the grid transform.

    On this grid the trapezoid forward transform inverts the trapezoid
    inverse transform exactly at frequencies t_0 + p*dt.
    """
    period = 2.0 * np.pi / grid.spacing
    return period * np.arange(n_x + 1) / n_x


def extended_nodes(grid: FreqGrid, count: int) -> Array:
    """Frequencies t_0 + p*dt for p = 0..count-1, continuing past t_max"""
    return grid.nodes[0] + grid.spacing * np.arange(count)


def max_log_inverse_cf(noise: NoiseModel, t_max: float, n_points: int = MIN_POINTS) -> float:
    """max over |t| <= t_max of -log|f_eps*(t)|"""
    t = np.linspace(0.0, t_max, n_points)
    return float(np.max(-noise.log_modulus(t)))


def min_feasible_cutoff_h(noise: NoiseModel, cutoff_scale: float = 1.0) -> float:
    """Smallest h with max 1/|f_eps*(cutoff_scale * u / h)| below the guard"""
    lo, hi = 1e-300, 1e300
    if max_log_inverse_cf(noise, cutoff_scale / hi) >= LOG_OVERFLOW_GUARD:
        return hi
    if max_log_inverse_cf(noise, cutoff_scale / lo) < LOG_OVERFLOW_GUARD:
        return 0.0
    # bisection in log h
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if max_log_inverse_cf(noise, cutoff_scale / mid) >= LOG_OVERFLOW_GUARD:
            lo = mid
        else:
            hi = mid
        if hi / lo < 1.0 + 1e-9:
            break
    return hi


def check_overflow(noise: NoiseModel, t_max: float, h: Optional[float] = None) -> None:
    """
    Overflow guard for dividing by f_eps* on [-t_max, t_max].

    Raises:
        BandwidthTooSmallError: If max 1/|f_eps*| reaches OVERFLOW_GUARD
    """
    if max_log_inverse_cf(noise, t_max) >= LOG_OVERFLOW_GUARD:
        h_eq = h if h is not None else 1.0 / t_max
        min_h = min_feasible_cutoff_h(noise, cutoff_scale=h_eq * t_max)
        raise BandwidthTooSmallError(h=h_eq, min_feasible_h=min_h, noise=noise.name)


def kernel_K(
    h: float,
    noise: NoiseModel,
    xgrid: Array,
    n_points: Optional[int] = None
) -> Array:
    """
    Deconvolution kernel K, the inverse Fourier transform of 1_{|u|<=1} / f_eps*(u/h).

    Args:
        h: Bandwidth
        noise: Noise model providing f_eps*
        xgrid: Points u where K is evaluated
        n_points: Frequency grid size (default from the x range)

    Raises:
        ValueError: If h is not positive
        BandwidthTooSmallError: If 1/|f_eps*(u/h)| overflows the guard
    """
    if not h > 0:
        raise ValueError(f"Bandwidth must be positive, got {h}")
    check_overflow(noise, 1.0 / h, h=h)
    u = np.asarray(xgrid, dtype=float)
    if n_points is None:
        grid = FreqGrid.for_range(1.0, float(np.max(np.abs(u))) if u.size else 0.0)
    else:
        grid = FreqGrid(t_max=1.0, n_points=n_points)
    spectrum = SpectrumValues(grid=grid, values=1.0 / noise.cf(grid.nodes / h))
    return inverse_fourier_grid(spectrum, u.ravel()).reshape(u.shape)
