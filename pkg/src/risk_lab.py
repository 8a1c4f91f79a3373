"""Monte Carlo MISE/MSE experiments and log-log rate regression"""

import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy import integrate, stats

from .catalog import (
    NoiseModel,
    SignalModel,
    sample_pair,
    noise_from_descriptor,
    signal_from_descriptor,
)
from .estimators import DensityEstimate, default_xgrid, estimate_density
from .models import (
    BandwidthKind,
    EstimatorKind,
    ExperimentDocument,
    LogLogFit,
    ProblemParams,
    RegimeCell,
    RiskKind,
    RiskRow,
    RiskSummary,
)
from .rates import (
    classify_regime,
    optimal_bandwidth,
    projection_resolution,
    rate_log_factor,
    rate_power_exponent,
    theoretical_rate,
)
from .spectral import check_overflow

logger = logging.getLogger(__name__)

Array = np.ndarray

REPORT_COLUMNS = ["n", "h_used", "risk_mean", "risk_stderr", "theoretical_rate"]


class GridCoverageError(ValueError):
    """Estimate grid does not cover the truth's window"""
    pass


@dataclass(frozen=True)
class BandwidthRule:
    """Maps a sample size to the bandwidth used at that size"""
    kind: str
    h_star: Callable[[int], float]


def numeric_rule(params: ProblemParams) -> BandwidthRule:
    return BandwidthRule("numeric", lambda n: optimal_bandwidth(n, params, BandwidthKind.NUMERIC))


def asymptotic_rule(params: ProblemParams) -> BandwidthRule:
    return BandwidthRule("asymptotic", lambda n: optimal_bandwidth(n, params, BandwidthKind.ASYMPTOTIC))


def fixed_rule(h: float) -> BandwidthRule:
    if not h > 0:
        raise ValueError(f"Bandwidth must be positive, got {h}")
    return BandwidthRule("fixed", lambda n: float(h))


def default_threads() -> int:
    """Worker cap from DECONV_THREADS, else the CPU count"""
    value = os.getenv("DECONV_THREADS")
    if value:
        threads = int(value)
        if threads < 1:
            raise ValueError(f"DECONV_THREADS must be at least 1, got {value}")
        return threads
    return os.cpu_count() or 1


@dataclass(frozen=True)
class ExperimentConfig:
    """One n-sweep of Monte Carlo replications"""
    signal: SignalModel
    noise: NoiseModel
    estimator: EstimatorKind
    bandwidth_rule: BandwidthRule
    n_grid: Sequence[int]
    reps: int
    seed: int
    risk_kind: RiskKind = RiskKind.MISE
    mse_point: float = 0.0
    x_points: Optional[int] = None
    xgrid: Optional[Array] = None
    n_points: Optional[int] = None

    def __post_init__(self):
        if self.reps < 2:
            raise ValueError(f"reps must be at least 2, got {self.reps}")
        grid = list(self.n_grid)
        if len(grid) < 3:
            raise ValueError("n_grid needs at least 3 sample sizes for the slope fit")
        if any(n < 3 for n in grid):
            raise ValueError("sample sizes must be at least 3")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("n_grid must be strictly increasing")

    @property
    def params(self) -> ProblemParams:
        return ProblemParams(
            signal=self.signal.smoothness,
            noise=self.noise.smoothness,
            risk_kind=self.risk_kind
        )

    @classmethod
    def from_document(cls, doc: ExperimentDocument) -> "ExperimentConfig":
        """Resolve catalog models and the bandwidth rule of a JSON document"""
        signal = signal_from_descriptor(doc.signal)
        noise = noise_from_descriptor(doc.noise)
        params = ProblemParams(
            signal=signal.smoothness, noise=noise.smoothness, risk_kind=doc.risk_kind
        )
        if doc.bandwidth == BandwidthKind.NUMERIC:
            rule = numeric_rule(params)
        elif doc.bandwidth == BandwidthKind.ASYMPTOTIC:
            rule = asymptotic_rule(params)
        else:
            rule = fixed_rule(float(doc.bandwidth))
        return cls(
            signal=signal,
            noise=noise,
            estimator=doc.estimator,
            bandwidth_rule=rule,
            n_grid=tuple(doc.n_grid),
            reps=doc.reps,
            seed=doc.seed,
            risk_kind=doc.risk_kind,
            mse_point=doc.mse_point,
            x_points=doc.x_points,
            n_points=doc.n_points
        )


@dataclass
class RiskReport:
    """Empirical risk per sample size and its fit against the theoretical rate"""
    rows: List[RiskRow]
    fit: LogLogFit
    regime: RegimeCell
    risk_kind: RiskKind
    power_fit: Optional[LogLogFit] = None
    expected_power_slope: Optional[float] = None
    runtime_seconds: float = field(default=0.0, compare=False)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([row.model_dump() for row in self.rows], columns=REPORT_COLUMNS)

    def to_csv(self, path: Optional[Union[str, Path]] = None) -> Optional[str]:
        """One row per n; full precision so the file re-parses exactly"""
        return self.to_frame().to_csv(path, index=False, float_format="%.17g")

    def summary(self) -> RiskSummary:
        return RiskSummary(
            slope=self.fit.slope,
            intercept=self.fit.intercept,
            r_squared=self.fit.r_squared,
            regime=self.regime,
            power_slope=self.power_fit.slope if self.power_fit else None,
            expected_power_slope=self.expected_power_slope
        )

    def summary_json(self) -> str:
        return json.dumps(self.summary().model_dump(mode="json"), indent=2, sort_keys=True)


def _check_coverage(xgrid: Array, truth: SignalModel) -> None:
    lo, hi = truth.window
    if xgrid.size < 2 or xgrid.min() > lo or xgrid.max() < hi:
        raise GridCoverageError(
            f"estimate grid [{xgrid.min():.4g}, {xgrid.max():.4g}] does not cover "
            f"the window [{lo:.4g}, {hi:.4g}] of {truth.name}"
        )


def ise(estimate: DensityEstimate, truth: SignalModel) -> float:
    """
    Integrated squared error over the estimate's own grid.

    Raises:
        GridCoverageError: If the grid does not cover truth.window
    """
    x = np.asarray(estimate.xgrid, dtype=float)
    _check_coverage(x, truth)
    return float(integrate.trapezoid((estimate.values - truth.density(x)) ** 2, x))


def squared_error_at(estimate: DensityEstimate, truth: SignalModel, x0: float) -> float:
    """|g_hat(x0) - g(x0)|^2, with x0 one of the estimate's grid points"""
    x = np.asarray(estimate.xgrid, dtype=float)
    hits = np.flatnonzero(x == x0)
    if hits.size == 0:
        raise ValueError(f"x0={x0} is not a point of the estimate grid")
    diff = estimate.values[hits[0]] - float(truth.density(np.array([x0]))[0])
    return float(diff ** 2)


def fit_loglog(xs: Sequence[float], ys: Sequence[float]) -> LogLogFit:
    """
    Ordinary least squares of ln y on ln x.

    Raises:
        ValueError: If any entry is nonpositive or fewer than 3 points are given
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.size < 3:
        raise ValueError("fit_loglog needs two vectors of equal length >= 3")
    if np.any(x <= 0) or np.any(y <= 0) or not np.all(np.isfinite(x * y)):
        raise ValueError("fit_loglog needs finite positive entries")
    result = stats.linregress(np.log(x), np.log(y))
    return LogLogFit(
        slope=float(result.slope),
        intercept=float(result.intercept),
        r_squared=float(result.rvalue ** 2)
    )


def replication_seed(seed: int, n: int, rep: int) -> tuple:
    """Entropy of one replication; independent of scheduling"""
    return (int(seed), int(n), int(rep))


def _replicate(cfg: ExperimentConfig, n: int, h: float, rep: int, xgrid: Array) -> float:
    pair = sample_pair(cfg.signal, cfg.noise, n, replication_seed(cfg.seed, n, rep))
    estimate = estimate_density(pair.Y, cfg.estimator, h, cfg.noise, xgrid, n_points=cfg.n_points)
    if cfg.risk_kind == RiskKind.MISE:
        return ise(estimate, cfg.signal)
    return squared_error_at(estimate, cfg.signal, cfg.mse_point)


def _experiment_xgrid(cfg: ExperimentConfig, bandwidths: Sequence[float]) -> Array:
    if cfg.risk_kind == RiskKind.MSE:
        return np.array([float(cfg.mse_point)])
    if cfg.xgrid is not None:
        return np.asarray(cfg.xgrid, dtype=float)
    return default_xgrid(cfg.signal, max(bandwidths), n_x=cfg.x_points, resolution=min(bandwidths))


def run_experiment(cfg: ExperimentConfig, threads: Optional[int] = None) -> RiskReport:
    """
    Monte Carlo risk of one estimator across the n-grid.

    Replications run on a thread pool; each draws from its own
    (seed, n, rep) stream and results are reduced in rep order, so the
    report does not depend on the worker count.

    Args:
        cfg: Experiment configuration
        threads: Worker cap (default DECONV_THREADS or the CPU count)

    Returns:
        RiskReport with per-n rows, the fit of ln(risk) on ln(rate) and the
        power-part fit against n

    Raises:
        BandwidthTooSmallError: If any h_star(n) trips the overflow guard
        ValueError: If a replication produces a non-finite risk
    """
    start_time = time.time()
    params = cfg.params
    regime = classify_regime(params)
    bandwidths = [float(cfg.bandwidth_rule.h_star(n)) for n in cfg.n_grid]
    for h in bandwidths:
        check_overflow(cfg.noise, 1.0 / h, h=h)
    if cfg.estimator == EstimatorKind.PROJECTION:
        logger.info(f"projection resolutions L_m: {[round(projection_resolution(h), 4) for h in bandwidths]}")
    xgrid = _experiment_xgrid(cfg, bandwidths)
    workers = min(threads or default_threads(), cfg.reps)

    logger.info(
        f"Experiment: {cfg.estimator.value} estimator, {cfg.signal.name} signal, "
        f"{cfg.noise.name} noise, {cfg.risk_kind.value}, reps={cfg.reps}, workers={workers}"
    )
    rows: List[RiskRow] = []
    with ThreadPoolExecutor(max_workers=workers) as executor:
        for n, h in zip(cfg.n_grid, bandwidths):
            risks = np.fromiter(
                executor.map(lambda rep: _replicate(cfg, n, h, rep, xgrid), range(cfg.reps)),
                dtype=float,
                count=cfg.reps
            )
            if not np.all(np.isfinite(risks)):
                raise ValueError(f"degenerate replication at n={n}: non-finite risk")
            row = RiskRow(
                n=int(n),
                h_used=h,
                risk_mean=float(risks.mean()),
                risk_stderr=float(risks.std(ddof=1) / np.sqrt(cfg.reps)),
                theoretical_rate=theoretical_rate(n, params)
            )
            logger.info(f"n={n}: h={h:.4g}, risk={row.risk_mean:.4g} +/- {row.risk_stderr:.2g}")
            rows.append(row)

    n_values = [row.n for row in rows]
    means = [row.risk_mean for row in rows]
    fit = fit_loglog([row.theoretical_rate for row in rows], means)
    log_factors = [rate_log_factor(n, params, regime) for n in n_values]
    power_fit = fit_loglog(n_values, [m / f for m, f in zip(means, log_factors)])
    runtime = time.time() - start_time
    logger.info(f"Experiment finished in {runtime:.1f}s: slope vs rate {fit.slope:.3f}, power slope {power_fit.slope:.3f}")

    return RiskReport(
        rows=rows,
        fit=fit,
        regime=regime.cell,
        risk_kind=cfg.risk_kind,
        power_fit=power_fit,
        expected_power_slope=rate_power_exponent(params, regime),
        runtime_seconds=runtime
    )
