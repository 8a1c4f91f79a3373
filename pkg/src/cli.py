"""Command-line entry point: python -m src.cli <subcommand>"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from . import __version__
from .acceptance import SUITES, run_suite
from .catalog import (
    NOISE_FACTORIES,
    SIGNAL_NAMES,
    builtin_noise,
    builtin_signal,
    describe,
    parse_model_spec,
    sample_pair,
)
from .estimators import (
    DEFAULT_X_POINTS,
    clip_nonnegative,
    default_xgrid,
    estimate_density,
    kernel_grid,
    kernel_spectrum,
)
from .models import BandwidthKind, EstimatorKind, ExperimentDocument, ProblemParams, RiskKind
from .rates import classify_regime, has_asymptotic_formula, optimal_bandwidth, theoretical_rate
from .risk_lab import ExperimentConfig, run_experiment
from .spectral import BandwidthTooSmallError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ACCEPTANCE_FAILED = 1
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3

FLOAT_FORMAT = "%.17g"
PARAM_KEYS = ("delta", "r", "a", "gamma", "b", "s")


def _load_config(path: Optional[str]) -> Dict[str, Any]:
    if not path:
        return {}
    with open(path) as f:
        doc = json.load(f)
    if not isinstance(doc, dict):
        raise ValueError(f"config file {path} must hold a JSON object")
    return doc


def _overlay(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    """Inline flags (non-None) take precedence over file config"""
    merged = dict(base)
    merged.update({key: value for key, value in overrides.items() if value is not None})
    return merged


def _env_seed() -> Optional[int]:
    value = os.getenv("DECONV_SEED")
    return int(value) if value else None


def _sample_size(text: str) -> float:
    """Counts may be written as 1e5"""
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"sample size must be positive, got {text}")
    return value


def _write_frame(frame: pd.DataFrame, output: Optional[str], fmt: str = "csv") -> None:
    target = output if output else sys.stdout
    if fmt == "json":
        text = frame.to_json(orient="records", double_precision=15)
        if output:
            Path(output).write_text(text + "\n")
        else:
            sys.stdout.write(text + "\n")
        return
    frame.to_csv(target, index=False, float_format=FLOAT_FORMAT)


def _write_json(doc: Dict[str, Any], path: str) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _params_from_args(args: argparse.Namespace) -> ProblemParams:
    doc = _overlay(
        _load_config(args.config),
        {**{key: getattr(args, key) for key in PARAM_KEYS}, "risk_kind": args.risk}
    )
    missing = [key for key in ("delta", "gamma") if doc.get(key) is None]
    if missing:
        raise ValueError(f"missing class parameters: {', '.join(missing)}")
    return ProblemParams.from_values(
        delta=doc["delta"],
        r=doc.get("r", 0.0),
        a=doc.get("a", 0.0),
        gamma=doc["gamma"],
        b=doc.get("b", 0.0),
        s=doc.get("s", 0.0),
        risk_kind=doc.get("risk_kind", RiskKind.MISE)
    )


def _regime_columns(params: ProblemParams) -> Dict[str, Any]:
    regime = classify_regime(params)
    columns: Dict[str, Any] = {"regime": regime.cell.value, "k": regime.k}
    for i, c in enumerate(regime.coeffs):
        columns[f"coeff_{i}"] = c
    return columns


def cmd_models(args: argparse.Namespace) -> int:
    """List catalog models with their recorded smoothness parameters"""
    rows = []
    for name in NOISE_FACTORIES:
        rows.append({"kind": "noise", **describe(builtin_noise(name, args.scale))})
    for name in SIGNAL_NAMES:
        rows.append({"kind": "signal", **describe(builtin_signal(name, args.scale))})
    if args.format == "json":
        text = json.dumps(rows, indent=2)
        if args.output:
            Path(args.output).write_text(text + "\n")
        else:
            print(text)
        return EXIT_OK
    flat = [{"kind": row["kind"], "name": row["name"], "scale": row["scale"], **row["smoothness"]} for row in rows]
    _write_frame(pd.DataFrame(flat), args.output)
    return EXIT_OK


ESTIMATE_KEYS = (
    "noise", "signal", "input", "simulate", "n", "seed", "estimator", "h", "bandwidth_kind",
    "K_n", "x_min", "x_max", "x_points", "clip_nonnegative",
)


def _bandwidth_source(params: ProblemParams, kind: BandwidthKind) -> str:
    """numeric, asymptotic, or numeric_fallback when the regime has no closed form"""
    if kind == BandwidthKind.ASYMPTOTIC and not has_asymptotic_formula(classify_regime(params)):
        return "numeric_fallback"
    return kind.value


def _estimate_options(args: argparse.Namespace) -> Dict[str, Any]:
    opts = _overlay(_load_config(args.config), {key: getattr(args, key) for key in ESTIMATE_KEYS})
    if not opts.get("noise"):
        raise ValueError("--noise is required (flag or config)")
    if opts.get("seed") is None:
        opts["seed"] = _env_seed() or 0
    opts.setdefault("h", "auto")
    opts.setdefault("estimator", EstimatorKind.KERNEL.value)
    opts.setdefault("bandwidth_kind", BandwidthKind.NUMERIC.value)
    return opts


def cmd_estimate(args: argparse.Namespace) -> int:
    """Fit a deconvolution estimate from a sample file or a simulated sample"""
    opts = _estimate_options(args)
    noise = builtin_noise(*parse_model_spec(opts["noise"]))
    signal = builtin_signal(*parse_model_spec(opts["signal"])) if opts.get("signal") else None
    seed = int(opts["seed"])

    if opts.get("simulate"):
        if signal is None or opts.get("n") is None:
            raise ValueError("--simulate needs --signal and --n")
        Y = sample_pair(signal, noise, int(float(opts["n"])), seed).Y
    elif opts.get("input"):
        Y = np.loadtxt(opts["input"], dtype=float, ndmin=1)
    else:
        raise ValueError("either --input or --simulate is required")
    if Y.size == 0:
        raise ValueError("sample is empty")

    if opts["h"] == "auto":
        if signal is None:
            raise ValueError("--h auto needs --signal for the smoothness class")
        params = ProblemParams(signal=signal.smoothness, noise=noise.smoothness)
        kind = BandwidthKind(opts["bandwidth_kind"])
        h = optimal_bandwidth(Y.size, params, kind)
        source = _bandwidth_source(params, kind)
        logger.info(f"{source} bandwidth for n={Y.size}: h={h:.6g}")
    else:
        h = float(opts["h"])
        if not h > 0:
            raise ValueError(f"Bandwidth must be positive, got {h}")
        source = "fixed"

    x_points = opts.get("x_points")
    if opts.get("x_min") is not None and opts.get("x_max") is not None:
        xgrid = np.linspace(opts["x_min"], opts["x_max"], x_points or DEFAULT_X_POINTS)
    else:
        xgrid = default_xgrid(signal, h, sample=Y, n_x=x_points)

    estimate = estimate_density(Y, opts["estimator"], h, noise, xgrid, K_n=opts.get("K_n"))
    if opts.get("clip_nonnegative"):
        estimate = clip_nonnegative(estimate)
    provenance = {
        **estimate.meta.model_dump(mode="json"),
        "bandwidth_source": source,
        "seed": seed if opts.get("simulate") else None,
        "signal": describe(signal) if signal else None,
        "noise_model": describe(noise),
    }

    if args.format == "json":
        doc = {"meta": provenance, "estimate": estimate.to_frame().to_dict(orient="list")}
        text = json.dumps(doc, sort_keys=True) + "\n"
        if args.output:
            Path(args.output).write_text(text)
        else:
            sys.stdout.write(text)
    else:
        _write_frame(estimate.to_frame(), args.output)
    if args.dump_spectrum:
        spectrum = kernel_spectrum(Y, h, noise, kernel_grid(Y, h, xgrid))
        spectrum.to_frame().to_csv(args.dump_spectrum, index=False, float_format=FLOAT_FORMAT)

    sidecar = args.sidecar or (f"{args.output}.json" if args.output else None)
    if sidecar:
        _write_json(provenance, sidecar)
    elif args.format == "csv":
        # stdout carries only x,ghat
        print(json.dumps(provenance, sort_keys=True), file=sys.stderr)
    logger.info(f"Estimate written: n={Y.size}, h={h:.6g}, mass={estimate.mass():.4f}")
    return EXIT_OK


def cmd_bandwidth(args: argparse.Namespace) -> int:
    """Tabulate numeric and/or asymptotic optimal bandwidths over n"""
    params = _params_from_args(args)
    kinds = [BandwidthKind.NUMERIC, BandwidthKind.ASYMPTOTIC] if args.kind == "both" else [BandwidthKind(args.kind)]
    extra = _regime_columns(params)
    if BandwidthKind.ASYMPTOTIC in kinds:
        extra["asymptotic_fallback"] = _bandwidth_source(params, BandwidthKind.ASYMPTOTIC) == "numeric_fallback"
    rows = []
    for n in args.n:
        row: Dict[str, Any] = {"n": n}
        for kind in kinds:
            row[f"h_{kind.value}"] = optimal_bandwidth(n, params, kind)
        rows.append({**row, **extra})
    _write_frame(pd.DataFrame(rows), args.output, args.format)
    return EXIT_OK


def cmd_rate(args: argparse.Namespace) -> int:
    """Tabulate theoretical MISE and MSE rates over n"""
    params = _params_from_args(args)
    extra = _regime_columns(params)
    rows = []
    for n in args.n:
        rows.append({
            "n": n,
            "rate_mise": theoretical_rate(n, params.with_risk(RiskKind.MISE)),
            "rate_mse": theoretical_rate(n, params.with_risk(RiskKind.MSE)),
            **extra
        })
    _write_frame(pd.DataFrame(rows), args.output, args.format)
    return EXIT_OK


def _experiment_document(args: argparse.Namespace) -> ExperimentDocument:
    overrides: Dict[str, Any] = {
        "estimator": args.estimator,
        "reps": args.reps,
        "seed": args.seed,
        "risk_kind": args.risk,
        "mse_point": args.mse_point,
        "x_points": args.x_points,
        "n_points": args.n_points,
        "n_grid": [int(n) for n in args.n_grid] if args.n_grid else None,
    }
    if args.signal:
        name, scale = parse_model_spec(args.signal)
        overrides["signal"] = {"name": name, "scale": scale}
    if args.noise:
        name, scale = parse_model_spec(args.noise)
        overrides["noise"] = {"name": name, "scale": scale}
    if args.bandwidth is not None:
        try:
            overrides["bandwidth"] = float(args.bandwidth)
        except ValueError:
            overrides["bandwidth"] = args.bandwidth
    doc = _overlay(_load_config(args.config), overrides)
    if doc.get("seed") is None and _env_seed() is not None:
        doc["seed"] = _env_seed()
    return ExperimentDocument(**doc)


def cmd_simulate(args: argparse.Namespace) -> int:
    """Run a Monte Carlo n-sweep and write the risk report and its summary"""
    doc = _experiment_document(args)
    cfg = ExperimentConfig.from_document(doc)
    report = run_experiment(cfg, threads=args.threads)
    if args.output:
        report.to_csv(args.output)
        summary_path = args.summary or str(Path(args.output).with_suffix(".json"))
        Path(summary_path).write_text(report.summary_json() + "\n")
        logger.info(f"Report written to {args.output}, summary to {summary_path}")
    else:
        sys.stdout.write(report.to_csv())
        sys.stdout.write(report.summary_json() + "\n")
    if args.emit_plot_data:
        frame = report.to_frame()[["n", "risk_mean"]]
        frame.to_csv(args.emit_plot_data, sep=" ", index=False, header=False, float_format=FLOAT_FORMAT)
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    """Run an acceptance suite and print the PASS/FAIL table"""
    results = run_suite(args.suite)
    table = pd.DataFrame([{
        "criterion": result.name,
        "status": "PASS" if result.passed else "FAIL",
        "seconds": round(result.seconds, 2),
        "detail": result.detail,
    } for result in results])
    print(table.to_string(index=False))
    if args.output:
        _write_json({"suite": args.suite, "results": [r.model_dump() for r in results]}, args.output)
    return EXIT_OK if all(r.passed for r in results) else EXIT_ACCEPTANCE_FAILED


def _add_param_flags(p: argparse.ArgumentParser) -> None:
    for key in PARAM_KEYS:
        p.add_argument(f"--{key}", type=float, default=None)
    p.add_argument("--risk", choices=[k.value for k in RiskKind], default=None)
    p.add_argument("--n", type=_sample_size, nargs="+", required=True, help="Sample sizes (1e5 accepted)")
    p.add_argument("--config", help="JSON object with class parameters")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--output", "-o", help="Output path (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deconvlab", description="Nonparametric density deconvolution lab")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", "-v", action="store_true")
    verbosity.add_argument("--quiet", "-q", action="store_true")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("models", help="List catalog models")
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--format", choices=["csv", "json"], default="json")
    p.add_argument("--output", "-o")
    p.set_defaults(handler=cmd_models)

    p = sub.add_parser("estimate", help="Deconvolution estimate from a sample")
    p.add_argument("--config", help="JSON object with estimate options; flags override it")
    p.add_argument("--noise", help="name:scale (required here or in the config)")
    p.add_argument("--signal", help="name:scale (needed for --simulate and --h auto)")
    p.add_argument("--input", help="Sample file, one real per line")
    p.add_argument("--simulate", action="store_true", default=None)
    p.add_argument("--n", type=_sample_size)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--estimator", choices=[k.value for k in EstimatorKind], help="default kernel")
    p.add_argument("--h", help="Bandwidth or 'auto' (default)")
    p.add_argument("--bandwidth-kind", choices=[k.value for k in BandwidthKind], help="default numeric")
    p.add_argument("--K-n", dest="K_n", type=int, default=None)
    p.add_argument("--x-min", type=float)
    p.add_argument("--x-max", type=float)
    p.add_argument("--x-points", type=int, help=f"Grid size (default sized from h, at least {DEFAULT_X_POINTS})")
    p.add_argument("--clip-nonnegative", action="store_true", default=None)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--output", "-o")
    p.add_argument("--sidecar", help="JSON provenance path (default <output>.json)")
    p.add_argument("--dump-spectrum", help="Write ecf/f_eps* on [-1/h, 1/h] as t,re,im CSV")
    p.set_defaults(handler=cmd_estimate)

    p = sub.add_parser("bandwidth", help="Optimal bandwidth table")
    _add_param_flags(p)
    p.add_argument("--kind", choices=["numeric", "asymptotic", "both"], default="numeric")
    p.set_defaults(handler=cmd_bandwidth)

    p = sub.add_parser("rate", help="Theoretical rate table")
    _add_param_flags(p)
    p.set_defaults(handler=cmd_rate)

    p = sub.add_parser("simulate", help="Monte Carlo risk experiment")
    p.add_argument("--config", help="JSON experiment document")
    p.add_argument("--signal", help="name:scale")
    p.add_argument("--noise", help="name:scale")
    p.add_argument("--estimator", choices=[k.value for k in EstimatorKind])
    p.add_argument("--bandwidth", help="numeric, asymptotic or a fixed h")
    p.add_argument("--n-grid", type=_sample_size, nargs="+")
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--risk", choices=[k.value for k in RiskKind])
    p.add_argument("--mse-point", type=float)
    p.add_argument("--x-points", type=int)
    p.add_argument("--n-points", type=int)
    p.add_argument("--threads", type=int, help="Worker cap (default DECONV_THREADS)")
    p.add_argument("--output", "-o", help="Report CSV path")
    p.add_argument("--summary", help="Summary JSON path (default <output>.json)")
    p.add_argument("--emit-plot-data", help="Two-column 'n risk_mean' file")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("verify", help="Run an acceptance suite")
    p.add_argument("--suite", choices=sorted(SUITES), default="fast")
    p.add_argument("--output", "-o", help="JSON results path")
    p.set_defaults(handler=cmd_verify)
    return parser


def configure_logging(verbose: bool = False, quiet: bool = False) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s", force=True)


def main(argv: Optional[List[str]] = None) -> int:
    """
    Parse arguments, run the subcommand and map errors to exit codes.

    Returns:
        0 ok, 1 acceptance failure, 2 usage/config error, 3 numeric infeasibility
    """
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose, args.quiet)
    try:
        return args.handler(args)
    except BandwidthTooSmallError as e:
        logger.error(f"Numeric infeasibility: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ValueError, OSError) as e:
        logger.error(f"Invalid input: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
