"""Command-line interface: ``gbcee estimate`` on a CSV file and ``gbcee simulate`` studies."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np
import pandas as pd

from . import benchmarks, report
from .core import GbceeConfig, estimate
from .data import Dataset, VariableType
from .exceptions import DataError, GbceeError
from .model_space import AdjustmentSet
from .simulation import ESTIMATORS, ScenarioSpec, run_study, validate_estimators
from .tmle import Contrast

logger = logging.getLogger("gbcee")

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_ESTIMATION = 4


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gbcee", description=__doc__)
    parser.add_argument("--threads", type=_positive_int, default=1, help="worker processes for simulations")
    parser.add_argument("--quiet", action="store_true", help="no table on stdout, errors only on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="estimate a causal effect from a CSV file")
    est.add_argument("--data", required=True, type=Path)
    est.add_argument("--outcome", required=True)
    est.add_argument("--exposure", required=True)
    est.add_argument("--covariates", default="", help="comma-separated column names")
    est.add_argument("--outcome-type", choices=[t.value for t in VariableType], default="continuous")
    est.add_argument("--exposure-type", choices=[t.value for t in VariableType], default="binary")
    est.add_argument("--contrast", choices=["difference", "ratio"], default="difference")
    est.add_argument("--x", type=float, default=1.0, help="exposure level of interest")
    est.add_argument("--xprime", type=float, default=0.0, help="reference exposure level")
    est.add_argument("--omega-c", type=float, default=500.0)
    est.add_argument("--omega-b", type=float, default=0.5)
    est.add_argument("--iterations", type=_positive_int, default=2000)
    est.add_argument("--variance", choices=["eif", "bootstrap"], default="eif")
    est.add_argument("--boot-b", type=_positive_int, default=200)
    est.add_argument("--seed", type=int, default=None)
    est.add_argument("--out", type=Path, default=None, help="JSON report path")
    est.add_argument("--benchmarks", action="store_true", help="also report full-set g-formula and AIPW")
    est.add_argument("--timings", action="store_true", help="record wall-clock timings in the report")

    sim = sub.add_parser("simulate", help="run a simulation study")
    sim.add_argument("--scenario", required=True, help="one of 1, 2, 3, 4, 5, 2B, 4B")
    sim.add_argument("--n", type=_positive_int, default=1000)
    sim.add_argument("--reps", type=int, default=200)
    sim.add_argument("--estimators", default=",".join(ESTIMATORS), help="comma-separated estimator names")
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--out", type=Path, default=None, help="JSON report path")
    sim.add_argument("--emit-replications", action="store_true", help="write per-replication records")
    sim.add_argument("--iterations", type=_positive_int, default=2000)
    sim.add_argument("--boot-b", type=_positive_int, default=200)
    sim.add_argument("--timings", action="store_true", help="record wall-clock timings in the report")
    return parser


def _read_csv(path) -> pd.DataFrame:
    try:
        return pd.read_csv(path, encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"data file not found: {path}") from None
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DataError(f"could not parse {path}: {exc}") from None


def _sibling(out: Path, suffix: str) -> Path:
    return out.with_name(out.stem + suffix)


def cmd_estimate(args) -> dict:
    frame = _read_csv(args.data)
    covariates = [c.strip() for c in args.covariates.split(",") if c.strip()]
    data = Dataset.from_frame(frame, args.outcome, args.exposure, covariates, args.outcome_type, args.exposure_type)
    cfg = GbceeConfig(
        omega_c=args.omega_c,
        omega_b=args.omega_b,
        mc3_iterations=args.iterations,
        variance_method=args.variance,
        bootstrap_B=args.boot_b,
        contrast=Contrast(args.contrast, args.x, args.xprime),
        seed=args.seed,
    )
    t0 = time.perf_counter()
    result = estimate(data, cfg)
    elapsed = time.perf_counter() - t0
    bench = None
    if args.benchmarks:
        full = AdjustmentSet.full(data.M)
        bench = {}
        for name, fn in (("full-g", benchmarks.gformula), ("full-aipw", benchmarks.aipw)):
            try:
                r = fn(data, full, cfg.contrast)
                bench[name] = {"delta_hat": r.delta_hat, "variance": r.variance}
            except (GbceeError, ValueError, np.linalg.LinAlgError) as exc:
                bench[name] = {"delta_hat": None, "variance": None, "error": str(exc)}
    data_info = {
        "path": str(args.data),
        "n": data.n,
        "outcome": args.outcome,
        "exposure": args.exposure,
        "covariates": list(data.covariate_names),
        "outcome_type": data.outcome_type.value,
        "exposure_type": data.exposure_type.value,
    }
    rep = report.estimate_report(
        result, cfg.to_dict(), data_info, bench, {"estimate_seconds": elapsed} if args.timings else None
    )
    text = report.format_estimate(rep)
    if args.out:
        report.write_report(rep, args.out)
        _sibling(args.out, ".txt").write_text(text, encoding="utf-8")
    if not args.quiet:
        sys.stdout.write(text)
    return rep


def cmd_simulate(args) -> dict:
    spec = ScenarioSpec(args.scenario, args.n)
    estimators = validate_estimators([e.strip() for e in args.estimators.split(",") if e.strip()])
    if args.reps < 2:
        raise ValueError("--reps must be at least 2 (metrics need two or more replications)")
    cfg = GbceeConfig(mc3_iterations=args.iterations, bootstrap_B=args.boot_b)
    t0 = time.perf_counter()
    study = run_study(spec, estimators, args.reps, args.seed, args.threads, cfg)
    elapsed = time.perf_counter() - t0
    config = {
        "scenario": spec.id,
        "n": spec.n,
        "reps": args.reps,
        "estimators": list(estimators),
        "seed": args.seed,
        "gbcee": cfg.to_dict(),
    }
    rep = report.simulation_report(
        study, config, args.emit_replications, {"study_seconds": elapsed} if args.timings else None
    )
    text = report.format_study(rep)
    if args.out:
        report.write_report(rep, args.out)
        _sibling(args.out, ".txt").write_text(text, encoding="utf-8")
        report.write_inclusion_csv(rep, _sibling(args.out, "_inclusion.csv"))
        if args.emit_replications:
            report.write_replications_csv(study, _sibling(args.out, "_replications.csv"))
    if not args.quiet:
        sys.stdout.write(text)
    return rep


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.ERROR if args.quiet else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    command = {"estimate": cmd_estimate, "simulate": cmd_simulate}[args.command]
    try:
        command(args)
    except DataError as exc:
        print(f"gbcee: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"gbcee: invalid argument: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GbceeError, np.linalg.LinAlgError) as exc:
        print(f"gbcee: estimation error: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION
    except OSError as exc:
        print(f"gbcee: i/o error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK
