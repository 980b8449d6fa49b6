"""Machine-readable run reports, human tables and plot-ready CSV files.

Reports are JSON with sorted keys and two-space indentation; non-finite
numbers are written as ``null``.  Human tables are rendered from the same
dictionaries, so the two never disagree.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from . import __version__
from .core import GbceeResult
from .simulation import ReplicationRecord, StudyMetrics, StudyResult


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(report: dict) -> str:
    return json.dumps(_clean(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_report(report: dict, path) -> None:
    Path(path).write_text(dumps(report), encoding="utf-8")


def load_report(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def estimate_report(result: GbceeResult, config: dict, data_info: dict, benchmarks=None, timings=None) -> dict:
    report = {
        "command": "estimate",
        "version": __version__,
        "config": config,
        "data": data_info,
        "result": result.to_dict(),
    }
    if benchmarks is not None:
        report["benchmarks"] = benchmarks
    if timings is not None:
        report["timings"] = timings
    return report


def result_from_report(report: dict) -> GbceeResult:
    return GbceeResult.from_dict(report["result"])


def simulation_report(study: StudyResult, config: dict, emit_replications=False, timings=None) -> dict:
    report = {
        "command": "simulate",
        "version": __version__,
        "config": config,
        "study": study.to_dict(include_replications=emit_replications, include_timings=timings is not None),
    }
    if timings is not None:
        report["timings"] = timings
    return report


def study_from_report(report: dict) -> StudyResult:
    s = report["study"]
    metrics = {k: StudyMetrics(**v) for k, v in s["metrics"].items()}
    reps = [ReplicationRecord(**r) for r in s.get("replications", [])]
    return StudyResult(
        s["scenario"], s["n"], s["n_reps"], s["seed"], s["true_effect"], tuple(s["estimators"]), metrics, reps
    )


def _fmt(v, digits=4):
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.{digits}f}"
    return str(v)


def _table(header, rows):
    cells = [list(map(str, header))] + [[str(c) for c in r] for r in rows]
    widths = [max(len(r[j]) for r in cells) for j in range(len(header))]
    lines = ["  ".join(c.rjust(w) if j else c.ljust(w) for j, (c, w) in enumerate(zip(r, widths))) for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def format_estimate(report: dict, top=10) -> str:
    res = report["result"]
    names = res["covariate_names"]
    out = [
        f"effect estimate   {_fmt(res['delta_hat'])}",
        f"standard error    {_fmt(math.sqrt(res['variance']) if res['variance'] is not None else None)}",
        f"95% CI            [{_fmt(res['ci_low'])}, {_fmt(res['ci_high'])}]",
        "",
        _table(
            ["covariate", "P(in outcome model)", "P(in exposure model)"],
            [
                [name, _fmt(po, 3), _fmt(px, 3)]
                for name, po, px in zip(names, res["inclusion_probs_outcome"], res["inclusion_probs_exposure"])
            ],
        ),
        "",
        f"top {min(top, len(res['models']))} of {len(res['models'])} averaged outcome models",
        _table(
            ["covariates", "weight", "estimate", "variance"],
            [
                [
                    ",".join(n for n, b in zip(names, m["set"]) if b == "1") or "(none)",
                    _fmt(m["weight"]),
                    _fmt(m["delta_hat"]),
                    _fmt(m["variance"], 6),
                ]
                for m in res["models"][:top]
            ],
        ),
    ]
    if "benchmarks" in report:
        out += [
            "",
            _table(
                ["benchmark", "estimate", "variance"],
                [[k, _fmt(v["delta_hat"]), _fmt(v["variance"], 6)] for k, v in sorted(report["benchmarks"].items())],
            ),
        ]
    return "\n".join(out) + "\n"


def format_study(report: dict) -> str:
    s = report["study"]
    head = f"scenario {s['scenario']}, n={s['n']}, {s['n_reps']} replications, true effect {_fmt(s['true_effect'])}"
    rows = []
    for name in s["estimators"]:
        m = s["metrics"][name]
        rows.append(
            [
                name,
                _fmt(m["bias"], 3),
                _fmt(m["sd"], 3),
                _fmt(m["rel_rmse"], 2),
                _fmt(m["coverage"], 3),
                m["n_failures"],
                "yes" if m["flagged"] else "",
            ]
        )
    table = _table(["estimator", "bias", "SD", "rel.RMSE", "CP", "failures", "flagged"], rows)
    return f"{head}\n\n{table}\n"


def write_inclusion_csv(report: dict, path) -> None:
    """Long-format mean inclusion probabilities: estimator, covariate, probability."""
    s = report["study"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["estimator", "covariate", "inclusion_prob"])
        for name in s["estimators"]:
            probs = s["metrics"][name]["inclusion_prob_mean"]
            if probs is None:
                continue
            for j, p in enumerate(probs):
                w.writerow([name, f"U{j + 1}", repr(float(p))])


def write_replications_csv(study: StudyResult, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["replication", "estimator", "delta_hat", "variance", "ci_low", "ci_high", "error"])
        for r in study.replications:
            w.writerow(
                [r.replication, r.estimator]
                + ["" if v is None else repr(float(v)) for v in (r.delta_hat, r.variance, r.ci_low, r.ci_high)]
                + [r.error or ""]
            )
