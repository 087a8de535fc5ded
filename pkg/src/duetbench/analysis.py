"""Analysis of result directories and comparison of analysis reports."""
from __future__ import annotations

import csv
import io
import logging
import math
import warnings
from pathlib import Path

import numpy as np

from . import stats
from .estimators import DifferenceOfMeansEstimator, DuetRatioEstimator
from .model import PairedMatrix, RunSeries, group_series, pair_results, read_json, read_results

log = logging.getLogger(__name__)

PROCEDURES = ("duet", "standard", "duet-shuffled")
DEFAULT_RUNS_SAMPLE = 10

REPORT_FIELDS = (
    "procedure", "point", "ci_lo", "ci_hi", "level", "relative_width", "verdict",
    "runs_used", "iterations_used", "winsorized_count", "seed", "replicates",
)


def load_results(results_dir):
    """Read ``A.csv``, ``B.csv`` and (if present) ``metadata.json``."""
    d = Path(results_dir)
    samples_a = read_results(d / "A.csv")
    samples_b = read_results(d / "B.csv")
    meta_path = d / "metadata.json"
    metadata = read_json(meta_path) if meta_path.exists() else {}
    return samples_a, samples_b, metadata


def sample_runs(run_ids, k: int, seed: int, tag: str = "run-sample") -> list:
    """Seeded random subset of ``k`` run ids (all of them, sorted, if fewer)."""
    run_ids = sorted(run_ids)
    if k >= len(run_ids):
        if k > len(run_ids):
            warnings.warn(f"requested {k} runs but only {len(run_ids)} available; using all", stacklevel=2)
        return run_ids
    picked = stats.substream(seed, tag).choice(len(run_ids), size=k, replace=False)
    return sorted(run_ids[i] for i in picked)


def _trim_matrix(matrix: PairedMatrix, fraction: float) -> PairedMatrix:
    xs, ys = [], []
    for run, x, y in zip(matrix.run_ids, matrix.x, matrix.y):
        xs.append(stats.discard_warmup(RunSeries(run, x), fraction).durations)
        ys.append(stats.discard_warmup(RunSeries(run, y), fraction).durations)
    return PairedMatrix(matrix.run_ids, xs, ys, matrix.discarded_runs)


def _subset(matrix: PairedMatrix, run_ids) -> PairedMatrix:
    keep = set(run_ids)
    rows = [(r, x, y) for r, x, y in zip(matrix.run_ids, matrix.x, matrix.y) if r in keep]
    return PairedMatrix(tuple(r for r, _, _ in rows), [x for _, x, _ in rows],
                        [y for _, _, y in rows], matrix.discarded_runs)


def analyze(samples_a, samples_b, procedure: str = "duet", *, level: float = stats.DEFAULT_LEVEL,
            replicates: int = stats.DEFAULT_REPLICATES, runs_sample: int = DEFAULT_RUNS_SAMPLE,
            seed: int = 0, warmup_fraction: float = 0.0,
            winsor_threshold: float | None = stats.DEFAULT_WINSOR_THRESHOLD,
            shuffle_scope: str = "cross-run", experiment: str | None = None) -> dict:
    """Run one procedure on raw samples and return the report dictionary.

    Duet procedures pair by iteration index first and then discard the
    warmup prefix of the paired series, so both sides lose the same
    iterations. The standard procedure trims and samples each workload's
    runs independently.
    """
    if procedure not in PROCEDURES:
        raise ValueError(f"unknown procedure {procedure!r}; choose from {PROCEDURES}")
    report = {"experiment": experiment, "warmup_fraction": warmup_fraction,
              "runs_sample": runs_sample, "percentile_method": stats.PERCENTILE_METHOD}
    if procedure == "standard":
        a = group_series(samples_a)
        b = group_series(samples_b)
        a_ids = sample_runs([s.run for s in a], runs_sample, seed, "run-sample-A")
        b_ids = sample_runs([s.run for s in b], runs_sample, seed, "run-sample-B")
        a = [stats.discard_warmup(s, warmup_fraction) for s in a if s.run in a_ids]
        b = [stats.discard_warmup(s, warmup_fraction) for s in b if s.run in b_ids]
        est = DifferenceOfMeansEstimator(level, replicates, winsor_threshold, seed).fit(a, b)
        report.update({
            "run_ids": {"A": a_ids, "B": b_ids},
            "runs_used": len(a_ids) + len(b_ids),
            "grand_mean": est.grand_mean_,
            "bootstrap": "hierarchical: runs with replacement, then iterations within each run",
            "winsorized_operand": "per-run durations",
        })
    else:
        matrix = pair_results(samples_a, samples_b)
        ids = sample_runs(matrix.run_ids, runs_sample, seed)
        matrix = _trim_matrix(_subset(matrix, ids), warmup_fraction)
        shuffle = shuffle_scope if procedure == "duet-shuffled" else None
        est = DuetRatioEstimator(level, replicates, winsor_threshold, seed, shuffle).fit(matrix)
        report.update({
            "run_ids": ids,
            "runs_used": len(ids),
            "discarded_runs": list(matrix.discarded_runs),
            "bootstrap": "runs with replacement over per-run geometric means",
            "winsorized_operand": "per-run speedup ratios",
        })
        if shuffle:
            report["shuffle_scope"] = shuffle
    ci = est.interval_
    report.update({
        "procedure": procedure,
        "kind": ci.kind.value,
        "point": ci.point,
        "ci_lo": ci.lo,
        "ci_hi": ci.hi,
        "level": ci.level,
        "relative_width": est.relative_width(),
        "verdict": est.verdict_.outcome,
        "iterations_used": est.n_iterations_,
        "winsorized_count": est.winsorized_count_,
        "winsor_threshold": winsor_threshold,
        "seed": seed,
        "replicates": replicates,
    })
    return report


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def render_report(report: dict) -> str:
    keys = [k for k in REPORT_FIELDS if k in report]
    width = max(len(k) for k in keys)
    return "\n".join(f"{k.ljust(width)}  {_fmt(report[k])}" for k in keys) + "\n"


def _sig2(v: float | None) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "-"
    return f"{v:.2g}"


def geometric_mean_improvement(factors) -> float:
    return stats.geometric_mean(factors)


def compare_reports(reports: list) -> dict:
    """Relative widths per experiment and procedure, plus standard/duet improvements."""
    if not reports:
        raise ValueError("need at least one report")
    levels = {r["level"] for r in reports}
    if len(levels) > 1:
        raise ValueError(f"reports mix confidence levels {sorted(levels)}")
    table: dict = {}
    for k, r in enumerate(reports):
        name = r.get("experiment") or f"experiment-{k + 1}"
        table.setdefault(name, {})[r["procedure"]] = r["relative_width"]
    rows = []
    factors = []
    for name, widths in table.items():
        row = {"experiment": name, **{p: widths.get(p) for p in PROCEDURES}}
        if widths.get("duet") and widths.get("standard") is not None:
            row["improvement"] = widths["standard"] / widths["duet"]
            factors.append(row["improvement"])
        else:
            row["improvement"] = None
        rows.append(row)
    summary = geometric_mean_improvement(factors) if factors else None
    return {"level": levels.pop(), "rows": rows, "geomean_improvement": summary}


def render_comparison(comparison: dict) -> str:
    has_improvement = comparison["geomean_improvement"] is not None
    header = ["experiment", "duet", "duet-shuffled", "standard"] + (["improvement"] if has_improvement else [])
    lines = [header]
    for row in comparison["rows"]:
        line = [row["experiment"]] + [_sig2(row[p]) for p in ("duet", "duet-shuffled", "standard")]
        if has_improvement:
            line.append(_sig2(row["improvement"]) + ("x" if row["improvement"] else ""))
        lines.append(line)
    if has_improvement:
        lines.append(["geomean", "", "", "", f"{comparison['geomean_improvement']:.3g}x"])
    widths = [max(len(l[i]) for l in lines) for i in range(len(header))]
    out = io.StringIO()
    out.write(f"relative {comparison['level'] * 100:g}% confidence interval width\n")
    for l in lines:
        out.write("  ".join(c.ljust(w) for c, w in zip(l, widths)).rstrip() + "\n")
    return out.getvalue()


def comparison_csv(comparison: dict) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["experiment", "duet", "duet-shuffled", "standard", "improvement"])
    for row in comparison["rows"]:
        w.writerow([row["experiment"]] + ["" if row[k] is None else repr(row[k])
                                          for k in ("duet", "duet-shuffled", "standard", "improvement")])
    if comparison["geomean_improvement"] is not None:
        w.writerow(["geomean", "", "", "", repr(comparison["geomean_improvement"])])
    return out.getvalue()


def paired_start_skew(samples_a, samples_b) -> np.ndarray:
    """Absolute start-time difference (ns) of every paired measured iteration."""
    starts_b = {(s.run, s.iteration): s.start_ns for s in samples_b if not s.filler}
    return np.array([abs(s.start_ns - starts_b[(s.run, s.iteration)])
                     for s in samples_a if not s.filler and (s.run, s.iteration) in starts_b])
