"""Acceptance criteria, one test each.

Every test prints a single ``criterion N: PASS|FAIL ...`` line with the
measured value and the tolerance it is held to; the lines are repeated in
pytest's terminal summary. Run alone with ``pytest tests/test_acceptance.py``.
"""
import json
import math
import sys
import time

import numpy as np
import pytest

import oracles
from conftest import ACCEPTANCE_LINES
from duetbench import analysis, simgen, stats, workloads
from duetbench.cli import main
from duetbench.harness import HarnessError, run_duet
from duetbench.model import (ConfidenceInterval, ExperimentConfig, InterferenceModel, IntervalKind,
                             PairedMatrix, WorkloadSpec, pair_results, read_results, samples_from_matrix,
                             samples_from_series)

SYNC_MODEL = InterferenceModel(base_a=1e6, base_b=1e6, iid_sigma=0.01, sync_prob=0.3, sync_magnitude=3.0,
                               run_sigma=0.1)
IDLE_MODEL = InterferenceModel(base_a=1e6, base_b=1e6, iid_sigma=0.01)
R, I, SEEDS = 10, 50, 50


def record(n, passed, detail):
    line = f"criterion {n}: {'PASS' if passed else 'FAIL'} {detail}"
    print(line)
    ACCEPTANCE_LINES.append((n, line))
    return passed


def duet_width(matrix, seed, shuffle=None):
    samples_a, samples_b = samples_from_matrix(matrix)
    procedure = "duet-shuffled" if shuffle else "duet"
    return analysis.analyze(samples_a, samples_b, procedure, seed=seed)["relative_width"]


def standard_width(model, seed):
    a, b = simgen.replay_standard(model, R, I, seed)
    return analysis.analyze(*samples_from_series(a, b), "standard", seed=seed)["relative_width"]


@pytest.fixture(scope="module")
def sync_widths():
    rows = []
    for seed in range(SEEDS):
        m = simgen.generate(SYNC_MODEL, R, I, seed)
        rows.append((duet_width(m, seed), duet_width(m, seed, shuffle=True), standard_width(SYNC_MODEL, seed)))
    return np.array(rows)


def test_estimator_exact():
    checks = [
        (stats.geometric_mean([2, 8]), 4.0),
        (stats.grand_geometric_mean([4, 9]), 6.0),
    ]
    same = PairedMatrix.from_arrays([[3, 5, 7], [4, 4, 9]], [[3, 5, 7], [4, 4, 9]])
    ci = stats.bootstrap_ratio_ci(same)
    checks += [(ci.point, 1.0), (ci.lo, 1.0), (ci.hi, 1.0)]
    worst = max(abs(got - want) / want for got, want in checks)
    assert record(1, worst <= 1e-12, f"max relative error {worst:.1e} (tolerance 1e-12)")


def test_bootstrap_matches_enumeration():
    t0 = time.perf_counter()
    gms = [1.0, 2.0, 4.0]
    ggms_values = oracles.enumerate_ggms(gms)
    ggms_oracle = oracles.interval_from_enumeration(ggms_values, 0.99)
    ggms_ci = stats.bootstrap_ggms_ci(gms, replicates=10**6, level=0.99, seed=1)
    a, b = [[10, 12], [11, 15]], [[9, 13], [10, 11]]
    diff_values = oracles.enumerate_diff(a, b)
    diff_oracle = oracles.interval_from_enumeration(diff_values, 0.99)
    diff_ci = stats.bootstrap_diff_ci(a, b, replicates=10**6, level=0.99, seed=1)
    steps = [
        oracles.grid_steps(ggms_values, ggms_oracle[0], ggms_ci.lo),
        oracles.grid_steps(ggms_values, ggms_oracle[1], ggms_ci.hi),
        oracles.grid_steps(diff_values, diff_oracle[0], diff_ci.lo),
        oracles.grid_steps(diff_values, diff_oracle[1], diff_ci.hi),
    ]
    elapsed = time.perf_counter() - t0
    ok = max(steps) <= 1 and elapsed < 30
    assert record(2, ok, f"grid steps (ggms lo, hi, diff lo, hi) = {steps} over {len(ggms_values)} and "
                         f"{len(diff_values)} resamples (tolerance 1 step); {elapsed:.1f} s")


def test_duet_improves_on_standard(sync_widths):
    improvement = np.median(sync_widths[:, 2] / sync_widths[:, 0])
    assert record(3, improvement >= 3, f"median standard/duet width ratio {improvement:.1f} over {SEEDS} seeds "
                                        f"(required >= 3)")


def test_shuffled_matches_standard(sync_widths):
    vs_standard = np.median(sync_widths[:, 1] / sync_widths[:, 2])
    vs_duet = np.median(sync_widths[:, 1] / sync_widths[:, 0])
    ok = 0.8 <= vs_standard <= 1.25 and vs_duet >= 3
    assert record(4, ok, f"median shuffled/standard {vs_standard:.3f} (required [0.8, 1.25]), "
                         f"median shuffled/duet {vs_duet:.1f} (required >= 3)")


def test_shuffle_without_shared_interference():
    ratios = []
    for seed in range(SEEDS):
        m = simgen.generate(IDLE_MODEL, R, I, seed)
        ratios.append(duet_width(m, seed, shuffle=True) / duet_width(m, seed))
    med = float(np.median(ratios))
    assert record(5, 0.8 <= med <= 1.2, f"median shuffled/duet width ratio {med:.2f} (required [0.8, 1.2])")


def test_coverage_on_aa_data():
    hits = 0
    for seed in range(100):
        m = simgen.generate(SYNC_MODEL, R, I, 1000 + seed)
        ci = stats.bootstrap_ratio_ci(m, seed=seed)
        hits += ci.lo <= 1.0 <= ci.hi
    assert record(6, hits >= 95, f"{hits}/100 intervals contain 1.0 (required >= 95)")


def _ab_ratio(kind, out_dir):
    cal = workloads.calibrate(kind)
    n = cal.operation_count
    config = ExperimentConfig(WorkloadSpec("A", builtin=(kind, 2 * n)), WorkloadSpec("B", builtin=(kind, n)),
                              runs=5, max_iterations=10, seed=7)
    run_duet(config, out_dir)
    m = pair_results(read_results(out_dir / "A.csv"), read_results(out_dir / "B.csv"))
    return stats.bootstrap_ratio_ci(m).point


def test_double_operation_count_doubles_ratio(tmp_path):
    bounds = {"integer": (1.8, 2.2), "float": (1.8, 2.2), "cache": (1.6, 2.4), "memory": (1.6, 2.4)}
    results = {}
    try:
        for kind in bounds:
            results[kind] = _ab_ratio(kind, tmp_path / kind)
    except HarnessError as exc:
        record(7, False, f"duet harness unavailable: {exc}")
        pytest.fail(str(exc))
    ok = all(lo <= results[k] <= hi for k, (lo, hi) in bounds.items())
    detail = ", ".join(f"{k} {v:.3f} in {bounds[k]}" for k, v in results.items())
    assert record(7, ok, detail)


def test_duet_smoke_invariants(tmp_path):
    config = ExperimentConfig(WorkloadSpec("A", builtin=("integer", 2_000_000)),
                              WorkloadSpec("B", builtin=("integer", 2_000_000)),
                              runs=3, max_iterations=20, seed=1)
    try:
        result = run_duet(config, tmp_path)
    except HarnessError as exc:
        record(8, False, f"duet harness unavailable: {exc}")
        pytest.fail(str(exc))
    a, b = read_results(tmp_path / "A.csv"), read_results(tmp_path / "B.csv")
    skew = analysis.paired_start_skew(a, b)
    within = float(np.mean(skew < 1_000_000)) if skew.size else 0.0
    per_run_masks = {}
    for s in a + b:
        per_run_masks.setdefault((s.run, s.workload), set()).add(s.affinity_mask)
    distinct = all(
        len(per_run_masks[(r, "A")]) == 1 and per_run_masks[(r, "A")] != per_run_masks[(r, "B")]
        and "" not in per_run_masks[(r, "A")]
        for r in result.ok_runs
    )
    budgets = (result.ok_runs == [1, 2, 3]
               and all(sum(1 for s in rows if s.run == r) == 20 for rows in (a, b) for r in (1, 2, 3)))
    ok = within >= 0.99 and distinct and budgets
    assert record(8, ok, f"{within:.1%} of {skew.size} pairs start within 1 ms (required >= 99%), "
                         f"distinct affinity {distinct}, budgets respected {budgets}")


def test_verdict_and_scale_invariance():
    straddle = [
        stats.verdict(ConfidenceInterval(0.97, 1.02, 0.99, IntervalKind.RATIO_OF_MEANS, 1.0)).outcome,
        stats.verdict(ConfidenceInterval(-3.0, 2.0, 0.99, IntervalKind.DIFFERENCE_OF_MEANS, -0.5)).outcome,
    ]
    m = simgen.generate(SYNC_MODEL, R, 20, 3)
    scaled = PairedMatrix.from_arrays([[7 * v for v in r] for r in m.x], [[7 * v for v in r] for r in m.y])
    base = analysis.analyze(*samples_from_matrix(m), replicates=2000)
    times7 = analysis.analyze(*samples_from_matrix(scaled), replicates=2000)
    ok = straddle == ["equal", "equal"] and base == times7
    assert record(9, ok, f"straddling verdicts {straddle}, x7 report bit-identical {base == times7}")


def test_report_aggregation_geomean(tmp_path):
    factors = [2.3, 3.86, 9.13, 3.99, 12.5, 3.97]
    paths = []
    for k, f in enumerate(factors):
        for procedure, width in (("duet", 1.0), ("standard", f)):
            p = tmp_path / f"p{k}-{procedure}.json"
            p.write_text(json.dumps({"experiment": f"p{k}", "procedure": procedure,
                                     "relative_width": width, "level": 0.99}))
            paths.append(str(p))
    csv_path = tmp_path / "table.csv"
    code = main(["report", *paths, "--csv", str(csv_path)])
    geomean = float(csv_path.read_text().splitlines()[-1].split(",")[-1])
    ok = code == 0 and math.isclose(geomean, 5.03, abs_tol=0.02)
    assert record(10, ok, f"geomean improvement {geomean:.4f} (required 5.03 +/- 0.02)")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
