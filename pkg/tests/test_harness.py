import json
import sys
import threading
import time

import pytest

from duetbench.harness import (Barrier, BarrierTimeout, HarnessError, probe_environment, run_duet,
                               run_duet_fill, run_sequential, sequential_order, usable_cpus)
from duetbench.harness.protocol import RunContext, run_iterations
from duetbench.harness.runner import core_assignment
from duetbench.model import ExperimentConfig, Mode, WorkloadSpec, pair_results, read_results

SINGLE_CPU = len(usable_cpus()) < 2


def config(runs=2, a_iter=None, b_iter=None, **kw):
    return ExperimentConfig(
        WorkloadSpec("A", builtin=("integer", 20_000), max_iterations=a_iter),
        WorkloadSpec("B", builtin=("integer", 20_000), max_iterations=b_iter),
        runs=runs, **kw,
    )


@pytest.fixture
def barrier(tmp_path):
    with Barrier.create(str(tmp_path)) as b0:
        b1 = Barrier.attach(b0.path, 1)
        yield b0, b1
        b1.close()


def test_barrier_releases_together(barrier):
    b0, b1 = barrier
    released = {}

    def late():
        time.sleep(0.2)
        b1.wait(5)
        released[1] = time.monotonic()

    t = threading.Thread(target=late)
    t.start()
    t0 = time.monotonic()
    b0.wait(5)
    released[0] = time.monotonic()
    t.join()
    assert released[0] - t0 >= 0.15
    assert b0.arrivals(0) == b0.arrivals(1) == 1


def test_barrier_repeated_rendezvous(barrier):
    b0, b1 = barrier
    counts = []

    def partner():
        for _ in range(50):
            b1.wait(5)

    t = threading.Thread(target=partner)
    t.start()
    for _ in range(50):
        b0.wait(5)
        counts.append(b0.arrivals(1))
    t.join()
    # the partner was never behind the rendezvous we were released from
    assert all(c >= k for k, c in enumerate(counts, start=1))


def test_barrier_detach_releases_partner(barrier):
    b0, b1 = barrier
    b1.detach()
    assert b0.partner_detached()
    t0 = time.monotonic()
    for _ in range(3):
        b0.wait(1)
    assert time.monotonic() - t0 < 0.5


def test_barrier_timeout(barrier):
    b0, _ = barrier
    with pytest.raises(BarrierTimeout):
        b0.wait(0.05)


def test_barrier_unlinked_by_owner(tmp_path):
    with Barrier.create(str(tmp_path)) as b:
        path = b.path
    assert not list(tmp_path.iterdir())
    assert path.startswith(str(tmp_path))


def test_worker_budget_in_process(tmp_path):
    ctx = RunContext("A", 1, 3, 60.0, str(tmp_path / "a.csv"), "", False, 1.0)
    rows = run_iterations(lambda: None, ctx)
    assert [r[2] for r in rows] == [1, 2, 3]
    assert all(r[5] == 0 for r in rows)


def test_worker_time_budget(tmp_path):
    ctx = RunContext("A", 1, 10**6, 0.05, str(tmp_path / "a.csv"), "", False, 1.0)
    rows = run_iterations(lambda: time.sleep(0.01), ctx)
    assert 1 <= len(rows) <= 6


def _threaded_fill(tmp_path, budget_a, budget_b):
    with Barrier.create(str(tmp_path)) as b:
        out = {}

        def worker(w, budget):
            ctx = RunContext(w, 1, budget, 60.0, "", b.path, True, 5.0)
            out[w] = run_iterations(lambda: None, ctx)

        threads = [threading.Thread(target=worker, args=("A", budget_a)),
                   threading.Thread(target=worker, args=("B", budget_b))]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    return {w: [r[2] for r in rows if r[5]] for w, rows in out.items()}


@pytest.mark.parametrize("budget_a,budget_b,expected", [
    (3, 7, {"A": [4, 5, 6, 7], "B": []}),
    (5, 5, {"A": [], "B": []}),
    (6, 1, {"A": [], "B": [2, 3, 4, 5, 6]}),
])
def test_fill_protocol_in_lockstep(tmp_path, budget_a, budget_b, expected):
    for _ in range(20):
        assert _threaded_fill(tmp_path, budget_a, budget_b) == expected


def test_run_context_requires_variables():
    with pytest.raises(RuntimeError, match="DUET_RUN"):
        RunContext.from_env({"DUET_MAX_ITER": "1"})


def test_sequential_order_is_seeded_permutation():
    cfg = config(runs=5, seed=11)
    order = sequential_order(cfg)
    assert sorted(order) == sorted([(w, r) for w in "AB" for r in range(1, 6)])
    assert order == sequential_order(cfg)
    assert order != sequential_order(config(runs=5, seed=12))


def test_core_assignment_randomized_per_run():
    cfg = config(runs=20, seed=3)
    swaps = [core_assignment(cfg, r, [0, 1])["swapped"] for r in range(1, 21)]
    assert any(swaps) and not all(swaps)
    fixed = config(runs=20, randomize_cores=False)
    assert all(core_assignment(fixed, r, [4, 6]) == {"A": 4, "B": 6, "randomized": False, "swapped": False}
               for r in range(1, 21))


def test_sequential_runs_never_overlap(tmp_path):
    cfg = config(runs=2, max_iterations=3, seed=1, mode=Mode.SEQUENTIAL)
    res = run_sequential(cfg, tmp_path)
    assert res.ok_runs == [1, 2]
    spans = {}
    for w in "AB":
        for s in read_results(tmp_path / f"{w}.csv"):
            lo, hi = spans.get((w, s.run), (s.start_ns, s.start_ns + s.duration_ns))
            spans[(w, s.run)] = (min(lo, s.start_ns), max(hi, s.start_ns + s.duration_ns))
    ordered = [spans[(w, r)] for w, r in sequential_order(cfg)]
    assert all(a[1] <= b[0] for a, b in zip(ordered, ordered[1:]))
    meta = json.loads((tmp_path / "metadata.json").read_text())
    assert meta["execution_order"] == [f"{w}{r}" for w, r in sequential_order(cfg)]
    assert meta["config"] == cfg.to_dict()


@pytest.mark.skipif(not SINGLE_CPU, reason="host has two CPUs")
def test_duet_refused_on_single_cpu(tmp_path):
    with pytest.raises(HarnessError, match="two logical CPUs"):
        run_duet(config(), tmp_path)


def test_duet_rejects_unusable_cores(tmp_path):
    with pytest.raises(HarnessError, match="not usable"):
        run_duet(config(cores=(9998, 9999)), tmp_path, allow_shared_core=True)


def test_duet_unequal_budgets_detach(tmp_path):
    res = run_duet(config(runs=1, a_iter=2, b_iter=4), tmp_path, allow_shared_core=True)
    assert res.ok_runs == [1]
    a, b = read_results(tmp_path / "A.csv"), read_results(tmp_path / "B.csv")
    assert [s.iteration for s in a] == [1, 2]
    assert [s.iteration for s in b] == [1, 2, 3, 4]
    m = pair_results(a, b)
    assert m.iterations == (2,)
    assert res.metadata["shared_core"] is SINGLE_CPU


def test_fill_mode_emits_fillers_excluded_from_pairing(tmp_path):
    res = run_duet_fill(config(runs=1, a_iter=2, b_iter=4), tmp_path, allow_shared_core=True)
    a = read_results(tmp_path / "A.csv")
    measured = [s for s in a if not s.filler]
    fillers = [s for s in a if s.filler]
    assert [s.iteration for s in measured] == [1, 2]
    assert [s.iteration for s in fillers] == [3, 4]
    m = pair_results(a, read_results(tmp_path / "B.csv"))
    assert m.iterations == (2,)
    assert res.metadata["mode"] == "duet-fill"


def test_fill_mode_equal_budgets_has_no_fillers(tmp_path):
    run_duet_fill(config(runs=2, max_iterations=5), tmp_path, allow_shared_core=True)
    for w in "AB":
        rows = read_results(tmp_path / f"{w}.csv")
        assert len(rows) == 10
        assert not any(s.filler for s in rows)


def test_explicit_cores_are_recorded(tmp_path):
    core = usable_cpus()[0]
    other = usable_cpus()[-1]
    cfg = config(runs=2, max_iterations=2, cores=(core, other), randomize_cores=False)
    res = run_duet(cfg, tmp_path, allow_shared_core=True)
    assert [r["cores"] for r in res.metadata["runs"]] == [{"A": core, "B": other}] * 2
    masks = {s.affinity_mask for s in read_results(tmp_path / "A.csv")}
    assert masks == {hex(1 << core)}


def test_crashed_run_is_excluded(tmp_path):
    script = tmp_path / "flaky.py"
    script.write_text(
        "import os, sys\n"
        "from duetbench.harness.protocol import serve\n"
        "if os.environ['DUET_RUN'] == '2':\n"
        "    sys.exit('boom')\n"
        "sys.exit(serve(lambda: sum(range(1000))))\n"
    )
    cfg = ExperimentConfig(
        WorkloadSpec("A", builtin=("integer", 20_000)),
        WorkloadSpec("B", command=[sys.executable, str(script)]),
        runs=3, max_iterations=3, barrier_timeout=20.0,
    )
    out = tmp_path / "out"
    res = run_duet(cfg, out, allow_shared_core=True)
    assert res.ok_runs == [1, 3]
    failed = res.metadata["runs"][1]
    assert failed["status"] == "failed"
    assert "boom" in failed["diagnostic"]["B"]
    assert {s.run for s in read_results(out / "A.csv")} == {1, 3}


def test_probe_environment_is_json_serializable():
    info = probe_environment()
    assert json.loads(json.dumps(info)) == info
    assert info["usable_cpus"] == usable_cpus()
    assert {"cpu_model", "logical_cpus", "clock", "os", "python"} <= set(info)
