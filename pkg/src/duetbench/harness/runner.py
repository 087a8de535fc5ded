"""Run experiment configurations and write model-format result files.

Output directory layout::

    A.csv, B.csv        merged samples of all successful runs
    metadata.json       config, host, per-run status and core assignment
    runs/               per-process files written by the workers
"""
from __future__ import annotations

import logging
import os
import subprocess
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from .. import __version__
from ..model import (HARNESS_EXTRA_COLUMNS, RESULT_HEADER, ExperimentConfig, Mode, WorkloadSpec,
                     read_results, write_json, write_results)
from ..stats import substream
from .barrier import Barrier
from .environment import probe_environment, usable_cpus
from .protocol import DEFAULT_BARRIER_TIMEOUT_S

log = logging.getLogger(__name__)

_POLL_S = 0.01
# extra time a run may take beyond its budget (process start, imports)
_STARTUP_SLACK_S = 30.0


class HarnessError(RuntimeError):
    pass


@dataclass
class ExperimentResult:
    out_dir: Path
    metadata: dict
    paths: dict = field(default_factory=dict)

    @property
    def ok_runs(self) -> list:
        return [r["run"] for r in self.metadata["runs"] if r["status"] == "ok"]


def workload_command(spec: WorkloadSpec) -> list:
    if spec.builtin is not None:
        kind, count = spec.builtin
        return [sys.executable, "-m", "duetbench.harness.worker", kind.value, str(count)]
    return list(spec.command)


def barrier_timeout(config: ExperimentConfig) -> float:
    return config.barrier_timeout or DEFAULT_BARRIER_TIMEOUT_S


def _base_cores(config: ExperimentConfig, need: int, allow_shared_core: bool) -> list:
    cpus = usable_cpus()
    if config.cores is not None:
        cores = list(config.cores)
        missing = [c for c in cores if c not in cpus]
        if missing:
            raise HarnessError(f"cores {missing} are not usable on this host (usable: {cpus})")
    else:
        cores = cpus[:2] if len(cpus) >= 2 else cpus * 2
    if need == 2 and cores[0] == cores[1] and not allow_shared_core:
        raise HarnessError("duet mode needs two distinct logical CPUs")
    return cores


def core_assignment(config: ExperimentConfig, run: int, cores: list) -> dict:
    """Cores for A and B in one run; the order is re-drawn per run when randomized."""
    a, b = cores
    swapped = False
    if config.randomize_cores:
        swapped = bool(substream(config.seed, "core-assignment", run).integers(0, 2))
        if swapped:
            a, b = b, a
    return {"A": a, "B": b, "randomized": config.randomize_cores, "swapped": swapped}


def _env(spec: WorkloadSpec, config: ExperimentConfig, workload: str, run: int, output: Path,
         barrier: str) -> dict:
    env = dict(os.environ)
    env.update({k: str(v) for k, v in spec.env.items()})
    env.update({
        "DUET_BARRIER": barrier,
        "DUET_WORKLOAD": workload,
        "DUET_MAX_ITER": str(config.budget(workload)),
        "DUET_MAX_TIME_S": repr(float(config.max_time)),
        "DUET_OUTPUT": str(output),
        "DUET_RUN": str(run),
        "DUET_FILL": "1" if config.mode is Mode.DUET_FILL else "0",
        "DUET_BARRIER_TIMEOUT_S": repr(barrier_timeout(config)),
    })
    return env


def _spawn(spec, config, workload, run, output: Path, barrier: str, core: int):
    with open(output, "w", newline="") as f:
        f.write(",".join(RESULT_HEADER + HARNESS_EXTRA_COLUMNS) + "\n")
    return subprocess.Popen(
        workload_command(spec),
        env=_env(spec, config, workload, run, output, barrier),
        stdout=subprocess.DEVNULL,
        stderr=subprocess.PIPE,
        preexec_fn=lambda: os.sched_setaffinity(0, {core}),
    )


def _tail(data: bytes, limit: int = 2000) -> str:
    return data.decode(errors="replace")[-limit:]


def _supervise(procs: dict, deadline: float) -> dict:
    """Wait for all processes; stop the rest as soon as one fails."""
    status = {}
    failed = False
    while len(status) < len(procs):
        for w, p in procs.items():
            if w in status:
                continue
            code = p.poll()
            if code is not None:
                status[w] = code
                if code != 0:
                    failed = True
        if failed or time.monotonic() > deadline:
            for w, p in procs.items():
                if w not in status:
                    p.kill()
                    status[w] = "killed"
            break
        time.sleep(_POLL_S)
    for p in procs.values():
        p.wait()
    return status


def _run_processes(config, run, specs: dict, cores: dict, run_dir: Path, duet: bool) -> dict:
    outputs = {w: run_dir / f"run-{run:04d}-{w}.csv" for w in specs}
    barrier = Barrier.create() if duet else None
    deadline = time.monotonic() + config.max_time + 2 * barrier_timeout(config) + _STARTUP_SLACK_S
    procs = {}
    try:
        for w, spec in specs.items():
            procs[w] = _spawn(spec, config, w, run, outputs[w], barrier.path if barrier else "", cores[w])
        status = _supervise(procs, deadline)
        stderr = {w: _tail(p.stderr.read()) for w, p in procs.items()}
    finally:
        for p in procs.values():
            if p.poll() is None:
                p.kill()
                p.wait()
            if p.stderr:
                p.stderr.close()
        if barrier is not None:
            barrier.close()
            barrier.unlink()
    ok = all(code == 0 for code in status.values())
    return {"outputs": outputs, "exit_status": status, "stderr": stderr, "ok": ok}


def _specs(config):
    return {"A": config.workload_a, "B": config.workload_b}


def _finish(config, out_dir: Path, records: list, files: dict, extra: dict) -> ExperimentResult:
    merged = {"A": [], "B": []}
    for w in ("A", "B"):
        for rec in records:
            if rec["status"] != "ok":
                continue
            path = files.get((rec["run"], w))
            if path is not None:
                merged[w].extend(read_results(path))
    paths = {}
    for w in ("A", "B"):
        paths[w] = out_dir / f"{w}.csv"
        write_results(paths[w], merged[w], extended=True)
    metadata = {
        "harness_version": __version__,
        "config": config.to_dict(),
        "host": probe_environment(),
        "runs": records,
        **extra,
    }
    paths["metadata"] = out_dir / "metadata.json"
    write_json(paths["metadata"], metadata)
    return ExperimentResult(out_dir, metadata, paths)


def _check_cpus(allow_shared_core: bool):
    n = len(usable_cpus())
    if n < 2 and not allow_shared_core:
        raise HarnessError(f"duet mode needs at least two logical CPUs; this host exposes {n}")


def run_duet(config: ExperimentConfig, out_dir, *, allow_shared_core: bool = False) -> ExperimentResult:
    """Run both workloads in parallel on separate cores, one fresh process pair per run.

    ``allow_shared_core`` lets both workloads share a CPU on hosts with a
    single one; such results only exercise the plumbing and are flagged in
    the metadata.
    """
    if config.mode is Mode.SEQUENTIAL:
        raise HarnessError("run_duet called with a sequential config")
    _check_cpus(allow_shared_core)
    out_dir = Path(out_dir)
    run_dir = out_dir / "runs"
    run_dir.mkdir(parents=True, exist_ok=True)
    cores = _base_cores(config, 2, allow_shared_core)
    records, files = [], {}
    for run in range(1, config.runs + 1):
        assign = core_assignment(config, run, cores)
        res = _run_processes(config, run, _specs(config), assign, run_dir, duet=True)
        rec = {
            "run": run,
            "status": "ok" if res["ok"] else "failed",
            "cores": {"A": assign["A"], "B": assign["B"]},
            "core_order_swapped": assign["swapped"],
            "exit_status": res["exit_status"],
        }
        if not res["ok"]:
            rec["diagnostic"] = {w: s for w, s in res["stderr"].items() if s}
            log.warning("run %d failed: %s", run, res["exit_status"])
        for w in ("A", "B"):
            files[(run, w)] = res["outputs"][w]
        records.append(rec)
    extra = {"mode": config.mode.value, "shared_core": cores[0] == cores[1],
             "barrier_timeout_s": barrier_timeout(config)}
    return _finish(config, out_dir, records, files, extra)


def run_duet_fill(config: ExperimentConfig, out_dir, **kwargs) -> ExperimentResult:
    if config.mode is not Mode.DUET_FILL:
        config = _with_mode(config, Mode.DUET_FILL)
    return run_duet(config, out_dir, **kwargs)


def _with_mode(config: ExperimentConfig, mode: Mode) -> ExperimentConfig:
    d = config.to_dict()
    d["mode"] = mode.value
    return ExperimentConfig.from_dict(d)


def sequential_order(config: ExperimentConfig) -> list:
    """Seeded random interleaving of the ``2 * runs`` process executions."""
    slots = [(w, r) for w in ("A", "B") for r in range(1, config.runs + 1)]
    perm = substream(config.seed, "sequential-order").permutation(len(slots))
    return [slots[k] for k in perm]


def run_sequential(config: ExperimentConfig, out_dir) -> ExperimentResult:
    """Execute runs of A and B one process at a time in random order."""
    out_dir = Path(out_dir)
    run_dir = out_dir / "runs"
    run_dir.mkdir(parents=True, exist_ok=True)
    core = config.cores[0] if config.cores is not None else usable_cpus()[0]
    if core not in usable_cpus():
        raise HarnessError(f"core {core} is not usable on this host")
    order = sequential_order(config)
    per_run = {r: {} for r in range(1, config.runs + 1)}
    files = {}
    for w, run in order:
        spec = _specs(config)[w]
        res = _run_processes(config, run, {w: spec}, {w: core}, run_dir, duet=False)
        per_run[run][w] = res
        files[(run, w)] = res["outputs"][w]
        if not res["ok"]:
            log.warning("run %d of %s failed: %s", run, w, res["exit_status"])
    records = []
    for run, by_w in per_run.items():
        ok = all(res["ok"] for res in by_w.values())
        rec = {
            "run": run,
            "status": "ok" if ok else "failed",
            "cores": {"A": core, "B": core},
            "exit_status": {w: res["exit_status"][w] for w, res in by_w.items()},
        }
        if not ok:
            rec["diagnostic"] = {w: res["stderr"][w] for w, res in by_w.items() if res["stderr"][w]}
        records.append(rec)
    extra = {"mode": Mode.SEQUENTIAL.value, "execution_order": [f"{w}{r}" for w, r in order]}
    return _finish(config, out_dir, records, files, extra)


def run_experiment(config: ExperimentConfig, out_dir, **kwargs) -> ExperimentResult:
    if config.mode is Mode.SEQUENTIAL:
        return run_sequential(config, out_dir)
    return run_duet(config, out_dir, **kwargs)
