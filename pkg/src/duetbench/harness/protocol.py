"""Worker side of the harness wire protocol.

The harness describes one run through environment variables:

``DUET_BARRIER``
    path of the rendezvous file, empty in sequential mode
``DUET_WORKLOAD``
    ``A`` or ``B`` (also selects the barrier party)
``DUET_MAX_ITER`` / ``DUET_MAX_TIME_S``
    iteration and wall-time budget of the run
``DUET_OUTPUT``
    CSV file the worker appends its rows to
``DUET_RUN``
    run index
``DUET_FILL``
    ``1`` to keep executing filler iterations until the partner finishes
``DUET_BARRIER_TIMEOUT_S``
    seconds to wait at a rendezvous before giving up

Each row is ``workload,run,iteration,start_ns,duration_ns,filler,affinity_mask``.
Any program that follows this contract can be measured; Python programs
can simply call :func:`serve` with their task.
"""
from __future__ import annotations

import csv
import os
import sys
import time
from dataclasses import dataclass

from .barrier import Barrier, BarrierTimeout

DEFAULT_BARRIER_TIMEOUT_S = 60.0


def affinity_mask() -> str:
    try:
        cpus = os.sched_getaffinity(0)
    except AttributeError:  # not available on every platform
        return ""
    return hex(sum(1 << c for c in cpus))


@dataclass(frozen=True)
class RunContext:
    workload: str
    run: int
    max_iterations: int
    max_time_s: float
    output: str
    barrier: str
    fill: bool
    barrier_timeout_s: float

    @classmethod
    def from_env(cls, env=None) -> "RunContext":
        env = os.environ if env is None else env
        try:
            return cls(
                workload=env.get("DUET_WORKLOAD", "A"),
                run=int(env["DUET_RUN"]),
                max_iterations=int(env["DUET_MAX_ITER"]),
                max_time_s=float(env["DUET_MAX_TIME_S"]),
                output=env["DUET_OUTPUT"],
                barrier=env.get("DUET_BARRIER", ""),
                fill=env.get("DUET_FILL", "0") == "1",
                barrier_timeout_s=float(env.get("DUET_BARRIER_TIMEOUT_S", DEFAULT_BARRIER_TIMEOUT_S)),
            )
        except KeyError as exc:
            raise RuntimeError(f"missing harness environment variable {exc.args[0]}") from None


def run_iterations(task, ctx: RunContext) -> list:
    """Execute the measured (and filler) iterations; returns CSV rows."""
    barrier = Barrier.attach(ctx.barrier, 0 if ctx.workload == "A" else 1) if ctx.barrier else None
    mask = affinity_mask()
    rows = []
    clock = time.monotonic_ns
    budget_ns = int(ctx.max_time_s * 1e9)
    t_run = clock()
    i = 0
    try:
        while i < ctx.max_iterations and clock() - t_run < budget_ns:
            if barrier is not None:
                barrier.wait(ctx.barrier_timeout_s)
            start = clock()
            if start - t_run >= budget_ns:
                break
            task()
            end = clock()
            i += 1
            rows.append((ctx.workload, ctx.run, i, start, end - start, 0, mask))
        if barrier is not None and ctx.fill:
            # keep meeting the partner: one filler per partner iteration, so
            # equal budgets produce none
            barrier.finish(i)
            me, other = barrier.party, barrier.partner
            while True:
                done = barrier.measured(other)
                if done is not None and done <= barrier.arrivals(me):
                    break
                barrier.wait(ctx.barrier_timeout_s)
                done = barrier.measured(other)
                if done is None and barrier.partner_detached() or done is not None and done < barrier.arrivals(me):
                    break  # the partner is not measuring this iteration
                start = clock()
                task()
                end = clock()
                i += 1
                rows.append((ctx.workload, ctx.run, i, start, end - start, 1, mask))
    finally:
        if barrier is not None:
            barrier.detach()
            barrier.close()
    return rows


def serve(task, env=None) -> int:
    """Run one harness-driven run of ``task``; returns a process exit code."""
    ctx = RunContext.from_env(env)
    try:
        rows = run_iterations(task, ctx)
    except BarrierTimeout as exc:
        print(f"duet worker {ctx.workload} run {ctx.run}: {exc}", file=sys.stderr)
        return 4
    with open(ctx.output, "a", newline="") as f:
        csv.writer(f, lineterminator="\n").writerows(rows)
    return 0
