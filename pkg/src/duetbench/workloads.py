"""Artificial workloads that stress one resource for a given operation count.

One operation is one step of the kernel's dependency chain:

* integer: one add-xor-shift step on a 64-bit register value
* float: one dependent multiply-add
* cache: one load from a 4 MiB buffer walked linearly
* memory: one load of a pointer chase through a 64 MiB single-cycle
  permutation (every load depends on the previous one)

The kernels are compiled with numba so that the loop body, not the
interpreter, is what gets timed.
"""
from __future__ import annotations

import logging
import statistics
import time
from dataclasses import dataclass, field

import numba
import numpy as np

from .model import ArtificialKind

log = logging.getLogger(__name__)

CACHE_BYTES = 4 << 20
MEMORY_BYTES = 64 << 20
PERMUTATION_SEED = 0x5EED

_FLOAT_SCALE = 0.9999999
_FLOAT_SHIFT = 1e-7

_buffers: dict = {}
# walks resume where the previous call stopped so short calls still sweep the
# whole working set instead of re-touching a cache-resident prefix
_cursors: dict = {}


@numba.njit(cache=True)
def _integer_kernel(count):
    h = np.uint64(0x9E3779B97F4A7C15)
    for i in range(count):
        h = (h + np.uint64(i)) ^ (h >> np.uint64(7))
    return h


@numba.njit(cache=True)
def _float_kernel(count, scale, shift):
    f = 1.5
    for _ in range(count):
        f = f * scale + shift
    return f


@numba.njit(cache=True)
def _linear_walk(buf, start, count):
    n = buf.size
    acc = np.int64(0)
    j = start
    for _ in range(count):
        acc += buf[j]
        j += 1
        if j == n:
            j = 0
    return acc, j


@numba.njit(cache=True)
def _pointer_chase(perm, start, count):
    j = start
    for _ in range(count):
        j = perm[j]
    return j


@numba.njit(cache=True)
def _sattolo(n, seed):
    np.random.seed(seed)
    perm = np.arange(n)
    for i in range(n - 1, 0, -1):
        k = np.random.randint(0, i)
        perm[i], perm[k] = perm[k], perm[i]
    return perm


def sattolo_cycle(n: int, seed: int = PERMUTATION_SEED) -> np.ndarray:
    """Random permutation of ``range(n)`` forming one cycle through all slots."""
    return _sattolo(np.int64(n), np.int64(seed))


def _buffer(kind: ArtificialKind) -> np.ndarray:
    buf = _buffers.get(kind)
    if buf is None:
        if kind is ArtificialKind.CACHE:
            buf = np.arange(CACHE_BYTES // 8, dtype=np.int64)
        else:
            buf = sattolo_cycle(MEMORY_BYTES // 8)
        _buffers[kind] = buf
    return buf


def execute(kind, operation_count: int) -> int:
    """Run ``operation_count`` operations of ``kind``; returns a checksum."""
    kind = ArtificialKind(kind)
    if operation_count < 1:
        raise ValueError("operation_count must be >= 1")
    n = np.int64(operation_count)
    if kind is ArtificialKind.INTEGER:
        return int(_integer_kernel(n))
    if kind is ArtificialKind.FLOAT:
        # constants passed at runtime so the chain cannot be folded away
        return int(np.float64(_float_kernel(n, _FLOAT_SCALE, _FLOAT_SHIFT)).view(np.int64))
    buf = _buffer(kind)
    start = np.int64(_cursors.get(kind, 0))
    if kind is ArtificialKind.CACHE:
        acc, end = _linear_walk(buf, start, n)
        _cursors[kind] = int(end)
        return int(acc)
    end = _pointer_chase(buf, start, n)
    _cursors[kind] = int(end)
    return int(end)


def reset() -> None:
    """Rewind the cache and memory walks to their first slot."""
    _cursors.clear()


def prepare(kind) -> None:
    """Allocate working sets and compile the kernel outside any timed region."""
    execute(kind, 1)


def time_execution(kind, operation_count: int) -> float:
    t0 = time.perf_counter_ns()
    execute(kind, operation_count)
    return (time.perf_counter_ns() - t0) / 1e9


@dataclass
class Calibration:
    kind: ArtificialKind
    target_ms: float
    operation_count: int
    trace: list = field(default_factory=list)


class CalibrationError(RuntimeError):
    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


def next_count(count: int, measured_s: float, target_s: float) -> int:
    """Proportional step toward the target time."""
    if measured_s <= 0:
        return count * 100
    return max(1, round(count * target_s / measured_s))


def calibrate(kind, target_ms: float = 100.0, *, trials: int = 5, tolerance: float = 0.10,
              max_rounds: int = 20, start_count: int = 10_000, measure=None) -> Calibration:
    """Find an operation count whose median execution time hits ``target_ms``.

    ``measure(count) -> seconds`` defaults to timing :func:`execute`.
    """
    kind = ArtificialKind(kind)
    if not target_ms > 0:
        raise ValueError("target must be > 0")
    if measure is None:
        prepare(kind)
        measure = lambda count: time_execution(kind, count)  # noqa: E731
    target = target_ms / 1e3
    count = start_count
    trace = []
    for round_no in range(1, max_rounds + 1):
        median = statistics.median(measure(count) for _ in range(trials))
        trace.append({"round": round_no, "count": count, "median_ms": median * 1e3})
        log.debug("calibrate %s: round %d count %d -> %.3f ms", kind.value, round_no, count, median * 1e3)
        if abs(median - target) <= tolerance * target:
            return Calibration(kind, target_ms, count, trace)
        count = next_count(count, median, target)
    raise CalibrationError(f"calibration of {kind.value} did not converge in {max_rounds} rounds", trace)
