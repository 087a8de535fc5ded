"""Duet ratio estimator, difference-of-means baseline and helpers.

All functions are pure. Randomness comes from :func:`substream`, which
derives independent generators from a root seed and a purpose tag, so
adding a new consumer never perturbs an existing one.
"""
from __future__ import annotations

import logging
import math
import warnings
import zlib
from dataclasses import dataclass

import numpy as np

from .model import ConfidenceInterval, IntervalKind, PairedMatrix, RunSeries

log = logging.getLogger(__name__)

DEFAULT_REPLICATES = 10_000
DEFAULT_LEVEL = 0.99
DEFAULT_WINSOR_THRESHOLD = 0.2

# Replicates are drawn in fixed-size blocks; block b always uses the stream
# (seed, tag, b), so a replicate's resample depends only on its index.
REPLICATE_BLOCK = 1 << 15

PERCENTILE_METHOD = "percentile-nearest-rank"


def substream(seed: int, tag: str, index: int = 0) -> np.random.Generator:
    key = [int(seed) % (1 << 64), zlib.crc32(tag.encode()), int(index)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))


def discard_warmup(series: RunSeries, fraction: float) -> RunSeries:
    if not 0.0 <= fraction < 1.0:
        raise ValueError(f"warmup fraction must lie in [0, 1), got {fraction}")
    n = len(series.durations)
    drop = math.floor(fraction * n)
    if n - drop < 1:
        raise ValueError(f"run {series.run}: nothing left after discarding warmup")
    return RunSeries(series.run, series.durations[drop:])


def _find_outlier(values: np.ndarray, threshold: float):
    """Return ``(outlier_index, neighbour_index)`` or None."""
    n = values.size
    if n < 3:
        return None
    order = np.argsort(values, kind="stable")
    best, best_dist, best_nb = None, 0.0, None
    for j in range(n):
        v = values[j]
        # min/max of the remaining observations without rescanning
        lo_idx = order[1] if j == order[0] else order[0]
        hi_idx = order[-2] if j == order[-1] else order[-1]
        lo, hi = values[lo_idx], values[hi_idx]
        span = hi - lo
        if v > hi + threshold * span:
            dist, nb = v - (hi + threshold * span), hi_idx
        elif v < lo - threshold * span:
            dist, nb = (lo - threshold * span) - v, lo_idx
        else:
            continue
        if dist > best_dist:
            best, best_dist, best_nb = j, dist, nb
    if best is None:
        return None
    return best, best_nb


def _winsorize(values: np.ndarray, threshold: float):
    """Return ``(values, replaced_index)``; index is None when nothing changed."""
    found = _find_outlier(values, threshold)
    if found is None:
        return values, None
    out = values.copy()
    out[found[0]] = values[found[1]]
    return out, found[0]


def winsorize_run(durations, threshold: float = DEFAULT_WINSOR_THRESHOLD) -> list:
    """Replace at most one outlier with its nearest remaining neighbour.

    A value is an outlier when it lies more than ``threshold`` times the
    min-max span of the other values beyond that span. Only the most
    extreme outlier (earliest on ties) is replaced.
    """
    if not threshold > 0:
        raise ValueError("threshold must be > 0")
    result = list(durations)
    if len(result) < 3:
        log.debug("winsorize_run: %d observations, left unchanged", len(result))
        return result
    found = _find_outlier(np.asarray(result, dtype=float), threshold)
    if found is not None:
        result[found[0]] = result[found[1]]
    return result


def _winsorize_runs(runs, threshold):
    """Winsorize each run; returns (list of float arrays, replaced count)."""
    out, count = [], 0
    for r in runs:
        arr = np.asarray(r, dtype=float)
        if threshold is not None:
            arr, idx = _winsorize(arr, threshold)
            count += idx is not None
        out.append(arr)
    return out, count


def speedup_samples(matrix: PairedMatrix) -> list:
    """Per-run arrays of ``x / y`` ratios."""
    if matrix.n_runs == 0:
        raise ValueError("empty matrix")
    out = []
    for run, xs, ys in zip(matrix.run_ids, matrix.x, matrix.y):
        x = np.asarray(xs, dtype=float)
        y = np.asarray(ys, dtype=float)
        if (x <= 0).any() or (y <= 0).any():
            raise ValueError(f"run {run}: durations must be positive")
        out.append(x / y)
    return out


def geometric_mean(values) -> float:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("geometric mean of an empty sequence")
    if not (v > 0).all():
        raise ValueError("geometric mean requires positive values")
    return float(np.exp(np.mean(np.log(v))))


def grand_geometric_mean(gms) -> float:
    return geometric_mean(gms)


def percentile_interval(stats, level: float):
    """Nearest-rank percentile interval with mirrored tail ranks.

    The lower endpoint is the ``ceil(n * (1 - level) / 2)``-th smallest
    value and the upper endpoint the same rank counted from the top.
    """
    s = np.sort(np.asarray(stats, dtype=float))
    n = s.size
    k = max(math.ceil(n * (1.0 - level) / 2.0 - 1e-9) - 1, 0)
    return float(s[k]), float(s[n - 1 - k])


def _blocks(replicates):
    for b, start in enumerate(range(0, replicates, REPLICATE_BLOCK)):
        yield b, min(REPLICATE_BLOCK, replicates - start)


def bootstrap_ggms_ci(gms, replicates: int = DEFAULT_REPLICATES, level: float = DEFAULT_LEVEL,
                      seed: int = 0) -> ConfidenceInterval:
    """Percentile interval for the grand geometric mean of per-run geomeans."""
    gms = np.asarray(gms, dtype=float)
    if gms.size == 0 or not (gms > 0).all():
        raise ValueError("per-run geometric means must be positive and non-empty")
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    logs = np.log(gms)
    point = float(np.exp(logs.mean()))
    R = gms.size
    if R == 1:
        warnings.warn("single run: ratio interval is degenerate (width 0)", stacklevel=2)
        return ConfidenceInterval(point, point, level, IntervalKind.RATIO_OF_MEANS, point, PERCENTILE_METHOD)
    reps = np.empty(replicates)
    pos = 0
    for b, m in _blocks(replicates):
        idx = substream(seed, "ratio-bootstrap", b).integers(0, R, size=(m, R))
        reps[pos:pos + m] = np.exp(logs[idx].mean(axis=1))
        pos += m
    lo, hi = percentile_interval(reps, level)
    return ConfidenceInterval(lo, hi, level, IntervalKind.RATIO_OF_MEANS, point, PERCENTILE_METHOD)


@dataclass(frozen=True)
class RatioEstimate:
    interval: ConfidenceInterval
    gms: tuple
    winsorized_count: int


def estimate_ratio(matrix: PairedMatrix, replicates: int = DEFAULT_REPLICATES,
                   level: float = DEFAULT_LEVEL, seed: int = 0,
                   winsor_threshold: float | None = DEFAULT_WINSOR_THRESHOLD) -> RatioEstimate:
    """Full duet pipeline: ratios, winsorize per run, run geomeans, bootstrap."""
    ratios, count = _winsorize_runs(speedup_samples(matrix), winsor_threshold)
    gms = tuple(geometric_mean(r) for r in ratios)
    ci = bootstrap_ggms_ci(gms, replicates=replicates, level=level, seed=seed)
    return RatioEstimate(ci, gms, count)


def bootstrap_ratio_ci(matrix: PairedMatrix, replicates: int = DEFAULT_REPLICATES,
                       level: float = DEFAULT_LEVEL, seed: int = 0,
                       winsor_threshold: float | None = DEFAULT_WINSOR_THRESHOLD) -> ConfidenceInterval:
    return estimate_ratio(matrix, replicates, level, seed, winsor_threshold).interval


def _padded(runs):
    lengths = np.array([len(r) for r in runs])
    if (lengths == 0).any():
        raise ValueError("empty run")
    mat = np.zeros((len(runs), lengths.max()))
    for k, r in enumerate(runs):
        mat[k, :len(r)] = r
    return mat, lengths


def _hierarchical_means(runs, m, rng):
    """Pooled means of ``m`` two-level resamples (runs, then iterations)."""
    mat, lengths = _padded(runs)
    R, width = mat.shape
    chosen = rng.integers(0, R, size=(m, R))
    n = lengths[chosen]                                  # (m, R)
    u = rng.random(size=(m, R, width))
    it = np.minimum((u * n[..., None]).astype(np.int64), n[..., None] - 1)
    vals = mat[chosen[..., None], it]
    valid = np.arange(width)[None, None, :] < n[..., None]
    return (vals * valid).sum(axis=(1, 2)) / n.sum(axis=1)


@dataclass(frozen=True)
class DifferenceEstimate:
    interval: ConfidenceInterval
    grand_mean: float
    winsorized_count: int


def estimate_difference(a, b, replicates: int = DEFAULT_REPLICATES, level: float = DEFAULT_LEVEL,
                        seed: int = 0,
                        winsor_threshold: float | None = DEFAULT_WINSOR_THRESHOLD) -> DifferenceEstimate:
    """Hierarchical bootstrap interval for ``mean(a) - mean(b)``."""
    a_runs = [s.durations if isinstance(s, RunSeries) else s for s in a]
    b_runs = [s.durations if isinstance(s, RunSeries) else s for s in b]
    if not a_runs or not b_runs:
        raise ValueError("both workloads need at least one run")
    for runs in (a_runs, b_runs):
        if any(len(r) == 0 for r in runs):
            raise ValueError("empty run")
    a_w, ca = _winsorize_runs(a_runs, winsor_threshold)
    b_w, cb = _winsorize_runs(b_runs, winsor_threshold)
    all_a = np.concatenate(a_w)
    all_b = np.concatenate(b_w)
    point = float(all_a.mean() - all_b.mean())
    grand_mean = float(np.concatenate([all_a, all_b]).mean())
    if len(a_w) < 2 or len(b_w) < 2:
        warnings.warn("fewer than two runs per workload: difference interval is unreliable", stacklevel=2)
    reps = np.empty(replicates)
    pos = 0
    for blk, m in _blocks(replicates):
        reps[pos:pos + m] = (_hierarchical_means(a_w, m, substream(seed, "diff-bootstrap-a", blk))
                             - _hierarchical_means(b_w, m, substream(seed, "diff-bootstrap-b", blk)))
        pos += m
    lo, hi = percentile_interval(reps, level)
    ci = ConfidenceInterval(lo, hi, level, IntervalKind.DIFFERENCE_OF_MEANS, point, PERCENTILE_METHOD)
    return DifferenceEstimate(ci, grand_mean, ca + cb)


def bootstrap_diff_ci(a, b, replicates: int = DEFAULT_REPLICATES, level: float = DEFAULT_LEVEL,
                      seed: int = 0,
                      winsor_threshold: float | None = DEFAULT_WINSOR_THRESHOLD) -> ConfidenceInterval:
    return estimate_difference(a, b, replicates, level, seed, winsor_threshold).interval


def relative_width(ci: ConfidenceInterval, grand_mean: float | None = None) -> float:
    if ci.kind is IntervalKind.RATIO_OF_MEANS:
        return ci.hi - ci.lo
    if grand_mean is None or not grand_mean > 0:
        raise ValueError("difference-of-means width needs a positive grand mean")
    return (ci.hi - ci.lo) / grand_mean


def _derangement(rng, n):
    while True:
        p = rng.permutation(n)
        if not (p == np.arange(n)).any():
            return p


def shuffle_pairing(matrix: PairedMatrix, seed: int = 0, scope: str = "cross-run") -> PairedMatrix:
    """Break the pairing between x and y by permuting y.

    ``scope="run"`` permutes iterations of y within every run. The geometric
    mean of a run's ratios equals ``geomean(x_r) / geomean(y_r)``, so this
    alone cannot change the ratio estimate; it only matters for
    winsorization.

    ``scope="cross-run"`` (default) additionally moves every y run to a
    different x run (a random derangement), so no ratio combines
    measurements taken at the same time. Pairs are truncated to the shorter
    series when run lengths differ. With a single run it falls back to
    ``"run"``.

    ``scope="global"`` pools y over all runs, permutes the pool and refills
    the original run shapes.
    """
    rng = substream(seed, f"shuffle-{scope}")
    if scope == "cross-run" and matrix.n_runs < 2:
        scope = "run"
    if scope == "run":
        y = [tuple(ys[k] for k in rng.permutation(len(ys))) for ys in matrix.y]
        return PairedMatrix(matrix.run_ids, matrix.x, y, matrix.discarded_runs)
    if scope == "cross-run":
        perm = _derangement(rng, matrix.n_runs)
        x, y = [], []
        for xs, k in zip(matrix.x, perm):
            ys = matrix.y[k]
            n = min(len(xs), len(ys))
            x.append(xs[:n])
            y.append(tuple(ys[j] for j in rng.permutation(len(ys))[:n]))
        return PairedMatrix(matrix.run_ids, x, y, matrix.discarded_runs)
    if scope == "global":
        pool = [v for ys in matrix.y for v in ys]
        shuffled = [pool[k] for k in rng.permutation(len(pool))]
        y, pos = [], 0
        for ys in matrix.y:
            y.append(tuple(shuffled[pos:pos + len(ys)]))
            pos += len(ys)
        return PairedMatrix(matrix.run_ids, matrix.x, y, matrix.discarded_runs)
    raise ValueError(f"unknown shuffle scope {scope!r}")


@dataclass(frozen=True)
class Verdict:
    outcome: str
    interval: ConfidenceInterval

    @property
    def equal(self) -> bool:
        return self.outcome == "equal"


def neutral_value(kind: IntervalKind) -> float:
    return 1.0 if IntervalKind(kind) is IntervalKind.RATIO_OF_MEANS else 0.0


def verdict(ci: ConfidenceInterval) -> Verdict:
    neutral = neutral_value(ci.kind)
    return Verdict("equal" if ci.lo <= neutral <= ci.hi else "different", ci)
