"""Input validation shared by the estimators and the analysis pipeline."""
from __future__ import annotations

import numbers

import numpy as np

from .model import PairedMatrix, RunSeries


def check_runs(X, name: str = "X") -> list:
    """Coerce per-run durations to a list of 1-d float arrays.

    Accepts a 2-d array (runs x iterations), a ragged sequence of
    sequences, or a sequence of :class:`RunSeries`.
    """
    if isinstance(X, np.ndarray):
        if X.ndim != 2:
            raise ValueError(f"{name} must be 2-d (runs x iterations), got shape {X.shape}")
        rows = list(X)
    else:
        rows = [r.durations if isinstance(r, RunSeries) else r for r in X]
    if not rows:
        raise ValueError(f"{name} has no runs")
    out = []
    for k, r in enumerate(rows):
        arr = np.asarray(r, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError(f"{name}: run {k} must be a non-empty 1-d sequence")
        if not np.isfinite(arr).all():
            raise ValueError(f"{name}: run {k} contains non-finite values")
        if (arr <= 0).any():
            raise ValueError(f"{name}: run {k} contains non-positive durations")
        out.append(arr)
    return out


def check_paired(X, y=None) -> PairedMatrix:
    """Build a :class:`PairedMatrix` from a matrix or from two run collections."""
    if isinstance(X, PairedMatrix):
        if y is not None:
            raise ValueError("pass either a PairedMatrix or X and y, not both")
        return X
    if y is None:
        raise ValueError("y (durations of workload B) is required unless X is a PairedMatrix")
    xs, ys = check_runs(X, "X"), check_runs(y, "y")
    if len(xs) != len(ys):
        raise ValueError(f"X has {len(xs)} runs but y has {len(ys)}")
    for k, (a, b) in enumerate(zip(xs, ys)):
        if a.size != b.size:
            raise ValueError(f"run {k}: X has {a.size} iterations but y has {b.size}")
    return PairedMatrix.from_arrays([a.tolist() for a in xs], [b.tolist() for b in ys])


def check_level(level) -> float:
    if not isinstance(level, numbers.Real) or not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level!r}")
    return float(level)


def check_positive_int(value, name: str) -> int:
    if not isinstance(value, numbers.Integral) or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)
