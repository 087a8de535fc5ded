"""Estimator-style wrappers around the statistics functions.

They follow scikit-learn conventions (constructor stores parameters only,
``fit`` returns ``self``, fitted state ends in ``_``) so they compose with
``get_params``/``clone`` and pipelines of the preprocessing transformers.
"""
from __future__ import annotations

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import stats
from .model import RunSeries
from .validation import check_level, check_paired, check_positive_int, check_runs


class Winsorizer(TransformerMixin, BaseEstimator):
    """Per-run outlier replacement; stateless, so ``fit`` only validates."""

    def __init__(self, threshold=stats.DEFAULT_WINSOR_THRESHOLD):
        self.threshold = threshold

    def fit(self, X, y=None):
        check_runs(X)
        if not self.threshold > 0:
            raise ValueError("threshold must be > 0")
        self.n_runs_ = len(X)
        return self

    def transform(self, X):
        runs = check_runs(X)
        out, replaced = [], []
        for k, r in enumerate(runs):
            w, idx = stats._winsorize(r, self.threshold)
            out.append(w)
            if idx is not None:
                replaced.append((k, idx))
        self.replaced_ = replaced
        return out


class WarmupTrimmer(TransformerMixin, BaseEstimator):
    def __init__(self, fraction=0.0):
        self.fraction = fraction

    def fit(self, X, y=None):
        check_runs(X)
        return self

    def transform(self, X):
        return [
            list(stats.discard_warmup(RunSeries(k, r), self.fraction).durations)
            for k, r in enumerate(check_runs(X))
        ]


class DuetRatioEstimator(BaseEstimator):
    """Ratio of execution times from paired duet measurements.

    ``fit(X, y)`` takes per-run durations of workload A as ``X`` and of
    workload B as ``y`` (index-aligned), or a single ``PairedMatrix``.
    Set ``shuffle`` to a scope accepted by :func:`stats.shuffle_pairing` to
    deliberately break the pairing before estimation.
    """

    def __init__(self, level=stats.DEFAULT_LEVEL, replicates=stats.DEFAULT_REPLICATES,
                 winsor_threshold=stats.DEFAULT_WINSOR_THRESHOLD, seed=0, shuffle=None):
        self.level = level
        self.replicates = replicates
        self.winsor_threshold = winsor_threshold
        self.seed = seed
        self.shuffle = shuffle

    def fit(self, X, y=None):
        matrix = check_paired(X, y)
        level = check_level(self.level)
        replicates = check_positive_int(self.replicates, "replicates")
        if self.shuffle is not None:
            matrix = stats.shuffle_pairing(matrix, self.seed, scope=self.shuffle)
        est = stats.estimate_ratio(matrix, replicates, level, self.seed, self.winsor_threshold)
        self.matrix_ = matrix
        self.interval_ = est.interval
        self.point_ = est.interval.point
        self.gms_ = est.gms
        self.winsorized_count_ = est.winsorized_count
        self.n_runs_ = matrix.n_runs
        self.n_iterations_ = sum(matrix.iterations)
        return self

    @property
    def verdict_(self):
        check_is_fitted(self, "interval_")
        return stats.verdict(self.interval_)

    def relative_width(self) -> float:
        check_is_fitted(self, "interval_")
        return stats.relative_width(self.interval_)


class DifferenceOfMeansEstimator(BaseEstimator):
    """Difference of mean execution times from unpaired runs (``X`` = A, ``y`` = B)."""

    def __init__(self, level=stats.DEFAULT_LEVEL, replicates=stats.DEFAULT_REPLICATES,
                 winsor_threshold=stats.DEFAULT_WINSOR_THRESHOLD, seed=0):
        self.level = level
        self.replicates = replicates
        self.winsor_threshold = winsor_threshold
        self.seed = seed

    def fit(self, X, y):
        a, b = check_runs(X, "X"), check_runs(y, "y")
        level = check_level(self.level)
        replicates = check_positive_int(self.replicates, "replicates")
        est = stats.estimate_difference(a, b, replicates, level, self.seed, self.winsor_threshold)
        self.interval_ = est.interval
        self.point_ = est.interval.point
        self.grand_mean_ = est.grand_mean
        self.winsorized_count_ = est.winsorized_count
        self.n_runs_ = (len(a), len(b))
        self.n_iterations_ = sum(r.size for r in a) + sum(r.size for r in b)
        return self

    @property
    def verdict_(self):
        check_is_fitted(self, "interval_")
        return stats.verdict(self.interval_)

    def relative_width(self) -> float:
        check_is_fitted(self, "interval_")
        return stats.relative_width(self.interval_, self.grand_mean_)
