"""Experiment data model: samples, paired matrices, intervals and configs.

Durations are integer nanoseconds as read from the clock. Ratios and
means are computed later in double precision.
"""
from __future__ import annotations

import csv
import enum
import json
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

RESULT_HEADER = ("workload", "run", "iteration", "start_ns", "duration_ns")
HARNESS_EXTRA_COLUMNS = ("filler", "affinity_mask")

WORKLOAD_IDS = ("A", "B")


class IntervalKind(str, enum.Enum):
    RATIO_OF_MEANS = "ratio-of-means"
    DIFFERENCE_OF_MEANS = "difference-of-means"


class Mode(str, enum.Enum):
    DUET = "duet"
    DUET_FILL = "duet-fill"
    SEQUENTIAL = "sequential"


class ArtificialKind(str, enum.Enum):
    INTEGER = "integer"
    FLOAT = "float"
    CACHE = "cache"
    MEMORY = "memory"


@dataclass(frozen=True)
class MeasurementSample:
    workload: str
    run: int
    iteration: int
    start_ns: int
    duration_ns: int
    filler: bool = False
    affinity_mask: str | None = None

    def __post_init__(self):
        if self.workload not in WORKLOAD_IDS:
            raise ValueError(f"workload must be one of {WORKLOAD_IDS}, got {self.workload!r}")
        if self.duration_ns <= 0:
            raise ValueError(
                f"non-positive duration {self.duration_ns} "
                f"(workload {self.workload}, run {self.run}, iteration {self.iteration})"
            )


@dataclass(frozen=True)
class RunSeries:
    run: int
    durations: tuple

    def __post_init__(self):
        object.__setattr__(self, "durations", tuple(self.durations))

    def __len__(self):
        return len(self.durations)


@dataclass(frozen=True)
class PairedMatrix:
    """Index-aligned duet measurements, one ``(x, y)`` pair of series per run.

    ``discarded_runs`` lists run indices present on only one side of the
    input; they are kept here so reports can say what pairing dropped.
    """

    run_ids: tuple
    x: tuple
    y: tuple
    discarded_runs: tuple = ()

    def __post_init__(self):
        x = tuple(tuple(r) for r in self.x)
        y = tuple(tuple(r) for r in self.y)
        if not (len(self.run_ids) == len(x) == len(y)):
            raise ValueError("run_ids, x and y must have the same number of runs")
        for run, xs, ys in zip(self.run_ids, x, y):
            if len(xs) != len(ys):
                raise ValueError(f"run {run}: x has {len(xs)} iterations, y has {len(ys)}")
            if not xs:
                raise ValueError(f"run {run} has no paired iterations")
            if min(xs) <= 0 or min(ys) <= 0:
                raise ValueError(f"run {run} contains a non-positive duration")
        object.__setattr__(self, "run_ids", tuple(self.run_ids))
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "discarded_runs", tuple(self.discarded_runs))

    @classmethod
    def from_arrays(cls, x, y, run_ids=None):
        x = [list(r) for r in x]
        y = [list(r) for r in y]
        if run_ids is None:
            run_ids = range(1, len(x) + 1)
        return cls(tuple(run_ids), x, y)

    @property
    def n_runs(self) -> int:
        return len(self.run_ids)

    @property
    def iterations(self) -> tuple:
        return tuple(len(r) for r in self.x)

    def swapped(self) -> "PairedMatrix":
        return PairedMatrix(self.run_ids, self.y, self.x, self.discarded_runs)

    def series(self):
        """Split back into two lists of :class:`RunSeries`."""
        a = [RunSeries(r, xs) for r, xs in zip(self.run_ids, self.x)]
        b = [RunSeries(r, ys) for r, ys in zip(self.run_ids, self.y)]
        return a, b


@dataclass(frozen=True)
class ConfidenceInterval:
    lo: float
    hi: float
    level: float
    kind: IntervalKind
    point: float
    method: str = "percentile-nearest-rank"

    def __post_init__(self):
        object.__setattr__(self, "kind", IntervalKind(self.kind))
        if not 0.0 < self.level < 1.0:
            raise ValueError(f"level must lie in (0, 1), got {self.level}")
        slack = 1e-12 * max(1.0, abs(self.point))
        if not (self.lo - slack <= self.point <= self.hi + slack):
            raise ValueError(f"interval ({self.lo}, {self.hi}) does not contain point {self.point}")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        return d


@dataclass(frozen=True)
class WorkloadSpec:
    """A workload to measure.

    Either ``builtin`` (an artificial kind plus its operation count) or
    ``command`` (an external program speaking the harness wire protocol)
    must be given. ``max_iterations`` overrides the experiment budget for
    this workload only.
    """

    label: str
    builtin: tuple | None = None
    command: tuple | None = None
    env: dict = field(default_factory=dict)
    max_iterations: int | None = None

    def __post_init__(self):
        if (self.builtin is None) == (self.command is None):
            raise ValueError(f"workload {self.label!r}: give exactly one of 'builtin' or 'command'")
        if self.builtin is not None:
            kind, count = self.builtin
            kind = ArtificialKind(kind)
            if int(count) < 1:
                raise ValueError(f"workload {self.label!r}: operation_count must be >= 1")
            object.__setattr__(self, "builtin", (kind, int(count)))
        else:
            if not self.command:
                raise ValueError(f"workload {self.label!r}: empty command")
            object.__setattr__(self, "command", tuple(str(c) for c in self.command))
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError(f"workload {self.label!r}: max_iterations must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "WorkloadSpec":
        builtin = d.get("builtin")
        if isinstance(builtin, dict):
            builtin = (builtin["kind"], builtin["operation_count"])
        return cls(
            label=d.get("label", ""),
            builtin=builtin,
            command=d.get("command"),
            env=dict(d.get("env", {})),
            max_iterations=d.get("max_iterations"),
        )

    def to_dict(self) -> dict:
        d = {"label": self.label}
        if self.builtin is not None:
            d["builtin"] = {"kind": self.builtin[0].value, "operation_count": self.builtin[1]}
        else:
            d["command"] = list(self.command)
            d["env"] = dict(self.env)
        if self.max_iterations is not None:
            d["max_iterations"] = self.max_iterations
        return d


@dataclass(frozen=True)
class ExperimentConfig:
    workload_a: WorkloadSpec
    workload_b: WorkloadSpec
    runs: int
    mode: Mode = Mode.DUET
    max_iterations: int = 100
    max_time: float = 600.0
    warmup_fraction: float = 0.0
    seed: int = 0
    cores: tuple | None = None
    randomize_cores: bool = True
    barrier_timeout: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.max_time > 0:
            raise ValueError("max_time must be > 0")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ValueError("warmup_fraction must lie in [0, 1)")
        if self.cores is not None:
            cores = tuple(int(c) for c in self.cores)
            if len(cores) != 2:
                raise ValueError("cores must be a pair of logical CPU indices")
            object.__setattr__(self, "cores", cores)
        if self.barrier_timeout is not None and not self.barrier_timeout > 0:
            raise ValueError("barrier_timeout must be > 0")

    def budget(self, workload: str) -> int:
        spec = self.workload_a if workload == "A" else self.workload_b
        return spec.max_iterations or self.max_iterations

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        d["workload_a"] = WorkloadSpec.from_dict(d["workload_a"])
        d["workload_b"] = WorkloadSpec.from_dict(d["workload_b"])
        if d.get("cores") is not None:
            d["cores"] = tuple(d["cores"])
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "workload_a": self.workload_a.to_dict(),
            "workload_b": self.workload_b.to_dict(),
            "runs": self.runs,
            "max_iterations": self.max_iterations,
            "max_time": self.max_time,
            "warmup_fraction": self.warmup_fraction,
            "seed": self.seed,
            "cores": list(self.cores) if self.cores is not None else None,
            "randomize_cores": self.randomize_cores,
            "barrier_timeout": self.barrier_timeout,
        }


def load_config(path) -> ExperimentConfig:
    with open(path) as f:
        return ExperimentConfig.from_dict(json.load(f))


@dataclass(frozen=True)
class InterferenceModel:
    """Parameters of the synthetic interference generator.

    Slowdown factors are multiplicative unless ``additive`` is set, in which
    case an event adds ``(magnitude - 1) * base`` to the affected sample.
    """

    base_a: float
    base_b: float
    iid_sigma: float = 0.0
    sync_prob: float = 0.0
    sync_magnitude: float = 1.0
    desync_prob: float = 0.0
    desync_magnitude: float = 1.0
    run_sigma: float = 0.0
    additive: bool = False

    def __post_init__(self):
        if not (self.base_a > 0 and self.base_b > 0):
            raise ValueError("base times must be positive")
        for name in ("sync_prob", "desync_prob"):
            p = getattr(self, name)
            if not (0.0 <= p <= 1.0) or math.isnan(p):
                raise ValueError(f"{name} must lie in [0, 1], got {p}")
        for name in ("sync_magnitude", "desync_magnitude"):
            if not getattr(self, name) >= 1.0:
                raise ValueError(f"{name} must be >= 1")
        for name in ("iid_sigma", "run_sigma"):
            if not getattr(self, name) >= 0.0:
                raise ValueError(f"{name} must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "InterferenceModel":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown model fields: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def pair_results(samples_a: Iterable[MeasurementSample],
                 samples_b: Iterable[MeasurementSample]) -> PairedMatrix:
    """Align two result sets by run and iteration index.

    Runs present on only one side are dropped (and listed in
    ``discarded_runs``); within a run the longer series is truncated to the
    shorter one. Filler samples never take part in pairing.
    """
    runs_a = _group_runs(samples_a, "A")
    runs_b = _group_runs(samples_b, "B")
    common = sorted(set(runs_a) & set(runs_b))
    if not common:
        raise ValueError("no paired runs")
    discarded = sorted(set(runs_a) ^ set(runs_b))
    xs, ys = [], []
    for run in common:
        n = min(len(runs_a[run]), len(runs_b[run]))
        if n == 0:
            raise ValueError(f"run {run} has zero paired iterations")
        xs.append(runs_a[run][:n])
        ys.append(runs_b[run][:n])
    return PairedMatrix(tuple(common), xs, ys, tuple(discarded))


def _group_runs(samples, label) -> dict:
    by_run = defaultdict(list)
    seen = set()
    for s in samples:
        key = (s.workload, s.run, s.iteration)
        if key in seen:
            raise ValueError(f"duplicate sample for workload {s.workload}, run {s.run}, iteration {s.iteration}")
        seen.add(key)
        if s.filler:
            continue
        by_run[s.run].append(s)
    out = {}
    for run, ss in by_run.items():
        ss.sort(key=lambda s: s.iteration)
        out[run] = [s.duration_ns for s in ss]
    if not out:
        raise ValueError(f"no measured samples for workload {label}")
    return out


def group_series(samples: Iterable[MeasurementSample]) -> list:
    """Measured (non-filler) samples as one :class:`RunSeries` per run."""
    runs = _group_runs(samples, "?")
    return [RunSeries(r, runs[r]) for r in sorted(runs)]


def samples_from_matrix(matrix: PairedMatrix, start_ns: int = 0):
    """Synthesize result rows for a paired matrix.

    Start timestamps are laid out back to back per run from ``start_ns``;
    both workloads share the start of every paired iteration.
    """
    a, b = [], []
    t = start_ns
    for run, xs, ys in zip(matrix.run_ids, matrix.x, matrix.y):
        for i, (dx, dy) in enumerate(zip(xs, ys), start=1):
            a.append(MeasurementSample("A", run, i, t, int(dx)))
            b.append(MeasurementSample("B", run, i, t, int(dy)))
            t += max(int(dx), int(dy))
    return a, b


def samples_from_series(a: Sequence[RunSeries], b: Sequence[RunSeries], start_ns: int = 0):
    """Synthesize result rows for unpaired runs executed one after another."""
    out = {"A": [], "B": []}
    t = start_ns
    for w, runs in (("A", a), ("B", b)):
        for series in runs:
            for i, d in enumerate(series.durations, start=1):
                out[w].append(MeasurementSample(w, series.run, i, t, int(d)))
                t += int(d)
    return out["A"], out["B"]


def write_results(path, samples: Sequence[MeasurementSample], extended: bool = False):
    header = RESULT_HEADER + (HARNESS_EXTRA_COLUMNS if extended else ())
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for s in samples:
            row = [s.workload, s.run, s.iteration, s.start_ns, s.duration_ns]
            if extended:
                row += [int(s.filler), s.affinity_mask or ""]
            w.writerow(row)


def read_results(path) -> list:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = tuple(next(reader))
        except StopIteration:
            raise ValueError(f"{path}: empty result file") from None
        if header[:5] != RESULT_HEADER:
            raise ValueError(f"{path}: unexpected header {','.join(header)}")
        extras = header[5:]
        out = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rec = dict(zip(extras, row[5:]))
                out.append(MeasurementSample(
                    workload=row[0],
                    run=int(row[1]),
                    iteration=int(row[2]),
                    start_ns=int(row[3]),
                    duration_ns=int(row[4]),
                    filler=rec.get("filler", "0") in ("1", "true", "True"),
                    affinity_mask=rec.get("affinity_mask") or None,
                ))
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return out


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())
