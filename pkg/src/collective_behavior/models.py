"""Data models for the collective behavior pipeline.

These models represent the data structures passed between ingestion, segmentation,
feature extraction and evaluation. All of them are immutable after construction.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, ClassVar

import numpy as np

from .errors import IrregularSampling, MisalignedAnnotation, NonFiniteFeature

if TYPE_CHECKING:
    from collections.abc import Iterator, Sequence
    from typing import Any

    from numpy.typing import NDArray

GROUP = "group"
"""Entity id of annotations that apply to every tracked entity."""

ABSTAIN = "__abstain__"
"""Label of windows without annotation coverage."""

GRID_TOLERANCE = 0.01
"""Fraction of the sample period a timestamp may deviate from the grid."""


class RowStatus(str, Enum):
    """Outcome of a sweep row or an evaluated variant."""

    OK = "ok"
    FAILED = "failed"


def _frozen(array: NDArray[Any]) -> NDArray[Any]:
    out = np.array(array, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Fix:
    """One observation of one entity."""

    timestamp: float
    x: float
    y: float
    valid: bool = True

    def __post_init__(self) -> None:
        if self.valid and not (math.isfinite(self.x) and math.isfinite(self.y)):
            msg = f"valid fix at t={self.timestamp} has non-finite coordinates"
            raise ValueError(msg)


@dataclass(frozen=True, eq=False)
class EntityTimeSeries:
    """Timestamped positions of one tracked individual.

    Coordinates are stored column-wise; ``valid`` is False for interpolated fixes.
    """

    entity_id: str
    timestamps: NDArray[np.float64]
    x: NDArray[np.float64]
    y: NDArray[np.float64]
    valid: NDArray[np.bool_]

    def __post_init__(self) -> None:
        if not self.entity_id:
            msg = "entity_id must be non-empty"
            raise ValueError(msg)
        ts = np.asarray(self.timestamps, dtype=np.float64)
        xs = np.asarray(self.x, dtype=np.float64)
        ys = np.asarray(self.y, dtype=np.float64)
        valid = np.asarray(self.valid, dtype=np.bool_)
        if not (ts.shape == xs.shape == ys.shape == valid.shape) or ts.ndim != 1:
            msg = f"{self.entity_id}: timestamp and coordinate arrays differ in shape"
            raise ValueError(msg)
        if ts.size > 1 and not np.all(np.diff(ts) > 0):
            msg = f"{self.entity_id}: timestamps must be strictly increasing"
            raise ValueError(msg)
        if not (np.all(np.isfinite(xs[valid])) and np.all(np.isfinite(ys[valid]))):
            msg = f"{self.entity_id}: valid fixes must have finite coordinates"
            raise ValueError(msg)
        object.__setattr__(self, "timestamps", _frozen(ts))
        object.__setattr__(self, "x", _frozen(xs))
        object.__setattr__(self, "y", _frozen(ys))
        object.__setattr__(self, "valid", _frozen(valid))

    @classmethod
    def from_fixes(cls, entity_id: str, fixes: Sequence[Fix]) -> EntityTimeSeries:
        """Build a series from Fix objects."""
        return cls(
            entity_id=entity_id,
            timestamps=np.array([f.timestamp for f in fixes], dtype=np.float64),
            x=np.array([f.x for f in fixes], dtype=np.float64),
            y=np.array([f.y for f in fixes], dtype=np.float64),
            valid=np.array([f.valid for f in fixes], dtype=np.bool_),
        )

    @property
    def samples(self) -> tuple[Fix, ...]:
        """The series as Fix objects."""
        return tuple(
            Fix(float(t), float(x), float(y), bool(v))
            for t, x, y, v in zip(self.timestamps, self.x, self.y, self.valid, strict=True)
        )

    @property
    def length(self) -> int:
        """Number of samples t_i."""
        return int(self.timestamps.size)

    def __len__(self) -> int:
        return self.length

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EntityTimeSeries):
            return NotImplemented
        return (
            self.entity_id == other.entity_id
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.x, other.x, equal_nan=True)
            and np.array_equal(self.y, other.y, equal_nan=True)
            and np.array_equal(self.valid, other.valid)
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class TrajectorySet:
    """Aligned time series of n entities on a shared timestamp grid."""

    entities: tuple[EntityTimeSeries, ...]
    epoch: float
    sample_period: float

    def __post_init__(self) -> None:
        if not self.entities:
            msg = "a trajectory set needs at least one entity"
            raise ValueError(msg)
        ids = [e.entity_id for e in self.entities]
        if len(set(ids)) != len(ids):
            msg = "entity ids must be unique"
            raise ValueError(msg)
        if self.sample_period <= 0:
            msg = "sample_period must be positive"
            raise ValueError(msg)
        for series in self.entities:
            offsets = (series.timestamps - self.epoch) / self.sample_period
            drift = np.abs(offsets - np.round(offsets))
            if drift.size and float(drift.max()) > GRID_TOLERANCE:
                msg = f"{series.entity_id}: fixes are not aligned to the sample grid"
                raise IrregularSampling(msg)

    @property
    def entity_ids(self) -> tuple[str, ...]:
        """Entity identifiers in set order."""
        return tuple(e.entity_id for e in self.entities)

    @property
    def n(self) -> int:
        """Number of entities."""
        return len(self.entities)

    @property
    def span_end(self) -> float:
        """Exclusive end of the observed span (last fix plus one period)."""
        last = max(float(e.timestamps[-1]) for e in self.entities if e.length)
        return last + self.sample_period

    @property
    def total_fixes(self) -> int:
        """Total number of samples over all entities."""
        return sum(e.length for e in self.entities)

    def entity(self, entity_id: str) -> EntityTimeSeries:
        """Look up one entity's series."""
        for series in self.entities:
            if series.entity_id == entity_id:
                return series
        raise KeyError(entity_id)

    def slot_index(self, series: EntityTimeSeries) -> NDArray[np.int64]:
        """Grid slot of every fix of a series, relative to the epoch."""
        return np.round((series.timestamps - self.epoch) / self.sample_period).astype(np.int64)

    def __iter__(self) -> Iterator[EntityTimeSeries]:
        return iter(self.entities)


@dataclass(frozen=True)
class Annotation:
    """One behavior annotation starting at a label-grid slot."""

    entity_id: str
    start: float
    label: str

    @property
    def is_group(self) -> bool:
        """Whether the annotation applies to all entities."""
        return self.entity_id == GROUP


@dataclass(frozen=True)
class LabelSet:
    """Sparse timestamped behavior annotations."""

    annotations: tuple[Annotation, ...]
    label_resolution: float
    epoch: float = 0.0

    def __post_init__(self) -> None:
        if self.label_resolution <= 0:
            msg = "label_resolution must be positive"
            raise ValueError(msg)
        for ann in self.annotations:
            offset = (ann.start - self.epoch) / self.label_resolution
            if abs(offset - round(offset)) > 1e-9:
                msg = (
                    f"annotation at t={ann.start} for {ann.entity_id!r} is not a multiple "
                    f"of {self.label_resolution} s"
                )
                raise MisalignedAnnotation(msg)

    @property
    def classes(self) -> frozenset[str]:
        """Distinct behavior labels."""
        return frozenset(a.label for a in self.annotations)

    @property
    def entity_ids(self) -> tuple[str, ...]:
        """Annotated entity ids in first-appearance order."""
        return tuple(dict.fromkeys(a.entity_id for a in self.annotations))

    def histogram(self) -> dict[str, int]:
        """Annotation count per class, sorted by class name."""
        counts = Counter(a.label for a in self.annotations)
        return dict(sorted(counts.items()))

    def __len__(self) -> int:
        return len(self.annotations)


@dataclass
class IngestReport:
    """Counts gathered while loading the trajectory and annotation files."""

    rows_read: int = 0
    rows_rejected: int = 0
    duplicates: int = 0
    gaps_filled: int = 0
    coverage: dict[str, float] = field(default_factory=dict)
    rejected_reasons: dict[str, int] = field(default_factory=dict)
    labels_rejected: int = 0
    label_duplicates: int = 0

    def to_dict(self) -> dict[str, Any]:
        """JSON-ready representation."""
        return {
            "rows_read": self.rows_read,
            "rows_rejected": self.rows_rejected,
            "duplicates": self.duplicates,
            "gaps_filled": self.gaps_filled,
            "labels_rejected": self.labels_rejected,
            "label_duplicates": self.label_duplicates,
            "rejected_reasons": dict(sorted(self.rejected_reasons.items())),
            "coverage": self.coverage,
        }


@dataclass
class AlignmentReport:
    """Diagnostic comparison of trajectories and annotations."""

    coverage: dict[str, float]
    unlabeled_span: float
    orphans: list[str]
    class_histogram: dict[str, int]

    def to_dict(self) -> dict[str, Any]:
        """JSON-ready representation."""
        return {
            "coverage": self.coverage,
            "unlabeled_span_s": self.unlabeled_span,
            "orphans": self.orphans,
            "class_histogram": self.class_histogram,
        }


@dataclass(frozen=True)
class Window:
    """One time window shared by all entities.

    ``ranges[i]`` is the half-open index range of entity i's fixes inside
    ``[start, end)``.
    """

    index: int
    start: float
    end: float
    ranges: tuple[tuple[int, int], ...]

    @property
    def length(self) -> float:
        """Window duration in seconds."""
        return self.end - self.start

    def fix_count(self) -> int:
        """Fixes referenced over all entities."""
        return sum(hi - lo for lo, hi in self.ranges)


@dataclass(frozen=True)
class WindowSet:
    """Contiguous partition of the observed span."""

    windows: tuple[Window, ...]
    resolution: float
    origin: float

    @property
    def T(self) -> int:  # noqa: N802 - conventional window-count symbol
        """Number of windows."""
        return len(self.windows)

    def __iter__(self) -> Iterator[Window]:
        return iter(self.windows)

    def __len__(self) -> int:
        return len(self.windows)


@dataclass(frozen=True)
class LabeledWindow:
    """A window with its majority annotation."""

    window: Window
    label: str
    label_support: float

    @property
    def abstained(self) -> bool:
        """Whether the window had no annotation coverage."""
        return self.label == ABSTAIN


@dataclass(frozen=True)
class KinematicFeatures:
    """Movement descriptors of one entity inside one window."""

    FIELDS: ClassVar[tuple[str, ...]] = (
        "mean_speed",
        "std_speed",
        "mean_step",
        "path_length",
        "net_displacement",
        "straightness",
        "mean_turn_angle",
        "fix_fraction",
    )

    mean_speed: float = 0.0
    std_speed: float = 0.0
    mean_step: float = 0.0
    path_length: float = 0.0
    net_displacement: float = 0.0
    straightness: float = 0.0
    mean_turn_angle: float = 0.0
    fix_fraction: float = 0.0

    def as_array(self) -> NDArray[np.float64]:
        """Feature values in FIELDS order."""
        return np.array([getattr(self, name) for name in self.FIELDS], dtype=np.float64)


@dataclass(frozen=True, eq=False)
class ProximityGraph:
    """Weighted undirected proximity graph over the entities of one window."""

    nodes: tuple[str, ...]
    weights: NDArray[np.float64]
    threshold: float
    binarize_at: float

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=np.float64)
        n = len(self.nodes)
        if w.shape != (n, n):
            msg = f"weight matrix shape {w.shape} does not match {n} nodes"
            raise ValueError(msg)
        if not np.array_equal(w, w.T):
            msg = "edge weights must be symmetric"
            raise ValueError(msg)
        if np.any(np.diag(w) != 0):
            msg = "self-loops are not allowed"
            raise ValueError(msg)
        if np.any((w < 0) | (w > 1)):
            msg = "edge weights must lie in [0, 1]"
            raise ValueError(msg)
        object.__setattr__(self, "weights", _frozen(w))

    @property
    def n(self) -> int:
        """Number of nodes."""
        return len(self.nodes)

    @property
    def adjacency(self) -> NDArray[np.bool_]:
        """Binary adjacency: weight at or above binarize_at."""
        adj = self.weights >= self.binarize_at
        np.fill_diagonal(adj, val=False)
        return adj

    def edges(self) -> list[tuple[str, str, float]]:
        """Edges with positive weight as (src, dst, weight), src before dst."""
        rows, cols = np.nonzero(np.triu(self.weights, k=1))
        return [
            (self.nodes[i], self.nodes[j], float(self.weights[i, j]))
            for i, j in zip(rows.tolist(), cols.tolist(), strict=True)
        ]


@dataclass(frozen=True, eq=False)
class PageRankResult:
    """Stationary scores of the weighted random walk."""

    scores: NDArray[np.float64]
    iterations: int
    converged: bool
    residual: float


@dataclass(frozen=True, eq=False)
class NetworkFeatures:
    """Topological and relational features of one node."""

    degree: int
    weighted_degree: float
    pagerank: float
    neighbor_mean: NDArray[np.float64]
    isolated: bool


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Instances per (entity, labeled window) with named feature columns."""

    values: NDArray[np.float64]
    columns: tuple[str, ...]
    targets: tuple[str, ...] | None = None
    group_keys: NDArray[np.int64] = field(default_factory=lambda: np.zeros(0, np.int64))
    entity_ids: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[1] != len(self.columns):  # noqa: PLR2004
            msg = f"values shape {values.shape} does not match {len(self.columns)} columns"
            raise ValueError(msg)
        if len(set(self.columns)) != len(self.columns):
            msg = "feature column names must be unique"
            raise ValueError(msg)
        if not np.all(np.isfinite(values)):
            bad = sorted({self.columns[j] for j in np.nonzero(~np.isfinite(values))[1]})
            msg = f"non-finite values in columns {bad}"
            raise NonFiniteFeature(msg)
        rows = values.shape[0]
        if self.targets is not None:
            if len(self.targets) != rows:
                msg = "targets length does not match row count"
                raise ValueError(msg)
            if ABSTAIN in self.targets:
                msg = "ABSTAIN targets must be excluded from a feature matrix"
                raise ValueError(msg)
        keys = np.asarray(self.group_keys, dtype=np.int64)
        if keys.size == 0:
            keys = np.zeros(rows, dtype=np.int64)
        if keys.shape != (rows,):
            msg = "group_keys length does not match row count"
            raise ValueError(msg)
        entity_ids = self.entity_ids or tuple("" for _ in range(rows))
        if len(entity_ids) != rows:
            msg = "entity_ids length does not match row count"
            raise ValueError(msg)
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "group_keys", _frozen(keys))
        object.__setattr__(self, "entity_ids", tuple(entity_ids))

    @property
    def n_rows(self) -> int:
        """Number of instances."""
        return int(self.values.shape[0])

    def column(self, name: str) -> NDArray[np.float64]:
        """One feature column by name."""
        return self.values[:, self.columns.index(name)]

    def take(self, rows: Sequence[int] | NDArray[np.int64]) -> FeatureMatrix:
        """Subset of rows, in the given order."""
        idx = np.asarray(rows, dtype=np.int64)
        return FeatureMatrix(
            values=self.values[idx],
            columns=self.columns,
            targets=None if self.targets is None else tuple(self.targets[i] for i in idx),
            group_keys=self.group_keys[idx],
            entity_ids=tuple(self.entity_ids[i] for i in idx),
        )

    def select_columns(self, names: Sequence[str]) -> FeatureMatrix:
        """Reorder or restrict columns by name."""
        idx = [self.columns.index(name) for name in names]
        return FeatureMatrix(
            values=self.values[:, idx],
            columns=tuple(names),
            targets=self.targets,
            group_keys=self.group_keys,
            entity_ids=self.entity_ids,
        )

    def without_targets(self) -> FeatureMatrix:
        """Same rows with targets removed."""
        return FeatureMatrix(
            values=self.values,
            columns=self.columns,
            targets=None,
            group_keys=self.group_keys,
            entity_ids=self.entity_ids,
        )


@dataclass
class MetricReport:
    """Per-fold values and summary of one metric."""

    metric: str
    per_fold: list[float]
    confusion_matrix: list[list[int]]
    class_labels: list[str]

    @property
    def mean(self) -> float:
        """Mean over folds."""
        return float(np.mean(self.per_fold)) if self.per_fold else float("nan")

    @property
    def std(self) -> float:
        """Population standard deviation over folds."""
        return float(np.std(self.per_fold)) if self.per_fold else float("nan")

    def to_dict(self) -> dict[str, Any]:
        """JSON-ready representation."""
        return {
            "metric": self.metric,
            "per_fold": self.per_fold,
            "mean": self.mean,
            "std": self.std,
            "class_labels": self.class_labels,
            "confusion_matrix": self.confusion_matrix,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> MetricReport:
        """Inverse of to_dict."""
        return cls(
            metric=data["metric"],
            per_fold=[float(v) for v in data["per_fold"]],
            confusion_matrix=[[int(c) for c in row] for row in data["confusion_matrix"]],
            class_labels=list(data["class_labels"]),
        )


@dataclass
class ResolutionScore:
    """One row of a resolution sweep."""

    resolution: float
    accuracy_mean: float = float("nan")
    accuracy_std: float = float("nan")
    wf1_mean: float = float("nan")
    wf1_std: float = float("nan")
    combined_score: float = float("nan")
    status: RowStatus = RowStatus.OK
    error: str | None = None


@dataclass
class ResolutionScoreTable:
    """Sweep results ordered by resolution."""

    rows: list[ResolutionScore]

    def __post_init__(self) -> None:
        self.rows = sorted(self.rows, key=lambda r: r.resolution)

    def successful(self) -> list[ResolutionScore]:
        """Rows whose pipeline completed."""
        return [r for r in self.rows if r.status is RowStatus.OK]
