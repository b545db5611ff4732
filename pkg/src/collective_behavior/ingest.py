"""Trajectory and annotation ingestion.

Loads multi-entity GPS fixes and behavior annotations from CSV, snaps fixes to a
common timestamp grid, repairs short gaps, and reports how well the annotations
cover the trajectories.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
import pandas as pd
import structlog

from .config import SchemaConfig
from .errors import (
    EmptyInput,
    InputError,
    InvalidConfig,
    IrregularSampling,
    MissingColumn,
    UnknownEntity,
)
from .models import (
    GRID_TOLERANCE,
    GROUP,
    AlignmentReport,
    Annotation,
    EntityTimeSeries,
    IngestReport,
    LabelSet,
    TrajectorySet,
)

if TYPE_CHECKING:
    from numpy.typing import NDArray

logger = structlog.get_logger(__name__)

EARTH_RADIUS_M = 6_371_000.0
DEFAULT_SAMPLE_PERIOD = 1.0
CLOCK_RESOLUTION = 1e-6
LABEL_COLUMNS = ("timestamp", "id", "label")

_TRUE_FLAGS = {"", "1", "true", "t", "yes", "y"}
_FALSE_FLAGS = {"0", "false", "f", "no", "n"}


def _read_csv(path: Path) -> pd.DataFrame:
    if not path.exists():
        msg = f"File not found: {path}"
        raise InputError(msg)
    try:
        return pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError:
        return pd.DataFrame()


def parse_timestamps(raw: pd.Series) -> NDArray[np.float64]:
    """Parse integer epoch seconds or ISO-8601 strings to UTC seconds.

    Unparseable values become NaN.
    """
    text = raw.astype(str).str.strip()
    out = pd.to_numeric(text, errors="coerce").to_numpy(dtype=np.float64)
    pending = np.isnan(out) & (text != "").to_numpy()
    if pending.any():
        parsed = pd.to_datetime(text[pending], utc=True, errors="coerce", format="ISO8601")
        seconds = (parsed - pd.Timestamp(0, tz="UTC")) / pd.Timedelta(seconds=1)
        out[pending] = seconds.to_numpy(dtype=np.float64, na_value=np.nan)
    return out


def _parse_float(raw: pd.Series) -> NDArray[np.float64]:
    # Python's float() round-trips repr() exactly; the pandas fast parser does not.
    text = raw.astype(str).str.strip()
    out = pd.to_numeric(text, errors="coerce").to_numpy(dtype=np.float64)
    ok = ~np.isnan(out)
    if ok.any():
        out[ok] = text.to_numpy(dtype=object)[ok].astype(np.float64)
    return out


def _parse_valid(raw: pd.Series) -> tuple[NDArray[np.bool_], NDArray[np.bool_]]:
    text = raw.astype(str).str.strip().str.lower()
    valid = text.isin(_TRUE_FLAGS).to_numpy()
    known = valid | text.isin(_FALSE_FLAGS).to_numpy()
    return valid, known


def project_lonlat(
    lon: NDArray[np.float64],
    lat: NDArray[np.float64],
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Equirectangular projection to meters about the centroid of the points."""
    lon0 = float(np.mean(lon))
    lat0 = float(np.mean(lat))
    x = EARTH_RADIUS_M * np.radians(lon - lon0) * math.cos(math.radians(lat0))
    y = EARTH_RADIUS_M * np.radians(lat - lat0)
    return x, y


def _dominant_step(steps: NDArray[np.float64]) -> float:
    """Median of the most populated cluster of steps.

    Steps within twice the grid tolerance of a cluster's smallest step join it.
    """
    values, counts = np.unique(np.round(steps, 6), return_counts=True)
    best_total, best = 0, (0, 0)
    lo = 0
    for hi in range(1, values.size + 1):
        if hi < values.size and values[hi] <= values[lo] * (1 + 2 * GRID_TOLERANCE):
            continue
        total = int(counts[lo:hi].sum())
        # strict comparison keeps the smaller step on ties
        if total > best_total:
            best_total, best = total, (lo, hi)
        lo = hi
    lo, hi = best
    return float(np.median(np.repeat(values[lo:hi], counts[lo:hi])))


def _fit_period(timestamps: NDArray[np.float64], step: float) -> float:
    """Least-squares grid step through every distinct timestamp.

    Distinct timestamps are cut into runs wherever a gap is not a whole number of
    steps; each run gets its own intercept and slot indices from the gaps inside
    it, so jitter never accumulates into drift. A grid exact to the clock
    resolution returns ``step`` unchanged.
    """
    ts = np.unique(timestamps)
    if ts.size < 2:  # noqa: PLR2004
        return step
    ratio = np.diff(ts) / step
    whole = np.round(ratio)
    breaks = np.abs(ratio - whole) > 2 * GRID_TOLERANCE
    run = np.concatenate([[0], np.cumsum(breaks)])
    sizes = np.bincount(run)
    slots = np.concatenate([[0.0], np.cumsum(whole)])
    rel = ts - ts[0]
    k = slots - (np.bincount(run, slots) / sizes)[run]
    t = rel - (np.bincount(run, rel) / sizes)[run]
    spread = float(np.dot(k, k))
    if spread == 0 or np.max(np.abs(t - k * step)) <= CLOCK_RESOLUTION:
        return step
    return float(np.dot(k, t) / spread)


def infer_sample_period(timestamps: NDArray[np.float64], ids: NDArray[np.object_]) -> float:
    """Grid step of the fixes, robust to clock jitter within the grid tolerance.

    The dominant step between consecutive fixes of the same entity gives the rough
    period, which a least-squares fit over all timestamps then refines.
    """
    keys = np.asarray(ids, dtype=str)
    order = np.lexsort((timestamps, keys))
    ts = timestamps[order]
    same = keys[order][1:] == keys[order][:-1]
    steps = np.diff(ts)[same]
    steps = steps[steps > 0]
    if steps.size == 0:
        return DEFAULT_SAMPLE_PERIOD
    return _fit_period(timestamps, _dominant_step(steps))


def load_trajectories(
    path: str | Path,
    schema: SchemaConfig | None = None,
) -> tuple[TrajectorySet, IngestReport]:
    """Load a trajectory CSV into an aligned TrajectorySet.

    Rows with unparseable fields are rejected and counted; repeated
    (entity, timestamp) rows keep the first occurrence.

    Args:
        path: CSV file location.
        schema: Column-name configuration.

    Returns:
        The trajectory set and its ingest report.

    Raises:
        MissingColumn: If a required column is absent.
        EmptyInput: If no valid row remains.
        IrregularSampling: If a timestamp is off the grid beyond tolerance.

    """
    schema = schema or SchemaConfig()
    csv_path = Path(path).expanduser()
    frame = _read_csv(csv_path)

    required = [schema.timestamp, schema.id, schema.x, schema.y]
    missing = [c for c in required if c not in frame.columns]
    if missing:
        msg = f"{csv_path.name}: missing column(s) {missing}"
        raise MissingColumn(msg)

    report = IngestReport(rows_read=len(frame))
    timestamps = parse_timestamps(frame[schema.timestamp])
    ids = frame[schema.id].astype(str).str.strip().to_numpy(dtype=object)
    xs = _parse_float(frame[schema.x])
    ys = _parse_float(frame[schema.y])
    if schema.valid in frame.columns:
        valid, known_flag = _parse_valid(frame[schema.valid])
    else:
        valid = np.ones(len(frame), dtype=np.bool_)
        known_flag = valid.copy()

    checks = {
        "timestamp": np.isnan(timestamps),
        "id": ids == "",
        "coordinates": ~(np.isfinite(xs) & np.isfinite(ys)),
        "valid_flag": ~known_flag,
    }
    rejected = np.zeros(len(frame), dtype=np.bool_)
    for reason, mask in checks.items():
        fresh = mask & ~rejected
        if fresh.any():
            report.rejected_reasons[reason] = int(fresh.sum())
        rejected |= mask

    keep = ~rejected
    if not keep.any():
        msg = f"{csv_path.name}: no valid rows out of {len(frame)}"
        raise EmptyInput(msg)
    if rejected.any():
        logger.warning(
            "Rejected unparseable trajectory rows",
            path=str(csv_path),
            rejected=int(rejected.sum()),
            reasons=report.rejected_reasons,
        )

    timestamps, ids, xs, ys, valid = (
        timestamps[keep], ids[keep], xs[keep], ys[keep], valid[keep],
    )
    if schema.coordinates == "lonlat":
        xs, ys = project_lonlat(xs, ys)

    period = schema.sample_period or infer_sample_period(timestamps, ids)
    epoch = float(np.min(timestamps))
    offsets = (timestamps - epoch) / period
    slots = np.round(offsets)
    off_grid = np.abs(offsets - slots) > GRID_TOLERANCE
    if off_grid.any():
        first = int(np.argmax(off_grid))
        msg = (
            f"{int(off_grid.sum())} fix(es) deviate from the {period} s grid by more than "
            f"{GRID_TOLERANCE:.0%} (first: id={ids[first]}, t={timestamps[first]})"
        )
        raise IrregularSampling(msg)

    table = pd.DataFrame(
        {"id": ids, "slot": slots.astype(np.int64), "x": xs, "y": ys, "valid": valid},
    )
    deduped = table.drop_duplicates(subset=["id", "slot"], keep="first")
    report.duplicates = len(table) - len(deduped)
    report.rows_rejected = int(rejected.sum()) + report.duplicates
    if report.duplicates:
        logger.warning("Dropped duplicate fixes", path=str(csv_path), duplicates=report.duplicates)

    entities: list[EntityTimeSeries] = []
    for entity_id in pd.unique(deduped["id"]):
        rows = deduped[deduped["id"] == entity_id].sort_values("slot", kind="stable")
        entities.append(
            EntityTimeSeries(
                entity_id=str(entity_id),
                timestamps=epoch + rows["slot"].to_numpy(dtype=np.float64) * period,
                x=rows["x"].to_numpy(dtype=np.float64),
                y=rows["y"].to_numpy(dtype=np.float64),
                valid=rows["valid"].to_numpy(dtype=np.bool_),
            ),
        )

    trajectories = TrajectorySet(entities=tuple(entities), epoch=epoch, sample_period=period)
    report.coverage = entity_coverage(trajectories)
    logger.info(
        "Loaded trajectories",
        path=str(csv_path),
        entities=trajectories.n,
        fixes=trajectories.total_fixes,
        sample_period=period,
        rejected=report.rows_rejected,
    )
    return trajectories, report


def entity_coverage(trajectories: TrajectorySet) -> dict[str, float]:
    """Fraction of grid slots in the dataset span holding an original fix, per entity."""
    slots = round((trajectories.span_end - trajectories.epoch) / trajectories.sample_period)
    return {
        e.entity_id: float(np.count_nonzero(e.valid)) / slots if slots else 0.0
        for e in trajectories
    }


def _format_number(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else repr(float(value))


def _write_frame(frame: pd.DataFrame, path: str | Path) -> Path:
    out = Path(path).expanduser()
    out.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(out, index=False, lineterminator="\n", encoding="utf-8")
    return out


def write_trajectories(trajectories: TrajectorySet, path: str | Path) -> Path:
    """Write the canonical trajectory CSV (timestamp, id, x, y, valid).

    Numbers are written as repr() strings so reloading yields bit-identical values;
    ids are quoted when they need it.
    """
    frame = pd.DataFrame(
        {
            "timestamp": [_format_number(t) for e in trajectories for t in e.timestamps.tolist()],
            "id": [e.entity_id for e in trajectories for _ in range(e.length)],
            "x": [repr(x) for e in trajectories for x in e.x.tolist()],
            "y": [repr(y) for e in trajectories for y in e.y.tolist()],
            "valid": [int(v) for e in trajectories for v in e.valid.tolist()],
        },
    )
    return _write_frame(frame, path)


def load_labels(
    path: str | Path,
    resolution: float,
    trajectories: TrajectorySet | None = None,
    *,
    epoch: float = 0.0,
    tolerance: float = 0.0,
    report: IngestReport | None = None,
) -> LabelSet:
    """Load a behavior annotation CSV.

    Unparseable rows are rejected and repeated (id, timestamp) annotations keep
    the first occurrence; both are counted on ``report`` when one is given.

    Args:
        path: CSV with columns timestamp, id (or ``group``), label.
        resolution: Label resolution in seconds.
        trajectories: When given, every non-group id must belong to it.
        epoch: Origin of the label grid, UTC seconds.
        tolerance: Starts within this many seconds of a grid point snap onto it.
        report: Receives the rejected and duplicate counts.

    Returns:
        LabelSet with annotations sorted by timestamp.

    Raises:
        MissingColumn: If a required column is absent.
        MisalignedAnnotation: If a timestamp is off the label grid.
        UnknownEntity: If a cross-checked id is not tracked.

    """
    if resolution <= 0:
        msg = "label resolution must be positive"
        raise InputError(msg)
    csv_path = Path(path).expanduser()
    frame = _read_csv(csv_path)
    if frame.empty:
        logger.info("Loaded labels", path=str(csv_path), annotations=0)
        return LabelSet(annotations=(), label_resolution=resolution, epoch=epoch)

    missing = [c for c in LABEL_COLUMNS if c not in frame.columns]
    if missing:
        msg = f"{csv_path.name}: missing column(s) {missing}"
        raise MissingColumn(msg)

    starts = parse_timestamps(frame["timestamp"])
    if tolerance > 0:
        grid = epoch + np.round((starts - epoch) / resolution) * resolution
        starts = np.where(np.abs(starts - grid) <= tolerance, grid, starts)
    ids = frame["id"].astype(str).str.strip()
    ids = ids.where(ids.str.lower() != GROUP, GROUP)
    labels = frame["label"].astype(str).str.strip()

    table = pd.DataFrame({"start": starts, "id": ids, "label": labels})
    bad = table["start"].isna() | (table["id"] == "") | (table["label"] == "")
    table = table[~bad]
    deduped = table.drop_duplicates(subset=["id", "start"], keep="first")
    rejected, duplicates = int(bad.sum()), len(table) - len(deduped)
    if report is not None:
        report.labels_rejected = rejected
        report.label_duplicates = duplicates
    if rejected or duplicates:
        logger.warning(
            "Dropped annotation rows",
            path=str(csv_path),
            rejected=rejected,
            duplicates=duplicates,
        )

    if trajectories is not None:
        known = set(trajectories.entity_ids) | {GROUP}
        unknown = sorted(set(deduped["id"]) - known)
        if unknown:
            msg = f"annotations reference unknown entities: {unknown}"
            raise UnknownEntity(msg)

    ordered = deduped.sort_values("start", kind="stable")
    annotations = tuple(
        Annotation(entity_id=str(i), start=float(s), label=str(lab))
        for s, i, lab in zip(ordered["start"], ordered["id"], ordered["label"], strict=True)
    )
    label_set = LabelSet(annotations=annotations, label_resolution=resolution, epoch=epoch)
    logger.info(
        "Loaded labels",
        path=str(csv_path),
        annotations=len(label_set),
        classes=len(label_set.classes),
    )
    return label_set


def write_labels(labels: LabelSet, path: str | Path) -> Path:
    """Write the canonical label CSV (timestamp, id, label)."""
    frame = pd.DataFrame(
        {
            "timestamp": [_format_number(a.start) for a in labels.annotations],
            "id": [a.entity_id for a in labels.annotations],
            "label": [a.label for a in labels.annotations],
        },
        columns=list(LABEL_COLUMNS),
    )
    return _write_frame(frame, path)


def interpolate_gaps(
    series: EntityTimeSeries,
    max_gap: float,
    sample_period: float,
) -> EntityTimeSeries:
    """Fill short gaps by linear interpolation.

    Inserted fixes are marked ``valid=False``; original fixes are untouched and gaps
    longer than ``max_gap`` stay open.

    Args:
        series: Grid-aligned series.
        max_gap: Longest gap, in seconds, that is filled.
        sample_period: Grid step in seconds.

    Returns:
        A new series (the same object when nothing needed filling).

    Raises:
        InvalidConfig: If ``max_gap`` is shorter than one sample period.

    """
    if max_gap < sample_period * (1 - GRID_TOLERANCE):
        msg = f"max_gap ({max_gap}) must be at least the sample period ({sample_period})"
        raise InvalidConfig(msg)
    ts = series.timestamps
    if ts.size < 2:  # noqa: PLR2004
        return series

    durations = np.diff(ts)
    steps = np.round(durations / sample_period).astype(np.int64)
    fillable = np.nonzero((steps > 1) & (durations <= max_gap * (1 + 1e-9)))[0]
    if fillable.size == 0:
        return series

    new_t: list[NDArray[np.float64]] = []
    new_x: list[NDArray[np.float64]] = []
    new_y: list[NDArray[np.float64]] = []
    for i in fillable.tolist():
        j = np.arange(1, steps[i], dtype=np.float64)
        fraction = j / steps[i]
        new_t.append(ts[i] + j * sample_period)
        new_x.append(series.x[i] + fraction * (series.x[i + 1] - series.x[i]))
        new_y.append(series.y[i] + fraction * (series.y[i + 1] - series.y[i]))

    inserted_t = np.concatenate(new_t)
    timestamps = np.concatenate([ts, inserted_t])
    order = np.argsort(timestamps, kind="stable")
    return EntityTimeSeries(
        entity_id=series.entity_id,
        timestamps=timestamps[order],
        x=np.concatenate([series.x, *new_x])[order],
        y=np.concatenate([series.y, *new_y])[order],
        valid=np.concatenate([series.valid, np.zeros(inserted_t.size, np.bool_)])[order],
    )


def fill_gaps(trajectories: TrajectorySet, max_gap: float) -> tuple[TrajectorySet, int]:
    """Apply interpolate_gaps to every entity.

    Returns:
        The repaired set and the number of inserted fixes.

    """
    repaired = tuple(
        interpolate_gaps(e, max_gap, trajectories.sample_period) for e in trajectories
    )
    filled = sum(r.length for r in repaired) - trajectories.total_fixes
    logger.info("Filled trajectory gaps", max_gap=max_gap, inserted=filled)
    return (
        TrajectorySet(
            entities=repaired,
            epoch=trajectories.epoch,
            sample_period=trajectories.sample_period,
        ),
        filled,
    )


def _slot_overlap(starts: set[float], length: float, lo: float, hi: float) -> float:
    return sum(max(0.0, min(s + length, hi) - max(s, lo)) for s in starts)


def validate_alignment(trajectories: TrajectorySet, labels: LabelSet) -> AlignmentReport:
    """Compare annotation coverage against the tracked spans.

    Args:
        trajectories: Loaded trajectories.
        labels: Loaded annotations.

    Returns:
        Coverage fraction per entity, unlabeled seconds of the dataset span,
        annotated ids without trajectories, and the class histogram.

    """
    res = labels.label_resolution
    group_starts = {a.start for a in labels.annotations if a.is_group}
    own_starts: dict[str, set[float]] = {}
    for ann in labels.annotations:
        if not ann.is_group:
            own_starts.setdefault(ann.entity_id, set()).add(ann.start)

    coverage: dict[str, float] = {}
    for series in trajectories:
        if series.length == 0:
            coverage[series.entity_id] = 0.0
            continue
        lo = float(series.timestamps[0])
        hi = float(series.timestamps[-1]) + trajectories.sample_period
        starts = group_starts | own_starts.get(series.entity_id, set())
        coverage[series.entity_id] = min(1.0, _slot_overlap(starts, res, lo, hi) / (hi - lo))

    all_starts = {a.start for a in labels.annotations}
    lo, hi = trajectories.epoch, trajectories.span_end
    unlabeled = max(0.0, (hi - lo) - _slot_overlap(all_starts, res, lo, hi))

    tracked = set(trajectories.entity_ids)
    orphans = sorted(i for i in own_starts if i not in tracked)
    histogram = labels.histogram()
    if orphans:
        logger.warning("Annotations without trajectories", orphans=orphans)

    report = AlignmentReport(
        coverage=coverage,
        unlabeled_span=unlabeled,
        orphans=orphans,
        class_histogram=histogram,
    )
    logger.info(
        "Validated alignment",
        mean_coverage=float(np.mean(list(coverage.values()))) if coverage else 0.0,
        orphans=len(orphans),
        classes=len(histogram),
        annotations=sum(histogram.values()),
    )
    return report
