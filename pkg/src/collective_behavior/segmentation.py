"""Temporal segmentation and global resolution selection.

Windows are global (shared by all entities), contiguous and non-overlapping. The
sweep runs the full pipeline once per candidate resolution and keeps the one with
the best combined score.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from typing import TYPE_CHECKING, Protocol, runtime_checkable

import numpy as np
import structlog

from .errors import (
    AllCandidatesFailed,
    CollectiveBehaviorError,
    EmptyCandidateSet,
    InvalidResolution,
    ResolutionMismatch,
    ResolutionTooCoarse,
)
from .evaluation import derive_seed
from .models import (
    ABSTAIN,
    LabeledWindow,
    LabelSet,
    ResolutionScore,
    ResolutionScoreTable,
    RowStatus,
    TrajectorySet,
    Window,
    WindowSet,
)

if TYPE_CHECKING:
    from collections.abc import Sequence

    from .config import EvaluationProtocol, SegmentationConfig
    from .models import MetricReport

logger = structlog.get_logger(__name__)

# Relative slack when checking that one duration is a multiple of another.
_MULTIPLE_TOLERANCE = 1e-9


def is_multiple(value: float, unit: float) -> bool:
    """Whether value is a positive integer multiple of unit."""
    ratio = value / unit
    return round(ratio) >= 1 and abs(ratio - round(ratio)) <= _MULTIPLE_TOLERANCE * max(1, ratio)


def segment(
    trajectories: TrajectorySet,
    config: SegmentationConfig,
    *,
    origin: float | None = None,
) -> WindowSet:
    """Partition the observed span into equal-length windows.

    Args:
        trajectories: Grid-aligned trajectories.
        config: Window length and trailing-window policy.
        origin: Start of the first window; defaults to the dataset epoch. Must lie
            on the sample grid at or after the epoch.

    Returns:
        The contiguous window partition starting at ``origin``.

    Raises:
        InvalidResolution: If the resolution is not a multiple of the sample period.
        ResolutionTooCoarse: If no window fits in the span.

    """
    period = trajectories.sample_period
    resolution = config.resolution
    if not is_multiple(resolution, period):
        msg = f"resolution {resolution} s is not a multiple of the {period} s sample period"
        raise InvalidResolution(msg)

    start = trajectories.epoch if origin is None else origin
    if start < trajectories.epoch or not math.isclose(
        (start - trajectories.epoch) / period,
        round((start - trajectories.epoch) / period),
        abs_tol=1e-9,
    ):
        msg = f"origin {start} is not on the sample grid at or after the epoch"
        raise InvalidResolution(msg)

    span = trajectories.span_end - start
    exact = span / resolution
    count = math.floor(exact + 1e-9) if config.drop_partial else math.ceil(exact - 1e-9)
    if count <= 0:
        msg = f"resolution {resolution} s exceeds the {span} s span"
        raise ResolutionTooCoarse(msg)

    # one edge array so that end_i == start_{i+1} exactly
    edges = start + resolution * np.arange(count + 1, dtype=np.float64)
    half = period / 2
    cuts = [np.searchsorted(series.timestamps, edges - half, side="left") for series in trajectories]

    windows = tuple(
        Window(
            index=i,
            start=float(edges[i]),
            end=float(edges[i + 1]),
            ranges=tuple((int(cut[i]), int(cut[i + 1])) for cut in cuts),
        )
        for i in range(count)
    )
    logger.debug("Segmented trajectories", resolution=resolution, windows=count, origin=start)
    return WindowSet(windows=windows, resolution=resolution, origin=start)


def label_grid_origin(trajectories: TrajectorySet, labels: LabelSet) -> float:
    """First label-grid instant at or after the trajectory epoch."""
    res = labels.label_resolution
    steps = math.ceil((trajectories.epoch - labels.epoch) / res - 1e-9)
    return labels.epoch + steps * res


def assign_labels(windows: WindowSet, labels: LabelSet) -> list[LabeledWindow]:
    """Give each window the majority annotation among the slots it covers.

    Ties go to the label whose first slot comes earliest in the window. Windows
    without annotations get ABSTAIN with support 0.

    Raises:
        ResolutionMismatch: If the window length is not a multiple of the label
            resolution.

    """
    if not is_multiple(windows.resolution, labels.label_resolution):
        msg = (
            f"window length {windows.resolution} s is not a multiple of the "
            f"{labels.label_resolution} s label resolution"
        )
        raise ResolutionMismatch(msg)

    starts = np.array([a.start for a in labels.annotations], dtype=np.float64)
    names = [a.label for a in labels.annotations]
    labeled: list[LabeledWindow] = []
    for window in windows:
        lo = int(np.searchsorted(starts, window.start, side="left"))
        hi = int(np.searchsorted(starts, window.end, side="left"))
        if hi == lo:
            labeled.append(LabeledWindow(window=window, label=ABSTAIN, label_support=0.0))
            continue
        counts: dict[str, int] = {}
        for name in names[lo:hi]:
            counts[name] = counts.get(name, 0) + 1
        # dicts keep insertion order, i.e. order of first slot in the window
        winner = max(counts, key=lambda name: counts[name])
        labeled.append(
            LabeledWindow(window=window, label=winner, label_support=counts[winner] / (hi - lo)),
        )
    return labeled


def candidate_resolutions(
    minimum: float,
    maximum: float,
    step: float,
    *,
    label_resolution: float,
    sample_period: float = 1.0,
) -> list[float]:
    """Arithmetic sequence of window lengths to sweep.

    Values that are not multiples of both the sample period and the label
    resolution are skipped.

    Raises:
        InvalidResolution: If ``minimum`` is below the label resolution, or the
            range or step is malformed.
        EmptyCandidateSet: If no value survives validation.

    """
    if step <= 0:
        msg = f"step must be positive, got {step}"
        raise InvalidResolution(msg)
    if minimum > maximum:
        msg = f"minimum {minimum} exceeds maximum {maximum}"
        raise InvalidResolution(msg)
    if minimum < label_resolution:
        msg = f"minimum {minimum} s is below the {label_resolution} s label resolution"
        raise InvalidResolution(msg)

    count = math.floor((maximum - minimum) / step + 1e-9) + 1
    candidates: list[float] = []
    for i in range(count):
        value = minimum + i * step
        if is_multiple(value, sample_period) and is_multiple(value, label_resolution):
            candidates.append(float(value))
        else:
            logger.warning("Skipped candidate resolution", resolution=value)
    if not candidates:
        msg = f"no valid resolution in [{minimum}, {maximum}] with step {step}"
        raise EmptyCandidateSet(msg)
    return candidates


@runtime_checkable
class SweepDataset(Protocol):
    """Anything that can run segment, features and cross-validation at a resolution."""

    def evaluate(
        self,
        resolution: float,
        protocol: EvaluationProtocol,
        seed: int,
    ) -> dict[str, MetricReport]:
        """Cross-validated metric reports at one resolution."""
        ...  # pragma: no cover


def combined_score(reports: dict[str, MetricReport], metrics: Sequence[str]) -> float:
    """Unweighted mean of the per-metric fold means."""
    return float(np.mean([reports[m].mean for m in metrics]))


def _score_candidate(
    dataset: SweepDataset,
    resolution: float,
    protocol: EvaluationProtocol,
) -> ResolutionScore:
    seed = derive_seed(protocol.seed, round(resolution * 1000))
    try:
        reports = dataset.evaluate(resolution, protocol, seed)
    except (CollectiveBehaviorError, ValueError, ArithmeticError) as e:
        logger.warning("Candidate resolution failed", resolution=resolution, error=str(e))
        return ResolutionScore(
            resolution=resolution,
            status=RowStatus.FAILED,
            error=f"{type(e).__name__}: {e}",
        )

    row = ResolutionScore(
        resolution=resolution,
        combined_score=combined_score(reports, protocol.metrics),
    )
    if "accuracy" in reports:
        row.accuracy_mean = reports["accuracy"].mean
        row.accuracy_std = reports["accuracy"].std
    if "weighted_f1" in reports:
        row.wf1_mean = reports["weighted_f1"].mean
        row.wf1_std = reports["weighted_f1"].std
    logger.info(
        "Scored candidate resolution",
        resolution=resolution,
        combined_score=row.combined_score,
    )
    return row


def sweep_resolutions(
    dataset: SweepDataset,
    candidates: Sequence[float],
    protocol: EvaluationProtocol,
    *,
    threads: int = 1,
) -> ResolutionScoreTable:
    """Score every candidate resolution with the full pipeline.

    Each candidate draws its random stream from (protocol seed, resolution), so the
    table does not depend on ``threads``. A failing candidate becomes a failed row.

    Raises:
        EmptyCandidateSet: If ``candidates`` is empty.

    """
    if not candidates:
        msg = "no candidate resolutions to sweep"
        raise EmptyCandidateSet(msg)

    ordered = sorted(set(candidates))
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        rows = list(pool.map(lambda r: _score_candidate(dataset, r, protocol), ordered))
    return ResolutionScoreTable(rows=rows)


def select_resolution(table: ResolutionScoreTable) -> float:
    """Resolution with the highest combined score; ties go to the smallest.

    Raises:
        AllCandidatesFailed: If no row succeeded.

    """
    rows = [r for r in table.successful() if not math.isnan(r.combined_score)]
    if not rows:
        msg = f"all {len(table.rows)} candidate resolution(s) failed"
        raise AllCandidatesFailed(msg)
    best = max(r.combined_score for r in rows)
    selected = min(r.resolution for r in rows if r.combined_score == best)
    logger.info("Selected resolution", resolution=selected, combined_score=best)
    return selected
