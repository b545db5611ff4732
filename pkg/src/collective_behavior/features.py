"""Feature matrix assembly.

One row per (entity, window) where the entity has at least one fix in the window.
Columns are the kinematic descriptors, followed by the network block when enabled:
degree, weighted_degree, pagerank, isolated and one ``nbr_`` column per kinematic
descriptor.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import TYPE_CHECKING

import numpy as np
import structlog

from .config import ProximityConfig
from .kinematics import window_kinematics_all
from .models import FeatureMatrix, KinematicFeatures, LabeledWindow, Window
from .network import build_network, network_features

if TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import NDArray

    from .models import TrajectorySet

logger = structlog.get_logger(__name__)

NETWORK_COLUMNS: tuple[str, ...] = (
    "degree",
    "weighted_degree",
    "pagerank",
    "isolated",
    *(f"nbr_{name}" for name in KinematicFeatures.FIELDS),
)


def feature_columns(*, kinematic: bool = True, network: bool = True) -> tuple[str, ...]:
    """Column schema for the given feature families.

    Raises:
        ValueError: If both families are disabled.

    """
    if not (kinematic or network):
        msg = "at least one feature family must be enabled"
        raise ValueError(msg)
    columns: tuple[str, ...] = ()
    if kinematic:
        columns += KinematicFeatures.FIELDS
    if network:
        columns += NETWORK_COLUMNS
    return columns


def _window_block(
    trajectories: TrajectorySet,
    window: Window,
    *,
    kinematic: bool,
    network: bool,
    proximity: ProximityConfig,
) -> tuple[NDArray[np.float64], list[int]]:
    present = [i for i, (lo, hi) in enumerate(window.ranges) if hi > lo]
    kin = window_kinematics_all(trajectories, window)
    parts: list[NDArray[np.float64]] = []
    if kinematic:
        parts.append(np.vstack([kin[i].as_array() for i in present]))
    if network:
        graph = build_network(trajectories, window, proximity.threshold, proximity.binarize_at)
        nodes = network_features(graph, kin, proximity.pagerank)
        parts.append(
            np.vstack(
                [
                    np.concatenate(
                        (
                            [
                                nodes[i].degree,
                                nodes[i].weighted_degree,
                                nodes[i].pagerank,
                                float(nodes[i].isolated),
                            ],
                            nodes[i].neighbor_mean,
                        ),
                    )
                    for i in present
                ],
            ),
        )
    return np.hstack(parts), present


def build_feature_matrix(
    trajectories: TrajectorySet,
    windows: Sequence[LabeledWindow] | Sequence[Window],
    *,
    kinematic: bool = True,
    network: bool = True,
    proximity: ProximityConfig | None = None,
    threads: int = 1,
) -> FeatureMatrix:
    """Assemble instances for a sequence of windows.

    Labeled windows yield a matrix with targets, skipping abstained windows; plain
    windows yield an unlabeled matrix for prediction. ``group_keys`` holds the
    window index of each row.
    """
    columns = feature_columns(kinematic=kinematic, network=network)
    proximity = proximity or ProximityConfig()

    labeled = [w for w in windows if isinstance(w, LabeledWindow)]
    with_targets = bool(labeled) or not windows
    if with_targets:
        targets_for = [w for w in labeled if not w.abstained]
        plain = [w.window for w in targets_for]
    else:
        targets_for = []
        plain = [w for w in windows if isinstance(w, Window)]
    # entities without any fix in a window produce no row
    plain_nonempty = [(j, w) for j, w in enumerate(plain) if w.fix_count() > 0]

    def block(item: tuple[int, Window]) -> tuple[NDArray[np.float64], list[int]]:
        return _window_block(
            trajectories,
            item[1],
            kinematic=kinematic,
            network=network,
            proximity=proximity,
        )

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        blocks = list(pool.map(block, plain_nonempty))

    values: list[NDArray[np.float64]] = []
    targets: list[str] = []
    keys: list[int] = []
    entity_ids: list[str] = []
    for (j, window), (rows, present) in zip(plain_nonempty, blocks, strict=True):
        values.append(rows)
        keys.extend([window.index] * len(present))
        entity_ids.extend(trajectories.entities[i].entity_id for i in present)
        if with_targets:
            targets.extend([targets_for[j].label] * len(present))

    matrix = FeatureMatrix(
        values=np.vstack(values) if values else np.zeros((0, len(columns))),
        columns=columns,
        targets=tuple(targets) if with_targets else None,
        group_keys=np.asarray(keys, dtype=np.int64),
        entity_ids=tuple(entity_ids),
    )
    logger.debug(
        "Assembled feature matrix",
        rows=matrix.n_rows,
        columns=len(columns),
        windows=len(plain_nonempty),
    )
    return matrix
