"""Proximity networks and their topological and relational node features.

One weighted undirected graph is inferred per window: the weight of a pair is the
fraction of co-sampled instants at which the two entities were within the
proximity threshold. Only valid original fixes take part.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import TYPE_CHECKING, Any

import numpy as np
import structlog

from .models import KinematicFeatures, NetworkFeatures, PageRankResult, ProximityGraph

if TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import NDArray

    from .config import PageRankConfig, ProximityConfig
    from .models import TrajectorySet, Window

logger = structlog.get_logger(__name__)

EDGE_COLUMNS = ("src", "dst", "weight")


def window_positions(
    trajectories: TrajectorySet,
    window: Window,
) -> tuple[NDArray[np.float64], NDArray[np.bool_]]:
    """Per-slot positions of every entity inside a window.

    Returns:
        ``positions`` of shape (n, slots, 2) and ``valid`` of shape (n, slots);
        slots without a valid original fix are NaN and False.

    """
    period = trajectories.sample_period
    slots = max(1, round(window.length / period))
    positions = np.full((trajectories.n, slots, 2), np.nan)
    valid = np.zeros((trajectories.n, slots), dtype=bool)
    for i, series in enumerate(trajectories):
        lo, hi = window.ranges[i]
        keep = series.valid[lo:hi]
        idx = np.round((series.timestamps[lo:hi][keep] - window.start) / period).astype(np.int64)
        inside = (idx >= 0) & (idx < slots)
        idx = idx[inside]
        positions[i, idx, 0] = series.x[lo:hi][keep][inside]
        positions[i, idx, 1] = series.y[lo:hi][keep][inside]
        valid[i, idx] = True
    return positions, valid


def colocation_weights(
    positions: NDArray[np.float64],
    valid: NDArray[np.bool_],
    threshold: float,
) -> NDArray[np.float64]:
    """Fraction of co-sampled slots each pair spends within ``threshold``.

    Pairs never sampled together get weight 0. The diagonal is 0.
    """
    mask = valid.astype(np.float64)
    # (n, n) count of slots where both entities have a fix
    together = mask @ mask.T
    diff = positions[:, None, :, :] - positions[None, :, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    both = valid[:, None, :] & valid[None, :, :]
    close = np.sum(both & (dist <= threshold), axis=-1).astype(np.float64)
    weights = np.divide(close, together, out=np.zeros_like(close), where=together > 0)
    weights = np.minimum(weights, weights.T)
    np.fill_diagonal(weights, 0.0)
    return weights


def build_network(
    trajectories: TrajectorySet,
    window: Window,
    threshold: float,
    binarize_at: float,
) -> ProximityGraph:
    """Proximity graph of one window.

    Raises:
        ValueError: If ``threshold`` is not positive or ``binarize_at`` is outside (0, 1].

    """
    if threshold <= 0:
        msg = f"threshold must be positive, got {threshold}"
        raise ValueError(msg)
    if not 0 < binarize_at <= 1:
        msg = f"binarize_at must lie in (0, 1], got {binarize_at}"
        raise ValueError(msg)
    positions, valid = window_positions(trajectories, window)
    return ProximityGraph(
        nodes=trajectories.entity_ids,
        weights=colocation_weights(positions, valid, threshold),
        threshold=threshold,
        binarize_at=binarize_at,
    )


def build_networks(
    trajectories: TrajectorySet,
    windows: Sequence[Window],
    config: ProximityConfig,
    *,
    threads: int = 1,
) -> list[ProximityGraph]:
    """Proximity graphs for many windows, in window order."""
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        return list(
            pool.map(
                lambda w: build_network(trajectories, w, config.threshold, config.binarize_at),
                windows,
            ),
        )


def degree_features(graph: ProximityGraph) -> tuple[NDArray[np.int64], NDArray[np.float64]]:
    """Binary degree and weighted degree (strength) of every node."""
    degree = graph.adjacency.sum(axis=1).astype(np.int64)
    weighted = graph.weights.sum(axis=1)
    return degree, weighted


def pagerank(
    graph: ProximityGraph,
    damping: float = 0.85,
    tolerance: float = 1e-9,
    max_iterations: int = 200,
) -> PageRankResult:
    """Stationary scores of a weighted random walk with uniform teleport.

    The walk moves along binary-adjacent edges in proportion to their weight.
    Nodes without outgoing mass spread their score uniformly. Hitting
    ``max_iterations`` is reported through ``converged``, not raised.

    Raises:
        ValueError: If ``damping`` is outside (0, 1) or ``tolerance`` is not positive.

    """
    if not 0 < damping < 1:
        msg = f"damping must lie in (0, 1), got {damping}"
        raise ValueError(msg)
    if tolerance <= 0:
        msg = f"tolerance must be positive, got {tolerance}"
        raise ValueError(msg)

    n = graph.n
    w = np.where(graph.adjacency, graph.weights, 0.0)
    strength = w.sum(axis=1)
    dangling = strength <= 0
    transition = np.divide(w, strength[:, None], out=np.zeros_like(w), where=~dangling[:, None])

    scores = np.full(n, 1.0 / n)
    residual = float("inf")
    iterations = 0
    while iterations < max_iterations:
        iterations += 1
        spread = scores[dangling].sum() / n
        updated = (1 - damping) / n + damping * (scores @ transition + spread)
        updated /= updated.sum()
        residual = float(np.abs(updated - scores).sum())
        scores = updated
        if residual <= tolerance:
            break

    converged = residual <= tolerance
    if not converged:
        logger.warning(
            "PageRank did not converge",
            iterations=iterations,
            residual=residual,
            tolerance=tolerance,
        )
    return PageRankResult(scores=scores, iterations=iterations, converged=converged, residual=residual)


def neighbor_average(
    graph: ProximityGraph,
    features: Sequence[KinematicFeatures],
) -> tuple[NDArray[np.float64], NDArray[np.bool_]]:
    """Mean kinematic vector over each node's binary-adjacent neighbors.

    Returns:
        ``(means, isolated)``; isolated nodes get the zero vector.

    Raises:
        ValueError: If the feature count differs from the node count.

    """
    if len(features) != graph.n:
        msg = f"expected features for {graph.n} nodes, got {len(features)}"
        raise ValueError(msg)
    vectors = (
        np.vstack([f.as_array() for f in features])
        if features
        else np.zeros((0, len(KinematicFeatures.FIELDS)))
    )
    adj = graph.adjacency.astype(np.float64)
    counts = adj.sum(axis=1)
    isolated = counts == 0
    means = np.divide(
        adj @ vectors,
        counts[:, None],
        out=np.zeros((graph.n, vectors.shape[1])),
        where=~isolated[:, None],
    )
    return means, isolated


def network_features(
    graph: ProximityGraph,
    features: Sequence[KinematicFeatures],
    config: PageRankConfig,
) -> list[NetworkFeatures]:
    """Topological and relational features of every node, in node order."""
    degree, weighted = degree_features(graph)
    ranks = pagerank(graph, config.damping, config.tolerance, config.max_iterations)
    means, isolated = neighbor_average(graph, features)
    return [
        NetworkFeatures(
            degree=int(degree[i]),
            weighted_degree=float(weighted[i]),
            pagerank=float(ranks.scores[i]),
            neighbor_mean=means[i],
            isolated=bool(isolated[i]),
        )
        for i in range(graph.n)
    ]


def edge_rows(graph: ProximityGraph) -> list[dict[str, Any]]:
    """Positive-weight edges as (src, dst, weight) records."""
    return [dict(zip(EDGE_COLUMNS, edge, strict=True)) for edge in graph.edges()]
