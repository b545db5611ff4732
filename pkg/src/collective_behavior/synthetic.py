"""Deterministic generator of labeled group-movement scenarios.

The group moves through a sequence of behavior bouts. Each bout draws one
archetype, lays the entities out around the group centroid and simulates their
positions until the next bout. The centroid carries over between bouts.
"""

from __future__ import annotations

import math
from typing import TYPE_CHECKING

import numpy as np
import structlog

from .errors import InvalidConfig
from .models import GROUP, Annotation, EntityTimeSeries, LabelSet, TrajectorySet

if TYPE_CHECKING:
    from numpy.typing import NDArray

    from .config import BehaviorSpec, ScenarioConfig

logger = structlog.get_logger(__name__)

# Dispersed layouts keep entities this many cohesion radii apart.
SPREAD_FACTOR = 3.0
# Heading drift of a progressing group, radians per step.
HEADING_DRIFT = 0.05
# Heading change of a foraging walker, radians per step.
FORAGE_TURN = 0.5
# Pull of a progressing entity back to its slot in the formation, per step.
FORMATION_STIFFNESS = 0.2
# Formation jitter per step, in cohesion radii.
FORMATION_JITTER = 0.1


def _disk_offsets(rng: np.random.Generator, n: int, radius: float) -> NDArray[np.float64]:
    """Uniform points in a disk of the given radius."""
    r = radius * np.sqrt(rng.random(n))
    theta = rng.uniform(0, 2 * math.pi, n)
    return np.column_stack((r * np.cos(theta), r * np.sin(theta)))


def _grid_offsets(rng: np.random.Generator, n: int, spacing: float) -> NDArray[np.float64]:
    """Square lattice points, centered, randomly rotated and shuffled."""
    cols = math.ceil(math.sqrt(n))
    idx = np.arange(n)
    points = np.column_stack((idx % cols, idx // cols)).astype(np.float64) * spacing
    points -= points.mean(axis=0)
    angle = rng.uniform(0, 2 * math.pi)
    rotation = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
    return (points @ rotation.T)[rng.permutation(n)]


def _simulate_bout(
    rng: np.random.Generator,
    behavior: BehaviorSpec,
    centroid: NDArray[np.float64],
    n: int,
    steps: int,
    dt: float,
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Positions (n, steps, 2) of one bout and the centroid it ends at."""
    radius = behavior.cohesion_radius
    out = np.empty((n, steps, 2))

    if behavior.movement == "clustered_rest":
        out[:] = (centroid + _disk_offsets(rng, n, radius))[:, None, :]
        return out, centroid

    if behavior.movement == "dispersed_rest":
        out[:] = (centroid + _grid_offsets(rng, n, SPREAD_FACTOR * radius))[:, None, :]
        return out, centroid

    if behavior.movement == "dispersed_forage":
        anchors = centroid + _grid_offsets(rng, n, SPREAD_FACTOR * radius)
        stiffness = behavior.speed / radius
        pos = anchors.copy()
        heading = rng.uniform(0, 2 * math.pi, n)
        for t in range(steps):
            out[:, t] = pos
            heading = heading + rng.normal(0, FORAGE_TURN, n)
            velocity = behavior.speed * np.column_stack((np.cos(heading), np.sin(heading)))
            pos = pos + (velocity - stiffness * (pos - anchors)) * dt
        return out, centroid

    # coordinated_progression
    home = _disk_offsets(rng, n, radius)
    offsets = home.copy()
    heading = rng.uniform(0, 2 * math.pi)
    center = centroid.copy()
    for t in range(steps):
        out[:, t] = center + offsets
        heading += rng.normal(0, HEADING_DRIFT)
        center = center + behavior.speed * dt * np.array([math.cos(heading), math.sin(heading)])
        offsets = (
            offsets
            - FORMATION_STIFFNESS * (offsets - home)
            + rng.normal(0, FORMATION_JITTER * radius, (n, 2))
        )
    return out, center


def generate(
    config: ScenarioConfig,
    label_resolution: float | None = None,
) -> tuple[TrajectorySet, LabelSet]:
    """Simulate a labeled scenario; identical configs give identical output.

    Every label slot of every bout gets one group annotation, so the labels tile the
    whole duration. The label resolution defaults to the bout length and must
    divide it.

    Raises:
        InvalidConfig: If the scenario is internally inconsistent.

    """
    slot = config.bout_length if label_resolution is None else label_resolution
    per_slot = config.bout_length / slot if slot > 0 else 0.0
    if per_slot < 1 or abs(per_slot - round(per_slot)) > 1e-9:
        msg = f"bout_length {config.bout_length} is not a multiple of label resolution {slot}"
        raise InvalidConfig(msg)
    dt = config.sample_period
    total = round(config.duration / dt)
    per_bout = round(config.bout_length / dt)
    if per_bout < 1 or total < 1:
        msg = "duration and bout_length must each cover at least one sample"
        raise InvalidConfig(msg)
    if config.bout_length > config.duration:
        msg = f"bout_length {config.bout_length} exceeds duration {config.duration}"
        raise InvalidConfig(msg)

    rng = np.random.default_rng(config.seed)
    n = config.n_entities
    positions = np.empty((n, total, 2))
    centroid = np.zeros(2)
    annotations: list[Annotation] = []
    for bout, first in enumerate(range(0, total, per_bout)):
        steps = min(per_bout, total - first)
        behavior = config.behaviors[int(rng.integers(len(config.behaviors)))]
        block, centroid = _simulate_bout(rng, behavior, centroid, n, steps, dt)
        positions[:, first : first + steps] = block
        bout_start = config.start + bout * config.bout_length
        annotations.extend(
            Annotation(entity_id=GROUP, start=bout_start + j * slot, label=behavior.name)
            for j in range(math.ceil(steps * dt / slot - 1e-9))
        )

    if config.noise_sigma > 0:
        positions = positions + rng.normal(0, config.noise_sigma, positions.shape)

    timestamps = config.start + dt * np.arange(total, dtype=np.float64)
    width = len(str(n - 1))
    entities = tuple(
        EntityTimeSeries(
            entity_id=f"e{i:0{width}d}",
            timestamps=timestamps,
            x=positions[i, :, 0],
            y=positions[i, :, 1],
            valid=np.ones(total, dtype=bool),
        )
        for i in range(n)
    )
    trajectories = TrajectorySet(entities=entities, epoch=float(config.start), sample_period=dt)
    labels = LabelSet(
        annotations=tuple(annotations),
        label_resolution=slot,
        epoch=float(config.start),
    )
    logger.info(
        "Generated scenario",
        entities=n,
        fixes=total,
        bouts=math.ceil(total / per_bout),
        annotations=len(annotations),
        seed=config.seed,
    )
    return trajectories, labels
