"""Pytest configuration and fixtures."""

from __future__ import annotations

import json
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import Any

import numpy as np
import pytest

from collective_behavior.config import BehaviorSpec, BoostingConfig, ScenarioConfig
from collective_behavior.ingest import write_labels, write_trajectories
from collective_behavior.models import (
    GROUP,
    Annotation,
    EntityTimeSeries,
    LabelSet,
    TrajectorySet,
)
from collective_behavior.synthetic import generate

SeriesFactory = Callable[..., EntityTimeSeries]


@pytest.fixture
def make_series() -> SeriesFactory:
    """Factory for an entity series sampled every ``period`` seconds from ``start``."""

    def factory(
        entity_id: str,
        xs: Sequence[float],
        ys: Sequence[float],
        *,
        start: float = 0.0,
        period: float = 1.0,
        valid: Sequence[bool] | None = None,
    ) -> EntityTimeSeries:
        n = len(xs)
        return EntityTimeSeries(
            entity_id=entity_id,
            timestamps=start + period * np.arange(n, dtype=np.float64),
            x=np.asarray(xs, dtype=np.float64),
            y=np.asarray(ys, dtype=np.float64),
            valid=np.ones(n, dtype=bool) if valid is None else np.asarray(valid, dtype=bool),
        )

    return factory


@pytest.fixture
def triangle_set(make_series: SeriesFactory) -> TrajectorySet:
    """A at (0,0), B at (1,0), C at (10,0), stationary for 60 s at 1 Hz."""
    entities = tuple(
        make_series(name, [x] * 60, [0.0] * 60)
        for name, x in (("A", 0.0), ("B", 1.0), ("C", 10.0))
    )
    return TrajectorySet(entities=entities, epoch=0.0, sample_period=1.0)


@pytest.fixture
def group_labels() -> Callable[[Sequence[str], float], LabelSet]:
    """Factory for consecutive group annotations at a fixed resolution."""

    def factory(labels: Sequence[str], resolution: float = 60.0) -> LabelSet:
        return LabelSet(
            annotations=tuple(
                Annotation(entity_id=GROUP, start=i * resolution, label=label)
                for i, label in enumerate(labels)
            ),
            label_resolution=resolution,
        )

    return factory


@pytest.fixture
def fast_boosting() -> BoostingConfig:
    """Small ensemble for quick tests."""
    return BoostingConfig(rounds=10, max_depth=2, min_samples_leaf=2, learning_rate=0.3)


@pytest.fixture
def small_scenario() -> ScenarioConfig:
    """Four-entity, twenty-minute scenario."""
    return ScenarioConfig(n_entities=4, duration=1200, bout_length=60, seed=7)


@pytest.fixture
def rest_only_scenario() -> ScenarioConfig:
    """Noise-free scenario alternating the two resting archetypes."""
    return ScenarioConfig(
        n_entities=5,
        duration=600,
        bout_length=60,
        noise_sigma=0.0,
        seed=3,
        behaviors=[
            BehaviorSpec(name="huddle", movement="clustered_rest", cohesion_radius=1.0),
            BehaviorSpec(name="spread", movement="dispersed_rest", cohesion_radius=4.0),
        ],
    )


@pytest.fixture
def scenario_files(tmp_path: Path, small_scenario: ScenarioConfig) -> tuple[Path, Path]:
    """Trajectory and label CSVs of the small scenario."""
    trajectories, labels = generate(small_scenario)
    data_dir = tmp_path / "data"
    return (
        write_trajectories(trajectories, data_dir / "trajectories.csv"),
        write_labels(labels, data_dir / "labels.csv"),
    )


@pytest.fixture
def config_document(tmp_path: Path, scenario_files: tuple[Path, Path]) -> dict[str, Any]:
    """Pipeline configuration pointing at the small scenario, with a quick ensemble."""
    trajectories_path, labels_path = scenario_files
    return {
        "data": {
            "trajectories": str(trajectories_path),
            "labels": str(labels_path),
            "label_resolution": 60,
        },
        "segmentation": {
            "resolution": 60,
            "candidates": {"min": 60, "max": 120, "step": 60},
        },
        "classifier": {"rounds": 5, "max_depth": 2, "min_samples_leaf": 2},
        "evaluation": {"k": 4},
        "seed": 11,
        "output_dir": str(tmp_path / "output"),
    }


@pytest.fixture
def config_file(tmp_path: Path, config_document: dict[str, Any]) -> Path:
    """The pipeline configuration written as JSON."""
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config_document, indent=2), encoding="utf-8")
    return path


@pytest.fixture
def tmp_output_dir(tmp_path: Path) -> Path:
    """Create a temporary output directory."""
    output_dir = tmp_path / "output"
    output_dir.mkdir(parents=True)
    return output_dir
