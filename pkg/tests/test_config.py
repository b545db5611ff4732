"""Tests for configuration module."""

from __future__ import annotations

import json
from pathlib import Path

import pytest
import yaml
from pydantic import ValidationError

from collective_behavior.config import (
    BehaviorSpec,
    BoostingConfig,
    CandidateConfig,
    EnvSettings,
    EvaluationProtocol,
    FeatureToggles,
    LoggingConfig,
    PipelineConfig,
    ProximityConfig,
    ScenarioConfig,
    apply_overrides,
)
from collective_behavior.errors import EXIT_CONFIG_ERROR, ConfigError, InvalidConfig


class TestProximityConfig:
    """Tests for ProximityConfig."""

    def test_defaults(self) -> None:
        """Test the two-meter rule and PageRank defaults."""
        config = ProximityConfig()
        assert config.threshold == 2.0
        assert config.binarize_at == 0.5
        assert config.pagerank.damping == 0.85
        assert config.pagerank.tolerance == 1e-9

    def test_rejects_nonpositive_threshold(self) -> None:
        """Test threshold must be positive."""
        with pytest.raises(ValidationError):
            ProximityConfig(threshold=0)

    def test_binarize_at_upper_bound(self) -> None:
        """Test binarize_at may equal but not exceed one."""
        assert ProximityConfig(binarize_at=1.0).binarize_at == 1.0
        with pytest.raises(ValidationError):
            ProximityConfig(binarize_at=1.5)


class TestBoostingConfig:
    """Tests for BoostingConfig."""

    def test_defaults(self) -> None:
        """Test default hyperparameters."""
        config = BoostingConfig()
        assert config.rounds == 100
        assert config.max_depth == 4
        assert config.subsample_fraction == 1.0

    def test_zero_rounds_allowed(self) -> None:
        """Test an empty ensemble is a valid configuration."""
        assert BoostingConfig(rounds=0).rounds == 0

    def test_subsample_bounds(self) -> None:
        """Test subsample fraction must lie in (0, 1]."""
        with pytest.raises(ValidationError):
            BoostingConfig(subsample_fraction=0)


class TestEvaluationProtocol:
    """Tests for EvaluationProtocol."""

    def test_defaults(self) -> None:
        """Test ten contiguous folds scored on both metrics."""
        protocol = EvaluationProtocol()
        assert protocol.k == 10
        assert protocol.fold_strategy == "contiguous_blocks"
        assert protocol.metrics == ["accuracy", "weighted_f1"]

    def test_metrics_deduplicated(self) -> None:
        """Test repeated metric names collapse in first-seen order."""
        protocol = EvaluationProtocol(metrics=["weighted_f1", "accuracy", "weighted_f1"])
        assert protocol.metrics == ["weighted_f1", "accuracy"]

    def test_k_at_least_two(self) -> None:
        """Test a single fold is rejected."""
        with pytest.raises(ValidationError):
            EvaluationProtocol(k=1)


class TestCandidateConfig:
    """Tests for CandidateConfig."""

    def test_min_above_max(self) -> None:
        """Test min greater than max is rejected."""
        with pytest.raises(ValidationError, match="exceeds"):
            CandidateConfig(min=180, max=60)


class TestFeatureToggles:
    """Tests for FeatureToggles."""

    def test_both_off_rejected(self) -> None:
        """Test at least one family must stay enabled."""
        with pytest.raises(ValidationError, match="cannot both be off"):
            FeatureToggles(kinematic=False, network=False)

    def test_network_only(self) -> None:
        """Test network-only features are allowed."""
        toggles = FeatureToggles(kinematic=False)
        assert toggles.network is True


class TestScenarioConfig:
    """Tests for ScenarioConfig."""

    def test_default_behaviors(self) -> None:
        """Test the four archetypes are present by default."""
        config = ScenarioConfig()
        movements = {b.movement for b in config.behaviors}
        assert movements == {
            "coordinated_progression",
            "dispersed_forage",
            "clustered_rest",
            "dispersed_rest",
        }
        assert config.n_entities == 10

    def test_bout_off_grid(self) -> None:
        """Test bout length must be a multiple of the sample period."""
        with pytest.raises(ValidationError, match="bout_length"):
            ScenarioConfig(sample_period=2.0, bout_length=61)

    def test_duplicate_behavior_names(self) -> None:
        """Test behavior names must be unique."""
        with pytest.raises(ValidationError, match="unique"):
            ScenarioConfig(
                behaviors=[
                    BehaviorSpec(name="rest", movement="clustered_rest"),
                    BehaviorSpec(name="rest", movement="dispersed_rest"),
                ],
            )

    def test_single_entity_rejected(self) -> None:
        """Test a group needs at least two entities."""
        with pytest.raises(ValidationError):
            ScenarioConfig(n_entities=1)

    def test_unknown_movement(self) -> None:
        """Test only the four archetypes are accepted."""
        with pytest.raises(ValidationError):
            BehaviorSpec.model_validate({"name": "fly", "movement": "flight"})


class TestLoggingConfig:
    """Tests for LoggingConfig."""

    def test_defaults(self) -> None:
        """Test default logging config."""
        config = LoggingConfig()
        assert config.level == "INFO"
        assert config.format == "console"

    def test_custom_values(self) -> None:
        """Test custom logging config."""
        config = LoggingConfig(level="DEBUG", format="json")
        assert config.level == "DEBUG"
        assert config.format == "json"


class TestApplyOverrides:
    """Tests for apply_overrides."""

    def test_nested_values_keep_types(self) -> None:
        """Test scalars and lists are parsed as YAML values."""
        result = apply_overrides(
            {"proximity": {"threshold": 2}},
            ["proximity.threshold=3.5", "features.network=false", "extra.list=[60, 600]"],
        )
        assert result["proximity"]["threshold"] == 3.5
        assert result["features"]["network"] is False
        assert result["extra"]["list"] == [60, 600]

    def test_source_not_modified(self) -> None:
        """Test the input mapping is left untouched."""
        source = {"seed": 1}
        apply_overrides(source, ["seed=2"])
        assert source == {"seed": 1}

    def test_malformed_expression(self) -> None:
        """Test an expression without '=' is rejected."""
        with pytest.raises(ConfigError, match="key.path=value"):
            apply_overrides({}, ["seed"])

    def test_walk_through_scalar(self) -> None:
        """Test overriding below a scalar is rejected."""
        with pytest.raises(ConfigError, match="not a section"):
            apply_overrides({"seed": 1}, ["seed.value=2"])


class TestPipelineConfig:
    """Tests for PipelineConfig."""

    def test_defaults(self) -> None:
        """Test an empty document gives a complete config."""
        config = PipelineConfig.from_mapping({})
        assert config.seed == 42
        assert config.threads == 1
        assert config.segmentation.resolution is None
        assert config.data.label_resolution == 60.0

    def test_from_file_json(self, tmp_path: Path) -> None:
        """Test loading a JSON document."""
        path = tmp_path / "config.json"
        path.write_text(
            json.dumps({"seed": 7, "proximity": {"threshold": 3}}),
            encoding="utf-8",
        )
        config = PipelineConfig.from_file(path)
        assert config.seed == 7
        assert config.proximity.threshold == 3.0

    def test_from_file_yaml(self, tmp_path: Path) -> None:
        """Test loading a YAML document with overrides."""
        path = tmp_path / "config.yaml"
        path.write_text(yaml.dump({"evaluation": {"k": 5}}), encoding="utf-8")
        config = PipelineConfig.from_file(path, ["evaluation.k=4"])
        assert config.evaluation.k == 4

    def test_from_file_not_found(self, tmp_path: Path) -> None:
        """Test error when config file not found."""
        with pytest.raises(ConfigError, match="not found"):
            PipelineConfig.from_file(tmp_path / "nonexistent.json")

    def test_from_file_unparsable(self, tmp_path: Path) -> None:
        """Test a syntax error becomes a ConfigError."""
        path = tmp_path / "broken.json"
        path.write_text('{"seed": [1,', encoding="utf-8")
        with pytest.raises(ConfigError, match="Cannot parse"):
            PipelineConfig.from_file(path)

    def test_from_file_root_not_mapping(self, tmp_path: Path) -> None:
        """Test a list document is rejected."""
        path = tmp_path / "list.json"
        path.write_text("[1, 2]", encoding="utf-8")
        with pytest.raises(ConfigError, match="mapping"):
            PipelineConfig.from_file(path)

    def test_invalid_value(self) -> None:
        """Test validation errors map to InvalidConfig and the config exit code."""
        with pytest.raises(InvalidConfig) as exc_info:
            PipelineConfig.from_mapping({"threads": 0})
        assert exc_info.value.exit_code == EXIT_CONFIG_ERROR

    def test_schema_alias(self) -> None:
        """Test the trajectory column schema is read from data.schema."""
        config = PipelineConfig.from_mapping(
            {"data": {"schema": {"x": "lon", "y": "lat", "coordinates": "lonlat"}}},
        )
        assert config.data.trajectory_schema.x == "lon"
        assert config.data.trajectory_schema.coordinates == "lonlat"

    def test_colliding_paths(self, tmp_path: Path) -> None:
        """Test output_dir may not reuse an input path."""
        target = str(tmp_path / "same")
        with pytest.raises(InvalidConfig, match="distinct"):
            PipelineConfig.from_mapping({"data": {"trajectories": target}, "output_dir": target})

    def test_protocol_uses_master_seed(self) -> None:
        """Test the evaluation protocol inherits the master seed."""
        config = PipelineConfig.from_mapping(
            {"seed": 5, "evaluation": {"k": 3, "fold_strategy": "stratified_random"}},
        )
        protocol = config.protocol()
        assert protocol.seed == 5
        assert protocol.k == 3
        assert protocol.fold_strategy == "stratified_random"

    def test_config_hash_ignores_runtime_settings(self) -> None:
        """Test threads, logging and output_dir do not change the hash."""
        base = PipelineConfig.from_mapping({})
        tuned = PipelineConfig.from_mapping(
            {"threads": 8, "output_dir": "./elsewhere", "logging": {"level": "DEBUG"}},
        )
        assert base.config_hash() == tuned.config_hash()

    def test_config_hash_tracks_results(self) -> None:
        """Test a result-relevant setting changes the hash."""
        base = PipelineConfig.from_mapping({})
        other = PipelineConfig.from_mapping({"proximity": {"threshold": 3}})
        assert base.config_hash() != other.config_hash()
        assert len(base.config_hash()) == 64

    def test_get_output_path(self, tmp_path: Path) -> None:
        """Test get_output_path returns a resolved Path object."""
        config = PipelineConfig.from_mapping({"output_dir": str(tmp_path / "out")})
        assert config.get_output_path() == (tmp_path / "out").resolve()

    def test_data_paths(self) -> None:
        """Test data path helpers."""
        config = PipelineConfig.from_mapping({"data": {"labels": None}})
        assert config.data.trajectories_path() == Path("trajectories.csv")
        assert config.data.labels_path() is None


class TestEnvSettings:
    """Tests for EnvSettings."""

    def test_defaults(self, monkeypatch: pytest.MonkeyPatch) -> None:
        """Test default env settings."""
        monkeypatch.delenv("CBC_CONFIG", raising=False)
        monkeypatch.delenv("CBC_LOG_LEVEL", raising=False)
        settings = EnvSettings(_env_file=None)
        assert settings.config is None
        assert settings.log_level is None

    def test_from_env(self, monkeypatch: pytest.MonkeyPatch) -> None:
        """Test loading from environment variables."""
        monkeypatch.setenv("CBC_CONFIG", "/custom/config.json")
        monkeypatch.setenv("CBC_LOG_LEVEL", "debug")
        settings = EnvSettings(_env_file=None)
        assert settings.config == "/custom/config.json"
        assert settings.log_level == "debug"
