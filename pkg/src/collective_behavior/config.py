"""Configuration management for the collective behavior pipeline.

A single JSON (or YAML) document drives every command. CLI ``--set`` overrides are
applied to the raw document before validation so flags mirror config key paths.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Literal

import yaml
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    field_validator,
    model_validator,
)
from pydantic_settings import BaseSettings, SettingsConfigDict

from .errors import ConfigError, InvalidConfig

MovementArchetype = Literal[
    "coordinated_progression",
    "dispersed_forage",
    "clustered_rest",
    "dispersed_rest",
]
FoldStrategy = Literal["contiguous_blocks", "stratified_random"]
MetricName = Literal["accuracy", "weighted_f1"]

# Keys that never influence results and so stay out of the config hash.
_HASH_EXCLUDED = {"threads", "logging", "output_dir"}


class SchemaConfig(BaseModel):
    """Column names of the trajectory CSV."""

    timestamp: str = Field(default="timestamp")
    id: str = Field(default="id")
    x: str = Field(default="x", description="Easting in meters, or longitude for lonlat")
    y: str = Field(default="y", description="Northing in meters, or latitude for lonlat")
    valid: str = Field(default="valid", description="Optional original/interpolated flag")
    coordinates: Literal["planar", "lonlat"] = Field(default="planar")
    sample_period: float | None = Field(
        default=None,
        gt=0,
        description="Seconds between fixes; inferred from the data when omitted",
    )


class DataConfig(BaseModel):
    """Input files and ingestion policy."""

    trajectories: str = Field(default="trajectories.csv")
    labels: str | None = Field(default="labels.csv")
    label_resolution: float = Field(default=60.0, gt=0)
    cross_check_labels: bool = Field(
        default=False,
        description="Reject annotations that reference unknown entities",
    )
    max_gap: float | None = Field(
        default=None,
        gt=0,
        description="Fill gaps up to this many seconds by linear interpolation",
    )
    trajectory_schema: SchemaConfig = Field(default_factory=SchemaConfig, alias="schema")

    model_config = ConfigDict(populate_by_name=True)

    def trajectories_path(self) -> Path:
        """Get the trajectory file as a Path object."""
        return Path(self.trajectories).expanduser()

    def labels_path(self) -> Path | None:
        """Get the label file as a Path object, if configured."""
        return Path(self.labels).expanduser() if self.labels else None


class PageRankConfig(BaseModel):
    """Power-iteration parameters."""

    damping: float = Field(default=0.85, gt=0, lt=1)
    tolerance: float = Field(default=1e-9, gt=0)
    max_iterations: int = Field(default=200, ge=1)


class ProximityConfig(BaseModel):
    """Proximity network definition."""

    threshold: float = Field(default=2.0, gt=0, description="Meters")
    binarize_at: float = Field(default=0.5, gt=0, le=1)
    pagerank: PageRankConfig = Field(default_factory=PageRankConfig)


class SegmentationConfig(BaseModel):
    """Parameters of the temporal segmentation function."""

    resolution: float = Field(..., gt=0, description="Window length in seconds")
    drop_partial: bool = Field(default=True)


class CandidateConfig(BaseModel):
    """Arithmetic range of candidate resolutions for the sweep."""

    min: float = Field(default=60.0, gt=0)
    max: float = Field(default=180.0, gt=0)
    step: float = Field(default=60.0, gt=0)

    @model_validator(mode="after")
    def check_order(self) -> CandidateConfig:
        """Ensure min does not exceed max."""
        if self.min > self.max:
            msg = f"candidates.min ({self.min}) exceeds candidates.max ({self.max})"
            raise ValueError(msg)
        return self


class SegmentationSettings(BaseModel):
    """Segmentation section of the pipeline config."""

    resolution: float | None = Field(
        default=None,
        gt=0,
        description="Fixed resolution for run; selected by a sweep when omitted",
    )
    drop_partial: bool = Field(default=True)
    candidates: CandidateConfig = Field(default_factory=CandidateConfig)
    sweep_network: bool = Field(
        default=False,
        description="Use network features while sweeping resolutions",
    )


class BoostingConfig(BaseModel):
    """Hyperparameters of the gradient-boosted tree ensemble."""

    rounds: int = Field(default=100, ge=0)
    max_depth: int = Field(default=4, ge=1)
    learning_rate: float = Field(default=0.1, gt=0)
    min_samples_leaf: int = Field(default=5, ge=1)
    subsample_fraction: float = Field(default=1.0, gt=0, le=1)
    seed: int = Field(default=0, ge=0)


class EvaluationProtocol(BaseModel):
    """Cross-validation protocol."""

    k: int = Field(default=10, ge=2)
    fold_strategy: FoldStrategy = Field(default="contiguous_blocks")
    seed: int = Field(default=0, ge=0)
    metrics: list[MetricName] = Field(
        default_factory=lambda: ["accuracy", "weighted_f1"],
        min_length=1,
    )

    @field_validator("metrics")
    @classmethod
    def dedupe_metrics(cls, v: list[MetricName]) -> list[MetricName]:
        """Drop repeated metric names, keeping first occurrence order."""
        return list(dict.fromkeys(v))


class EvaluationConfig(BaseModel):
    """Evaluation section; the seed comes from the master seed."""

    k: int = Field(default=10, ge=2)
    fold_strategy: FoldStrategy = Field(default="contiguous_blocks")
    metrics: list[MetricName] = Field(
        default_factory=lambda: ["accuracy", "weighted_f1"],
        min_length=1,
    )


class FeatureToggles(BaseModel):
    """Which feature families enter the feature matrix."""

    kinematic: bool = Field(default=True)
    network: bool = Field(default=True)
    compare_network: bool = Field(
        default=True,
        description="Also evaluate the kinematic-only variant to report the social lift",
    )

    @model_validator(mode="after")
    def check_not_empty(self) -> FeatureToggles:
        """Ensure at least one feature family is enabled."""
        if not (self.kinematic or self.network):
            msg = "features.kinematic and features.network cannot both be off"
            raise ValueError(msg)
        return self


class BehaviorSpec(BaseModel):
    """One behavior archetype of the synthetic generator."""

    name: str = Field(..., min_length=1)
    movement: MovementArchetype
    speed: float = Field(default=0.0, ge=0, description="m/s")
    cohesion_radius: float = Field(default=1.0, gt=0, description="Meters")


def _default_behaviors() -> list[BehaviorSpec]:
    return [
        BehaviorSpec(
            name="travel",
            movement="coordinated_progression",
            speed=1.0,
            cohesion_radius=1.5,
        ),
        BehaviorSpec(name="forage", movement="dispersed_forage", speed=0.3, cohesion_radius=2.0),
        BehaviorSpec(name="rest_clustered", movement="clustered_rest", cohesion_radius=1.0),
        BehaviorSpec(name="rest_dispersed", movement="dispersed_rest", cohesion_radius=3.0),
    ]


class ScenarioConfig(BaseModel):
    """Synthetic group-movement scenario."""

    n_entities: int = Field(default=10, ge=2)
    duration: float = Field(default=7200.0, gt=0, description="Seconds")
    sample_period: float = Field(default=1.0, gt=0)
    bout_length: float = Field(default=60.0, gt=0)
    behaviors: list[BehaviorSpec] = Field(default_factory=_default_behaviors, min_length=1)
    noise_sigma: float = Field(default=0.5, ge=0)
    seed: int = Field(default=42, ge=0)
    start: int = Field(default=0, description="Epoch of the first fix, UTC seconds")

    @model_validator(mode="after")
    def check_grid(self) -> ScenarioConfig:
        """Ensure bouts and duration sit on the sample grid."""
        for name, value in (("bout_length", self.bout_length), ("duration", self.duration)):
            ratio = value / self.sample_period
            if abs(ratio - round(ratio)) > 1e-9:
                msg = f"{name} ({value}) is not a multiple of sample_period"
                raise ValueError(msg)
        names = [b.name for b in self.behaviors]
        if len(set(names)) != len(names):
            msg = "behavior names must be unique"
            raise ValueError(msg)
        return self


class LoggingConfig(BaseModel):
    """Configuration for logging."""

    level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = Field(default="INFO")
    format: Literal["json", "console"] = Field(default="console")


class PipelineConfig(BaseModel):
    """Main pipeline configuration."""

    data: DataConfig = Field(default_factory=DataConfig)
    proximity: ProximityConfig = Field(default_factory=ProximityConfig)
    segmentation: SegmentationSettings = Field(default_factory=SegmentationSettings)
    classifier: BoostingConfig = Field(default_factory=BoostingConfig)
    evaluation: EvaluationConfig = Field(default_factory=EvaluationConfig)
    features: FeatureToggles = Field(default_factory=FeatureToggles)
    synthetic: ScenarioConfig = Field(default_factory=ScenarioConfig)
    seed: int = Field(default=42, ge=0)
    threads: int = Field(default=1, ge=1)
    output_dir: str = Field(default="./output")
    logging: LoggingConfig = Field(default_factory=LoggingConfig)

    @model_validator(mode="after")
    def check_paths_distinct(self) -> PipelineConfig:
        """Ensure input and output locations do not collide."""
        paths = [self.data.trajectories, self.output_dir]
        if self.data.labels:
            paths.append(self.data.labels)
        resolved = [str(Path(p).expanduser().resolve()) for p in paths]
        if len(set(resolved)) != len(resolved):
            msg = "data.trajectories, data.labels and output_dir must be distinct paths"
            raise ValueError(msg)
        return self

    @classmethod
    def from_file(cls, path: str | Path, overrides: list[str] | None = None) -> PipelineConfig:
        """Load configuration from a JSON or YAML file.

        Args:
            path: Path to the configuration document.
            overrides: ``key.path=value`` strings applied before validation.

        Returns:
            Loaded PipelineConfig instance.

        Raises:
            ConfigError: If the file is missing, unparsable or invalid.

        """
        config_path = Path(path).expanduser().resolve()
        if not config_path.exists():
            msg = f"Configuration file not found: {config_path}"
            raise ConfigError(msg)

        try:
            with config_path.open(encoding="utf-8") as f:
                data = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            msg = f"Cannot parse {config_path}: {e}"
            raise ConfigError(msg) from e

        if not isinstance(data, dict):
            msg = f"Configuration root must be a mapping: {config_path}"
            raise ConfigError(msg)
        return cls.from_mapping(data, overrides)

    @classmethod
    def from_mapping(
        cls,
        data: dict[str, Any],
        overrides: list[str] | None = None,
    ) -> PipelineConfig:
        """Validate a raw document after applying overrides."""
        document = apply_overrides(data, overrides or [])
        try:
            return cls.model_validate(document)
        except ValidationError as e:
            raise InvalidConfig(str(e)) from e

    def protocol(self) -> EvaluationProtocol:
        """Build the evaluation protocol seeded by the master seed."""
        return EvaluationProtocol(
            k=self.evaluation.k,
            fold_strategy=self.evaluation.fold_strategy,
            seed=self.seed,
            metrics=list(self.evaluation.metrics),
        )

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON of every result-relevant setting."""
        payload = self.model_dump(mode="json", exclude=_HASH_EXCLUDED, by_alias=True)
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def get_output_path(self) -> Path:
        """Get the output directory as a Path object."""
        return Path(self.output_dir).expanduser().resolve()


def apply_overrides(data: dict[str, Any], overrides: list[str]) -> dict[str, Any]:
    """Apply ``key.path=value`` overrides to a nested mapping.

    Values are parsed as YAML scalars so ``3``, ``0.5``, ``true`` and ``[60, 600]``
    keep their types.

    Args:
        data: Raw configuration mapping (not modified).
        overrides: Override expressions.

    Returns:
        A new mapping with the overrides applied.

    Raises:
        ConfigError: If an expression is malformed or walks through a scalar.

    """
    document: dict[str, Any] = json.loads(json.dumps(data))
    for expression in overrides:
        key, sep, raw_value = expression.partition("=")
        if not sep or not key.strip():
            msg = f"Override must look like key.path=value: {expression!r}"
            raise ConfigError(msg)

        parts = [p for p in key.strip().split(".") if p]
        node = document
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                msg = f"Cannot override {key!r}: {part!r} is not a section"
                raise ConfigError(msg)
            node = child

        try:
            node[parts[-1]] = yaml.safe_load(raw_value)
        except yaml.YAMLError as e:
            msg = f"Cannot parse override value for {key!r}: {raw_value!r}"
            raise ConfigError(msg) from e
    return document


class EnvSettings(BaseSettings):
    """Environment-based settings (default config path for every command)."""

    model_config = SettingsConfigDict(
        env_prefix="CBC_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    config: str | None = Field(default=None)
    log_level: str | None = Field(default=None)
