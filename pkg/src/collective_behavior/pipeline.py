"""End-to-end orchestration: ingest, segment, featurize, evaluate, train, predict."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

import numpy as np
import structlog

from .classifier import TrainedModel, feature_importance, group_vote, train, train_majority
from .config import PageRankConfig, ProximityConfig, SegmentationConfig
from .errors import EmptyInput, InputError, UnsupportedModelFormat
from .evaluation import cross_validate
from .features import build_feature_matrix, feature_columns
from .ingest import fill_gaps, load_labels, load_trajectories, validate_alignment
from .models import GRID_TOLERANCE
from .network import build_networks
from .segmentation import (
    assign_labels,
    candidate_resolutions,
    label_grid_origin,
    segment,
    select_resolution,
    sweep_resolutions,
)

if TYPE_CHECKING:
    from pathlib import Path

    from .classifier import Predictor
    from .config import EvaluationProtocol, PipelineConfig
    from .models import (
        AlignmentReport,
        FeatureMatrix,
        IngestReport,
        LabeledWindow,
        LabelSet,
        MetricReport,
        ResolutionScoreTable,
        TrajectorySet,
    )
    from .reports import ReportWriter

logger = structlog.get_logger(__name__)

MAJORITY = "majority"
OURS = "ours"
OURS_KINEMATIC = "ours_kinematic"


@dataclass
class VariantResult:
    """Cross-validated reports of one model variant."""

    name: str
    columns: tuple[str, ...]
    reports: dict[str, MetricReport]


@dataclass
class RunResult:
    """Everything ``cbc run`` writes."""

    resolution: float
    variants: list[VariantResult]
    model: TrainedModel
    importance: dict[str, float]
    sweep: ResolutionScoreTable | None = None
    lift: dict[str, float] = field(default_factory=dict)


@dataclass
class PredictionResult:
    """Complete label set inferred by a trained model."""

    entity_rows: list[dict[str, Any]]
    group_rows: list[dict[str, Any]]
    class_order: tuple[str, ...]


class Experiment:
    """A loaded dataset bound to the configuration that drives every stage."""

    def __init__(
        self,
        config: PipelineConfig,
        trajectories: TrajectorySet,
        labels: LabelSet,
        ingest_report: IngestReport,
    ) -> None:
        """Initialize the experiment.

        Args:
            config: Pipeline configuration.
            trajectories: Ingested (and optionally gap-filled) trajectories.
            labels: Behavior annotations.
            ingest_report: Counts gathered while loading.

        """
        self.config = config
        self.trajectories = trajectories
        self.labels = labels
        self.ingest_report = ingest_report

    @classmethod
    def load(cls, config: PipelineConfig) -> Experiment:
        """Ingest the configured trajectory and label files.

        Raises:
            InputError: If no label file is configured or a file is unusable.

        """
        trajectories, report = load_trajectories(
            config.data.trajectories_path(),
            config.data.trajectory_schema,
        )
        if config.data.max_gap is not None:
            trajectories, report.gaps_filled = fill_gaps(trajectories, config.data.max_gap)

        labels_path = config.data.labels_path()
        if labels_path is None:
            msg = "data.labels must name an annotation file"
            raise InputError(msg)
        # the label grid starts at the trajectory epoch; starts snap within the fix tolerance
        labels = load_labels(
            labels_path,
            config.data.label_resolution,
            trajectories if config.data.cross_check_labels else None,
            epoch=trajectories.epoch,
            tolerance=GRID_TOLERANCE * trajectories.sample_period,
            report=report,
        )
        if not len(labels):
            msg = f"no annotations in {labels_path}"
            raise EmptyInput(msg)
        return cls(config, trajectories, labels, report)

    def alignment(self) -> AlignmentReport:
        """Label coverage of the trajectories."""
        return validate_alignment(self.trajectories, self.labels)

    def labeled_windows(self, resolution: float) -> list[LabeledWindow]:
        """Windows on the label grid at ``resolution`` with their majority labels."""
        windows = segment(
            self.trajectories,
            SegmentationConfig(
                resolution=resolution,
                drop_partial=self.config.segmentation.drop_partial,
            ),
            origin=label_grid_origin(self.trajectories, self.labels),
        )
        return assign_labels(windows, self.labels)

    def feature_matrix(self, resolution: float, *, kinematic: bool, network: bool) -> FeatureMatrix:
        """Instances for every labeled window at ``resolution``."""
        return build_feature_matrix(
            self.trajectories,
            self.labeled_windows(resolution),
            kinematic=kinematic,
            network=network,
            proximity=self.config.proximity,
            threads=self.config.threads,
        )

    def boosting_trainer(self, rows: FeatureMatrix, seed: int) -> Predictor:
        """Fold trainer for the boosted ensemble."""
        return train(rows, self.config.classifier, seed=seed)

    def evaluate(
        self,
        resolution: float,
        protocol: EvaluationProtocol,
        seed: int,
    ) -> dict[str, MetricReport]:
        """Cross-validated ensemble at one resolution, for the sweep."""
        toggles = self.config.features
        network = toggles.network and self.config.segmentation.sweep_network
        matrix = self.feature_matrix(
            resolution,
            kinematic=toggles.kinematic or not network,
            network=network,
        )
        return cross_validate(
            matrix,
            protocol.model_copy(update={"seed": seed}),
            self.boosting_trainer,
            threads=self.config.threads,
        )

    def sweep(self) -> ResolutionScoreTable:
        """Score every configured candidate resolution."""
        candidates = self.config.segmentation.candidates
        resolutions = candidate_resolutions(
            candidates.min,
            candidates.max,
            candidates.step,
            label_resolution=self.labels.label_resolution,
            sample_period=self.trajectories.sample_period,
        )
        logger.info("Sweeping resolutions", candidates=resolutions)
        # candidates run one at a time; folds inside each candidate use the thread pool
        return sweep_resolutions(self, resolutions, self.config.protocol(), threads=1)

    def run(
        self,
        resolution: float | None = None,
        *,
        edges: ReportWriter | None = None,
    ) -> RunResult:
        """Evaluate the baseline and the ensemble variants, then fit the final model.

        When no resolution is given or configured, the sweep selects one first.
        With ``edges`` set, the proximity graph of every labeled window is written
        through that writer.
        """
        table: ResolutionScoreTable | None = None
        resolution = resolution or self.config.segmentation.resolution
        if resolution is None:
            table = self.sweep()
            resolution = select_resolution(table)

        toggles = self.config.features
        protocol = self.config.protocol()
        matrix = self.feature_matrix(
            resolution,
            kinematic=toggles.kinematic,
            network=toggles.network,
        )
        logger.info("Built feature matrix", resolution=resolution, rows=matrix.n_rows)

        variants = [
            VariantResult(
                name=MAJORITY,
                columns=(),
                reports=cross_validate(
                    matrix,
                    protocol,
                    train_majority,
                    threads=self.config.threads,
                ),
            ),
        ]
        if toggles.network and toggles.kinematic and toggles.compare_network:
            kinematic_only = matrix.select_columns(feature_columns(kinematic=True, network=False))
            variants.append(
                VariantResult(
                    name=OURS_KINEMATIC,
                    columns=kinematic_only.columns,
                    reports=cross_validate(
                        kinematic_only,
                        protocol,
                        self.boosting_trainer,
                        threads=self.config.threads,
                    ),
                ),
            )
        variants.append(
            VariantResult(
                name=OURS,
                columns=matrix.columns,
                reports=cross_validate(
                    matrix,
                    protocol,
                    self.boosting_trainer,
                    threads=self.config.threads,
                ),
            ),
        )

        model = train(
            matrix,
            self.config.classifier,
            metadata=self.model_metadata(resolution),
        )
        if edges is not None:
            self.dump_edges(resolution, edges)

        return RunResult(
            resolution=resolution,
            variants=variants,
            model=model,
            importance=feature_importance(model),
            sweep=table,
            lift=_lift(variants),
        )

    def model_metadata(self, resolution: float) -> dict[str, Any]:
        """Feature-pipeline settings a model needs to featurize new data."""
        proximity = self.config.proximity
        return {
            "resolution": resolution,
            "drop_partial": self.config.segmentation.drop_partial,
            "kinematic": self.config.features.kinematic,
            "network": self.config.features.network,
            "threshold": proximity.threshold,
            "binarize_at": proximity.binarize_at,
            "pagerank": proximity.pagerank.model_dump(),
        }

    def dump_edges(self, resolution: float, writer: ReportWriter) -> list[Path]:
        """Write one stamped edge-list CSV per labeled window."""
        windows = [lw.window for lw in self.labeled_windows(resolution)]
        graphs = build_networks(
            self.trajectories,
            windows,
            self.config.proximity,
            threads=self.config.threads,
        )
        return [
            writer.write_edges(window.index, graph)
            for window, graph in zip(windows, graphs, strict=True)
        ]


def _lift(variants: list[VariantResult]) -> dict[str, float]:
    by_name = {v.name: v for v in variants}
    if OURS_KINEMATIC not in by_name:
        return {}
    social = by_name[OURS].reports
    plain = by_name[OURS_KINEMATIC].reports
    return {metric: social[metric].mean - plain[metric].mean for metric in social}


def predict_labels(
    model: TrainedModel,
    trajectories: TrajectorySet,
    *,
    threads: int = 1,
) -> PredictionResult:
    """Label every window of the trajectories with a trained model.

    Raises:
        UnsupportedModelFormat: If the model lacks its feature-pipeline metadata.

    """
    meta = model.metadata
    try:
        resolution = float(meta["resolution"])
        proximity = ProximityConfig(
            threshold=meta["threshold"],
            binarize_at=meta["binarize_at"],
            pagerank=PageRankConfig.model_validate(meta["pagerank"]),
        )
        kinematic = bool(meta["kinematic"])
        network = bool(meta["network"])
    except (KeyError, TypeError, ValueError) as e:
        msg = f"model metadata is incomplete: {e}"
        raise UnsupportedModelFormat(msg) from e

    windows = segment(
        trajectories,
        SegmentationConfig(
            resolution=resolution,
            drop_partial=bool(meta.get("drop_partial", True)),
        ),
    )
    matrix = build_feature_matrix(
        trajectories,
        list(windows),
        kinematic=kinematic,
        network=network,
        proximity=proximity,
        threads=threads,
    )
    proba = model.predict_proba(matrix)
    predicted = model.predict_classes(matrix)
    starts = {w.index: w.start for w in windows}

    entity_rows = [
        {
            "window": int(key),
            "start": starts[int(key)],
            "id": entity,
            "label": label,
            **{f"p_{c}": float(p) for c, p in zip(model.class_order, row, strict=True)},
        }
        for key, entity, label, row in zip(
            matrix.group_keys,
            matrix.entity_ids,
            predicted,
            proba,
            strict=True,
        )
    ]
    group_rows = []
    for key in np.unique(matrix.group_keys):
        members = np.nonzero(matrix.group_keys == key)[0]
        group_rows.append(
            {
                "window": int(key),
                "start": starts[int(key)],
                "label": group_vote(
                    [predicted[i] for i in members],
                    proba[members],
                    model.class_order,
                ),
                "entities": int(members.size),
            },
        )
    logger.info("Predicted labels", windows=len(group_rows), rows=len(entity_rows))
    return PredictionResult(
        entity_rows=entity_rows,
        group_rows=group_rows,
        class_order=model.class_order,
    )
