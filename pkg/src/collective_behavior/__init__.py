"""Collective Behavior Classifier - label group behavior from GPS trajectories.

This package segments multi-entity trajectories into time windows, describes each
window with per-entity kinematics and proximity-network features, and trains a
gradient-boosted tree ensemble to infer the behavior of the group in every window.
"""

__version__ = "1.0.1"

from .classifier import (
    MajorityModel,
    Predictor,
    TrainedModel,
    feature_importance,
    group_vote,
    majority_predict,
    majority_train,
    predict,
    train,
)
from .config import (
    BehaviorSpec,
    BoostingConfig,
    EvaluationProtocol,
    FeatureToggles,
    PipelineConfig,
    ProximityConfig,
    ScenarioConfig,
    SegmentationConfig,
)
from .errors import CollectiveBehaviorError, ConfigError, InputError, PipelineError
from .evaluation import accuracy, cross_validate, kfold_split, weighted_f1
from .features import build_feature_matrix, feature_columns
from .ingest import load_labels, load_trajectories, validate_alignment
from .kinematics import window_kinematics
from .models import (
    FeatureMatrix,
    KinematicFeatures,
    LabelSet,
    MetricReport,
    ProximityGraph,
    TrajectorySet,
    WindowSet,
)
from .network import build_network, degree_features, neighbor_average, pagerank
from .pipeline import Experiment
from .segmentation import (
    assign_labels,
    candidate_resolutions,
    segment,
    select_resolution,
    sweep_resolutions,
)
from .synthetic import generate

__all__ = [
    "BehaviorSpec",
    "BoostingConfig",
    "CollectiveBehaviorError",
    "ConfigError",
    "EvaluationProtocol",
    "Experiment",
    "FeatureMatrix",
    "FeatureToggles",
    "InputError",
    "KinematicFeatures",
    "LabelSet",
    "MajorityModel",
    "MetricReport",
    "PipelineConfig",
    "PipelineError",
    "Predictor",
    "ProximityConfig",
    "ProximityGraph",
    "ScenarioConfig",
    "SegmentationConfig",
    "TrainedModel",
    "TrajectorySet",
    "WindowSet",
    "__version__",
    "accuracy",
    "assign_labels",
    "build_feature_matrix",
    "build_network",
    "candidate_resolutions",
    "cross_validate",
    "degree_features",
    "feature_columns",
    "feature_importance",
    "generate",
    "group_vote",
    "kfold_split",
    "load_labels",
    "load_trajectories",
    "majority_predict",
    "majority_train",
    "neighbor_average",
    "pagerank",
    "predict",
    "segment",
    "select_resolution",
    "sweep_resolutions",
    "train",
    "validate_alignment",
    "weighted_f1",
    "window_kinematics",
]
