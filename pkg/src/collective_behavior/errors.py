"""Exception hierarchy for the collective behavior pipeline.

Library code raises these; the CLI maps each family to an exit code.
"""

from __future__ import annotations

EXIT_OK = 0
EXIT_INPUT_ERROR = 2
EXIT_PIPELINE_FAILURE = 3
EXIT_CONFIG_ERROR = 4


class CollectiveBehaviorError(Exception):
    """Base class for all pipeline errors."""

    exit_code: int = EXIT_PIPELINE_FAILURE


class InputError(CollectiveBehaviorError, ValueError):
    """Malformed or unusable input data."""

    exit_code = EXIT_INPUT_ERROR


class PipelineError(CollectiveBehaviorError):
    """A pipeline stage could not produce its result."""

    exit_code = EXIT_PIPELINE_FAILURE


class ConfigError(CollectiveBehaviorError, ValueError):
    """Invalid configuration document or override."""

    exit_code = EXIT_CONFIG_ERROR


# trajectory_data


class MissingColumn(InputError):
    """A required CSV column is absent."""


class EmptyInput(InputError):
    """No valid rows were left after parsing."""


class IrregularSampling(InputError):
    """Timestamps cannot be snapped to a common grid."""


class MisalignedAnnotation(InputError):
    """An annotation does not start on the label resolution grid."""


class UnknownEntity(InputError):
    """An annotation references an entity absent from the trajectories."""


# segmentation


class InvalidResolution(PipelineError, ValueError):
    """Resolution is not a positive multiple of the sample period."""


class ResolutionTooCoarse(PipelineError):
    """The resolution exceeds the total span, producing no windows."""


class ResolutionMismatch(PipelineError, ValueError):
    """Window length is not a multiple of the label resolution."""


class EmptyCandidateSet(PipelineError, ValueError):
    """No candidate resolution survived validation."""


class AllCandidatesFailed(PipelineError):
    """Every candidate resolution in a sweep failed."""


# classifier


class DegenerateTarget(PipelineError, ValueError):
    """Fewer than two distinct classes in the training targets."""


class NonFiniteFeature(PipelineError, ValueError):
    """The feature matrix contains NaN or infinite values."""


class SchemaMismatch(PipelineError, ValueError):
    """Feature columns do not match the model schema."""


class EmptyTargets(PipelineError, ValueError):
    """No targets were supplied to the majority baseline."""


class UnsupportedModelFormat(InputError):
    """A serialized model has an unknown format version."""


# evaluation


class LengthMismatch(PipelineError, ValueError):
    """Predicted and actual sequences differ in length or are empty."""


class TooFewGroups(PipelineError, ValueError):
    """Fewer distinct windows than requested folds."""


class FoldError(PipelineError):
    """Training or scoring failed inside a cross-validation fold."""

    def __init__(self, fold: int, cause: Exception) -> None:
        self.fold = fold
        self.cause = cause
        super().__init__(f"fold {fold}: {type(cause).__name__}: {cause}")


# synthetic


class InvalidConfig(ConfigError):
    """A scenario or pipeline configuration violates its invariants."""
