"""Cross-validation harness and classification metrics."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import TYPE_CHECKING

import numpy as np
import structlog

from .errors import FoldError, LengthMismatch, TooFewGroups
from .models import MetricReport

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

    from numpy.typing import NDArray

    from .classifier import Predictor
    from .config import EvaluationProtocol, FoldStrategy
    from .models import FeatureMatrix

logger = structlog.get_logger(__name__)


def derive_seed(seed: int, stream: int) -> int:
    """Independent 32-bit seed for substream ``stream`` of ``seed``."""
    return int(np.random.SeedSequence([seed, stream]).generate_state(1)[0])


def kfold_split(
    group_keys: Sequence[int] | NDArray[np.int64],
    k: int,
    strategy: FoldStrategy = "contiguous_blocks",
    seed: int = 0,
    strata: Sequence[str] | None = None,
) -> list[NDArray[np.int64]]:
    """Partition rows into k folds without splitting any window.

    ``contiguous_blocks`` assigns consecutive runs of windows to each fold;
    ``stratified_random`` shuffles windows within each stratum (the per-row label)
    and deals them to folds in turn. Fold window counts differ by at most one.

    Raises:
        TooFewGroups: If there are fewer distinct windows than folds.

    """
    keys = np.asarray(group_keys, dtype=np.int64)
    windows = np.unique(keys)
    if windows.size < k:
        msg = f"{windows.size} distinct window(s) cannot fill {k} folds"
        raise TooFewGroups(msg)

    if strategy == "contiguous_blocks":
        blocks = np.array_split(windows, k)
    else:
        rng = np.random.default_rng(seed)
        stratum_of: dict[int, str] = {}
        for key, label in zip(keys.tolist(), strata or [""] * keys.size, strict=True):
            stratum_of.setdefault(key, label)
        dealt: list[int] = []
        for stratum in sorted(set(stratum_of.values())):
            members = np.array([w for w in windows.tolist() if stratum_of[w] == stratum])
            dealt.extend(rng.permutation(members).tolist())
        blocks = [np.array(sorted(dealt[i::k]), dtype=np.int64) for i in range(k)]

    return [np.nonzero(np.isin(keys, block))[0].astype(np.int64) for block in blocks]


def _check_lengths(predicted: Sequence[str], actual: Sequence[str]) -> None:
    if len(predicted) != len(actual) or not actual:
        msg = f"predicted ({len(predicted)}) and actual ({len(actual)}) must be equal and non-empty"
        raise LengthMismatch(msg)


def accuracy(predicted: Sequence[str], actual: Sequence[str]) -> float:
    """Fraction of matching predictions."""
    _check_lengths(predicted, actual)
    hits = sum(1 for p, a in zip(predicted, actual, strict=True) if p == a)
    return hits / len(actual)


def weighted_f1(predicted: Sequence[str], actual: Sequence[str]) -> float:
    """Per-class F1 weighted by true-class support.

    Precision or recall with an empty denominator is 0, and so is F1 when both are 0.
    """
    _check_lengths(predicted, actual)
    n = len(actual)
    total = 0.0
    for c in sorted(set(actual) | set(predicted)):
        tp = sum(1 for p, a in zip(predicted, actual, strict=True) if p == c and a == c)
        predicted_c = sum(1 for p in predicted if p == c)
        support = sum(1 for a in actual if a == c)
        precision = tp / predicted_c if predicted_c else 0.0
        recall = tp / support if support else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        total += support / n * f1
    return total


def confusion_matrix(
    predicted: Sequence[str],
    actual: Sequence[str],
    class_labels: Sequence[str],
) -> NDArray[np.int64]:
    """Counts with actual classes as rows and predicted classes as columns."""
    _check_lengths(predicted, actual)
    index = {c: i for i, c in enumerate(class_labels)}
    matrix = np.zeros((len(class_labels), len(class_labels)), dtype=np.int64)
    for p, a in zip(predicted, actual, strict=True):
        matrix[index[a], index[p]] += 1
    return matrix


METRICS: dict[str, Callable[[Sequence[str], Sequence[str]], float]] = {
    "accuracy": accuracy,
    "weighted_f1": weighted_f1,
}


def cross_validate(
    matrix: FeatureMatrix,
    protocol: EvaluationProtocol,
    trainer: Callable[[FeatureMatrix, int], Predictor],
    *,
    threads: int = 1,
) -> dict[str, MetricReport]:
    """Train on each fold's complement and score on the fold.

    Each fold seeds its trainer from (protocol seed, fold index); reports are
    assembled in fold order whatever the thread count.

    Raises:
        TooFewGroups: If the folds cannot be formed.
        FoldError: If training or prediction fails inside a fold.

    """
    if matrix.targets is None:
        msg = "cross-validation requires targets"
        raise ValueError(msg)
    targets = matrix.targets
    folds = kfold_split(
        matrix.group_keys,
        protocol.k,
        protocol.fold_strategy,
        protocol.seed,
        strata=targets,
    )
    everything = np.arange(matrix.n_rows)

    def run_fold(item: tuple[int, NDArray[np.int64]]) -> tuple[list[str], list[str]]:
        fold, test_rows = item
        train_rows = np.setdiff1d(everything, test_rows, assume_unique=True)
        try:
            model = trainer(matrix.take(train_rows), derive_seed(protocol.seed, fold))
            predicted = model.predict_classes(matrix.take(test_rows).without_targets())
        except FoldError:
            raise
        except Exception as e:  # noqa: BLE001
            raise FoldError(fold, e) from e
        logger.debug("Evaluated fold", fold=fold, test_rows=int(test_rows.size))
        return predicted, [targets[i] for i in test_rows]

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        outcomes = list(pool.map(run_fold, enumerate(folds)))

    # a trainer may predict a class absent from this matrix
    class_labels = sorted(set(targets).union(*(set(p) for p, _ in outcomes)))
    pooled = np.zeros((len(class_labels), len(class_labels)), dtype=np.int64)
    for predicted, actual in outcomes:
        pooled += confusion_matrix(predicted, actual, class_labels)

    return {
        name: MetricReport(
            metric=name,
            per_fold=[METRICS[name](p, a) for p, a in outcomes],
            confusion_matrix=pooled.tolist(),
            class_labels=list(class_labels),
        )
        for name in protocol.metrics
    }
