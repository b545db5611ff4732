"""Gradient-boosted decision trees and the majority baseline.

The ensemble fits one regression tree per class per round to the residual of the
multiclass softmax log-loss. Splits are exact and greedy over sorted feature
values; leaf weights use the second-order (Newton) step. Models serialize to a
self-describing JSON document and reload bit-exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any, Protocol, runtime_checkable

import numpy as np
import structlog

from .config import BoostingConfig
from .errors import (
    DegenerateTarget,
    EmptyTargets,
    InputError,
    SchemaMismatch,
    UnsupportedModelFormat,
)

if TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import NDArray

    from .models import FeatureMatrix

logger = structlog.get_logger(__name__)

MODEL_FORMAT_VERSION = 1

# Splits must reduce squared error by more than this.
_MIN_SPLIT_GAIN = 1e-10
_HESSIAN_FLOOR = 1e-12
_LEAF = -1


@runtime_checkable
class Predictor(Protocol):
    """A fitted classifier usable by the cross-validation harness."""

    class_order: tuple[str, ...]

    def predict_proba(self, rows: FeatureMatrix) -> NDArray[np.float64]:
        """Per-row class probabilities in class_order."""
        ...  # pragma: no cover

    def predict_classes(self, rows: FeatureMatrix) -> list[str]:
        """Per-row predicted class."""
        ...  # pragma: no cover


def softmax(raw: NDArray[np.float64]) -> NDArray[np.float64]:
    """Row-wise softmax."""
    shifted = raw - raw.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


@dataclass(frozen=True, eq=False)
class Tree:
    """A regression tree as flat node arrays; ``feature == -1`` marks a leaf."""

    feature: NDArray[np.int64]
    threshold: NDArray[np.float64]
    left: NDArray[np.int64]
    right: NDArray[np.int64]
    value: NDArray[np.float64]
    gain: NDArray[np.float64]

    def predict(self, x: NDArray[np.float64]) -> NDArray[np.float64]:
        """Leaf value reached by every row of ``x``."""
        node = np.zeros(x.shape[0], dtype=np.int64)
        rows = np.arange(x.shape[0])
        while True:
            feat = self.feature[node]
            internal = feat != _LEAF
            if not internal.any():
                return self.value[node]
            idx = rows[internal]
            at = node[idx]
            go_left = x[idx, self.feature[at]] <= self.threshold[at]
            node[idx] = np.where(go_left, self.left[at], self.right[at])

    def to_dict(self) -> dict[str, list[Any]]:
        """JSON-ready representation."""
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "gain": self.gain.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, list[Any]]) -> Tree:
        """Rebuild from :meth:`to_dict` output."""
        return cls(
            feature=np.asarray(data["feature"], dtype=np.int64),
            threshold=np.asarray(data["threshold"], dtype=np.float64),
            left=np.asarray(data["left"], dtype=np.int64),
            right=np.asarray(data["right"], dtype=np.int64),
            value=np.asarray(data["value"], dtype=np.float64),
            gain=np.asarray(data["gain"], dtype=np.float64),
        )


class _TreeBuilder:
    """Grows one tree by exact greedy splitting on presorted columns."""

    def __init__(
        self,
        x: NDArray[np.float64],
        residual: NDArray[np.float64],
        hessian: NDArray[np.float64],
        *,
        max_depth: int,
        min_samples_leaf: int,
        leaf_scale: float,
    ) -> None:
        self.x = x
        self.xt = x.T
        self.residual = residual
        self.hessian = hessian
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.leaf_scale = leaf_scale
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []
        self.gain: list[float] = []

    def _new_node(self) -> int:
        self.feature.append(_LEAF)
        self.threshold.append(0.0)
        self.left.append(_LEAF)
        self.right.append(_LEAF)
        self.value.append(0.0)
        self.gain.append(0.0)
        return len(self.feature) - 1

    def _leaf_value(self, rows: NDArray[np.int64]) -> float:
        h = float(self.hessian[rows].sum())
        return self.leaf_scale * float(self.residual[rows].sum()) / max(h, _HESSIAN_FLOOR)

    def _best_split(self, orders: NDArray[np.int64]) -> tuple[int, int, float] | None:
        m = orders.shape[1]
        msl = self.min_samples_leaf
        if m < 2 * msl or m < 2:  # noqa: PLR2004
            return None
        r = self.residual[orders]
        values = np.take_along_axis(self.xt, orders, axis=1)
        left_sum = np.cumsum(r, axis=1)[:, :-1]
        total = left_sum[0, -1] + r[0, -1]
        n_left = np.arange(1, m, dtype=np.float64)
        n_right = m - n_left
        gain = left_sum**2 / n_left + (total - left_sum) ** 2 / n_right - total**2 / m
        allowed = (values[:, :-1] < values[:, 1:]) & (n_left >= msl) & (n_right >= msl)
        gain = np.where(allowed, gain, -np.inf)
        # row-major argmax: gain ties go to the lowest feature index, then position
        flat = int(np.argmax(gain))
        f, pos = divmod(flat, m - 1)
        best = float(gain[f, pos])
        if not best > _MIN_SPLIT_GAIN:
            return None
        return f, pos, best

    def grow(self, orders: NDArray[np.int64], depth: int = 0) -> int:
        node = self._new_node()
        rows = orders[0]
        split = None if depth >= self.max_depth else self._best_split(orders)
        if split is None:
            self.value[node] = self._leaf_value(rows)
            return node

        f, pos, gain = split
        lo = float(self.xt[f, orders[f, pos]])
        hi = float(self.xt[f, orders[f, pos + 1]])
        threshold = (lo + hi) / 2
        if not lo <= threshold < hi:
            threshold = lo

        goes_left = np.zeros(self.x.shape[0], dtype=bool)
        goes_left[orders[f, : pos + 1]] = True
        n_features, m = orders.shape
        in_left = goes_left[orders]
        left_orders = orders[in_left].reshape(n_features, pos + 1)
        right_orders = orders[~in_left].reshape(n_features, m - pos - 1)

        self.feature[node] = f
        self.threshold[node] = threshold
        self.gain[node] = gain
        self.left[node] = self.grow(left_orders, depth + 1)
        self.right[node] = self.grow(right_orders, depth + 1)
        return node

    def build(self, rows: NDArray[np.bool_], sorted_columns: NDArray[np.int64]) -> Tree:
        m = int(rows.sum())
        orders = sorted_columns[rows[sorted_columns]].reshape(sorted_columns.shape[0], m)
        self.grow(orders)
        return Tree(
            feature=np.asarray(self.feature, dtype=np.int64),
            threshold=np.asarray(self.threshold, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int64),
            right=np.asarray(self.right, dtype=np.int64),
            value=np.asarray(self.value, dtype=np.float64),
            gain=np.asarray(self.gain, dtype=np.float64),
        )


@dataclass(frozen=True, eq=False)
class TrainedModel:
    """A fitted boosted ensemble; ``trees[round][class]``."""

    trees: tuple[tuple[Tree, ...], ...]
    class_order: tuple[str, ...]
    feature_names: tuple[str, ...]
    hyperparameters: BoostingConfig
    metadata: dict[str, Any] = field(default_factory=dict)

    def _aligned(self, rows: FeatureMatrix) -> NDArray[np.float64]:
        if set(rows.columns) != set(self.feature_names) or len(rows.columns) != len(
            self.feature_names,
        ):
            missing = sorted(set(self.feature_names) - set(rows.columns))
            extra = sorted(set(rows.columns) - set(self.feature_names))
            msg = f"feature schema mismatch: missing {missing}, unexpected {extra}"
            raise SchemaMismatch(msg)
        return rows.select_columns(self.feature_names).values

    def predict_raw(self, rows: FeatureMatrix) -> NDArray[np.float64]:
        """Summed tree outputs per row and class."""
        x = self._aligned(rows)
        raw = np.zeros((x.shape[0], len(self.class_order)))
        for round_trees in self.trees:
            for k, tree in enumerate(round_trees):
                raw[:, k] += tree.predict(x)
        return raw

    def predict_proba(self, rows: FeatureMatrix) -> NDArray[np.float64]:
        """Softmax class probabilities in class_order."""
        return softmax(self.predict_raw(rows))

    def predict_classes(self, rows: FeatureMatrix) -> list[str]:
        """Most probable class per row; ties go to the earlier class in class_order."""
        proba = self.predict_proba(rows)
        return [self.class_order[i] for i in np.argmax(proba, axis=1)]

    def to_dict(self) -> dict[str, Any]:
        """Self-describing JSON document."""
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "class_order": list(self.class_order),
            "feature_names": list(self.feature_names),
            "hyperparameters": self.hyperparameters.model_dump(),
            "metadata": self.metadata,
            "trees": [[tree.to_dict() for tree in round_trees] for round_trees in self.trees],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> TrainedModel:
        """Rebuild a model, checking the format version and tree references.

        Raises:
            UnsupportedModelFormat: On an unknown version or malformed document.

        """
        version = data.get("format_version")
        if version != MODEL_FORMAT_VERSION:
            msg = f"unsupported model format version: {version!r}"
            raise UnsupportedModelFormat(msg)
        try:
            feature_names = tuple(data["feature_names"])
            class_order = tuple(data["class_order"])
            trees = tuple(
                tuple(Tree.from_dict(t) for t in round_trees) for round_trees in data["trees"]
            )
            hyperparameters = BoostingConfig.model_validate(data["hyperparameters"])
        except (KeyError, TypeError, ValueError) as e:
            msg = f"malformed model document: {e}"
            raise UnsupportedModelFormat(msg) from e
        for round_trees in trees:
            if len(round_trees) != len(class_order):
                msg = "every round needs one tree per class"
                raise UnsupportedModelFormat(msg)
            for tree in round_trees:
                if np.any(tree.feature >= len(feature_names)):
                    msg = "tree split references an unknown feature"
                    raise UnsupportedModelFormat(msg)
        return cls(
            trees=trees,
            class_order=class_order,
            feature_names=feature_names,
            hyperparameters=hyperparameters,
            metadata=dict(data.get("metadata", {})),
        )

    def save(self, path: Path) -> Path:
        """Write the model JSON document."""
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")
        return path

    @classmethod
    def load(cls, path: Path) -> TrainedModel:
        """Read a model written by :meth:`save`.

        Raises:
            InputError: If the file is missing or not JSON.
            UnsupportedModelFormat: On an unknown format version.

        """
        if not path.exists():
            msg = f"model file not found: {path}"
            raise InputError(msg)
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            msg = f"model file is not valid JSON: {e}"
            raise UnsupportedModelFormat(msg) from e
        return cls.from_dict(data)


def train(
    matrix: FeatureMatrix,
    hyperparameters: BoostingConfig | None = None,
    *,
    seed: int | None = None,
    metadata: dict[str, Any] | None = None,
) -> TrainedModel:
    """Fit a boosted ensemble by stagewise additive modeling.

    Args:
        matrix: Training instances with targets.
        hyperparameters: Boosting settings; defaults apply when omitted.
        seed: Overrides ``hyperparameters.seed`` for row subsampling.
        metadata: Free-form context stored with the model.

    Raises:
        DegenerateTarget: If fewer than two classes are present.

    """
    params = hyperparameters or BoostingConfig()
    if matrix.targets is None:
        msg = "training requires targets"
        raise ValueError(msg)
    class_order = tuple(sorted(set(matrix.targets)))
    if len(class_order) < 2:  # noqa: PLR2004
        msg = f"need at least two classes to train, got {list(class_order)}"
        raise DegenerateTarget(msg)

    x = np.ascontiguousarray(matrix.values)
    n = x.shape[0]
    k = len(class_order)
    index = {name: i for i, name in enumerate(class_order)}
    y = np.zeros((n, k))
    y[np.arange(n), [index[t] for t in matrix.targets]] = 1.0

    sorted_columns = np.argsort(x, axis=0, kind="stable").T.copy()
    rng = np.random.default_rng(params.seed if seed is None else seed)
    subsample = max(1, round(params.subsample_fraction * n))
    leaf_scale = params.learning_rate * (k - 1) / k

    raw = np.zeros((n, k))
    rounds: list[tuple[Tree, ...]] = []
    for _ in range(params.rounds):
        proba = softmax(raw)
        rows = np.ones(n, dtype=bool)
        if subsample < n:
            rows = np.zeros(n, dtype=bool)
            rows[rng.choice(n, size=subsample, replace=False)] = True
        trees: list[Tree] = []
        for c in range(k):
            builder = _TreeBuilder(
                x,
                y[:, c] - proba[:, c],
                proba[:, c] * (1 - proba[:, c]),
                max_depth=params.max_depth,
                min_samples_leaf=params.min_samples_leaf,
                leaf_scale=leaf_scale,
            )
            tree = builder.build(rows, sorted_columns)
            trees.append(tree)
        for c, tree in enumerate(trees):
            raw[:, c] += tree.predict(x)
        rounds.append(tuple(trees))

    logger.debug("Trained ensemble", rows=n, classes=k, rounds=params.rounds)
    return TrainedModel(
        trees=tuple(rounds),
        class_order=class_order,
        feature_names=matrix.columns,
        hyperparameters=params,
        metadata=dict(metadata or {}),
    )


def predict(model: TrainedModel, rows: FeatureMatrix) -> list[tuple[str, NDArray[np.float64]]]:
    """Predicted class and probability vector per row."""
    proba = model.predict_proba(rows)
    return [(model.class_order[int(np.argmax(p))], p) for p in proba]


def feature_importance(model: TrainedModel) -> dict[str, float]:
    """Total split gain per feature, in schema order; unused features get 0."""
    totals = np.zeros(len(model.feature_names))
    for round_trees in model.trees:
        for tree in round_trees:
            internal = tree.feature != _LEAF
            np.add.at(totals, tree.feature[internal], tree.gain[internal])
    return {name: float(v) for name, v in zip(model.feature_names, totals, strict=True)}


@dataclass(frozen=True)
class MajorityModel:
    """Predicts the most frequent training class for every row."""

    majority: str
    class_order: tuple[str, ...]

    def predict_proba(self, rows: FeatureMatrix) -> NDArray[np.float64]:
        """One-hot probabilities on the majority class."""
        proba = np.zeros((rows.n_rows, len(self.class_order)))
        proba[:, self.class_order.index(self.majority)] = 1.0
        return proba

    def predict_classes(self, rows: FeatureMatrix) -> list[str]:
        """The majority class for every row."""
        return majority_predict(self, rows.n_rows)


def majority_train(targets: Sequence[str]) -> MajorityModel:
    """Fit the majority baseline; count ties go to the first class in sorted order.

    Raises:
        EmptyTargets: If ``targets`` is empty.

    """
    if not targets:
        msg = "majority baseline needs at least one target"
        raise EmptyTargets(msg)
    class_order = tuple(sorted(set(targets)))
    counts = [sum(1 for t in targets if t == c) for c in class_order]
    return MajorityModel(majority=class_order[int(np.argmax(counts))], class_order=class_order)


def majority_predict(model: MajorityModel, row_count: int) -> list[str]:
    """``row_count`` copies of the majority class."""
    return [model.majority] * row_count


def train_majority(matrix: FeatureMatrix, _seed: int = 0) -> MajorityModel:
    """Trainer adapter for cross-validation."""
    if matrix.targets is None:
        msg = "training requires targets"
        raise ValueError(msg)
    return majority_train(matrix.targets)


def group_vote(
    labels: Sequence[str],
    probabilities: NDArray[np.float64] | None = None,
    class_order: Sequence[str] | None = None,
) -> str:
    """Group-level class from per-entity predictions of one window.

    Majority wins; count ties go to the larger summed probability, then to the
    earlier class in ``class_order``.

    Raises:
        ValueError: If ``labels`` is empty.

    """
    if not labels:
        msg = "group vote needs at least one prediction"
        raise ValueError(msg)
    order = list(class_order) if class_order is not None else sorted(set(labels))
    counts = {c: 0 for c in order}
    for label in labels:
        counts[label] = counts.get(label, 0) + 1
    top = max(counts.values())
    tied = [c for c in counts if counts[c] == top]
    if len(tied) == 1 or probabilities is None:
        return tied[0]
    summed = np.asarray(probabilities, dtype=np.float64).sum(axis=0)
    mass = {c: float(summed[order.index(c)]) if c in order else 0.0 for c in tied}
    best = max(mass.values())
    return next(c for c in tied if mass[c] == best)
