"""Tests for classifier module."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from collective_behavior.classifier import (
    MODEL_FORMAT_VERSION,
    MajorityModel,
    Predictor,
    TrainedModel,
    feature_importance,
    group_vote,
    majority_predict,
    majority_train,
    predict,
    softmax,
    train,
    train_majority,
)
from collective_behavior.config import BoostingConfig
from collective_behavior.errors import (
    DegenerateTarget,
    EmptyTargets,
    InputError,
    SchemaMismatch,
    UnsupportedModelFormat,
)
from collective_behavior.models import FeatureMatrix

BAYES_MEAN = 1.405  # class means at +/- this give a Bayes accuracy of about 0.92


def _matrix(values, targets=None, columns=None) -> FeatureMatrix:
    values = np.asarray(values, dtype=np.float64)
    return FeatureMatrix(
        values=values,
        columns=tuple(columns or (f"f{i}" for i in range(values.shape[1]))),
        targets=None if targets is None else tuple(targets),
    )


def _gaussians(rng: np.random.Generator, n: int) -> FeatureMatrix:
    y = rng.integers(0, 2, n)
    signal = rng.normal(loc=np.where(y == 1, BAYES_MEAN, -BAYES_MEAN))
    noise = rng.normal(size=n)
    return _matrix(np.column_stack((signal, noise)), ["pos" if v else "neg" for v in y])


@pytest.fixture
def separable() -> FeatureMatrix:
    """Create two classes split by the sign of the first column."""
    rng = np.random.default_rng(3)
    x = np.concatenate((rng.uniform(-5, -1, 20), rng.uniform(1, 5, 20)))
    other = rng.normal(size=40)
    return _matrix(np.column_stack((x, other)), ["a"] * 20 + ["b"] * 20)


@pytest.fixture
def three_class() -> FeatureMatrix:
    """Create a noisy three-class problem."""
    rng = np.random.default_rng(21)
    y = rng.integers(0, 3, 150)
    values = rng.normal(size=(150, 3)) + np.eye(3)[y] * 2.0
    return _matrix(values, [("x", "y", "z")[v] for v in y], ("u", "v", "w"))


SMALL = BoostingConfig(rounds=8, max_depth=2, min_samples_leaf=3, learning_rate=0.3)


class TestSoftmax:
    """Tests for softmax."""

    def test_rows_normalized(self) -> None:
        """Test rows sum to one and large values do not overflow."""
        proba = softmax(np.array([[0.0, 0.0], [1000.0, 0.0]]))
        np.testing.assert_allclose(proba.sum(axis=1), [1.0, 1.0])
        assert proba[0].tolist() == [0.5, 0.5]
        assert proba[1, 0] == pytest.approx(1.0)


class TestTrain:
    """Tests for train."""

    def test_separable_single_split(self, separable: FeatureMatrix) -> None:
        """Test one round of stumps reproduces separable training labels."""
        model = train(separable, BoostingConfig(rounds=1, max_depth=1, min_samples_leaf=1))
        assert model.predict_classes(separable.without_targets()) == list(separable.targets)
        assert model.class_order == ("a", "b")
        assert isinstance(model, Predictor)

    def test_deterministic(self, three_class: FeatureMatrix) -> None:
        """Test identical seeds give bit-identical predictions under subsampling."""
        params = SMALL.model_copy(update={"subsample_fraction": 0.7})
        first = train(three_class, params, seed=5)
        second = train(three_class, params, seed=5)
        rows = three_class.without_targets()
        np.testing.assert_array_equal(first.predict_proba(rows), second.predict_proba(rows))

    def test_two_gaussians_near_bayes_rate(self) -> None:
        """Test held-out accuracy on a problem with a 0.92 Bayes rate."""
        rng = np.random.default_rng(0)
        train_rows = _gaussians(rng, 500)
        test_rows = _gaussians(rng, 4000)
        model = train(
            train_rows,
            BoostingConfig(rounds=50, max_depth=2, learning_rate=0.1, min_samples_leaf=10),
        )
        predicted = model.predict_classes(test_rows.without_targets())
        accuracy = np.mean([p == t for p, t in zip(predicted, test_rows.targets, strict=True)])
        assert 0.85 <= accuracy <= 0.95

    def test_single_class(self) -> None:
        """Test a single class cannot be boosted."""
        with pytest.raises(DegenerateTarget):
            train(_matrix([[1.0], [2.0]], ["a", "a"]))

    def test_requires_targets(self) -> None:
        """Test unlabeled rows are rejected."""
        with pytest.raises(ValueError, match="targets"):
            train(_matrix([[1.0], [2.0]]))

    def test_metadata_kept(self, separable: FeatureMatrix) -> None:
        """Test free-form metadata travels with the model."""
        model = train(separable, SMALL, metadata={"resolution": 60.0})
        assert model.metadata == {"resolution": 60.0}
        assert model.hyperparameters == SMALL


class TestPredict:
    """Tests for prediction."""

    def test_zero_rounds_uniform(self, three_class: FeatureMatrix) -> None:
        """Test an empty ensemble predicts the prior and the first class."""
        model = train(three_class, BoostingConfig(rounds=0))
        rows = three_class.without_targets()
        np.testing.assert_allclose(model.predict_proba(rows), 1 / 3)
        assert set(model.predict_classes(rows)) == {"x"}

    def test_probabilities_normalized(self, three_class: FeatureMatrix) -> None:
        """Test probabilities lie in (0, 1) and sum to one per row."""
        proba = train(three_class, SMALL).predict_proba(three_class)
        assert np.all((proba > 0) & (proba < 1))
        np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-9)

    def test_predict_pairs(self, separable: FeatureMatrix) -> None:
        """Test predict returns the class with its probability vector."""
        model = train(separable, SMALL)
        results = predict(model, separable)
        assert len(results) == separable.n_rows
        label, proba = results[0]
        assert label == "a"
        assert proba.shape == (2,)

    def test_schema_mismatch(self, separable: FeatureMatrix) -> None:
        """Test prediction needs exactly the training columns."""
        model = train(separable, SMALL)
        with pytest.raises(SchemaMismatch, match="missing"):
            model.predict_proba(_matrix([[0.0]], columns=("f0",)))
        with pytest.raises(SchemaMismatch, match="unexpected"):
            model.predict_proba(_matrix([[0.0, 0.0, 0.0]], columns=("f0", "f1", "f2")))

    def test_column_permutation(self, three_class: FeatureMatrix) -> None:
        """Test columns are matched by name, not position."""
        model = train(three_class, SMALL)
        shuffled = three_class.select_columns(["w", "u", "v"])
        np.testing.assert_array_equal(
            model.predict_proba(three_class),
            model.predict_proba(shuffled),
        )

    def test_monotone_transform(self, three_class: FeatureMatrix) -> None:
        """Test cubing one column and retraining partitions rows identically."""
        cubed_values = three_class.values.copy()
        cubed_values[:, 1] = cubed_values[:, 1] ** 3
        cubed = _matrix(cubed_values, three_class.targets, three_class.columns)
        original = train(three_class, SMALL, seed=2)
        transformed = train(cubed, SMALL, seed=2)
        np.testing.assert_allclose(
            original.predict_proba(three_class),
            transformed.predict_proba(cubed),
            rtol=0,
            atol=1e-12,
        )

    def test_constant_column(self, three_class: FeatureMatrix) -> None:
        """Test an added constant column changes no prediction."""
        padded = _matrix(
            np.column_stack((np.full(three_class.n_rows, 7.0), three_class.values)),
            three_class.targets,
            ("const", *three_class.columns),
        )
        base = train(three_class, SMALL)
        with_const = train(padded, SMALL)
        np.testing.assert_array_equal(
            base.predict_proba(three_class),
            with_const.predict_proba(padded),
        )
        assert feature_importance(with_const)["const"] == 0.0


class TestSerialization:
    """Tests for the model JSON document."""

    def test_round_trip(self, tmp_path: Path, three_class: FeatureMatrix) -> None:
        """Test save then load reproduces predictions bit-exactly."""
        model = train(three_class, SMALL, metadata={"resolution": 60.0})
        path = model.save(tmp_path / "model.json")
        restored = TrainedModel.load(path)
        np.testing.assert_array_equal(
            model.predict_proba(three_class),
            restored.predict_proba(three_class),
        )
        assert restored.class_order == model.class_order
        assert restored.feature_names == model.feature_names
        assert restored.metadata == {"resolution": 60.0}
        assert json.loads(path.read_text())["format_version"] == MODEL_FORMAT_VERSION

    def test_extra_keys_ignored(self, separable: FeatureMatrix) -> None:
        """Test report stamps next to the model do not break loading."""
        document = {**train(separable, SMALL).to_dict(), "seed": 1, "config_hash": "abc"}
        assert TrainedModel.from_dict(document).class_order == ("a", "b")

    def test_unknown_version(self, separable: FeatureMatrix) -> None:
        """Test a different format version is refused."""
        document = train(separable, SMALL).to_dict()
        document["format_version"] = 99
        with pytest.raises(UnsupportedModelFormat, match="99"):
            TrainedModel.from_dict(document)

    def test_tree_count_mismatch(self, separable: FeatureMatrix) -> None:
        """Test every round needs one tree per class."""
        document = train(separable, SMALL).to_dict()
        document["trees"][0] = document["trees"][0][:1]
        with pytest.raises(UnsupportedModelFormat, match="one tree per class"):
            TrainedModel.from_dict(document)

    def test_unknown_feature_index(self, separable: FeatureMatrix) -> None:
        """Test split references must stay within the schema."""
        document = train(separable, SMALL).to_dict()
        document["trees"][0][0]["feature"][0] = 5
        with pytest.raises(UnsupportedModelFormat, match="unknown feature"):
            TrainedModel.from_dict(document)

    def test_missing_key(self, separable: FeatureMatrix) -> None:
        """Test a truncated document is refused."""
        document = train(separable, SMALL).to_dict()
        del document["feature_names"]
        with pytest.raises(UnsupportedModelFormat, match="malformed"):
            TrainedModel.from_dict(document)

    def test_load_missing(self, tmp_path: Path) -> None:
        """Test a missing model file is an input error."""
        with pytest.raises(InputError, match="not found"):
            TrainedModel.load(tmp_path / "absent.json")

    def test_load_not_json(self, tmp_path: Path) -> None:
        """Test a corrupt model file is refused."""
        path = tmp_path / "model.json"
        path.write_text("not json", encoding="utf-8")
        with pytest.raises(UnsupportedModelFormat):
            TrainedModel.load(path)


class TestFeatureImportance:
    """Tests for feature_importance."""

    def test_zero_rounds(self, separable: FeatureMatrix) -> None:
        """Test an empty ensemble has no gain."""
        model = train(separable, BoostingConfig(rounds=0))
        assert feature_importance(model) == {"f0": 0.0, "f1": 0.0}

    def test_separating_feature_carries_all_gain(self, separable: FeatureMatrix) -> None:
        """Test the only useful split takes all the gain of round one."""
        model = train(separable, BoostingConfig(rounds=1, max_depth=1, min_samples_leaf=1))
        importance = feature_importance(model)
        assert importance["f0"] > 0
        assert importance["f1"] == 0.0

    def test_nonnegative(self, three_class: FeatureMatrix) -> None:
        """Test gains are nonnegative and keyed in schema order."""
        importance = feature_importance(train(three_class, SMALL))
        assert list(importance) == ["u", "v", "w"]
        assert all(v >= 0 for v in importance.values())


class TestMajority:
    """Tests for the majority baseline."""

    def test_most_frequent(self) -> None:
        """Test training [a, a, b] predicts a for every row."""
        model = majority_train(["a", "a", "b"])
        assert majority_predict(model, 3) == ["a", "a", "a"]

    def test_tie_to_first_class(self) -> None:
        """Test balanced targets resolve to the first class in order."""
        assert majority_train(["b", "a", "b", "a"]).majority == "a"

    def test_empty(self) -> None:
        """Test an empty target list is refused."""
        with pytest.raises(EmptyTargets):
            majority_train([])

    def test_predictor_interface(self) -> None:
        """Test one-hot probabilities and row-count predictions."""
        model = train_majority(_matrix([[0.0], [1.0], [2.0]], ["b", "b", "c"]))
        assert isinstance(model, MajorityModel)
        rows = _matrix([[5.0], [6.0]])
        assert model.predict_classes(rows) == ["b", "b"]
        assert model.predict_proba(rows).tolist() == [[1.0, 0.0], [1.0, 0.0]]


class TestGroupVote:
    """Tests for group_vote."""

    def test_majority(self) -> None:
        """Test the most common entity prediction wins."""
        assert group_vote(["walk", "walk", "rest"]) == "walk"

    def test_single_entity(self) -> None:
        """Test one prediction is its own vote."""
        assert group_vote(["rest"]) == "rest"

    def test_tie_by_probability_mass(self) -> None:
        """Test a 2-2 tie goes to the class with 1.3 summed probability over 1.1."""
        proba = np.array(
            [
                [0.45, 0.30, 0.25],
                [0.40, 0.35, 0.25],
                [0.15, 0.50, 0.35],
                [0.10, 0.15, 0.75],
            ],
        )
        assert group_vote(["a", "a", "b", "b"], proba, ("a", "b", "c")) == "b"

    def test_tie_by_class_order(self) -> None:
        """Test a tie without probabilities goes to the earlier class."""
        assert group_vote(["b", "a"], class_order=("b", "a")) == "b"
        assert group_vote(["b", "a"]) == "a"

    def test_empty(self) -> None:
        """Test at least one prediction is needed."""
        with pytest.raises(ValueError, match="at least one"):
            group_vote([])
