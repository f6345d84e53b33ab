import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from automl_ids.autofs import FeatureMask, apply_mask
from automl_ids.dataset import DataError, DataTable
from automl_ids.feature_scoring import FeatureImportance, discretize, entropy, information_gain

from oracles import information_gain_contingency


def test_entropy_examples():
    assert entropy([0, 1, 0, 1]) == 1.0
    assert entropy([2, 2, 2]) == 0.0
    assert entropy([0, 0, 0, 1]) == pytest.approx(0.8112781244591328, abs=1e-12)


def test_discretize_examples():
    codes = discretize(np.arange(1, 101), 10)
    assert np.bincount(codes).tolist() == [10] * 10
    assert np.unique(discretize(np.full(9, 4.0), 10)).size == 1
    codes = discretize([1, 1, 1, 1, 2, 3], 3)
    assert np.unique(codes).size <= 3 and np.unique(codes[:4]).size == 1
    with pytest.raises(ValueError):
        discretize([1, 2, 3], 1)


def categorical_fixture(seed=0, n=240):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 3, n)
    cols = [
        y.astype(float),                                  # copy of the label
        (y + rng.integers(0, 2, n)) % 3,                  # noisy copy
        rng.integers(0, 4, n),                            # independent draw
        np.where(y == 2, rng.integers(0, 2, n), 5),       # partial signal
    ]
    X = np.column_stack(cols).astype(float)
    return DataTable(("a", "b", "c", "d"), X, y, ("x", "y", "z"))


def test_information_gain_matches_contingency_oracle():
    t = categorical_fixture()
    imp = information_gain(t)
    for j in range(4):
        ref = information_gain_contingency(t.features[:, j].tolist(), t.labels.tolist())
        assert abs(imp.raw_ig[j] - max(ref, 0.0)) < 1e-12
    assert imp.raw_ig[0] == pytest.approx(entropy(t.labels), abs=1e-12)
    assert imp.normalized.sum() == pytest.approx(1.0, abs=1e-9)


def test_independent_feature_scores_near_zero():
    y = np.array([0, 1] * 50)
    x = np.repeat([1.0, 2.0], 50)
    t = DataTable(("n",), x[:, None], y, ("a", "b"))
    assert information_gain(t).raw_ig[0] < 1e-12


def test_uniform_fallback_and_csv_round_trip(tmp_path):
    imp = FeatureImportance.from_raw(("a", "b"), [0.0, 0.0])
    assert imp.normalized.tolist() == [0.5, 0.5]
    imp = information_gain(categorical_fixture())
    imp.write_csv(tmp_path / "i.csv")
    back = FeatureImportance.read_csv(tmp_path / "i.csv")
    assert back.feature_names == imp.feature_names
    assert np.array_equal(back.raw_ig, imp.raw_ig) and np.array_equal(back.normalized, imp.normalized)


def test_single_class_rejected():
    t = DataTable(("a",), [[1.0], [2.0]], [0, 0], ("x", "y"))
    with pytest.raises(DataError):
        information_gain(t)


def test_mask_then_score_equals_score_then_restrict():
    t = categorical_fixture(seed=4)
    mask = FeatureMask.from_array([1, 0, 1, 1])
    full = information_gain(t).raw_ig
    sub = information_gain(apply_mask(t, mask)).raw_ig
    assert np.allclose(sub, full[[0, 2, 3]], atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_ig_properties(seed):
    rng = np.random.default_rng(seed)
    n = 60
    y = rng.integers(0, 3, n)
    y[:3] = [0, 1, 2]
    x = rng.normal(size=n) + y
    X = np.column_stack([x, x, rng.normal(size=n)])
    t = DataTable(("a", "b", "c"), X, y, ("p", "q", "r"))
    imp = information_gain(t)
    h = entropy(y)
    assert np.all(imp.raw_ig >= 0) and np.all(imp.raw_ig <= h + 1e-12)
    assert imp.raw_ig[0] == imp.raw_ig[1]
    perm = rng.permutation(n)
    again = information_gain(t.take(perm))
    assert np.allclose(again.raw_ig, imp.raw_ig, atol=1e-12)
