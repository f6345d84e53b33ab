
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from automl_ids.dataset import DataError, DataTable
from automl_ids.gbdt import (
    EXACT,
    HISTOGRAM,
    BinMapper,
    BundledBins,
    Hyperparams,
    best_split_exact,
    best_split_histogram,
    deserialize,
    efb_bundle,
    goss_sample,
    leaf_weight,
    log_loss,
    model_size_bytes,
    serialize,
    softmax,
    softmax_gradients,
    train,
)

from fixtures import separable_table
from oracles import softmax_logloss

NO_GOSS = dict(goss_a=0.0, goss_b=1.0)


def test_gradient_examples():
    g, h = softmax_gradients([0], np.zeros((1, 2)))
    assert g.tolist() == [[-0.5, 0.5]] and h.tolist() == [[0.25, 0.25]]
    g, _ = softmax_gradients([1], np.array([[-30.0, 30.0]]))
    assert np.abs(g).max() < 1e-12


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(0)
    y = rng.integers(0, 4, 12)
    z = rng.normal(0, 2, (12, 4))
    g, h = softmax_gradients(y, z)
    for i in range(12):
        for c in range(4):
            # the second difference needs a wider step to stay clear of roundoff
            for eps, order, want in ((1e-5, 1, g[i, c]), (1e-4, 2, h[i, c])):
                up, dn = z[i].copy(), z[i].copy()
                up[c] += eps
                dn[c] -= eps
                lu, l0, ld = (softmax_logloss([r], [y[i]]) for r in (up, z[i], dn))
                fd = (lu - ld) / (2 * eps) if order == 1 else (lu - 2 * l0 + ld) / eps**2
                assert abs(fd - want) < 1e-5
    assert log_loss(y, z) == pytest.approx(softmax_logloss(z, y) / 12, rel=1e-12)


def test_leaf_weight():
    assert leaf_weight(2.0, 1.0, 1.0) == -1.0
    assert leaf_weight(0.0, 3.0, 1.0) == 0.0
    assert abs(leaf_weight(5.0, 1.0, 1e9)) < 1e-8
    with pytest.warns(UserWarning):
        assert leaf_weight(1.0, 0.0, 0.0) == 0.0


def test_exact_split_midpoint_and_gamma_gate():
    X = np.array([[1.0], [2.0], [3.0], [4.0]])
    g = np.array([-1.0, -1.0, 1.0, 1.0])
    h = np.ones(4)
    rows = np.arange(4)
    s = best_split_exact(X, rows, g, h, lam=1.0, gamma=0.0, min_child_hessian=0.0)
    assert s.feature == 0 and s.threshold == 2.5
    # 0.5 * (4/3 + 4/3 - 0) = 4/3
    assert s.gain == pytest.approx(4 / 3)
    assert best_split_exact(X, rows, g, h, lam=1.0, gamma=1.5, min_child_hessian=0.0) is None
    assert best_split_exact(X, rows, np.zeros(4), h, lam=1.0, gamma=0.0, min_child_hessian=0.0) is None


def _hist(X, bins):
    m = BinMapper.fit(X, bins)
    bm = efb_bundle(X, 0)
    return m, BundledBins(m.transform(X), m.n_bins, m.default_bins(), bm)


def test_two_bins_pick_the_single_edge():
    X = np.array([[0.0], [1.0], [5.0], [6.0]])
    g = np.array([-1.0, -1.0, 1.0, 1.0])
    m, b = _hist(X, 2)
    s = best_split_histogram(b, m.edges, np.arange(4), g, np.ones(4), 1.0, 0.0, 0.0)
    assert s is not None and X[:2, 0].max() < s.threshold <= X[2:, 0].min()


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 16))
def test_histogram_gain_never_beats_exact(seed, bins):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(30, 3))
    g = rng.normal(size=30)
    h = rng.uniform(0.1, 1.0, 30)
    rows = np.arange(30)
    e = best_split_exact(X, rows, g, h, 1.0, 0.0, 0.0)
    m, b = _hist(X, bins)
    s = best_split_histogram(b, m.edges, rows, g, h, 1.0, 0.0, 0.0)
    if s is not None:
        assert s.gain > 0 and s.gain <= e.gain + 1e-12
    if bins >= 30:
        assert s == e


def test_histogram_equals_exact_when_bins_cover_values():
    rng = np.random.default_rng(4)
    X = rng.integers(1, 6, (40, 3)).astype(float)
    g = rng.normal(size=40)
    h = rng.uniform(0.1, 1.0, 40)
    rows = np.arange(40)
    m, b = _hist(X, 8)
    e = best_split_exact(X, rows, g, h, 1.0, 0.0, 0.0)
    s = best_split_histogram(b, m.edges, rows, g, h, 1.0, 0.0, 0.0)
    assert (s.feature, s.threshold) == (e.feature, e.threshold)
    assert s.gain == pytest.approx(e.gain, rel=1e-9)


def test_histogram_kind_reproduces_exact_trees_without_sampling():
    rng = np.random.default_rng(2)
    X = rng.integers(1, 7, (60, 3)).astype(float)
    y = (X[:, 0] + X[:, 1] > 7).astype(int)
    t = DataTable(("a", "b", "c"), X, y, ("n", "p"))
    hp = Hyperparams(n_estimators=5, max_depth=3, histogram_bins=32, **NO_GOSS)
    a, b = train(t, hp, EXACT), train(t, hp, HISTOGRAM, seed=9)
    for ra, rb in zip(a.trees, b.trees):
        for ta, tb in zip(ra, rb):
            # thresholds may sit at different points of the same gap; the row partition must agree
            assert ta.feature.tolist() == tb.feature.tolist()
            assert ta.apply(X).tolist() == tb.apply(X).tolist()
            assert np.allclose(ta.value, tb.value, rtol=1e-9, atol=1e-12)
    assert np.allclose(a.predict_proba(X), b.predict_proba(X), rtol=1e-9)


def test_goss_counts_and_weights():
    g = np.arange(100, 0, -1).astype(float)
    s = goss_sample(g, 0.2, 0.1, 0)
    assert s.indices.size == 30
    top = s.weights == 1.0
    assert sorted(s.indices[top].tolist()) == list(range(20))
    assert np.allclose(s.weights[~top], 8.0) and np.all(s.indices[~top] >= 20)
    full = goss_sample(g, 1.0, 0.0, 0)
    assert full.indices.tolist() == list(range(100)) and np.all(full.weights == 1.0)
    with pytest.raises(ValueError):
        goss_sample(g, 0.7, 0.5, 0)


def test_goss_weighted_sum_is_unbiased():
    rng = np.random.default_rng(0)
    g = rng.exponential(size=10_000)
    true = g.sum()
    est = [float((g[s.indices] * s.weights).sum()) for s in (goss_sample(g, 0.2, 0.1, k) for k in range(40))]
    assert abs(np.mean(est) - true) / true < 0.10


def test_efb_bundles():
    X = np.array([[1, 0, 2], [0, 3, 1], [2, 0, 1], [0, 1, 4]], dtype=float)
    bm = efb_bundle(X, 0)
    assert any(set(b) == {0, 1} for b in bm.bundles)
    assert efb_bundle(np.ones((5, 2)), 0).bundles == ((0,), (1,))
    assert len(efb_bundle(np.ones((5, 2)), 5).bundles) == 1
    m = BinMapper.fit(X, 8)
    codes = m.transform(X)
    bb = BundledBins(codes, m.n_bins, m.default_bins(), bm)
    assert bb.unbundle().tolist() == codes.tolist()


@pytest.mark.parametrize("kind", [EXACT, HISTOGRAM])
def test_separable_set_fits_perfectly(kind):
    t = separable_table()
    model = train(t, Hyperparams(n_estimators=50, max_depth=3), kind, seed=0)
    assert np.mean(model.predict(t.features) == t.labels) == 1.0
    assert model.n_trees == 50 * 2
    assert all(tr.depth() <= 3 for r in model.trees for tr in r)
    assert all(np.isfinite(tr.value).all() for r in model.trees for tr in r)


def test_training_loss_non_increasing():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(150, 4))
    y = (X[:, 0] + 0.5 * rng.normal(size=150) > 0).astype(int) + (X[:, 1] > 1)
    t = DataTable(("a", "b", "c", "d"), X, y, ("x", "y", "z"))
    loss = train(t, Hyperparams(n_estimators=25, learning_rate=0.3, max_depth=3), EXACT, track_loss=True).train_loss
    assert all(b <= a + 1e-12 for a, b in zip(loss, loss[1:]))


def test_no_rounds_gives_class_priors_and_round_trips():
    t = separable_table(n=9)
    m = train(t, Hyperparams(n_estimators=0), EXACT)
    p = m.predict_proba(t.features)
    assert np.allclose(p, [5 / 9, 4 / 9])
    back = deserialize(serialize(m))
    assert np.array_equal(back.predict_proba(t.features), p) and back.n_trees == 0


def test_probabilities_and_serialization():
    t = separable_table(seed=3)
    m = train(t, Hyperparams(n_estimators=8, max_depth=2), HISTOGRAM, seed=1)
    probe = np.random.default_rng(5).normal(0, 3, (50, 3))
    p = m.predict_proba(probe)
    assert np.allclose(p.sum(axis=1), 1.0, atol=1e-9)
    assert np.all(p.max(axis=1) >= 0.5)
    assert np.allclose(softmax(m.raw_scores(probe) + 7.0), p)
    back = deserialize(serialize(m))
    assert np.array_equal(back.predict_proba(probe), p)
    assert back.bundles == m.bundles and back.learner_kind == HISTOGRAM
    assert model_size_bytes(m) == len(serialize(m))


def test_deeper_trees_serialize_larger():
    base = separable_table(seed=4)
    X = base.features.copy()
    X[:, 0] = np.random.default_rng(0).normal(size=200)
    t = DataTable(base.feature_names, X, base.labels, base.label_names)
    sizes = [model_size_bytes(train(t, Hyperparams(n_estimators=3, max_depth=d), EXACT)) for d in (1, 2, 4)]
    assert sizes[0] < sizes[1] < sizes[2]


def test_errors():
    t = separable_table(n=10)
    with pytest.raises(DataError):
        train(DataTable(("a",), np.zeros((3, 1)), [0, 0, 0], ("x", "y")), Hyperparams(), EXACT)
    m = train(t, Hyperparams(n_estimators=1), EXACT)
    with pytest.raises(DataError):
        m.predict_proba(np.zeros((2, 2)))
    for blob in (b"{", b"[]", b'{"format": "automl-ids/gbdt-model/v1"}'):
        with pytest.raises(DataError):
            deserialize(blob)
    with pytest.raises(ValueError):
        Hyperparams(goss_a=0.6, goss_b=0.5)
    with pytest.raises(ValueError):
        Hyperparams(histogram_bins=1)
