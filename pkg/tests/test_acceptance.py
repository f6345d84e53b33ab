"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Criterion 10 needs the public dataset subsets; point AUTOML_IDS_CICIDS_CSV and
AUTOML_IDS_IOTID_CSV at them (optionally AUTOML_IDS_ACCEPT_CONFIG at a config
file) or it is skipped.
"""
import os
import time
from pathlib import Path

import numpy as np
import pytest

from automl_ids import pipeline as pl
from automl_ids.autodp import adasyn_generate, compute_balance_plan, smote_generate
from automl_ids.autofs import autofs_swarm_config, run_oip_autofs
from automl_ids.config import load_config
from automl_ids.dataset import ClassDistribution, DataTable
from automl_ids.evaluation import classification_metrics, expected_calibration_error
from automl_ids.feature_scoring import FeatureImportance, information_gain
from automl_ids.gbdt import EXACT, HISTOGRAM, Hyperparams, softmax_gradients, train

from fixtures import separable_table
from oracles import convex_t, hamilton, information_gain_contingency, knn_brute, pareto_front_masks, softmax_logloss

FIXTURE = Path(__file__).parent / "data" / "flows_500.csv"


@pytest.fixture
def verdict(capsys):
    def say(n, ok, detail=""):
        with capsys.disabled():
            print(f"\ncriterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, f"criterion {n}: {detail}"
    return say


def _post_balance(counts):
    plan = compute_balance_plan(ClassDistribution(dict(enumerate(counts)), sum(counts)))
    return int(plan.threshold), tuple(max(n, plan.target_count.get(c, 0)) for c, n in enumerate(counts))


def test_criterion_01_balance_plan(verdict):
    t0 = time.perf_counter()
    a = _post_balance((14569, 2430, 1728, 1579, 1024, 82, 28))
    b = _post_balance((1629, 16637, 2961, 2389, 1415))
    dt = time.perf_counter() - t0
    ok = a == (1531, (14569, 2430, 1728, 1579, 1531, 1531, 1531)) and b == (2503, (2503, 16637, 2961, 2503, 2503)) and dt < 1
    verdict(1, ok, f"{a} {b} in {dt:.3f}s")


def test_criterion_02_pareto_front(verdict):
    imp = FeatureImportance.from_raw(tuple(f"f{i}" for i in range(8)), (0.30, 0.22, 0.16, 0.12, 0.09, 0.06, 0.03, 0.02))
    t0 = time.perf_counter()
    res = run_oip_autofs(None, imp, autofs_swarm_config(8, n_particles=30, iterations=50, seed=0))
    dt = time.perf_counter() - t0
    got = {(round(f[0], 12), round(f[1], 12)) for f in res.archive.fitness_matrix}
    want = {(round(x, 12), round(y, 12)) for x, y in pareto_front_masks(list(imp.normalized))}
    verdict(2, got == want and dt < 5, f"{len(got)}/{len(want)} front points in {dt:.2f}s")


def _central(row, label, c, eps, order):
    """First or second central difference of the log-loss of one row along class ``c``."""
    up, dn = row.copy(), row.copy()
    up[c] += eps
    dn[c] -= eps
    lu, l0, ld = (softmax_logloss([r], [label]) for r in (up, row, dn))
    return (lu - ld) / (2 * eps) if order == 1 else (lu - 2 * l0 + ld) / eps**2


def test_criterion_03_gradient_check(verdict):
    rng = np.random.default_rng(0)
    y = rng.integers(0, 3, 20)
    z = rng.normal(0, 1.5, (20, 3))
    g, h = softmax_gradients(y, z)
    worst = 0.0
    for i in range(20):
        for c in range(3):
            worst = max(worst, abs(_central(z[i], y[i], c, 1e-5, 1) - g[i, c]), abs(_central(z[i], y[i], c, 1e-4, 2) - h[i, c]))
    verdict(3, worst < 1e-5, f"max abs error {worst:.2e}")


def test_criterion_04_learner_sanity(verdict):
    t = separable_table(200, seed=0)
    hp = Hyperparams(n_estimators=50, learning_rate=0.3, max_depth=3)
    acc = {k: float(np.mean(train(t, hp, k, seed=0).predict(t.features) == t.labels)) for k in (EXACT, HISTOGRAM)}
    loss = train(t, hp, EXACT, track_loss=True).train_loss
    mono = all(b <= a + 1e-12 for a, b in zip(loss, loss[1:]))
    verdict(4, all(v == 1.0 for v in acc.values()) and mono, f"train accuracy {acc}, loss non-increasing={mono}")


def test_criterion_05_histogram_matches_exact(verdict):
    rng = np.random.default_rng(5)
    X = rng.integers(1, 9, (100, 4)).astype(float)
    y = ((X[:, 0] > 4) & (X[:, 1] < 6)).astype(int) + (X[:, 2] > 6)
    t = DataTable(("a", "b", "c", "d"), X, y, ("x", "y", "z"))
    hp = Hyperparams(n_estimators=10, max_depth=3, histogram_bins=64, goss_a=0.0, goss_b=1.0, efb_conflict_max=0)
    pe = train(t, hp, EXACT).predict_proba(X)
    ph = train(t, hp, HISTOGRAM, seed=3).predict_proba(X)
    err = float(np.abs(pe - ph).max())
    verdict(5, err < 1e-9, f"max prediction gap {err:.2e}")


def test_criterion_06_oversampling_properties(verdict):
    rng = np.random.default_rng(1)
    mino = rng.normal(1.0, 1.0, (12, 3))
    maj = rng.normal(0.0, 1.0, (80, 3))
    table = DataTable(("a", "b", "c"), np.vstack([maj, mino]), np.array([0] * 80 + [1] * 12), ("maj", "min"))
    worst = 0.0
    out, pairs = smote_generate(mino, 5, 50, seed=2, return_pairs=True)
    for row, (i, j) in zip(out, pairs):
        tt, r = convex_t(row, mino[i], mino[j])
        worst = max(worst, r if 0 <= tt <= 1 else np.inf)
    out, pairs = adasyn_generate(mino, table, 1, 5, 41, seed=2, return_pairs=True)
    for row, (i, j) in zip(out, pairs):
        tt, r = convex_t(row, mino[i], mino[j])
        worst = max(worst, r if 0 <= tt <= 1 else np.inf)
    pts = table.features.tolist()
    difficulty = [sum(table.labels[j] != 1 for j in knn_brute(pts, i, 5)) / 5 for i in range(80, 92)]
    alloc = np.bincount(pairs[:, 0], minlength=12).tolist()
    ok = worst < 1e-9 and sum(alloc) == 41 and out.shape[0] == 41 and alloc == hamilton(difficulty, 41)
    verdict(6, ok, f"max convex residual {worst:.1e}, allocation {alloc}")


def test_criterion_07_information_gain(verdict):
    rng = np.random.default_rng(7)
    y = rng.integers(0, 3, 120)
    X = np.column_stack([
        (y + rng.integers(0, 2, 120)) % 4,
        rng.integers(0, 3, 120),
        np.where(rng.random(120) < 0.8, y, 0),
        np.full(120, 2),
    ]).astype(float)
    imp = information_gain(DataTable(("p", "q", "r", "s"), X, y, ("a", "b", "c")))
    want = [information_gain_contingency(X[:, j].tolist(), y.tolist()) for j in range(4)]
    err = float(np.max(np.abs(imp.raw_ig - want)))
    verdict(7, err < 1e-12, f"max abs error {err:.1e}")


def test_criterion_08_metrics(verdict):
    m = classification_metrics([0, 0, 1, 1], [0, 1, 1, 1], 2)
    got = (m.accuracy, m.precision_weighted, m.recall_weighted, m.f1_weighted)
    close = all(abs(a - b) < 1e-4 for a, b in zip(got, (0.75, 0.8333, 0.75, 0.7333)))
    rng = np.random.default_rng(8)
    gap = 0.0
    for _ in range(100):
        c = int(rng.integers(2, 6))
        n = int(rng.integers(1, 80))
        r = classification_metrics(rng.integers(0, c, n), rng.integers(0, c, n), c)
        gap = max(gap, abs(r.recall_weighted - r.accuracy))
    verdict(8, close and gap < 1e-12, f"{tuple(round(v, 4) for v in got)}, recall-accuracy gap {gap:.1e}")


def test_criterion_09_calibration(verdict):
    rng = np.random.default_rng(9)
    n = 10_000
    conf = rng.uniform(0.5, 1.0, n)
    labels = np.where(rng.random(n) < conf, 0, 1)
    ece = expected_calibration_error(np.column_stack([conf, 1 - conf]), np.zeros(n, dtype=int), labels)
    y = rng.integers(0, 4, 200)
    onehot = np.eye(4)[y]
    zero = expected_calibration_error(onehot, y, y)
    verdict(9, ece < 0.02 and zero == 0.0, f"calibrated ECE {ece:.4f}, one-hot ECE {zero}")


@pytest.mark.parametrize("env,floor", [("AUTOML_IDS_CICIDS_CSV", 0.985), ("AUTOML_IDS_IOTID_CSV", 0.975)])
def test_criterion_10_public_subsets(env, floor, verdict, tmp_path, capsys):
    path = os.environ.get(env)
    if not path or not Path(path).is_file():
        with capsys.disabled():
            print(f"\ncriterion 10: SKIP  {env} not set; dataset subset unavailable")
        pytest.skip(f"{env} not set")
    cfg = load_config(os.environ.get("AUTOML_IDS_ACCEPT_CONFIG"), {"dataset": path, "out": str(tmp_path)})
    report, _ = pl.run_pipeline(cfg)
    ok = report["f1_weighted"] >= floor
    if env == "AUTOML_IDS_CICIDS_CSV":
        ok = ok and report["ece"] <= 0.01 and report["test_time_per_sample_ms"] <= 0.05 and report["train_time_s"] <= 120
    verdict(10, ok, f"{env}: F1 {report['f1_weighted']:.5f} ECE {report['ece']:.4f} "
                f"{report['test_time_per_sample_ms']:.4f} ms/row train {report['train_time_s']:.1f}s")


def test_criterion_11_determinism(verdict, tmp_path):
    quick = {"autofs_particles": "10", "autofs_iterations": "10", "cash_particles": "6", "cash_iterations": "3",
             "cv_folds": "3", "n_estimators_range": "5,40", "max_depth_range": "2,5", "dataset": str(FIXTURE)}
    roots = []
    for name in ("one", "two"):
        root = tmp_path / name
        pl.run_pipeline(load_config(None, {**quick, "out": str(root)}))
        roots.append(root)
    files = sorted(str(p.relative_to(roots[0])) for p in roots[0].rglob("*") if p.is_file())
    other = sorted(str(p.relative_to(roots[1])) for p in roots[1].rglob("*") if p.is_file())
    diffs = [r for r in files if pl.strip_timing_text(r, (roots[0] / r).read_text()) != pl.strip_timing_text(r, (roots[1] / r).read_text())]
    verdict(11, files == other and not diffs, f"{len(files)} files compared, differing: {diffs or 'none'}")
