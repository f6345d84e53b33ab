"""Deterministic synthetic tables shared by the tests."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from automl_ids.dataset import DataTable

FIXTURE_CLASSES = (("Benign", 350), ("DoS", 100), ("PortScan", 50))
FIXTURE_PATH = Path(__file__).parent / "data" / "flows_500.csv"


def flow_fixture(seed: int = 7) -> tuple[list[str], np.ndarray, list[str]]:
    """500 flows in three well-separated classes.

    Two shifted Gaussian columns carry the class signal, one skewed column
    and one integer column are weakly informative, one column is constant
    and three are pure noise.
    """
    rng = np.random.default_rng(seed)
    names = ["fwd_mean", "bwd_mean", "duration", "dst_port_bucket", "proto_flag", "noise_a", "noise_b", "noise_c"]
    rows, labels = [], []
    for c, (label, n) in enumerate(FIXTURE_CLASSES):
        x = np.empty((n, len(names)))
        x[:, 0] = rng.normal(4.0 * c, 0.5, n)
        x[:, 1] = rng.normal(-3.0 * c, 0.5, n)
        x[:, 2] = rng.lognormal(1.0 + 0.3 * c, 0.8, n)
        x[:, 3] = rng.integers(0, 4 + 2 * c, n)
        x[:, 4] = 1.0
        x[:, 5:] = rng.normal(0.0, 1.0, (n, 3))
        rows.append(x)
        labels += [label] * n
    X = np.concatenate(rows)
    order = rng.permutation(X.shape[0])
    return names, X[order], [labels[i] for i in order]


def write_fixture(path=FIXTURE_PATH, seed: int = 7) -> Path:
    names, X, labels = flow_fixture(seed)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*names, "Label"])
        for row, lab in zip(X, labels):
            w.writerow([repr(float(v)) for v in row] + [lab])
    return path


def separable_table(n: int = 200, seed: int = 0) -> DataTable:
    """Two classes split by a margin on the first of three features."""
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    X = rng.normal(0.0, 1.0, (n, 3))
    X[:, 0] += np.where(y == 1, 3.0, -3.0)
    return DataTable(("x0", "x1", "x2"), X, y, ("neg", "pos"))


if __name__ == "__main__":
    print(write_fixture())
