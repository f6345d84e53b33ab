"""Gradient-based one-side sampling."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GossSample:
    indices: np.ndarray
    weights: np.ndarray


def goss_sample(g_norms, a: float, b: float, seed) -> GossSample:
    """Keep the top ceil(a*n) rows by gradient magnitude, sample ceil(b*n) of the rest.

    Sampled rows are up-weighted by (1 - a) / b so weighted gradient sums stay
    unbiased. Indices are returned in ascending order.
    """
    if not (0.0 <= a <= 1.0 and 0.0 <= b <= 1.0):
        raise ValueError("GOSS fractions must lie in [0, 1]")
    if a + b > 1.0 + 1e-12:
        raise ValueError(f"goss a + b must be <= 1, got {a} + {b}")
    mag = np.abs(np.asarray(g_norms, dtype=np.float64))
    n = mag.size
    n_top = min(math.ceil(a * n), n)
    order = np.argsort(-mag, kind="stable")
    top = order[:n_top]
    rest = order[n_top:]
    n_rand = min(math.ceil(b * n), rest.size) if b > 0 else 0
    picked = np.random.default_rng(seed).choice(rest, size=n_rand, replace=False) if n_rand else rest[:0]
    omega = (1.0 - a) / b if b > 0 else 0.0
    idx = np.concatenate([top, picked])
    w = np.concatenate([np.ones(top.size), np.full(picked.size, omega)])
    order = np.argsort(idx, kind="stable")
    return GossSample(idx[order].astype(np.int64), w[order])
