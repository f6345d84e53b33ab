"""Multiclass softmax loss, its first/second derivatives and the regularised leaf objective."""
from __future__ import annotations

import warnings

import numpy as np


def softmax(scores: np.ndarray) -> np.ndarray:
    z = np.asarray(scores, dtype=np.float64)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def one_hot(labels, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.size, n_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def log_loss(labels, scores: np.ndarray) -> float:
    """Mean multiclass cross-entropy of raw scores."""
    z = np.asarray(scores, dtype=np.float64)
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    labels = np.asarray(labels, dtype=np.int64)
    return float(np.mean(lse - z[np.arange(labels.size), labels]))


def softmax_gradients(labels, scores: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-row, per-class gradient p - y and diagonal hessian p(1 - p)."""
    p = softmax(scores)
    g = p - one_hot(labels, p.shape[1])
    h = p * (1.0 - p)
    return g, h


def leaf_weight(G: float, H: float, lam: float) -> float:
    """Minimiser -G / (H + lambda) of G*w + (H + lambda) * w**2 / 2."""
    denom = H + lam
    if denom == 0.0:
        warnings.warn("zero hessian and zero L2 penalty; leaf weight set to 0", stacklevel=2)
        return 0.0
    return -G / denom


def split_gain(GL, HL, GR, HR, lam: float, gamma: float):
    """Loss reduction of a split (vectorised over candidate arrays)."""
    return 0.5 * (GL * GL / (HL + lam) + GR * GR / (HR + lam) - (GL + GR) ** 2 / (HL + HR + lam)) - gamma
