"""Shapiro-Wilk normality test using Royston's (1992, 1995) approximations."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

MAX_N = 5000

_C1 = (0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056)
_C2 = (0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633)
_C3 = (0.544, -0.39978, 0.025054, -6.714e-4)
_C4 = (1.3822, -0.77857, 0.062767, -0.0020322)
_C5 = (-1.5861, -0.31082, -0.083751, 0.0038915)
_C6 = (-0.4803, -0.082676, 0.0030302)
_G = (-2.273, 0.459)


@dataclass(frozen=True)
class ShapiroResult:
    w: float
    p_value: float
    n: int
    degenerate: bool = False


def _poly(coefs, x: float) -> float:
    out = 0.0
    for c in reversed(coefs):
        out = out * x + c
    return out


def shapiro_coefficients(n: int) -> np.ndarray:
    """Half-vector of Shapiro-Wilk weights a_1..a_{n//2} (largest first)."""
    if n < 3:
        raise ValueError("n must be >= 3")
    half = n // 2
    if n == 3:
        return np.array([math.sqrt(0.5)])
    i = np.arange(1, half + 1)
    m = ndtri((i - 0.375) / (n + 0.25))  # negative scores for the lower half
    summ2 = 2.0 * float(np.sum(m * m))
    ssumm2 = math.sqrt(summ2)
    rsn = 1.0 / math.sqrt(n)
    a1 = _poly(_C1, rsn) - m[0] / ssumm2
    a = np.empty(half)
    if n > 5:
        first = 2
        a2 = -m[1] / ssumm2 + _poly(_C2, rsn)
        fac = math.sqrt((summ2 - 2 * m[0] ** 2 - 2 * m[1] ** 2) / (1 - 2 * a1**2 - 2 * a2**2))
        a[1] = a2
    else:
        first = 1
        fac = math.sqrt((summ2 - 2 * m[0] ** 2) / (1 - 2 * a1**2))
    a[0] = a1
    a[first:] = -m[first:] / fac
    return a


def _p_value(w: float, n: int) -> float:
    if n == 3:
        pw = (6.0 / math.pi) * (math.asin(math.sqrt(min(w, 1.0))) - math.pi / 3.0)
        return min(max(pw, 0.0), 1.0)
    if w >= 1.0:
        return 1.0
    y = math.log(1.0 - w)
    if n <= 11:
        gamma = _poly(_G, n)
        if y >= gamma:
            return 1e-99
        y = -math.log(gamma - y)
        mean = _poly(_C3, n)
        sd = math.exp(_poly(_C4, n))
    else:
        ln = math.log(n)
        mean = _poly(_C5, ln)
        sd = math.exp(_poly(_C6, ln))
    return float(ndtr(-(y - mean) / sd))


def shapiro_wilk(values, seed: int = 0) -> ShapiroResult:
    """Test a sample for normality.

    Samples larger than 5000 are tested on a seeded uniform subsample of 5000,
    the range over which the approximation is defined. A constant sample
    returns ``p = 0`` with ``degenerate=True`` rather than raising.
    """
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size < 3:
        raise ValueError(f"Shapiro-Wilk needs at least 3 values, got {x.size}")
    if x.size > MAX_N:
        x = np.random.default_rng(seed).choice(x, size=MAX_N, replace=False)
    x = np.sort(x)
    n = x.size
    if x[-1] - x[0] <= 0.0:
        return ShapiroResult(1.0, 0.0, n, degenerate=True)
    # centre and scale first so large-magnitude features keep precision
    x = (x - x.mean()) / (x[-1] - x[0])
    ssq = float(np.dot(x, x))
    if ssq <= 0.0:
        return ShapiroResult(1.0, 0.0, n, degenerate=True)
    a = shapiro_coefficients(n)
    half = a.size
    numer = float(np.dot(a, x[::-1][:half] - x[:half]))
    w = min(numer * numer / ssq, 1.0)
    return ShapiroResult(w, _p_value(w, n), n)
