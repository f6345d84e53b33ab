"""Slow, independent reference computations the package is checked against.

Nothing here imports package internals; each function recomputes its
quantity from first principles with plain loops.
"""
from __future__ import annotations

import itertools
import math
from collections import Counter
from fractions import Fraction


def entropy_bits(labels) -> float:
    counts = Counter(labels)
    n = sum(counts.values())
    return -sum(c / n * math.log2(c / n) for c in counts.values())


def information_gain_contingency(column, labels) -> float:
    """H(Y) minus the value-weighted H(Y | X = v), from an explicit contingency table."""
    table: dict = {}
    for v, y in zip(column, labels):
        table.setdefault(v, Counter())[y] += 1
    n = len(labels)
    cond = 0.0
    for counts in table.values():
        m = sum(counts.values())
        cond += m / n * -sum(c / m * math.log2(c / m) for c in counts.values())
    return entropy_bits(labels) - cond


def confusion_metrics(labels, predictions):
    """(accuracy, weighted precision, weighted recall, weighted F1) by enumeration."""
    classes = sorted(set(labels) | set(predictions))
    n = len(labels)
    acc = sum(a == b for a, b in zip(labels, predictions)) / n
    wp = wr = wf = 0.0
    for c in classes:
        tp = sum(1 for a, b in zip(labels, predictions) if a == c and b == c)
        pred = sum(1 for b in predictions if b == c)
        sup = sum(1 for a in labels if a == c)
        p = tp / pred if pred else 0.0
        r = tp / sup if sup else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        wp += sup / n * p
        wr += sup / n * r
        wf += sup / n * f
    return acc, wp, wr, wf


def softmax_logloss(scores, labels) -> float:
    total = 0.0
    for row, y in zip(scores, labels):
        m = max(row)
        lse = m + math.log(sum(math.exp(v - m) for v in row))
        total += lse - row[y]
    return total


def pareto_front_masks(importance, directions=("max", "min")):
    """Non-dominated (sum of importance, selected fraction) pairs over every non-empty mask."""
    n = len(importance)
    points = set()
    for bits in itertools.product((0, 1), repeat=n):
        if not any(bits):
            continue
        points.add((sum(w for w, b in zip(importance, bits) if b), sum(bits) / n))

    def dom(a, b):
        better = False
        for x, y, d in zip(a, b, directions):
            if (d == "max" and x < y) or (d == "min" and x > y):
                return False
            if x != y:
                better = True
        return better

    return {p for p in points if not any(dom(q, p) for q in points)}


def hamilton(weights, total):
    """Largest-remainder apportionment in exact rational arithmetic (ties to lower index)."""
    w = [Fraction(x).limit_denominator(10**12) for x in weights]
    s = sum(w)
    quotas = [total * x / s for x in w]
    alloc = [math.floor(q) for q in quotas]
    rest = total - sum(alloc)
    order = sorted(range(len(w)), key=lambda i: (-(quotas[i] - alloc[i]), i))
    for i in order[:rest]:
        alloc[i] += 1
    return alloc


def knn_brute(points, i, k):
    """Indices of the k nearest other rows to row i by squared distance (ties by index)."""
    d = [(sum((a - b) ** 2 for a, b in zip(points[i], p)), j) for j, p in enumerate(points) if j != i]
    return [j for _, j in sorted(d)[:k]]


def convex_t(x, a, b):
    """Best single t with x ~ a + t (b - a), plus the max residual it leaves."""
    num = sum((xi - ai) * (bi - ai) for xi, ai, bi in zip(x, a, b))
    den = sum((bi - ai) ** 2 for ai, bi in zip(a, b))
    t = num / den if den > 0 else 0.0
    resid = max(abs(ai + t * (bi - ai) - xi) for xi, ai, bi in zip(x, a, b))
    return t, resid
