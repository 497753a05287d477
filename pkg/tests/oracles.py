"""Slow, obviously-correct reference implementations used as test oracles.

Nothing here imports the package internals beyond plain data containers;
quantile ranks are computed with exact rational arithmetic.
"""

from __future__ import annotations

import math
from fractions import Fraction
from itertools import combinations

import numpy as np


def exact_rank(level: Fraction, n: int) -> int:
    """ceil(level * n), at least 1."""
    return max(1, math.ceil(level * n))


def sorted_quantile(values, level: Fraction) -> float:
    v = sorted(float(x) for x in values)
    k = exact_rank(level, len(v))
    return math.inf if k > len(v) else v[k - 1]


def conformal_threshold(scores, alpha: Fraction) -> float:
    """ceil((1 - alpha)(n + 1))-th smallest of n scores."""
    v = sorted(float(x) for x in scores)
    k = math.ceil((1 - alpha) * (len(v) + 1))
    return math.inf if k > len(v) else v[k - 1]


def augmented_quantile(scores, s, alpha: Fraction) -> float:
    """Quantile of the n + 1 values, the test score included."""
    return sorted_quantile(list(scores) + [s], 1 - alpha)


def weighted_quantile_int(values, counts, total: int, level: Fraction) -> float:
    """Weighted quantile with weights ``counts / total`` in exact arithmetic."""
    pairs = sorted(zip((float(v) for v in values), counts))
    acc = 0
    for v, c in pairs:
        acc += c
        if Fraction(acc, total) >= level:
            return v
    return math.inf if level > 1 else pairs[-1][0]


def robust_finite(M, labels):
    """Enumerate every decision; ties go to the lowest index. Empty means all labels."""
    M = np.asarray(M, dtype=float)
    labels = list(labels) or list(range(M.shape[0]))
    best_z, best = None, math.inf
    for z in range(M.shape[1]):
        w = max(M[y, z] for y in labels)
        if w < best:
            best_z, best = z, w
    return best_z, best


def all_label_subsets(K: int):
    for r in range(1, K + 1):
        yield from combinations(range(K), r)


def simplex_grid_min(objective, points: int = 40_000) -> float:
    """Minimum of ``objective(z)`` over an even grid on the 2-simplex edge."""
    t = np.linspace(0.0, 1.0, points)
    Z = np.column_stack([t, 1.0 - t])
    return float(np.min(objective(Z)))


def naive_f_croms(tables_lab, ys, tables_test, M, alpha: Fraction, label_space):
    """F-CROMS recomputed from scratch for one test point.

    ``tables_lab[k]`` is the ``(n, K)`` label-score table of model ``k`` on
    the labeled rows and ``tables_test[k]`` its length-``K`` row at the test
    point. Every hypothesized label rebuilds the augmented dataset, every
    model's quantile, every auxiliary decision and every risk.
    """
    M = np.asarray(M, dtype=float)
    n = len(ys)
    accepted, chosen = [], {}
    for y in label_space:
        risks, quantiles = [], []
        for lab, test in zip(tables_lab, tables_test):
            aug_tables = [list(row) for row in lab] + [list(test)]
            aug_labels = list(ys) + [y]
            scores = [aug_tables[i][aug_labels[i]] for i in range(n + 1)]
            q = sorted_quantile(scores, 1 - alpha)
            terms = []
            for i in range(n + 1):
                members = [c for c in range(M.shape[0]) if aug_tables[i][c] <= q]
                z, _ = robust_finite(M, members)
                terms.append(M[aug_labels[i], z])
            risks.append(math.fsum(terms) / (n + 1))
            quantiles.append(q)
        lam = min(range(len(risks)), key=lambda k: (risks[k], k))
        chosen[y] = lam
        if tables_test[lam][y] <= quantiles[lam]:
            accepted.append(y)
    z, worst = robust_finite(M, accepted)
    return tuple(accepted), z, worst, chosen
