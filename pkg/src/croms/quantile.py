"""Order-statistic quantiles behind every conformal threshold.

All quantiles here are lower order statistics of a point-mass distribution:
no interpolation. ``Q_level`` of ``n`` values is the ``ceil(level * n)``-th
smallest value, ``+inf`` once that rank exceeds ``n``.

Levels such as ``(1 - alpha)(1 + 1/n)`` are products of floats whose exact
value is often an integer multiple of ``1/n``; :func:`rank` absorbs the last
few ulps of rounding so that, e.g., ``0.9 * (1 + 1/9) * 9`` is rank 9 and
not 10.
"""

from __future__ import annotations

import math

import numpy as np

from .core import CromsError, EmptyInputError

# Relative slack on levels; far below any meaningful difference in level.
LEVEL_RTOL = 1e-12


def _values(values) -> np.ndarray:
    v = np.asarray(values, dtype=float).reshape(-1)
    if v.size == 0:
        raise EmptyInputError("quantile of an empty list")
    if np.isnan(v).any():
        raise CromsError("quantile input contains NaN")
    return v


def rank(level: float, n: int) -> int:
    """1-based order-statistic rank for ``level`` over ``n`` values, clamped to >= 1.

    A return value of ``n + 1`` or more means the quantile is ``+inf``.
    """
    t = float(level) * n
    k = math.ceil(t * (1.0 - LEVEL_RTOL)) if t > 0 else 0
    return max(k, 1)


def empirical_quantile(values, level: float) -> float:
    """``level``-quantile of the empirical distribution of ``values``.

    >>> empirical_quantile(range(1, 11), 0.9)
    9.0
    >>> empirical_quantile([5.0], 1.2)
    inf
    """
    v = _values(values)
    k = rank(level, len(v))
    if k > len(v):
        return math.inf
    return float(np.partition(v, k - 1)[k - 1])


def inflated_conformal_threshold(scores, alpha: float) -> float:
    """Split-conformal threshold ``Q_{(1-alpha)(1+1/n)}`` of the labeled scores."""
    _check_alpha(alpha)
    v = _values(scores)
    n = len(v)
    return empirical_quantile(v, (1.0 - alpha) * (1.0 + 1.0 / n))


def weighted_quantile(values, weights, level: float) -> float:
    """Smallest value whose cumulative weight reaches ``level``.

    Duplicate values pool their weight. Returns ``+inf`` when ``level`` exceeds
    the total mass of one.
    """
    v = _values(values)
    w = np.asarray(weights, dtype=float).reshape(-1)
    if len(w) != len(v):
        raise CromsError(f"{len(v)} values but {len(w)} weights")
    if np.isnan(w).any() or (w < 0).any():
        raise CromsError("weights must be nonnegative")
    if abs(w.sum() - 1.0) > 1e-12 * max(1, len(w)):
        raise CromsError(f"weights sum to {w.sum()!r}, not 1")
    target = float(level) * (1.0 - LEVEL_RTOL)
    if target > 1.0:
        return math.inf
    # (value, weight) order makes the running sum a function of the multiset only
    order = np.lexsort((w, v))
    cum = np.cumsum(w[order])
    hit = np.flatnonzero(cum >= target)
    if hit.size == 0:
        return float(v[order[-1]])
    return float(v[order[hit[0]]])


def weighted_quantile_rows(values, weight_rows, level: float) -> np.ndarray:
    """:func:`weighted_quantile` of one value list under many weight vectors.

    ``weight_rows`` has shape ``(r, n)``; each row is normalized already.
    """
    v = _values(values)
    W = np.asarray(weight_rows, dtype=float)
    if W.ndim != 2 or W.shape[1] != len(v):
        raise CromsError(f"weight rows must have shape (r, {len(v)})")
    target = float(level) * (1.0 - LEVEL_RTOL)
    if target > 1.0:
        return np.full(len(W), math.inf)
    V = np.broadcast_to(v, W.shape)
    order = np.lexsort((W, V), axis=-1)
    cum = np.cumsum(np.take_along_axis(W, order, axis=1), axis=1)
    reached = cum >= target
    first = np.where(reached.any(axis=1), reached.argmax(axis=1), len(v) - 1)
    return v[order[np.arange(len(W)), first]]


def augmented_ranks(alpha: float, n: int) -> tuple[int, int]:
    """Ranks ``(k - 1, k)`` bracketing the ``(n+1)``-point conformal quantile.

    ``k = ceil((1 - alpha)(n + 1))`` computed as the rank of level
    ``(1-alpha)(1+1/n)`` over ``n`` values. The lower rank may be 0.
    """
    _check_alpha(alpha)
    k = rank((1.0 - alpha) * (1.0 + 1.0 / n), n)
    return k - 1, k


def _order_stat(sorted_v: np.ndarray, k: int) -> float:
    if k < 1:
        return -math.inf
    if k > len(sorted_v):
        return math.inf
    return float(sorted_v[k - 1])


def augmented_threshold_bounds(scores, alpha: float) -> tuple[float, float]:
    """``(q_minus, q_plus)`` at levels ``(1-a)(1+1/n) - 1/n`` and ``(1-a)(1+1/n)``.

    Both levels follow :func:`empirical_quantile`, so a rank below one is
    clamped to the smallest score.
    """
    _check_alpha(alpha)
    v = _values(scores)
    n = len(v)
    lvl = (1.0 - alpha) * (1.0 + 1.0 / n)
    return empirical_quantile(v, lvl - 1.0 / n), empirical_quantile(v, lvl)


class AugmentedQuantile:
    """Cached bounds for ``Q_{1-alpha}(scores + [s])`` as ``s`` varies.

    With ``k`` the augmented rank, the answer is the ``(k-1)``-th score when
    ``s`` is at or below it, the ``k``-th score when ``s`` is at or above it,
    and ``s`` itself in between. A lower rank of zero is ``-inf``.
    """

    def __init__(self, scores, alpha: float):
        v = np.sort(_values(scores))
        lo_rank, hi_rank = augmented_ranks(alpha, len(v))
        self.lower = _order_stat(v, lo_rank)
        self.upper = _order_stat(v, hi_rank)

    def __call__(self, s):
        return np.minimum(np.maximum(s, self.lower), self.upper)

    def case(self, s):
        """-1 at the lower bound, +1 at the upper bound, 0 strictly between."""
        s = np.asarray(s, dtype=float)
        return np.where(s <= self.lower, -1, np.where(s >= self.upper, 1, 0))


def augmented_threshold(scores, test_score: float, alpha: float) -> float:
    """``Q_{1-alpha}`` of the scores with ``test_score`` appended."""
    return float(AugmentedQuantile(scores, alpha)(float(test_score)))


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise CromsError(f"alpha must lie in (0, 1), got {alpha!r}")
