"""Min-max robust decisions ``argmin_z max_{c in U} phi(c, z)``.

Two loss families are supported: a finite loss matrix over finite label
sets, and the portfolio loss ``-c'z`` over the probability simplex with box,
ellipsoid or finite-point uncertainty sets. Batched ``*_rows`` variants solve
many independent problems at once; every problem in a batch follows exactly
the trajectory it would follow alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    BoxGeometry,
    BoxSet,
    CromsError,
    DimensionError,
    EllipsoidGeometry,
    EllipsoidSet,
    EmptyInputError,
    FiniteLabelSet,
    FiniteMatrixLoss,
    FinitePointSet,
    LossSpec,
    PortfolioLoss,
    RobustSolution,
    ScoreModel,
    as_2d,
)


@dataclass(frozen=True)
class PgdConfig:
    """Projected (sub)gradient descent settings.

    ``step_size`` is the initial step; the smooth solver adapts it by
    backtracking, the subgradient solver decays it as ``step/sqrt(k+1)``.
    """

    max_iters: int = 2000
    step_size: float = 0.05
    tolerance: float = 1e-8
    init: str | tuple = "uniform"

    def __post_init__(self):
        if self.max_iters < 1:
            raise CromsError("max_iters must be at least 1")
        if not self.step_size > 0:
            raise CromsError("step_size must be positive")
        if not self.tolerance >= 0:
            raise CromsError("tolerance must be nonnegative")

    def start(self, p: int) -> np.ndarray:
        if isinstance(self.init, str):
            if self.init != "uniform":
                raise CromsError(f"unknown init {self.init!r}")
            return np.full(p, 1.0 / p)
        z = np.asarray(self.init, dtype=float)
        if z.shape != (p,):
            raise DimensionError(f"warm start has shape {z.shape}, expected ({p},)")
        return project_simplex(z)


DEFAULT_PGD = PgdConfig()


# --- simplex projection ------------------------------------------------------

def project_simplex_rows(V) -> np.ndarray:
    """Euclidean projection of each row onto ``{z >= 0, sum z = 1}``.

    Sort-and-threshold: ``z_i = max(v_i - theta, 0)`` with ``theta`` chosen so
    the result sums to one.
    """
    V = np.asarray(V, dtype=float)
    if V.ndim != 2 or V.shape[1] < 1:
        raise DimensionError("project_simplex_rows expects a (B, p) array with p >= 1")
    p = V.shape[1]
    U = -np.sort(-V, axis=1)
    css = np.cumsum(U, axis=1) - 1.0
    ks = np.arange(1, p + 1)
    cond = U - css / ks > 0
    rho = p - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(len(V)), rho] / (rho + 1)
    return np.maximum(V - theta[:, None], 0.0)


def project_simplex(v) -> np.ndarray:
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size < 1:
        raise DimensionError("cannot project an empty vector")
    return project_simplex_rows(v[None, :])[0]


# --- finite labels, loss matrix ---------------------------------------------

def _matrix(M) -> np.ndarray:
    if isinstance(M, FiniteMatrixLoss):
        return M.matrix
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.size == 0:
        raise DimensionError("loss matrix must be a nonempty 2-D array")
    return M


def solve_finite_masks(M, masks) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Robust decisions for many label sets given as boolean rows.

    Returns ``(decisions, worst_case, was_empty)``. An empty row is solved
    over the full label set and flagged. Ties go to the lowest decision.
    """
    M = _matrix(M)
    masks = np.asarray(masks, dtype=bool)
    if masks.ndim != 2 or masks.shape[1] != M.shape[0]:
        raise DimensionError(f"masks must have shape (B, {M.shape[0]})")
    empty = ~masks.any(axis=1)
    full = np.where(empty[:, None], True, masks)
    worst_by_decision = np.where(full[:, :, None], M[None, :, :], -np.inf).max(axis=1)
    dec = np.argmin(worst_by_decision, axis=1)
    worst = worst_by_decision[np.arange(len(masks)), dec]
    return dec, worst, empty


def solve_finite(M, labels) -> RobustSolution:
    """Best decision against the worst label in ``labels``.

    >>> solve_finite([[0, 1], [5, 2]], [0, 1]).decision
    1
    """
    M = _matrix(M)
    if isinstance(labels, FiniteLabelSet):
        labels = labels.labels
    labels = [int(y) for y in labels]
    if any(not 0 <= y < M.shape[0] for y in labels):
        raise DimensionError(f"label outside 0..{M.shape[0] - 1}")
    mask = np.zeros((1, M.shape[0]), dtype=bool)
    mask[0, labels] = True
    dec, worst, empty = solve_finite_masks(M, mask)
    return RobustSolution(int(dec[0]), float(worst[0]), bool(empty[0]))


# --- portfolio loss, box sets ------------------------------------------------

def solve_box_rows(mus, qs) -> tuple[np.ndarray, np.ndarray]:
    """Box sets of half-width ``q`` around ``mu``: the best vertex is ``argmax mu``.

    The adversary lowers every coordinate by ``q``, so the worst case at
    ``z`` is ``-(mu - q)'z``. An infinite ``q`` yields the uniform decision.
    """
    mus = np.asarray(mus, dtype=float)
    qs = np.asarray(qs, dtype=float).reshape(-1)
    if mus.ndim != 2 or mus.shape[1] < 1:
        raise EmptyInputError("box solver needs nonempty mean vectors")
    if np.any(qs < 0):
        raise CromsError("box half width must be nonnegative")
    B, p = mus.shape
    best = np.argmax(mus, axis=1)
    Z = np.zeros((B, p))
    Z[np.arange(B), best] = 1.0
    worst = -(mus[np.arange(B), best] - qs)
    inf = np.isinf(qs)
    Z[inf] = 1.0 / p
    worst[inf] = math.inf
    return Z, worst


def solve_box_portfolio(mu, q: float) -> RobustSolution:
    mu = np.asarray(mu, dtype=float).reshape(-1)
    if mu.size == 0:
        raise EmptyInputError("empty mean vector")
    Z, worst = solve_box_rows(mu[None, :], [q])
    return RobustSolution(Z[0], float(worst[0]))


# --- portfolio loss, ellipsoid sets --------------------------------------------

def _check_spd(covs: np.ndarray) -> None:
    if not np.allclose(covs, np.swapaxes(covs, 1, 2), rtol=1e-10, atol=1e-12):
        raise CromsError("covariance matrix is not symmetric")
    try:
        np.linalg.cholesky(covs)
    except np.linalg.LinAlgError:
        raise CromsError("covariance matrix is not positive definite") from None


def ellipsoid_objective(Z, mus, covs, qs) -> np.ndarray:
    """``-mu'z + sqrt(q) * sqrt(z' Sigma z)`` row-wise."""
    Sz = np.einsum("bij,bj->bi", covs, Z)
    return -np.einsum("bi,bi->b", mus, Z) + np.sqrt(qs) * np.sqrt(np.einsum("bi,bi->b", Z, Sz))


def solve_ellipsoid_rows(mus, covs, qs, cfg: PgdConfig = DEFAULT_PGD, z0=None):
    """Projected gradient descent with backtracking, one problem per row.

    The worst case of ``-c'z`` over ``(c-mu)' Sigma^-1 (c-mu) <= q`` is
    ``-mu'z + sqrt(q) ||z||_Sigma``; that convex function is minimized over
    the simplex. ``q = 0`` degenerates to the best vertex and ``q = inf``
    to the uniform decision with infinite loss.
    """
    mus = np.asarray(mus, dtype=float)
    covs = np.asarray(covs, dtype=float)
    qs = np.asarray(qs, dtype=float).reshape(-1)
    B, p = mus.shape
    if covs.shape != (B, p, p) or len(qs) != B:
        raise DimensionError("ellipsoid batch shapes disagree")
    if np.any(qs < 0):
        raise CromsError("ellipsoid radius must be nonnegative")
    _check_spd(covs)

    Z = np.empty((B, p))
    obj = np.empty(B)
    inf = np.isinf(qs)
    zero = qs == 0
    Z[inf], obj[inf] = 1.0 / p, math.inf
    if zero.any():
        Zv, w = solve_box_rows(mus[zero], np.zeros(zero.sum()))
        Z[zero], obj[zero] = Zv, w
    todo = np.flatnonzero(~inf & ~zero)
    if todo.size == 0:
        return Z, obj

    m, S, s = mus[todo], covs[todo], np.sqrt(qs[todo])
    if z0 is None:
        z = np.broadcast_to(cfg.start(p), (len(todo), p)).copy()
    else:
        z = project_simplex_rows(np.asarray(z0, dtype=float).reshape(B, p)[todo])

    def f_and_grad(zz, idx):
        Sz = np.einsum("bij,bj->bi", S[idx], zz)
        nrm = np.sqrt(np.einsum("bi,bi->b", zz, Sz))
        f = -np.einsum("bi,bi->b", m[idx], zz) + s[idx] * nrm
        g = -m[idx] + (s[idx] / nrm)[:, None] * Sz
        return f, g

    f, g = f_and_grad(z, slice(None))
    t = np.full(len(todo), cfg.step_size)
    active = np.arange(len(todo))
    for _ in range(cfg.max_iters):
        if active.size == 0:
            break
        za, fa, ga, ta = z[active], f[active], g[active], t[active]
        zn = project_simplex_rows(za - ta[:, None] * ga)
        fn, gn = f_and_grad(zn, active)
        step = zn - za
        bound = fa + np.einsum("bi,bi->b", ga, step) + np.einsum("bi,bi->b", step, step) / (2 * ta)
        ok = fn <= bound + 1e-15 * np.abs(fa)
        acc = active[ok]
        z[acc], f[acc], g[acc] = zn[ok], fn[ok], gn[ok]
        t[acc] *= 1.25
        rej = active[~ok]
        t[rej] *= 0.5
        done = np.zeros(active.size, dtype=bool)
        moved = np.max(np.abs(step), axis=1)
        done[ok] = (fa[ok] - fn[ok] <= cfg.tolerance) | (moved[ok] <= 1e-15)
        done[~ok] = t[rej] < 1e-14
        active = active[~done]
    Z[todo], obj[todo] = z, f
    return Z, obj


def solve_ellipsoid_portfolio(mu, Sigma, q: float, cfg: PgdConfig = DEFAULT_PGD) -> RobustSolution:
    mu = np.asarray(mu, dtype=float).reshape(-1)
    Sigma = np.asarray(Sigma, dtype=float)
    Z, obj = solve_ellipsoid_rows(mu[None, :], Sigma[None, :, :], [q], cfg)
    return RobustSolution(Z[0], float(obj[0]))


# --- portfolio loss, finite point sets ----------------------------------------

def pareto_minimal(points) -> np.ndarray:
    """Drop points that are coordinatewise >= another point.

    For ``z >= 0`` a dominated point never attains ``max_c -c'z`` strictly,
    so the robust problem is unchanged.
    """
    P = np.unique(np.asarray(points, dtype=float), axis=0)
    le = np.all(P[:, None, :] <= P[None, :, :], axis=2)
    np.fill_diagonal(le, False)
    dominated = le.any(axis=0)
    return P[~dominated]


def solve_finite_points_rows(point_sets, cfg: PgdConfig = DEFAULT_PGD) -> tuple[np.ndarray, np.ndarray]:
    """Minimize ``max_{c in points} -c'z`` over the simplex, one problem per set.

    Projected subgradient descent using the active point's gradient, with
    normalized steps ``step/sqrt(k+1)``; the best iterate is returned. The
    subgradient is taken modulo the all-ones direction, along which the
    objective is constant on the simplex. A problem stops once its best
    value has not improved by ``tolerance`` for 200 iterations.
    """
    sets = [pareto_minimal(P) for P in point_sets]
    if not sets:
        return np.zeros((0, 0)), np.zeros(0)
    p = sets[0].shape[1]
    if any(C.shape[1] != p for C in sets):
        raise DimensionError("point sets disagree in dimension")
    B, width = len(sets), max(len(C) for C in sets)
    # pad with copies of the first point; duplicates leave the max unchanged
    C = np.stack([np.vstack([c, np.repeat(c[:1], width - len(c), axis=0)]) for c in sets])

    def h(zz, idx):
        vals = -np.einsum("bmp,bp->bm", C[idx], zz)
        j = np.argmax(vals, axis=1)
        return vals[np.arange(len(idx)), j], j

    z = np.broadcast_to(cfg.start(p), (B, p)).copy()
    everyone = np.arange(B)
    f, j = h(z, everyone)
    best_z, best_f = z.copy(), f.copy()
    last_gain = np.zeros(B, dtype=np.int64)
    active = everyone
    window = 200
    for k in range(cfg.max_iters):
        if active.size == 0:
            break
        c = C[active, j[active]]
        g = -c + c.mean(axis=1, keepdims=True)
        gn = np.linalg.norm(g, axis=1)
        flat = gn == 0
        gn[flat] = 1.0
        zn = project_simplex_rows(z[active] - (cfg.step_size / math.sqrt(k + 1)) * g / gn[:, None])
        fn, jn = h(zn, active)
        z[active], j[active] = zn, jn
        gain = fn < best_f[active] - cfg.tolerance
        last_gain[active[gain]] = k
        better = fn < best_f[active]
        best_z[active[better]], best_f[active[better]] = zn[better], fn[better]
        stale = k - last_gain[active] > window
        active = active[~(flat | stale)]
    return best_z, best_f


def solve_finite_points(spec: LossSpec | None, points, cfg: PgdConfig = DEFAULT_PGD) -> RobustSolution:
    """Robust portfolio over a finite set of label vectors.

    >>> solve_finite_points(None, [[1.0, 0.0]]).worst_case_loss
    -1.0
    """
    P = np.asarray(points, dtype=float)
    if P.size == 0:
        raise EmptyInputError("finite point set is empty")
    if P.ndim == 1:
        P = P[None, :]
    if spec is not None and not isinstance(spec, PortfolioLoss):
        raise CromsError("finite point sets need the portfolio loss")
    if spec is not None and P.shape[1] != spec.p:
        raise DimensionError(f"points have dimension {P.shape[1]}, loss expects {spec.p}")
    Z, f = solve_finite_points_rows([P], cfg)
    return RobustSolution(Z[0], float(f[0]))


# --- dispatch ----------------------------------------------------------------

def solve_set(descriptor, spec: LossSpec, cfg: PgdConfig = DEFAULT_PGD) -> RobustSolution:
    """Solve the robust problem for any prediction-set descriptor."""
    if isinstance(descriptor, FiniteLabelSet):
        if not isinstance(spec, FiniteMatrixLoss):
            raise CromsError("finite label sets need a loss matrix")
        return solve_finite(spec, descriptor)
    if not isinstance(spec, PortfolioLoss):
        raise CromsError(f"{type(descriptor).__name__} needs the portfolio loss")
    if isinstance(descriptor, BoxSet):
        return solve_box_portfolio(descriptor.center, descriptor.half_width)
    if isinstance(descriptor, EllipsoidSet):
        return solve_ellipsoid_portfolio(descriptor.center, descriptor.cov, descriptor.radius, cfg)
    if isinstance(descriptor, FinitePointSet):
        return solve_finite_points(spec, descriptor.points, cfg)
    raise CromsError(f"no robust solver for {type(descriptor).__name__}")


def decide_rows(model: ScoreModel, spec: LossSpec, xs, thresholds, cfg: PgdConfig = DEFAULT_PGD, z0=None):
    """Robust decisions at each row of ``xs`` under ``{c : S(x, c) <= q_row}``.

    Returns ``(decisions, worst_case, was_empty)``. This is the workhorse of
    the auxiliary decisions ``z_lambda(X_i; q)`` used by every selector.
    """
    xs = as_2d(xs)
    qs = np.broadcast_to(np.asarray(thresholds, dtype=float), (len(xs),))
    if model.is_classification:
        if not isinstance(spec, FiniteMatrixLoss):
            raise CromsError("classification models need a loss matrix")
        masks = model.label_scores(xs) <= qs[:, None]
        return solve_finite_masks(spec.matrix, masks)
    if not isinstance(spec, PortfolioLoss):
        raise CromsError("regression models need the portfolio loss")
    geo = model.geometry
    mus = np.asarray(geo.mean_fn(xs), dtype=float) if geo is not None else None
    no_empty = np.zeros(len(xs), dtype=bool)
    if isinstance(geo, BoxGeometry):
        Z, w = solve_box_rows(mus, qs)
        return Z, w, no_empty
    if isinstance(geo, EllipsoidGeometry):
        covs = np.asarray(geo.cov_fn(xs), dtype=float)
        Z, w = solve_ellipsoid_rows(mus, covs, qs, cfg, z0=z0)
        return Z, w, no_empty
    raise CromsError(f"model {model.id} has no geometry for a closed-form robust solve")
