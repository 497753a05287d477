"""Plumbing shared by the selectors: cached model views and batch outcomes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from ..conformal import covers
from ..core import (
    BoxGeometry,
    BoxSet,
    CromsError,
    DimensionError,
    EllipsoidGeometry,
    EllipsoidSet,
    EmptyInputError,
    FiniteLabelSet,
    FiniteMatrixLoss,
    LabeledDataset,
    LossSpec,
    PortfolioLoss,
    RobustSolution,
    ScoreModel,
    as_2d,
)
from ..cro import DEFAULT_PGD, PgdConfig, solve_box_rows, solve_ellipsoid_rows, solve_finite_masks


@dataclass(eq=False)
class SelectionResult:
    """Outcome of one selector at one test point.

    ``lambda_hat`` is a model index, or a ``{label: index}`` map for the full
    (label-augmented) selectors.
    """

    lambda_hat: Any
    set: Any
    solution: RobustSolution
    aux: dict = field(default_factory=dict)


class ModelView:
    """One model evaluated once on a block of covariates.

    Caches the label-score table (classification) or the mean and covariance
    (box / ellipsoid) so that thresholds can be swept without re-running the
    model.
    """

    def __init__(self, model: ScoreModel, xs, spec: LossSpec, cfg: PgdConfig = DEFAULT_PGD):
        self.model, self.spec, self.cfg = model, spec, cfg
        self.xs = as_2d(xs)
        self.table = self.mu = self.cov = self.prec = None
        if model.is_classification:
            if not isinstance(spec, FiniteMatrixLoss):
                raise CromsError("classification models need a loss matrix")
            if spec.n_labels != model.n_labels:
                raise DimensionError(f"loss matrix has {spec.n_labels} labels, model has {model.n_labels}")
            self.table = model.label_scores(self.xs)
            return
        if not isinstance(spec, PortfolioLoss):
            raise CromsError("regression models need the portfolio loss")
        geo = model.geometry
        if not isinstance(geo, (BoxGeometry, EllipsoidGeometry)):
            raise CromsError(f"model {model.id} needs a box or ellipsoid geometry")
        self.mu = np.asarray(geo.mean_fn(self.xs), dtype=float)
        if self.mu.shape != (len(self.xs), spec.p):
            raise DimensionError(f"model {model.id} means have shape {self.mu.shape}")
        if isinstance(geo, EllipsoidGeometry):
            self.cov = np.asarray(geo.cov_fn(self.xs), dtype=float)
            self.prec = np.linalg.inv(self.cov)

    def __len__(self) -> int:
        return len(self.xs)

    _CACHED = ("xs", "table", "mu", "cov", "prec")

    def take(self, rows) -> "ModelView":
        """A view restricted to ``rows``, sharing the cached evaluations."""
        rows = np.asarray(rows, dtype=np.int64).reshape(-1)
        out = object.__new__(ModelView)
        out.model, out.spec, out.cfg = self.model, self.spec, self.cfg
        for name in self._CACHED:
            a = getattr(self, name)
            setattr(out, name, None if a is None else a[rows])
        return out

    def concat(self, other: "ModelView") -> "ModelView":
        out = object.__new__(ModelView)
        out.model, out.spec, out.cfg = self.model, self.spec, self.cfg
        for name in self._CACHED:
            a, b = getattr(self, name), getattr(other, name)
            setattr(out, name, None if a is None else np.concatenate([a, b]))
        return out

    @property
    def is_classification(self) -> bool:
        return self.table is not None

    def _rows(self, rows):
        return np.arange(len(self)) if rows is None else np.asarray(rows, dtype=np.int64).reshape(-1)

    def decide(self, qs, rows=None, z0=None):
        """Robust decisions at ``rows`` under per-row thresholds ``qs``."""
        rows = self._rows(rows)
        qs = np.broadcast_to(np.asarray(qs, dtype=float), (len(rows),))
        if self.table is not None:
            return solve_finite_masks(self.spec.matrix, self.table[rows] <= qs[:, None])
        no_empty = np.zeros(len(rows), dtype=bool)
        if self.cov is None:
            Z, w = solve_box_rows(self.mu[rows], qs)
        else:
            Z, w = solve_ellipsoid_rows(self.mu[rows], self.cov[rows], qs, self.cfg, z0=z0)
        return Z, w, no_empty

    def scores(self, ys, rows=None) -> np.ndarray:
        """``S(x_r, ys[r])`` for each selected row."""
        rows = self._rows(rows)
        if self.table is not None:
            return self.table[rows, np.asarray(ys, dtype=np.int64).reshape(-1)]
        ys = np.asarray(ys, dtype=float).reshape(len(rows), -1)
        r = ys - self.mu[rows]
        if self.cov is None:
            return np.max(np.abs(r), axis=1)
        return np.einsum("ni,nij,nj->n", r, self.prec[rows], r)

    def candidate_scores(self, candidates, rows=None) -> np.ndarray:
        """Scores of every candidate label at every selected row, ``(rows, G)``.

        Candidates are label indices for classification and label vectors
        (one per row of ``candidates``) for regression.
        """
        rows = self._rows(rows)
        if self.table is not None:
            return self.table[np.ix_(rows, np.asarray(candidates, dtype=np.int64))]
        G = np.asarray(candidates, dtype=float)
        r = G[None, :, :] - self.mu[rows][:, None, :]
        if self.cov is None:
            return np.max(np.abs(r), axis=2)
        return np.einsum("ngi,nij,ngj->ng", r, self.prec[rows], r)

    def set_at(self, row: int, q: float):
        if self.table is not None:
            return FiniteLabelSet(tuple(np.flatnonzero(self.table[row] <= q)))
        if self.cov is None:
            return BoxSet(self.mu[row], q)
        return EllipsoidSet(self.mu[row], self.cov[row], q)


def views(models: Sequence[ScoreModel], xs, spec: LossSpec, cfg: PgdConfig = DEFAULT_PGD) -> list[ModelView]:
    return [ModelView(m, xs, spec, cfg) for m in models]


def candidate_losses(spec: LossSpec, candidates, decisions) -> np.ndarray:
    """``phi(c_g, z_r)`` for every decision row ``r`` and candidate ``g``."""
    if isinstance(spec, FiniteMatrixLoss):
        return spec.matrix[np.asarray(candidates, dtype=np.int64)][:, np.asarray(decisions, dtype=np.int64)].T
    return -np.asarray(decisions, dtype=float) @ np.asarray(candidates, dtype=float).T


def label_losses(spec: LossSpec, ys, decisions) -> np.ndarray:
    """Row-wise ``phi(ys[r], z_r)``."""
    if isinstance(spec, FiniteMatrixLoss):
        return spec.matrix[np.asarray(ys, dtype=np.int64), np.asarray(decisions, dtype=np.int64)]
    ys = np.asarray(ys, dtype=float).reshape(len(decisions), -1)
    return -np.einsum("ij,ij->i", ys, np.asarray(decisions, dtype=float))


def exact_mean(terms) -> float:
    """Correctly rounded mean; independent of the order of ``terms``."""
    terms = list(terms)
    return math.fsum(terms) / len(terms)


def first_argmin(values) -> int:
    """Index of the smallest value, lowest index on ties."""
    return int(np.argmin(np.asarray(values, dtype=float)))


def check_models(models: Sequence[ScoreModel], labeled: LabeledDataset) -> None:
    if len(models) == 0:
        raise EmptyInputError("need at least one candidate model")
    for m in models:
        if m.is_classification != (labeled.kind == "classification"):
            raise DimensionError(f"model {m.id} does not match a {labeled.kind} dataset")


@dataclass(eq=False)
class Outcome:
    """Decisions of one selector at a block of test points."""

    method: str
    lambda_hat: np.ndarray
    decisions: np.ndarray
    worst: np.ndarray
    empty: np.ndarray
    sets: list
    thresholds: np.ndarray | None = None
    aux: dict = field(default_factory=dict)  # per-point entries, length m
    info: dict = field(default_factory=dict)  # shared by every point

    def __len__(self) -> int:
        return len(self.worst)

    def covered(self, ys) -> np.ndarray:
        """Whether each true label lies in its point's final set.

        A set that came out empty never covers, even though its decision used
        the full label space.
        """
        ys = np.asarray(ys)
        return np.array([
            (not self.empty[t]) and covers(self.sets[t], ys[t]) for t in range(len(self))
        ], dtype=bool)

    def result(self, t: int) -> SelectionResult:
        dec = self.decisions[t]
        dec = int(dec) if np.ndim(dec) == 0 else np.array(dec)
        aux = dict(self.info)
        aux.update({k: v[t] for k, v in self.aux.items()})
        if self.thresholds is not None:
            aux["threshold"] = float(self.thresholds[t])
        lam = aux.pop("lambda_by_label", None)
        lam_hat = lam if lam is not None else int(self.lambda_hat[t])
        sol = RobustSolution(dec, float(self.worst[t]), bool(self.empty[t]))
        return SelectionResult(lam_hat, self.sets[t], sol, aux)


def threshold_outcome(method: str, test_views: Sequence[ModelView], lam, qs, aux=None, info=None) -> Outcome:
    """Final sets ``{S_lam(x_t, .) <= q_t}`` and their robust decisions."""
    lam = np.asarray(lam, dtype=np.int64)
    qs = np.asarray(qs, dtype=float)
    m = len(lam)
    first = test_views[0]
    if first.is_classification:
        decisions = np.zeros(m, dtype=np.int64)
    else:
        decisions = np.zeros((m, first.spec.p))
    worst = np.zeros(m)
    empty = np.zeros(m, dtype=bool)
    for k in np.unique(lam):
        rows = np.flatnonzero(lam == k)
        d, w, e = test_views[k].decide(qs[rows], rows)
        decisions[rows], worst[rows], empty[rows] = d, w, e
    sets = [test_views[lam[t]].set_at(t, qs[t]) for t in range(m)]
    return Outcome(method, lam, decisions, worst, empty, sets, qs, aux or {}, info or {})
