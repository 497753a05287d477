"""F-CROMS: selection on the label-augmented dataset, for every hypothesized label.

For each candidate label ``y`` the augmented threshold of model ``lam`` is the
labeled ``(k-1)``-th score, ``S(x, y)`` itself, or the ``k``-th score. The two
outer cases do not depend on ``y`` except through the one extra loss term, so
their ``n`` labeled loss terms are computed once per fit. Only labels landing
strictly between the two order statistics trigger a fresh pass over the
labeled rows.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from ..core import (
    CromsError,
    DimensionError,
    FiniteLabelSet,
    FiniteMatrixLoss,
    FinitePointSet,
    LabeledDataset,
    LabelGrid,
    LossSpec,
    PortfolioLoss,
    ScoreModel,
)
from ..cro import DEFAULT_PGD, PgdConfig, solve_finite_masks, solve_finite_points_rows
from ..quantile import AugmentedQuantile
from .base import (
    Outcome,
    SelectionResult,
    candidate_losses,
    check_models,
    label_losses,
    views,
)


class FullSelector:
    """F-CROMS over a finite list of candidate labels.

    ``candidates`` are label indices (classification) or label vectors
    (regression, one per row). The labeled labels must be candidates.
    """

    def __init__(self, models: Sequence[ScoreModel], loss: LossSpec, alpha: float, candidates,
                 cfg: PgdConfig = DEFAULT_PGD):
        self.models, self.loss, self.alpha, self.cfg = list(models), loss, alpha, cfg
        self.candidates = np.asarray(candidates)
        if len(self.candidates) == 0:
            raise CromsError("empty candidate label list")

    def fit(self, labeled: LabeledDataset) -> "FullSelector":
        check_models(self.models, labeled)
        self.labeled = labeled
        self.lab = views(self.models, labeled.xs, self.loss, self.cfg)
        self.quantiles, self.outer = [], []
        for v in self.lab:
            aq = AugmentedQuantile(v.scores(labeled.ys), self.alpha)
            self.quantiles.append(aq)
            cached = {}
            for side, q in ((-1, aq.lower), (1, aq.upper)):
                if math.isfinite(q):
                    dec, _, _ = v.decide(q)
                    cached[side] = (q, dec, label_losses(self.loss, labeled.ys, dec).tolist())
            self.outer.append(cached)
        return self

    def _risk(self, labeled_terms: list, extra: float) -> float:
        return math.fsum(labeled_terms + [extra]) / (len(labeled_terms) + 1)

    def losses(self, xs):
        """Augmented risks ``L(lam; y)`` at each test point, shape ``(m, |Lambda|, G)``.

        Also returns the candidate scores ``(|Lambda|, m, G)``.
        """
        test = views(self.models, xs, self.loss, self.cfg)
        m, L, G = len(test[0]), len(self.models), len(self.candidates)
        n = len(self.labeled)
        S = np.stack([v.candidate_scores(self.candidates) for v in test])
        R = np.empty((m, L, G))
        for k, (v, aq, cached) in enumerate(zip(test, self.quantiles, self.outer)):
            case = aq.case(S[k])
            for side, (q, _, terms) in cached.items():
                hit = case == side
                if not hit.any():
                    continue
                dec, _, _ = v.decide(q)
                extra = candidate_losses(self.loss, self.candidates, dec)
                for t, g in zip(*np.nonzero(hit)):
                    R[t, k, g] = self._risk(terms, float(extra[t, g]))
            jobs = np.argwhere(case == 0)
            if len(jobs):
                R[jobs[:, 0], k, jobs[:, 1]] = self._interior(k, v, S[k], jobs, n)
        return R, S

    def _interior(self, k, test_view, scores, jobs, n) -> np.ndarray:
        """Recompute the augmented risk at thresholds strictly inside the bracket."""
        lab = self.lab[k]
        qs = scores[jobs[:, 0], jobs[:, 1]]
        rows = np.tile(np.arange(n), len(jobs))
        q_rows = np.repeat(qs, n)
        z0 = None
        if not lab.is_classification and -1 in self.outer[k]:
            z0 = np.tile(self.outer[k][-1][1], (len(jobs), 1))
        dec, _, _ = lab.decide(q_rows, rows, z0=z0)
        ys = self.labeled.ys[rows]
        lab_terms = label_losses(self.loss, ys, dec).reshape(len(jobs), n)
        tdec, _, _ = test_view.decide(qs, jobs[:, 0])
        cands = self.candidates[jobs[:, 1]]
        if isinstance(self.loss, FiniteMatrixLoss):
            extra = self.loss.matrix[cands.astype(np.int64), tdec]
        else:
            extra = -np.einsum("jp,jp->j", np.asarray(cands, dtype=float), tdec)
        return np.array([self._risk(row.tolist(), float(e)) for row, e in zip(lab_terms, extra)])

    def accept(self, xs):
        """Per-label selections ``(m, G)`` and the acceptance mask ``(m, G)``."""
        R, S = self.losses(xs)
        lam = np.argmin(R, axis=1)
        m, G = lam.shape
        chosen = S[lam, np.arange(m)[:, None], np.arange(G)[None, :]]
        accept = np.zeros((m, G), dtype=bool)
        for k, aq in enumerate(self.quantiles):
            sel = lam == k
            accept[sel] = chosen[sel] <= aq(chosen[sel])
        return lam, accept


class FCroms:
    """F-CROMS for classification with a loss matrix."""

    name = "f-croms"

    def __init__(self, models, loss: FiniteMatrixLoss, alpha: float, label_space=None,
                 cfg: PgdConfig = DEFAULT_PGD):
        if not isinstance(loss, FiniteMatrixLoss):
            raise CromsError("F-CROMS classification needs a loss matrix")
        labels = range(loss.n_labels) if label_space is None else label_space
        self.label_space = np.array(sorted({int(y) for y in labels}), dtype=np.int64)
        if self.label_space.min() < 0 or self.label_space.max() >= loss.n_labels:
            raise DimensionError("label space outside the loss matrix rows")
        self.engine = FullSelector(models, loss, alpha, self.label_space, cfg)
        self.loss = loss

    def fit(self, labeled: LabeledDataset) -> "FCroms":
        if labeled.kind != "classification":
            raise CromsError("F-CROMS classification needs a classification dataset")
        self.engine.fit(labeled)
        return self

    def predict(self, xs) -> Outcome:
        lam, accept = self.engine.accept(xs)
        m = len(lam)
        masks = np.zeros((m, self.loss.n_labels), dtype=bool)
        masks[:, self.label_space] = accept
        dec, worst, empty = solve_finite_masks(self.loss.matrix, masks)
        sets = [FiniteLabelSet(tuple(np.flatnonzero(row))) for row in masks]
        by_label = [dict(zip(self.label_space.tolist(), row.tolist())) for row in lam]
        return Outcome(self.name, np.full(m, -1), dec, worst, empty, sets,
                       aux={"lambda_by_label": by_label})


class FCromsRegression:
    """F-CROMS for real-vector labels, run on a label grid.

    Labels are snapped to their nearest grid point and the final set is the
    accepted grid points. The decision is robust over the union of their
    snapping cells, so a covered label never loses more than the reported
    worst case.
    """

    name = "f-croms"

    def __init__(self, models, loss: PortfolioLoss, alpha: float, grid: LabelGrid | None = None,
                 cfg: PgdConfig = DEFAULT_PGD, **grid_options):
        if not isinstance(loss, PortfolioLoss):
            raise CromsError("F-CROMS regression needs the portfolio loss")
        self.models, self.loss, self.alpha, self.cfg = list(models), loss, alpha, cfg
        self.grid, self.grid_options = grid, grid_options

    def fit(self, labeled: LabeledDataset) -> "FCromsRegression":
        if labeled.kind != "regression":
            raise CromsError("F-CROMS regression needs a regression dataset")
        grid = self.grid or LabelGrid.around(labeled.ys, **self.grid_options)
        if grid.p != labeled.p:
            raise DimensionError(f"grid has dimension {grid.p}, labels have {labeled.p}")
        if not grid.covers(labeled.ys):
            raise CromsError("label grid does not cover the labeled labels")
        self.fitted_grid = grid
        snapped = labeled.with_labels(grid.snap(labeled.ys))
        self.engine = FullSelector(self.models, self.loss, self.alpha, grid.points, self.cfg).fit(snapped)
        return self

    def predict(self, xs) -> Outcome:
        grid = self.fitted_grid
        lam, accept = self.engine.accept(xs)
        m = len(lam)
        empty = ~accept.any(axis=1)
        # an empty set falls back to the whole grid
        everything = np.arange(len(grid.points))
        point_sets = [grid.cell_vertices(np.flatnonzero(row) if row.any() else everything) for row in accept]
        dec, worst = solve_finite_points_rows(point_sets, self.cfg)
        sets = [FinitePointSet(grid.points[row], grid, tuple(np.flatnonzero(row))) for row in accept]
        by_label = [row for row in lam]
        return Outcome(self.name, np.full(m, -1), dec, worst, empty, sets,
                       aux={"lambda_by_label": by_label})


def f_croms_classification(models, labeled, x_test, label_space, loss, alpha,
                           cfg: PgdConfig = DEFAULT_PGD) -> SelectionResult:
    return FCroms(models, loss, alpha, label_space, cfg).fit(labeled).predict(x_test).result(0)


def f_croms_regression(models, labeled, x_test, grid_cfg, loss, alpha,
                       cfg: PgdConfig = DEFAULT_PGD) -> SelectionResult:
    """``grid_cfg`` is a :class:`LabelGrid`, a dict of ``LabelGrid.around`` options, or None."""
    if isinstance(grid_cfg, LabelGrid):
        sel = FCromsRegression(models, loss, alpha, grid_cfg, cfg)
    else:
        sel = FCromsRegression(models, loss, alpha, None, cfg, **(grid_cfg or {}))
    return sel.fit(labeled).predict(x_test).result(0)
