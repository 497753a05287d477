"""Individualized selectors: CROiMS, Naive-LCP and the swapped F-CROiMS."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from ..core import CromsError, FiniteLabelSet, FiniteMatrixLoss, LabeledDataset, LossSpec, ScoreModel, as_2d
from ..cro import DEFAULT_PGD, PgdConfig, solve_finite_masks
from ..kernel import KernelConfig, kernel_weight_rows
from ..quantile import inflated_conformal_threshold, weighted_quantile_rows
from .base import (
    ModelView,
    Outcome,
    SelectionResult,
    check_models,
    label_losses,
    threshold_outcome,
    views,
)


def weighted_risks(W, table) -> np.ndarray:
    """``sum_i W[t, i] * table[lam, i]`` as ``(m, |Lambda|)``, summed exactly."""
    W = np.asarray(W, dtype=float)
    out = np.empty((len(W), len(table)))
    for k, row in enumerate(table):
        P = W * row[None, :]
        out[:, k] = [math.fsum(p) for p in P]
    return out


class _LocalFit:
    """LCP thresholds and auxiliary losses on one labeled set, from cached views."""

    def __init__(self, lab: Sequence[ModelView], ys, kernel: KernelConfig, alpha: float):
        self.lab, self.ys, self.kernel, self.alpha = list(lab), ys, kernel, alpha
        self.xs = lab[0].xs
        self.scores = [v.scores(ys) for v in lab]
        W, _ = kernel_weight_rows(kernel, self.xs, self.xs)
        self.q_lab = np.array([weighted_quantile_rows(s, W, 1.0 - alpha) for s in self.scores])
        self.risk_table = np.vstack([
            label_losses(v.spec, ys, v.decide(q)[0]) for v, q in zip(lab, self.q_lab)
        ])

    def weights(self, xs):
        return kernel_weight_rows(self.kernel, self.xs, xs)

    def select(self, W) -> np.ndarray:
        return np.argmin(weighted_risks(W, self.risk_table), axis=1)

    def thresholds(self, W) -> np.ndarray:
        """LCP thresholds of every model at the weight rows, ``(|Lambda|, m)``."""
        return np.array([weighted_quantile_rows(s, W, 1.0 - self.alpha) for s in self.scores])


class Croims:
    """Kernel-weighted decision risk selects a model per test point; its LCP set decides."""

    name = "croims"

    def __init__(self, models: Sequence[ScoreModel], loss: LossSpec, alpha: float, kernel: KernelConfig,
                 cfg: PgdConfig = DEFAULT_PGD):
        self.models, self.loss, self.alpha, self.kernel, self.cfg = list(models), loss, alpha, kernel, cfg

    def fit(self, labeled: LabeledDataset) -> "Croims":
        check_models(self.models, labeled)
        self.fitted = _LocalFit(views(self.models, labeled.xs, self.loss, self.cfg), labeled.ys, self.kernel, self.alpha)
        return self

    def predict(self, xs) -> Outcome:
        test = views(self.models, xs, self.loss, self.cfg)
        W, fallback = self.fitted.weights(test[0].xs)
        lam = self.fitted.select(W)
        Q = self.fitted.thresholds(W)
        qs = Q[lam, np.arange(len(lam))]
        return threshold_outcome(self.name, test, lam, qs, aux={"uniform_fallback": fallback})


class NaiveLCP:
    """LCP set of a model drawn uniformly at random per test point."""

    name = "naive-lcp"

    def __init__(self, models, loss: LossSpec, alpha: float, kernel: KernelConfig, rng: np.random.Generator,
                 cfg: PgdConfig = DEFAULT_PGD):
        self.models, self.loss, self.alpha, self.kernel, self.rng, self.cfg = list(models), loss, alpha, kernel, rng, cfg

    def fit(self, labeled: LabeledDataset) -> "NaiveLCP":
        check_models(self.models, labeled)
        self.lab = views(self.models, labeled.xs, self.loss, self.cfg)
        self.scores = [v.scores(labeled.ys) for v in self.lab]
        self.xs = labeled.xs
        return self

    def predict(self, xs) -> Outcome:
        test = views(self.models, xs, self.loss, self.cfg)
        W, fallback = kernel_weight_rows(self.kernel, self.xs, test[0].xs)
        lam = self.rng.integers(len(self.models), size=len(W))
        Q = np.array([weighted_quantile_rows(s, W, 1.0 - self.alpha) for s in self.scores])
        qs = Q[lam, np.arange(len(lam))]
        return threshold_outcome(self.name, test, lam, qs, aux={"uniform_fallback": fallback})


class FCroims:
    """CROiMS with a swapped full-conformal calibration of the selected model.

    For each hypothesized label ``y`` and labeled row ``j``, CROiMS is re-run
    on the labeled set with row ``j`` replaced by ``(x, y)`` and evaluated at
    ``X_j``; the scores of those selections calibrate the final set.
    """

    name = "f-croims"

    def __init__(self, models, loss: FiniteMatrixLoss, alpha: float, kernel: KernelConfig, label_space=None,
                 budget: float = 1e5, cfg: PgdConfig = DEFAULT_PGD):
        if not isinstance(loss, FiniteMatrixLoss):
            raise CromsError("F-CROiMS needs a loss matrix")
        self.models, self.loss, self.alpha, self.kernel, self.cfg = list(models), loss, alpha, kernel, cfg
        labels = range(loss.n_labels) if label_space is None else label_space
        self.label_space = sorted({int(y) for y in labels})
        self.budget = budget

    def fit(self, labeled: LabeledDataset) -> "FCroims":
        check_models(self.models, labeled)
        if labeled.kind != "classification":
            raise CromsError("F-CROiMS needs a classification dataset")
        cost = len(self.label_space) * len(labeled) * len(self.models)
        if cost > self.budget:
            raise CromsError(
                f"F-CROiMS cost |Y|*n*|Lambda| = {cost} exceeds the budget {self.budget:g}; "
                "reduce n or raise the budget"
            )
        self.labeled = labeled
        self.lab = views(self.models, labeled.xs, self.loss, self.cfg)
        self.base = _LocalFit(self.lab, labeled.ys, self.kernel, self.alpha)
        return self

    def swapped_selections(self, test: Sequence[ModelView], t: int, y: int) -> np.ndarray:
        """``lambda^y(X_j)`` for every labeled row ``j``."""
        n = len(self.labeled)
        out = np.empty(n, dtype=np.int64)
        everyone = np.arange(n)
        for j in range(n):
            others = everyone[everyone != j]
            sv = [v.take(others).concat(tv.take([t])) for v, tv in zip(self.lab, test)]
            ys = np.append(self.labeled.ys[others], y)
            fit = _LocalFit(sv, ys, self.kernel, self.alpha)
            W, _ = fit.weights(self.labeled.xs[j:j + 1])
            out[j] = fit.select(W)[0]
        return out

    def predict(self, xs) -> Outcome:
        test = views(self.models, xs, self.loss, self.cfg)
        m, n = len(test[0]), len(self.labeled)
        W, _ = self.base.weights(test[0].xs)
        lam = self.base.select(W)
        masks = np.zeros((m, self.loss.n_labels), dtype=bool)
        per_label = []
        for t in range(m):
            chosen = {}
            for y in self.label_space:
                sel = self.swapped_selections(test, t, y)
                chosen[y] = sel
                calib = np.array([self.lab[sel[j]].scores(self.labeled.ys[j:j + 1], [j])[0] for j in range(n)])
                q = inflated_conformal_threshold(calib, self.alpha)
                masks[t, y] = test[lam[t]].table[t, y] <= q
            per_label.append(chosen)
        dec, worst, empty = solve_finite_masks(self.loss.matrix, masks)
        sets = [FiniteLabelSet(tuple(np.flatnonzero(row))) for row in masks]
        return Outcome(self.name, lam, dec, worst, empty, sets, aux={"swapped_selections": per_label})


def croims(models, labeled, x_test, kernel_cfg, loss, alpha, cfg: PgdConfig = DEFAULT_PGD) -> SelectionResult:
    return Croims(models, loss, alpha, kernel_cfg, cfg).fit(labeled).predict(as_2d(x_test)).result(0)


def naive_lcp(models, labeled, x_test, kernel_cfg, loss, alpha, rng, cfg: PgdConfig = DEFAULT_PGD) -> SelectionResult:
    return NaiveLCP(models, loss, alpha, kernel_cfg, rng, cfg).fit(labeled).predict(as_2d(x_test)).result(0)


def f_croims(models, labeled, x_test, label_space, kernel_cfg, loss, alpha,
             cfg: PgdConfig = DEFAULT_PGD, budget: float = 1e5) -> SelectionResult:
    sel = FCroims(models, loss, alpha, kernel_cfg, label_space, budget, cfg)
    return sel.fit(labeled).predict(as_2d(x_test)).result(0)
