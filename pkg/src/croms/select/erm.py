"""Marginal selectors: E-CROMS, the E2E split baseline and Naive-CP."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from ..core import CromsError, EmptyInputError, LabeledDataset, LossSpec, ScoreModel
from ..cro import DEFAULT_PGD, PgdConfig
from ..quantile import inflated_conformal_threshold
from .base import (
    ModelView,
    Outcome,
    SelectionResult,
    check_models,
    exact_mean,
    first_argmin,
    label_losses,
    threshold_outcome,
    views,
)


def risk_table(lab_views: Sequence[ModelView], ys, thresholds) -> np.ndarray:
    """``(|Lambda|, n)`` losses of the auxiliary decisions on the labeled rows."""
    rows = []
    for v, q in zip(lab_views, thresholds):
        dec, _, _ = v.decide(q)
        rows.append(label_losses(v.spec, ys, dec))
    return np.vstack(rows)


def auxiliary_risks(models: Sequence[ScoreModel], labeled: LabeledDataset, thresholds,
                    loss: LossSpec, cfg: PgdConfig = DEFAULT_PGD) -> np.ndarray:
    """Entry ``(lam, i)`` is ``phi(Y_i, z_lam(X_i; q_lam))``."""
    check_models(models, labeled)
    thresholds = np.asarray(thresholds, dtype=float).reshape(-1)
    if len(thresholds) != len(models):
        raise CromsError(f"{len(thresholds)} thresholds for {len(models)} models")
    return risk_table(views(models, labeled.xs, loss, cfg), labeled.ys, thresholds)


class ECroms:
    """Pick the model whose split-conformal decisions have the least labeled risk."""

    name = "e-croms"

    def __init__(self, models: Sequence[ScoreModel], loss: LossSpec, alpha: float, cfg: PgdConfig = DEFAULT_PGD):
        self.models, self.loss, self.alpha, self.cfg = list(models), loss, alpha, cfg

    def fit(self, labeled: LabeledDataset) -> "ECroms":
        check_models(self.models, labeled)
        lab = views(self.models, labeled.xs, self.loss, self.cfg)
        self.thresholds = np.array([
            inflated_conformal_threshold(v.scores(labeled.ys), self.alpha) for v in lab
        ])
        self.risk_table = risk_table(lab, labeled.ys, self.thresholds)
        self.risks = np.array([exact_mean(row) for row in self.risk_table])
        self.lambda_hat = first_argmin(self.risks)
        return self

    def predict(self, xs) -> Outcome:
        test = views(self.models, xs, self.loss, self.cfg)
        m = len(test[0])
        lam = np.full(m, self.lambda_hat)
        info = {"risks": self.risks, "thresholds": self.thresholds}
        return threshold_outcome(self.name, test, lam, self.thresholds[lam], info=info)


class NaiveCP:
    """Split-conformal CRO with a model drawn uniformly at random per test point."""

    name = "naive-cp"

    def __init__(self, models, loss: LossSpec, alpha: float, rng: np.random.Generator,
                 cfg: PgdConfig = DEFAULT_PGD):
        self.models, self.loss, self.alpha, self.rng, self.cfg = list(models), loss, alpha, rng, cfg

    def fit(self, labeled: LabeledDataset) -> "NaiveCP":
        check_models(self.models, labeled)
        self.thresholds = np.array([
            inflated_conformal_threshold(v.scores(labeled.ys), self.alpha)
            for v in views(self.models, labeled.xs, self.loss, self.cfg)
        ])
        return self

    def predict(self, xs) -> Outcome:
        test = views(self.models, xs, self.loss, self.cfg)
        lam = self.rng.integers(len(self.models), size=len(test[0]))
        return threshold_outcome(self.name, test, lam, self.thresholds[lam])


class E2E:
    """Select on a shuffled first part, calibrate the chosen model on the rest."""

    def __init__(self, models, loss: LossSpec, alpha: float, split_fraction: float,
                 rng: np.random.Generator, cfg: PgdConfig = DEFAULT_PGD):
        if not 0.0 < split_fraction < 1.0:
            raise CromsError("split_fraction must lie in (0, 1)")
        self.models, self.loss, self.alpha = list(models), loss, alpha
        self.split_fraction, self.rng, self.cfg = split_fraction, rng, cfg
        self.name = f"e2e-{split_fraction:g}"

    def fit(self, labeled: LabeledDataset) -> "E2E":
        check_models(self.models, labeled)
        n = len(labeled)
        n1 = math.floor(self.split_fraction * n)
        if n1 < 1 or n - n1 < 1:
            raise EmptyInputError(f"splitting {n} rows at {self.split_fraction} leaves an empty part")
        perm = self.rng.permutation(n)
        self.selector = ECroms(self.models, self.loss, self.alpha, self.cfg).fit(labeled.take(perm[:n1]))
        self.lambda_hat = self.selector.lambda_hat
        calib = labeled.take(perm[n1:])
        scores = ModelView(self.models[self.lambda_hat], calib.xs, self.loss, self.cfg).scores(calib.ys)
        # appending +inf to the calibration scores is the same as inflating the level
        self.threshold = inflated_conformal_threshold(scores, self.alpha)
        self.n_select, self.n_calibrate = n1, n - n1
        return self

    def predict(self, xs) -> Outcome:
        test = views(self.models, xs, self.loss, self.cfg)
        m = len(test[0])
        info = {"risks": self.selector.risks, "n_select": self.n_select, "n_calibrate": self.n_calibrate}
        return threshold_outcome(self.name, test, np.full(m, self.lambda_hat), np.full(m, self.threshold), info=info)


def e_croms(models, labeled, x_test, loss, alpha, cfg: PgdConfig = DEFAULT_PGD) -> SelectionResult:
    return ECroms(models, loss, alpha, cfg).fit(labeled).predict(x_test).result(0)


def naive_cp(models, labeled, x_test, loss, alpha, rng, cfg: PgdConfig = DEFAULT_PGD) -> SelectionResult:
    return NaiveCP(models, loss, alpha, rng, cfg).fit(labeled).predict(x_test).result(0)


def e2e(models, labeled, x_test, split_fraction, loss, alpha, rng, cfg: PgdConfig = DEFAULT_PGD) -> SelectionResult:
    return E2E(models, loss, alpha, split_fraction, rng, cfg).fit(labeled).predict(x_test).result(0)
