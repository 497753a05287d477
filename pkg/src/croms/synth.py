"""Synthetic data generators and the simple learners behind the candidate models."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import CromsError, FiniteMatrixLoss, LabeledDataset, ScoreModel, as_2d

# v_k(X) = A_k1 + A_k2 X1 + (A_k3 + A_k4 X2) X5 + (A_k5 + A_k6 X3) X6 + (A_k7 + A_k8 X4) X7
AVG_A = np.array([
    [0, 1, 0, 0, 2, 3, 3, 3],
    [0, 1, 1, 4, 0, 0, 2, 5],
    [0, 1, 6, -4, 6, -5, 7, -4],
    [1, -1, 0, 3, 1, 5, 4, 1],
    [1, -1, 1, 6, 0, 3, 2, 4],
], dtype=float)

AVG_LOSS = np.array([
    [0, 3, 5, 7, 10],
    [2, 0, 4, 6, 9],
    [2.5, 4.5, 0, 7, 8],
    [3, 5, 6, 0, 7],
    [3.5, 6, 8, 10, 0],
])

IND_BETAS = np.array([[1, 5, 6], [5, 1, 6], [4, 4, 4]], dtype=float)
IND_L = np.array([[1.5, 0.1, -0.2], [0.1, 2.0, 0.4], [-0.2, 0.4, 3.0]])
IND_LOSS = np.array([[0, 4, 10], [2, 0, 9], [7, 6, 0]], dtype=float)

REG_L = np.array([[1.0, 0.5], [0.5, 4.0]])
REG_NOISE_COV = 0.25 * REG_L @ REG_L.T
REG_TEST_MEAN = np.array([1.0, 1.0])
REG_TEST_COV = 2.25 * np.eye(2)
REG_POOL_CENTERS = ((0.0, 0.0), (2.0, 0.0), (0.0, 2.0), (2.0, 2.0))

COVID_LABELS = ("Normal", "COVID-19", "Pneumonia", "Lung Opacity")
COVID_DECISIONS = ("No Action", "Antibiotics", "Quarantine", "Additional Testing")
COVID_LOSS = np.array([
    [0, 8, 8, 6],
    [10, 7, 0, 2],
    [10, 0, 7, 3],
    [9, 6, 6, 0],
], dtype=float)


def covid_loss() -> FiniteMatrixLoss:
    return FiniteMatrixLoss(COVID_LOSS, COVID_LABELS, COVID_DECISIONS)


def avg_loss() -> FiniteMatrixLoss:
    return FiniteMatrixLoss(AVG_LOSS, tuple(f"class {k}" for k in range(1, 6)))


def ind_loss() -> FiniteMatrixLoss:
    return FiniteMatrixLoss(IND_LOSS, tuple(f"class {k}" for k in range(1, 4)))


@dataclass(frozen=True, eq=False)
class GeneratorSpec:
    """Which generator to run, its parameters, and the default size and seed."""

    family: str
    n: int = 100
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in GENERATORS:
            raise CromsError(f"unknown generator {self.family!r}; choose from {sorted(GENERATORS)}")
        if self.n < 1:
            raise CromsError("generator size must be positive")

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


def _softmax_neg(v: np.ndarray) -> np.ndarray:
    """Rows of ``exp(-v) / sum exp(-v)``."""
    z = -v - np.max(-v, axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _draw_labels(P: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    u = rng.random(len(P))
    y = (np.cumsum(P, axis=1) < u[:, None]).sum(axis=1)
    return np.minimum(y, P.shape[1] - 1)


def avg_class_probs(xs, A=AVG_A) -> np.ndarray:
    X = as_2d(xs)
    A = np.asarray(A, dtype=float)
    if A.shape != (5, 8):
        raise CromsError("coefficient matrix must be 5 x 8")
    x1, x2, x3, x4, x5, x6, x7 = X.T
    v = (A[:, 0][None] + A[:, 1][None] * x1[:, None]
         + (A[:, 2][None] + A[:, 3][None] * x2[:, None]) * x5[:, None]
         + (A[:, 4][None] + A[:, 5][None] * x3[:, None]) * x6[:, None]
         + (A[:, 6][None] + A[:, 7][None] * x4[:, None]) * x7[:, None])
    return _softmax_neg(v)


def gen_avg_classification(spec: GeneratorSpec, rng: np.random.Generator | None = None, n: int | None = None) -> LabeledDataset:
    """Four fair binary covariates, three standard normals, five classes."""
    rng = rng or spec.rng()
    n = n or spec.n
    A = spec.params.get("A", AVG_A)
    X = np.column_stack([rng.integers(0, 2, size=(n, 4)).astype(float), rng.standard_normal((n, 3))])
    return LabeledDataset(X, _draw_labels(avg_class_probs(X, A), rng), "classification")


def ind_class_probs(xs, betas=IND_BETAS) -> np.ndarray:
    return _softmax_neg(as_2d(xs) @ np.asarray(betas, dtype=float).T)


def gen_ind_classification(spec: GeneratorSpec, rng: np.random.Generator | None = None, n: int | None = None) -> LabeledDataset:
    """Correlated Gaussian covariates in three dimensions, three classes."""
    rng = rng or spec.rng()
    n = n or spec.n
    if "Sigma" in spec.params:
        L = _chol(spec.params["Sigma"])
    else:
        L = np.asarray(spec.params.get("L", IND_L), dtype=float)
    X = rng.standard_normal((n, L.shape[0])) @ L.T
    return LabeledDataset(X, _draw_labels(ind_class_probs(X, spec.params.get("betas", IND_BETAS)), rng),
                          "classification")


def regression_mean(xs) -> np.ndarray:
    X = as_2d(xs)
    x1, x2 = X[:, 0], X[:, 1]
    return np.column_stack([-x1 - x2**2, -x1**2 - x2])


def _chol(cov) -> np.ndarray:
    cov = np.asarray(cov, dtype=float)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise CromsError("covariance matrix is not positive definite") from None


def gen_regression_shift(spec: GeneratorSpec, rng: np.random.Generator | None = None, n: int | None = None) -> LabeledDataset:
    """Quadratic two-output regression with correlated Gaussian noise.

    ``x_mean`` and ``x_cov`` set the covariate law, so the same generator
    serves the shifted training pools and the test population.
    """
    rng = rng or spec.rng()
    n = n or spec.n
    mean = np.asarray(spec.params.get("x_mean", REG_TEST_MEAN), dtype=float)
    Lx = _chol(spec.params.get("x_cov", REG_TEST_COV))
    noise = spec.params.get("noise_cov", REG_NOISE_COV)
    X = mean + rng.standard_normal((n, 2)) @ Lx.T
    eps = rng.standard_normal((n, 2))
    if np.any(np.asarray(noise) != 0):
        eps = eps @ _chol(noise).T
    else:
        eps = np.zeros((n, 2))
    return LabeledDataset(X, regression_mean(X) + eps, "regression")


GENERATORS = {
    "avg_classification": gen_avg_classification,
    "ind_classification": gen_ind_classification,
    "regression_shift": gen_regression_shift,
}


def generate(spec: GeneratorSpec, rng: np.random.Generator | None = None, n: int | None = None) -> LabeledDataset:
    return GENERATORS[spec.family](spec, rng, n)


# --- learners -------------------------------------------------------------------

@dataclass(frozen=True)
class LogitConfig:
    max_epochs: int = 500
    learning_rate: float = 0.5
    l2: float = 1e-4
    tolerance: float = 1e-8
    pairwise: bool = False  # add all pairwise products of the chosen features


@dataclass(frozen=True, eq=False)
class LogitFit:
    model: ScoreModel
    weights: np.ndarray
    converged: bool
    epochs: int
    loss: float


def _features(X: np.ndarray, subset: Sequence[int], pairwise: bool) -> np.ndarray:
    F = X[:, list(subset)]
    if pairwise and F.shape[1] > 1:
        i, j = np.triu_indices(F.shape[1], k=1)
        F = np.hstack([F, F[:, i] * F[:, j]])
    return F


def fit_multinomial_logit(data: LabeledDataset, feature_subset: Sequence[int] | None = None,
                          cfg: LogitConfig = LogitConfig(), n_labels: int | None = None,
                          model_id: int = 0) -> LogitFit:
    """Softmax regression by full-batch gradient descent on standardized features.

    The intercept is not penalized. If the loss is still moving after
    ``max_epochs`` the fit is flagged as not converged and the last iterate,
    which has the lowest loss seen, is kept.
    """
    if data.kind != "classification":
        raise CromsError("logit needs a classification dataset")
    subset = tuple(range(data.d)) if feature_subset is None else tuple(int(f) for f in feature_subset)
    if any(not 0 <= f < data.d for f in subset):
        raise CromsError(f"feature index outside 0..{data.d - 1}")
    K = n_labels or int(data.ys.max()) + 1
    F = _features(data.xs, subset, cfg.pairwise)
    mu = F.mean(axis=0) if F.shape[1] else np.zeros(0)
    sd = F.std(axis=0) if F.shape[1] else np.zeros(0)
    sd = np.where(sd > 0, sd, 1.0)
    Xs = np.hstack([np.ones((len(F), 1)), (F - mu) / sd])
    Yh = np.eye(K)[data.ys]
    W = np.zeros((Xs.shape[1], K))
    penalty = np.ones_like(W)
    penalty[0] = 0.0
    n = len(Xs)

    def objective(W):
        Z = Xs @ W
        Z -= Z.max(axis=1, keepdims=True)
        logp = Z - np.log(np.exp(Z).sum(axis=1, keepdims=True))
        return -np.sum(Yh * logp) / n + 0.5 * cfg.l2 * np.sum(penalty * W**2), np.exp(logp)

    prev, P = objective(W)
    converged, epoch = False, 0
    for epoch in range(1, cfg.max_epochs + 1):
        grad = Xs.T @ (P - Yh) / n + cfg.l2 * penalty * W
        W = W - cfg.learning_rate * grad
        cur, P = objective(W)
        if abs(prev - cur) <= cfg.tolerance:
            converged = True
            prev = cur
            break
        prev = cur
    Wf = W.copy()

    def prob_fn(xs, _W=Wf, _mu=mu, _sd=sd):
        G = _features(as_2d(xs), subset, cfg.pairwise)
        Z = np.hstack([np.ones((len(G), 1)), (G - _mu) / _sd]) @ _W
        Z -= Z.max(axis=1, keepdims=True)
        E = np.exp(Z)
        return E / E.sum(axis=1, keepdims=True)

    model = ScoreModel.softmax(model_id, prob_fn, K, name=f"logit{list(subset)}")
    return LogitFit(model, Wf, converged, epoch, float(prev))


def train_multinomial_logit(data: LabeledDataset, feature_subset=None, cfg: LogitConfig = LogitConfig(),
                            n_labels: int | None = None, model_id: int = 0) -> ScoreModel:
    return fit_multinomial_logit(data, feature_subset, cfg, n_labels, model_id).model


def _least_squares(data: LabeledDataset):
    if data.kind != "regression":
        raise CromsError("least squares needs a regression dataset")
    D = np.hstack([np.ones((len(data), 1)), data.xs])
    B, *_ = np.linalg.lstsq(D, data.ys, rcond=None)

    def mean_fn(xs, _B=B):
        X = as_2d(xs)
        return np.hstack([np.ones((len(X), 1)), X]) @ _B

    return B, mean_fn


def train_box_model(data: LabeledDataset, model_id: int = 0) -> ScoreModel:
    """Per-coordinate least squares on ``(1, x)``."""
    _, mean_fn = _least_squares(data)
    return ScoreModel.box(model_id, mean_fn, name="box-ls")


def train_ellipsoid_model(data: LabeledDataset, ridge: float = 1e-6, model_id: int = 0) -> ScoreModel:
    """Least-squares mean with one global residual covariance plus ``ridge * I``."""
    _, mean_fn = _least_squares(data)
    R = data.ys - mean_fn(data.xs)
    cov = R.T @ R / len(R) + ridge * np.eye(data.p)

    def cov_fn(xs, _c=cov):
        return np.broadcast_to(_c, (len(as_2d(xs)),) + _c.shape)

    return ScoreModel.ellipsoid(model_id, mean_fn, cov_fn, name="ellipsoid-ls")


def greedy_scores(P, lam: float, penalty=None) -> np.ndarray:
    """``rho(x, y) + lam * L(y)`` for every label, shape ``(n, K)``.

    Labels are ranked by probability, highest first, ties by label index;
    ``rho`` and ``L`` accumulate probability and ``penalty`` down that
    ranking up to ``y``. The default penalty is the 1-based label.
    """
    P = np.asarray(P, dtype=float)
    n, K = P.shape
    ell = np.arange(1, K + 1, dtype=float) if penalty is None else np.asarray(penalty, dtype=float)
    order = np.argsort(-P, axis=1, kind="stable")
    rho = np.cumsum(np.take_along_axis(P, order, axis=1), axis=1)
    pen = np.cumsum(ell[order], axis=1)
    out = np.empty_like(P)
    np.put_along_axis(out, order, rho + lam * pen, axis=1)
    return out


def make_greedy_score_model(classifier: ScoreModel, lam: float, penalty=None, model_id: int | None = None) -> ScoreModel:
    if lam < 0:
        raise CromsError("score penalty must be nonnegative")
    prob_fn = classifier.geometry.prob_fn

    def table(xs):
        return greedy_scores(prob_fn(xs), lam, penalty)

    mid = classifier.id if model_id is None else model_id
    return ScoreModel.classifier(mid, table, classifier.n_labels, name=f"greedy(lambda={lam:g})")


def penalty_grid(size: int, upper: float = 0.2) -> np.ndarray:
    """Uniform grid of ``size`` penalties over ``[0, upper]``."""
    if size < 1:
        raise CromsError("need at least one penalty")
    return np.linspace(0.0, upper, size) if size > 1 else np.zeros(1)


# --- candidate families used by the presets -------------------------------------

def greedy_family(train: LabeledDataset, size: int, cfg: LogitConfig = LogitConfig(pairwise=True)) -> list[ScoreModel]:
    base = train_multinomial_logit(train, None, cfg, n_labels=5)
    return [make_greedy_score_model(base, float(lam), model_id=k) for k, lam in enumerate(penalty_grid(size))]


IND_SUBSETS = ((0, 1), (0, 2), (1, 2))


def feature_subset_family(train: LabeledDataset, subsets=IND_SUBSETS, cfg: LogitConfig = LogitConfig()) -> list[ScoreModel]:
    return [train_multinomial_logit(train, s, cfg, n_labels=3, model_id=k) for k, s in enumerate(subsets)]


def shifted_pool_family(rng: np.random.Generator, size: int = 500, centers=REG_POOL_CENTERS,
                        noise_cov=REG_NOISE_COV) -> list[ScoreModel]:
    models = []
    for k, c in enumerate(centers):
        spec = GeneratorSpec("regression_shift", size, params={"x_mean": c, "x_cov": np.eye(2), "noise_cov": noise_cov})
        models.append(train_ellipsoid_model(gen_regression_shift(spec, rng), model_id=k))
    return models


def neff_bandwidth(c: float, n: int, d: int) -> float:
    """``h = c * n^(-1/(d+2))``."""
    return c * n ** (-1.0 / (d + 2))


__all__ = [name for name in dir() if not name.startswith("_") and name not in ("annotations", "math")]
