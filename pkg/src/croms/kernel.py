"""Localization kernels, normalized weights, and bandwidth selection."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Literal, NamedTuple

import numpy as np

from .core import CromsError, DimensionError, EmptyInputError, as_2d

Family = Literal["gaussian_sq", "exponential", "box"]

DEFAULT_C_GRID = tuple(np.geomspace(0.1, 50.0, 20))


@dataclass(frozen=True, eq=False)
class KernelConfig:
    """``family`` applied to the Euclidean distance ``d`` with bandwidth ``h``.

    ``features`` optionally maps covariate rows to the space the distance is
    measured in.
    """

    family: Family = "gaussian_sq"
    bandwidth: float = 1.0
    features: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if self.family not in ("gaussian_sq", "exponential", "box"):
            raise CromsError(f"unknown kernel family {self.family!r}")
        if not (self.bandwidth > 0 and math.isfinite(self.bandwidth)):
            raise CromsError("bandwidth must be positive and finite")

    def with_bandwidth(self, h: float) -> "KernelConfig":
        return KernelConfig(self.family, h, self.features)

    def embed(self, xs) -> np.ndarray:
        xs = as_2d(xs)
        return xs if self.features is None else as_2d(self.features(xs))


def _profile(cfg: KernelConfig, d2: np.ndarray) -> np.ndarray:
    h = cfg.bandwidth
    if cfg.family == "gaussian_sq":
        return np.exp(-d2 / (h * h))
    d = np.sqrt(d2)
    if cfg.family == "exponential":
        return np.exp(-d / h)
    return (d <= h).astype(float)


def kernel_matrix(cfg: KernelConfig, A, B) -> np.ndarray:
    """``H(A[i], B[j])`` for all pairs."""
    A, B = cfg.embed(A), cfg.embed(B)
    if A.shape[1] != B.shape[1]:
        raise DimensionError(f"covariate dimensions {A.shape[1]} and {B.shape[1]} differ")
    d2 = np.sum((A[:, None, :] - B[None, :, :]) ** 2, axis=2)
    return _profile(cfg, d2)


def kernel_value(cfg: KernelConfig, x1, x2) -> float:
    """
    >>> round(kernel_value(KernelConfig("exponential", 2.0), [0.0], [2.0]), 6)
    0.367879
    """
    a = np.asarray(x1, dtype=float).reshape(-1)
    b = np.asarray(x2, dtype=float).reshape(-1)
    if cfg.features is None and a.shape != b.shape:
        raise DimensionError("kernel arguments differ in dimension")
    return float(kernel_matrix(cfg, a[None, :], b[None, :])[0, 0])


class Weights(NamedTuple):
    weights: np.ndarray
    uniform_fallback: bool


def normalize_rows(H) -> tuple[np.ndarray, np.ndarray]:
    """Normalize kernel rows to sum to one; all-zero rows become uniform.

    Row sums use ``math.fsum`` so the result does not depend on the order of
    the labeled points.
    """
    H = np.asarray(H, dtype=float)
    totals = np.array([math.fsum(row) for row in H])
    dead = totals <= 0
    W = np.empty_like(H)
    W[~dead] = H[~dead] / totals[~dead, None]
    W[dead] = 1.0 / H.shape[1]
    return W, dead


def kernel_weight_rows(cfg: KernelConfig, labeled_xs, targets) -> tuple[np.ndarray, np.ndarray]:
    """Row ``t`` holds the weights ``w_i(targets[t])`` over the labeled points."""
    labeled_xs = as_2d(labeled_xs)
    if len(labeled_xs) == 0:
        raise EmptyInputError("no labeled covariates")
    return normalize_rows(kernel_matrix(cfg, targets, labeled_xs))


def kernel_weights(cfg: KernelConfig, labeled_xs, x) -> Weights:
    W, dead = kernel_weight_rows(cfg, labeled_xs, as_2d(x)[:1])
    return Weights(W[0], bool(dead[0]))


def effective_sample_size(sample_xs, cfg: KernelConfig, n: int | None = None) -> float:
    """Plug-in ``n * E[E[H|X]^2] / E[H^2]`` over distinct pairs, kept in ``[1, n]``.

    ``n`` defaults to the sample size; pass the labeled size when the sample
    is a separate set drawn only to estimate the expectations.
    """
    X = as_2d(sample_xs)
    m = len(X)
    if m < 2:
        raise EmptyInputError("effective sample size needs at least two points")
    n = m if n is None else int(n)
    K = kernel_matrix(cfg, X, X)
    np.fill_diagonal(K, 0.0)
    cond_mean = K.sum(axis=1) / (m - 1)
    num = float(np.mean(cond_mean**2))
    den = float(np.sum(K**2) / (m * (m - 1)))
    if den <= 0:
        return 1.0
    return float(min(max(n * num / den, 1.0), n))


class BandwidthChoice(NamedTuple):
    bandwidth: float
    c: float
    n_eff: float
    saturated: bool


def select_bandwidth(sample_xs, target_neff: float, cfg: KernelConfig | None = None,
                     c_grid=DEFAULT_C_GRID, n: int | None = None, d: int | None = None) -> BandwidthChoice:
    """Smallest ``c`` in the grid whose ``h = c n^(-1/(d+2))`` reaches ``target_neff``.

    When no grid value qualifies the largest one is returned with
    ``saturated`` set.
    """
    if not target_neff >= 1:
        raise CromsError("target_neff must be at least 1")
    grid = sorted(float(c) for c in c_grid)
    if not grid:
        raise EmptyInputError("empty bandwidth grid")
    X = as_2d(sample_xs)
    cfg = cfg or KernelConfig()
    n = len(X) if n is None else int(n)
    d = cfg.embed(X[:1]).shape[1] if d is None else int(d)
    scale = n ** (-1.0 / (d + 2))
    neff = 0.0
    for c in grid:
        neff = effective_sample_size(X, cfg.with_bandwidth(c * scale), n=n)
        if neff >= target_neff:
            return BandwidthChoice(c * scale, c, neff, False)
    return BandwidthChoice(grid[-1] * scale, grid[-1], neff, True)
