"""Prediction-set descriptors from a score model and a threshold."""

from __future__ import annotations

import numpy as np

from .core import (
    BoxGeometry,
    BoxSet,
    CromsError,
    DimensionError,
    EllipsoidGeometry,
    EllipsoidSet,
    FiniteLabelSet,
    FinitePointSet,
    LabeledDataset,
    ScoreModel,
    SublevelSet,
    as_2d,
    evaluate_scores,
)
from .quantile import inflated_conformal_threshold, weighted_quantile


def set_at(model: ScoreModel, x, q: float):
    """The sublevel set ``{y : S(x, y) <= q}`` in its most concrete form.

    Classification models enumerate their labels; box and ellipsoid models
    give a closed-form set; anything else stays symbolic.
    """
    x = as_2d(x)
    if len(x) != 1:
        raise DimensionError("set_at takes a single covariate vector")
    q = float(q)
    if model.is_classification:
        scores = model.label_scores(x)[0]
        return FiniteLabelSet(tuple(np.flatnonzero(scores <= q)))
    geo = model.geometry
    if isinstance(geo, BoxGeometry):
        return BoxSet(np.asarray(geo.mean_fn(x), dtype=float)[0], q)
    if isinstance(geo, EllipsoidGeometry):
        return EllipsoidSet(
            np.asarray(geo.mean_fn(x), dtype=float)[0],
            np.asarray(geo.cov_fn(x), dtype=float)[0],
            q,
        )
    return SublevelSet(model.id, q)


def split_set(model: ScoreModel, labeled: LabeledDataset, alpha: float, x):
    """Split-conformal set at ``x`` calibrated on ``labeled``."""
    q = inflated_conformal_threshold(evaluate_scores(model, labeled), alpha)
    return set_at(model, x, q)


def lcp_set(model: ScoreModel, labeled: LabeledDataset, weights, alpha: float, x):
    """Localized set: weighted ``1 - alpha`` quantile, no ``1/n`` inflation."""
    w = np.asarray(weights, dtype=float).reshape(-1)
    if len(w) != len(labeled):
        raise DimensionError(f"{len(w)} weights for {len(labeled)} labeled rows")
    q = weighted_quantile(evaluate_scores(model, labeled), w, 1.0 - alpha)
    return set_at(model, x, q)


def membership(model: ScoreModel, q: float, x, y) -> bool:
    """Inclusive test ``S(x, y) <= q``."""
    return bool(model.score(x, y) <= q)


def finite_extent(descriptor, label_space, model: ScoreModel | None = None, x=None) -> FiniteLabelSet:
    """Members of ``label_space`` in a classification set.

    A symbolic sublevel set needs the model and covariate to be enumerated.
    """
    labels = [int(y) for y in label_space]
    if isinstance(descriptor, FiniteLabelSet):
        return FiniteLabelSet(tuple(y for y in labels if y in descriptor))
    if isinstance(descriptor, SublevelSet):
        if model is None or x is None:
            raise CromsError("enumerating a sublevel set needs its model and covariate")
        if not model.is_classification:
            raise CromsError("finite_extent is defined for classification sets only")
        xs = np.repeat(as_2d(x), len(labels), axis=0)
        scores = model.scores(xs, np.asarray(labels))
        return FiniteLabelSet(tuple(y for y, s in zip(labels, scores) if s <= descriptor.threshold))
    raise CromsError(f"finite_extent is defined for classification sets, not {type(descriptor).__name__}")


def covers(descriptor, y) -> bool:
    """Whether label ``y`` lies in a concrete prediction set."""
    if isinstance(descriptor, FiniteLabelSet):
        return int(y) in descriptor
    y = np.asarray(y, dtype=float).reshape(-1)
    if isinstance(descriptor, BoxSet):
        return bool(np.max(np.abs(y - descriptor.center)) <= descriptor.half_width)
    if isinstance(descriptor, EllipsoidSet):
        if np.isinf(descriptor.radius):
            return True
        r = y - descriptor.center
        return bool(r @ np.linalg.solve(descriptor.cov, r) <= descriptor.radius)
    if isinstance(descriptor, FinitePointSet):
        if descriptor.is_empty:
            return False
        if descriptor.grid is not None:
            # a label outside the grid box is never covered
            grid = descriptor.grid
            return grid.covers(y) and int(grid.snap_index(y)[0]) in set(descriptor.indices)
        return bool(np.any(np.all(descriptor.points == y, axis=1)))
    raise CromsError(f"cannot test membership in {type(descriptor).__name__} without its model")
