"""Domain types shared by every stage of the pipeline.

Everything here is immutable after construction. Score functions are
*batched*: they take a 2-D covariate array ``(n, d)`` and return one value
per row, so the selectors can evaluate a whole labeled set per call.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence, Union

import numpy as np

Kind = Literal["classification", "regression"]


class CromsError(ValueError):
    """Base class for input errors raised by this package."""


class DimensionError(CromsError):
    """Array shapes do not agree with each other or with a model."""


class EmptyInputError(CromsError):
    """An operation needs at least one element and got none."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def as_2d(xs) -> np.ndarray:
    """Coerce covariates to shape ``(n, d)``; a 1-D input is one row."""
    a = np.asarray(xs, dtype=float)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2:
        raise DimensionError(f"covariates must be 1-D or 2-D, got shape {a.shape}")
    return a


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Rows of covariates with class-index or real-vector labels."""

    xs: np.ndarray
    ys: np.ndarray
    kind: Kind

    def __post_init__(self):
        xs = as_2d(self.xs)
        if self.kind == "classification":
            ys = np.asarray(self.ys)
            if ys.ndim != 1:
                raise DimensionError("classification labels must be a 1-D index array")
            if ys.size and not np.all(np.equal(np.mod(ys, 1), 0)):
                raise CromsError("classification labels must be integer indices")
            ys = ys.astype(np.int64)
            if ys.size and ys.min() < 0:
                raise CromsError("classification labels must be nonnegative")
        elif self.kind == "regression":
            ys = np.asarray(self.ys, dtype=float)
            if ys.ndim == 1:
                ys = ys[:, None]
            if ys.ndim != 2:
                raise DimensionError("regression labels must have shape (n, p)")
        else:
            raise CromsError(f"unknown dataset kind {self.kind!r}")
        if len(xs) != len(ys):
            raise DimensionError(f"{len(xs)} covariate rows but {len(ys)} labels")
        if len(xs) < 1:
            raise EmptyInputError("a labeled dataset needs at least one row")
        object.__setattr__(self, "xs", _frozen(xs))
        object.__setattr__(self, "ys", _frozen(ys))

    def __len__(self) -> int:
        return len(self.xs)

    @property
    def d(self) -> int:
        return self.xs.shape[1]

    @property
    def p(self) -> int:
        return 1 if self.kind == "classification" else self.ys.shape[1]

    def take(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return LabeledDataset(self.xs[idx], self.ys[idx], self.kind)

    def with_labels(self, ys) -> "LabeledDataset":
        return LabeledDataset(self.xs, ys, self.kind)


# --- score models -----------------------------------------------------------

MeanFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class BoxGeometry:
    mean_fn: MeanFn


@dataclass(frozen=True, eq=False)
class EllipsoidGeometry:
    mean_fn: MeanFn
    cov_fn: Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class SoftmaxGeometry:
    prob_fn: Callable[[np.ndarray], np.ndarray]


Geometry = Union[BoxGeometry, EllipsoidGeometry, SoftmaxGeometry, None]


@dataclass(frozen=True, eq=False)
class ScoreModel:
    """A candidate nonconformity score ``S(x, y)``; small means conforming.

    Build one through :meth:`box`, :meth:`ellipsoid`, :meth:`softmax` or
    :meth:`classifier`. The geometry hint lets the robust solvers use a
    closed form instead of enumerating the prediction set.

    Ellipsoid scores are stored squared, ``(y-mu)' Sigma^-1 (y-mu)``, so an
    ellipsoid threshold ``q`` is a squared radius.
    """

    id: int
    geometry: Geometry = None
    score_fn: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    label_score_fn: Callable[[np.ndarray], np.ndarray] | None = None
    n_labels: int | None = None
    name: str = ""

    @classmethod
    def box(cls, id: int, mean_fn: MeanFn, name: str = "") -> "ScoreModel":
        return cls(id, BoxGeometry(mean_fn), name=name)

    @classmethod
    def ellipsoid(cls, id: int, mean_fn: MeanFn, cov_fn, name: str = "") -> "ScoreModel":
        return cls(id, EllipsoidGeometry(mean_fn, cov_fn), name=name)

    @classmethod
    def softmax(cls, id: int, prob_fn, n_labels: int, name: str = "") -> "ScoreModel":
        return cls(id, SoftmaxGeometry(prob_fn), n_labels=n_labels, name=name)

    @classmethod
    def classifier(cls, id: int, label_score_fn, n_labels: int, name: str = "") -> "ScoreModel":
        """Generic classification score given as a batched ``(n, K)`` table."""
        return cls(id, None, label_score_fn=label_score_fn, n_labels=n_labels, name=name)

    @property
    def is_classification(self) -> bool:
        return self.n_labels is not None

    def label_scores(self, xs) -> np.ndarray:
        """Scores of every label at every row, shape ``(n, K)``."""
        if not self.is_classification:
            raise CromsError(f"model {self.id} is not a classification score")
        xs = as_2d(xs)
        if isinstance(self.geometry, SoftmaxGeometry):
            out = 1.0 - np.asarray(self.geometry.prob_fn(xs), dtype=float)
        elif self.label_score_fn is not None:
            out = np.asarray(self.label_score_fn(xs), dtype=float)
        else:
            n = len(xs)
            out = np.column_stack(
                [self.score_fn(xs, np.full(n, k)) for k in range(self.n_labels)]
            )
        if out.shape != (len(xs), self.n_labels):
            raise DimensionError(f"label scores have shape {out.shape}, expected {(len(xs), self.n_labels)}")
        return out

    def scores(self, xs, ys) -> np.ndarray:
        """``S(xs[i], ys[i])`` for every row."""
        xs = as_2d(xs)
        n = len(xs)
        if self.is_classification:
            ys = np.asarray(ys).reshape(-1)
            if len(ys) != n:
                raise DimensionError(f"{n} covariate rows but {len(ys)} labels")
            if ys.size and (ys.min() < 0 or ys.max() >= self.n_labels):
                raise DimensionError(f"label index out of range for {self.n_labels} classes")
            if self.score_fn is not None and self.geometry is None:
                return np.asarray(self.score_fn(xs, ys), dtype=float)
            return self.label_scores(xs)[np.arange(n), ys.astype(np.int64)]
        ys = np.asarray(ys, dtype=float)
        if ys.ndim == 1:
            ys = ys[None, :] if n == 1 else ys[:, None]
        if len(ys) != n:
            raise DimensionError(f"{n} covariate rows but {len(ys)} labels")
        geo = self.geometry
        if isinstance(geo, BoxGeometry):
            mu = self._mean(geo.mean_fn, xs, ys.shape[1])
            return np.max(np.abs(ys - mu), axis=1)
        if isinstance(geo, EllipsoidGeometry):
            mu = self._mean(geo.mean_fn, xs, ys.shape[1])
            cov = np.asarray(geo.cov_fn(xs), dtype=float)
            r = ys - mu
            sol = np.linalg.solve(cov, r[:, :, None])[:, :, 0]
            return np.einsum("ij,ij->i", r, sol)
        if self.score_fn is None:
            raise CromsError(f"model {self.id} has no score function")
        return np.asarray(self.score_fn(xs, ys), dtype=float)

    def score(self, x, y) -> float:
        y = np.asarray(y)
        ys = y.reshape(1) if self.is_classification else y.reshape(1, -1)
        return float(self.scores(as_2d(x), ys)[0])

    @staticmethod
    def _mean(mean_fn, xs, p):
        mu = np.asarray(mean_fn(xs), dtype=float)
        if mu.shape != (len(xs), p):
            raise DimensionError(f"mean has shape {mu.shape}, labels need {(len(xs), p)}")
        return mu


def evaluate_scores(model: ScoreModel, data: LabeledDataset) -> np.ndarray:
    """Score every labeled row; output order follows the dataset rows."""
    if model.is_classification != (data.kind == "classification"):
        raise DimensionError(f"model {model.id} does not match a {data.kind} dataset")
    return model.scores(data.xs, data.ys)


# --- losses -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FiniteMatrixLoss:
    """``phi(y, z) = M[y, z]``; rows are labels, columns are decisions."""

    matrix: np.ndarray
    label_names: tuple[str, ...] = ()
    decision_names: tuple[str, ...] = ()

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.size == 0:
            raise DimensionError("loss matrix must be a nonempty 2-D array")
        if not np.all(np.isfinite(m)):
            raise CromsError("loss matrix entries must be finite")
        for names, size, what in ((self.label_names, m.shape[0], "label"),
                                  (self.decision_names, m.shape[1], "decision")):
            if names and len(names) != size:
                raise DimensionError(f"{len(names)} {what} names for {size} {what}s")
        object.__setattr__(self, "matrix", _frozen(m))
        object.__setattr__(self, "label_names", tuple(self.label_names))
        object.__setattr__(self, "decision_names", tuple(self.decision_names))

    @property
    def n_labels(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_decisions(self) -> int:
        return self.matrix.shape[1]

    def label_index(self, name: str) -> int:
        return self.label_names.index(name)

    def decision_index(self, name: str) -> int:
        return self.decision_names.index(name)


@dataclass(frozen=True)
class PortfolioLoss:
    """``phi(y, z) = -y'z`` with ``z`` on the probability simplex."""

    p: int

    def __post_init__(self):
        if self.p < 1:
            raise CromsError("portfolio dimension must be at least 1")


LossSpec = Union[FiniteMatrixLoss, PortfolioLoss]


def loss(spec: LossSpec, y, z) -> float:
    """Decision loss of decision ``z`` when the label turns out to be ``y``."""
    if isinstance(spec, FiniteMatrixLoss):
        yi, zi = int(y), int(z)
        if not (0 <= yi < spec.n_labels and 0 <= zi < spec.n_decisions):
            raise DimensionError(f"(y={yi}, z={zi}) outside a {spec.matrix.shape} loss matrix")
        return float(spec.matrix[yi, zi])
    y = np.asarray(y, dtype=float).reshape(-1)
    z = np.asarray(z, dtype=float).reshape(-1)
    if len(y) != spec.p or len(z) != spec.p:
        raise DimensionError(f"portfolio loss needs {spec.p}-vectors")
    return float(-(y @ z))


def realized_losses(spec: LossSpec, ys, decisions) -> np.ndarray:
    """Row-wise ``phi(ys[i], decisions[i])``."""
    if isinstance(spec, FiniteMatrixLoss):
        return spec.matrix[np.asarray(ys, dtype=np.int64), np.asarray(decisions, dtype=np.int64)]
    ys = np.asarray(ys, dtype=float).reshape(-1, spec.p)
    z = np.asarray(decisions, dtype=float).reshape(-1, spec.p)
    return -np.einsum("ij,ij->i", ys, z)


# --- prediction sets ----------------------------------------------------------

@dataclass(frozen=True)
class FiniteLabelSet:
    labels: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(sorted(int(v) for v in set(self.labels))))

    @property
    def is_empty(self) -> bool:
        return not self.labels

    def __contains__(self, y) -> bool:
        return int(y) in self.labels


@dataclass(frozen=True, eq=False)
class BoxSet:
    center: np.ndarray
    half_width: float

    def __post_init__(self):
        if not self.half_width >= 0:
            raise CromsError("box half width must be nonnegative")
        object.__setattr__(self, "center", _frozen(np.asarray(self.center, dtype=float)))

    is_empty = False


@dataclass(frozen=True, eq=False)
class EllipsoidSet:
    """``{c : (c-center)' cov^-1 (c-center) <= radius}``; radius is squared."""

    center: np.ndarray
    cov: np.ndarray
    radius: float

    def __post_init__(self):
        if not self.radius >= 0:
            raise CromsError("ellipsoid radius must be nonnegative")
        object.__setattr__(self, "center", _frozen(np.asarray(self.center, dtype=float)))
        object.__setattr__(self, "cov", _frozen(np.asarray(self.cov, dtype=float)))

    is_empty = False


@dataclass(frozen=True, eq=False)
class LabelGrid:
    """Regular product grid used to discretize real-vector labels."""

    axes: tuple[np.ndarray, ...]

    def __post_init__(self):
        axes = tuple(_frozen(np.asarray(a, dtype=float)) for a in self.axes)
        if not axes or any(a.ndim != 1 or len(a) < 1 for a in axes):
            raise CromsError("grid axes must be nonempty 1-D arrays")
        if any(np.any(np.diff(a) <= 0) for a in axes):
            raise CromsError("grid axes must be strictly increasing")
        object.__setattr__(self, "axes", axes)
        mesh = np.meshgrid(*axes, indexing="ij")
        object.__setattr__(self, "points", _frozen(np.column_stack([m.ravel() for m in mesh])))

    points: np.ndarray = field(init=False, repr=False)

    @classmethod
    def around(cls, ys, margin: float = 0.25, per_axis: int = 25, cap: int = 625) -> "LabelGrid":
        """Grid over ``[min - r, max + r]`` per coordinate, ``r = margin * range``."""
        ys = np.asarray(ys, dtype=float)
        if ys.ndim == 1:
            ys = ys[:, None]
        if len(ys) == 0:
            raise EmptyInputError("cannot build a grid from no labels")
        p = ys.shape[1]
        per_axis = max(1, min(per_axis, int(np.floor(cap ** (1.0 / p) + 1e-9))))
        lo, hi = ys.min(axis=0), ys.max(axis=0)
        r = margin * (hi - lo)
        axes = []
        for a, b, rr in zip(lo, hi, r):
            if b - a == 0:
                axes.append(np.array([a]) if per_axis == 1 else np.linspace(a - 0.5, b + 0.5, per_axis))
            else:
                axes.append(np.linspace(a - rr, b + rr, per_axis))
        return cls(tuple(axes))

    @property
    def p(self) -> int:
        return len(self.axes)

    @property
    def cell_diagonal(self) -> float:
        steps = [(a[1] - a[0]) if len(a) > 1 else 0.0 for a in self.axes]
        return float(np.sqrt(np.sum(np.square(steps))))

    def covers(self, ys) -> bool:
        """True when every label lies inside the grid's bounding box."""
        ys = np.asarray(ys, dtype=float).reshape(-1, self.p)
        lo = np.array([a[0] for a in self.axes])
        hi = np.array([a[-1] for a in self.axes])
        return bool(np.all(ys >= lo) and np.all(ys <= hi))

    def snap_index(self, ys) -> np.ndarray:
        """Flat index of the nearest grid point (ties go to the lower node)."""
        ys = np.asarray(ys, dtype=float).reshape(-1, self.p)
        flat = np.zeros(len(ys), dtype=np.int64)
        for j, a in enumerate(self.axes):
            k = np.clip(np.searchsorted(a, ys[:, j]), 1, max(len(a) - 1, 1))
            if len(a) == 1:
                idx = np.zeros(len(ys), dtype=np.int64)
            else:
                left = a[k - 1]
                right = a[k]
                idx = np.where(ys[:, j] - left <= right - ys[:, j], k - 1, k)
            flat = flat * len(a) + idx
        return flat

    def snap(self, ys) -> np.ndarray:
        return self.points[self.snap_index(ys)]

    def cell_vertices(self, indices) -> np.ndarray:
        """Distinct corners of the snapping cells of the given grid points.

        A cell is the box of labels that snap to its point, clipped to the
        grid's bounding box, so a linear loss over the union of cells peaks
        at one of these corners.
        """
        idx = np.asarray(indices, dtype=np.int64).reshape(-1)
        if idx.size == 0:
            return np.zeros((0, self.p))
        sub = np.unravel_index(idx, tuple(len(a) for a in self.axes))
        sides = []
        for a, k in zip(self.axes, sub):
            lo = np.where(k > 0, (a[np.maximum(k - 1, 0)] + a[k]) / 2, a[k])
            hi = np.where(k < len(a) - 1, (a[np.minimum(k + 1, len(a) - 1)] + a[k]) / 2, a[k])
            sides.append((lo, hi))
        corners = []
        for bits in np.ndindex(*(2,) * self.p):
            corners.append(np.column_stack([sides[j][b] for j, b in enumerate(bits)]))
        return np.unique(np.vstack(corners), axis=0)


@dataclass(frozen=True, eq=False)
class FinitePointSet:
    """A finite set of label vectors, optionally tied to the grid it came from."""

    points: np.ndarray
    grid: LabelGrid | None = None
    indices: tuple[int, ...] = ()

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(0, 0) if pts.size == 0 else pts[None, :]
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))

    @property
    def is_empty(self) -> bool:
        return len(self.points) == 0


@dataclass(frozen=True)
class SublevelSet:
    """``{y : S_model(x, y) <= threshold}`` with no closed form attached."""

    model_id: int
    threshold: float

    is_empty = False


PredictionSetDescriptor = Union[FiniteLabelSet, BoxSet, EllipsoidSet, FinitePointSet, SublevelSet]


@dataclass(frozen=True, eq=False)
class RobustSolution:
    """A decision and its worst-case loss over the prediction set.

    ``set_was_empty`` marks the fallback used when the set had no members:
    the decision is then the robust one over the full label space.
    """

    decision: object
    worst_case_loss: float
    set_was_empty: bool = False
