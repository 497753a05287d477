"""Evaluation metrics: marginal rates, ball-conditional rates, group gaps."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .core import CromsError, EmptyInputError, LossSpec, as_2d, realized_losses
from .quantile import empirical_quantile

CLOSED_FORM_TOL = 1e-9
PGD_TOL = 1e-3


@dataclass(frozen=True, eq=False)
class EvalRecord:
    x: np.ndarray
    y_true: object
    covered: bool
    realized_loss: float
    worst_case_loss: float
    misrobust: bool
    lambda_hat: int
    set_was_empty: bool = False


def make_records(outcome, xs, ys, spec: LossSpec, tol: float = CLOSED_FORM_TOL) -> list[EvalRecord]:
    """One record per test point of a selector outcome.

    A point is misrobust when its realized loss exceeds the reported worst
    case by more than ``tol``.
    """
    xs = as_2d(xs)
    ys = np.asarray(ys)
    covered = outcome.covered(ys)
    realized = realized_losses(spec, ys, outcome.decisions)
    worst = np.asarray(outcome.worst, dtype=float)
    mis = realized > worst + tol
    return [
        EvalRecord(xs[t], ys[t], bool(covered[t]), float(realized[t]), float(worst[t]), bool(mis[t]),
                   int(outcome.lambda_hat[t]), bool(outcome.empty[t]))
        for t in range(len(xs))
    ]


def _need(records) -> None:
    if len(records) == 0:
        raise EmptyInputError("no evaluation records")


def marginal_miscoverage(records: Sequence[EvalRecord]) -> float:
    _need(records)
    return sum(not r.covered for r in records) / len(records)


def marginal_misrobustness(records: Sequence[EvalRecord]) -> float:
    _need(records)
    return sum(r.misrobust for r in records) / len(records)


def average_loss(records: Sequence[EvalRecord]) -> float:
    _need(records)
    return math.fsum(r.realized_loss for r in records) / len(records)


# --- balls --------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Ball:
    """Closed Euclidean ball. ``bumped`` marks a zero radius raised to the
    smallest positive distance; ``degenerate`` a ball that stayed at zero."""

    center: np.ndarray
    radius: float
    bumped: bool = False
    degenerate: bool = False

    def contains(self, xs) -> np.ndarray:
        return np.linalg.norm(as_2d(xs) - self.center, axis=1) <= self.radius


def sample_balls(test_xs, count: int, mass_percentile: float, rng: np.random.Generator) -> list[Ball]:
    """Balls centered at random test points holding ``mass_percentile`` of them."""
    if not 0.0 < mass_percentile <= 1.0:
        raise CromsError("mass_percentile must lie in (0, 1]")
    X = as_2d(test_xs)
    if len(X) == 0:
        raise EmptyInputError("no test covariates")
    balls = []
    for c in rng.integers(len(X), size=count):
        d = np.linalg.norm(X - X[c], axis=1)
        r = empirical_quantile(d, mass_percentile)
        bumped = degenerate = False
        if r == 0.0:
            pos = d[d > 0]
            if pos.size:
                r, bumped = float(pos.min()), True
            else:
                degenerate = True
        balls.append(Ball(X[c].copy(), float(r), bumped, degenerate))
    return balls


class BallRates(NamedTuple):
    rates: np.ndarray  # NaN where a ball holds no record
    skipped: int


def ball_rates(records: Sequence[EvalRecord], balls: Sequence[Ball], which: str = "miscoverage") -> BallRates:
    _need(records)
    if which not in ("miscoverage", "misrobustness"):
        raise CromsError(f"unknown rate {which!r}")
    xs = np.vstack([r.x for r in records])
    bad = np.array([(not r.covered) if which == "miscoverage" else r.misrobust for r in records], dtype=float)
    rates = np.full(len(balls), np.nan)
    for b, ball in enumerate(balls):
        inside = ball.contains(xs)
        if inside.any():
            rates[b] = bad[inside].mean()
    return BallRates(rates, int(np.isnan(rates).sum()))


def worst_case_conditional(records, balls, which: str = "miscoverage") -> float:
    """Largest within-ball rate; balls with no members are skipped."""
    r = ball_rates(records, balls, which).rates
    if np.all(np.isnan(r)):
        raise EmptyInputError("every ball is empty")
    return float(np.nanmax(r))


def best_case_conditional(records, balls, which: str = "miscoverage") -> float:
    r = ball_rates(records, balls, which).rates
    if np.all(np.isnan(r)):
        raise EmptyInputError("every ball is empty")
    return float(np.nanmin(r))


# --- groups -------------------------------------------------------------------

@dataclass(frozen=True)
class Group:
    """``lo <= x[feature] < hi`` (bounds may be infinite)."""

    name: str
    feature: int
    lo: float = -math.inf
    hi: float = math.inf
    lo_strict: bool = False
    hi_strict: bool = True

    def __call__(self, x) -> bool:
        v = float(np.asarray(x, dtype=float).reshape(-1)[self.feature])
        above = v > self.lo if self.lo_strict else v >= self.lo
        below = v < self.hi if self.hi_strict else v <= self.hi
        return above and below


_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?|[-+]?inf"
_CHAIN = re.compile(rf"^\s*(?:(?P<lo>{_NUM})\s*(?P<lop><=|<)\s*)?x(?P<f>\d+)\s*(?:(?P<op>>=|>|<=|<)\s*(?P<b>{_NUM}))?\s*$")


def parse_group(text: str, name: str | None = None) -> Group:
    """Parse ``x1>=1.2``, ``0<=x1<1.2`` or ``x2<1`` (features are 1-based).

    >>> parse_group("0<=x1<1.2")(np.array([0.5, 9.0]))
    True
    """
    m = _CHAIN.match(text)
    if not m or (m["lo"] is not None and m["op"] in (">", ">=")):
        raise CromsError(f"cannot parse group {text!r}")
    f = int(m["f"]) - 1
    if f < 0:
        raise CromsError("features are numbered from 1")
    lo, hi, lo_strict, hi_strict = -math.inf, math.inf, False, True
    if m["lo"] is not None:
        lo, lo_strict = float(m["lo"]), m["lop"] == "<"
    if m["op"] in ("<", "<="):
        hi, hi_strict = float(m["b"]), m["op"] == "<"
    elif m["op"] in (">", ">="):
        lo, lo_strict = float(m["b"]), m["op"] == ">"
    return Group(name or text.replace(" ", ""), f, lo, hi, lo_strict, hi_strict)


def _group_members(records, partition: Sequence[Callable]):
    return [[r for r in records if g(r.x)] for g in partition]


def group_conditional_loss(records, partition: Sequence[Callable]) -> list[float | None]:
    """Mean realized loss per group; ``None`` for a group with no members."""
    _need(records)
    return [average_loss(m) if m else None for m in _group_members(records, partition)]


def _gap(records, partition, alpha: float, ok: Callable[[EvalRecord], bool]) -> float:
    _need(records)
    total = []
    for members in _group_members(records, partition):
        if members:
            rate = sum(ok(r) for r in members) / len(members)
            total.append(abs(rate - (1.0 - alpha)))
    return math.fsum(total)


def cov_gap(records, partition, alpha: float) -> float:
    """Sum over nonempty groups of ``|coverage - (1 - alpha)|``."""
    return _gap(records, partition, alpha, lambda r: r.covered)


def rob_gap(records, partition, alpha: float) -> float:
    return _gap(records, partition, alpha, lambda r: not r.misrobust)
