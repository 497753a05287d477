import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from croms.core import CromsError, EmptyInputError
from croms.metrics import (
    Ball,
    EvalRecord,
    average_loss,
    best_case_conditional,
    cov_gap,
    group_conditional_loss,
    marginal_miscoverage,
    marginal_misrobustness,
    parse_group,
    rob_gap,
    sample_balls,
    worst_case_conditional,
)


def rec(x, covered=True, loss=0.0, misrobust=False):
    return EvalRecord(np.atleast_1d(np.asarray(x, dtype=float)), 0, covered, loss, loss, misrobust, 0)


def test_marginal_rates():
    rs = [rec(0, True, 1.0), rec(1, False, 2.0, True), rec(2, True, 3.0), rec(3, False, 6.0)]
    assert marginal_miscoverage(rs) == 0.5
    assert marginal_misrobustness(rs) == 0.25
    assert average_loss(rs) == 3.0
    with pytest.raises(EmptyInputError):
        marginal_miscoverage([])


def test_ball_examples(rng):
    X = rng.normal(size=(20, 2))
    for b in sample_balls(X, 5, 1.0, rng):
        assert b.contains(X).all()
    (b,) = sample_balls(np.zeros((1, 2)), 1, 0.5, rng)
    assert b.degenerate and b.radius == 0.0
    line = np.arange(5.0)[:, None]
    for b in sample_balls(line, 10, 0.4, rng):
        d = np.sort(np.abs(line[:, 0] - b.center[0]))
        assert b.radius == d[1]
    with pytest.raises(CromsError):
        sample_balls(line, 1, 0.0, rng)


def test_duplicate_centre_radius_is_bumped(rng):
    X = np.array([[0.0], [0.0], [0.0], [2.0]])
    balls = sample_balls(X, 20, 0.25, np.random.default_rng(0))
    for b in balls:
        if b.center[0] == 0.0:
            assert b.bumped and b.radius == 2.0


def test_worst_case_conditional_examples():
    rs = [rec(i, covered=i % 2 == 0) for i in range(10)]
    everything = [Ball(np.array([4.5]), 100.0)]
    assert worst_case_conditional(rs, everything) == 0.5
    rs = [rec(i, covered=i < 8) for i in range(10)]
    balls = [Ball(np.array([0.0]), 1.0), Ball(np.array([8.5]), 0.5), Ball(np.array([50.0]), 1.0)]
    assert worst_case_conditional(rs, balls) == 1.0
    assert best_case_conditional(rs, balls) == 0.0
    with pytest.raises(EmptyInputError):
        worst_case_conditional(rs, [Ball(np.array([50.0]), 1.0)])


def test_group_examples():
    rs = [rec([0.0], loss=1.0), rec([0.5], loss=1.0), rec([2.0], loss=3.0)]
    assert group_conditional_loss(rs, [parse_group("x1>=-inf")]) == [average_loss(rs)]
    assert group_conditional_loss(rs, [parse_group("x1<1"), parse_group("x1>=1")]) == [1.0, 3.0]
    assert group_conditional_loss(rs, [parse_group("x1>10")]) == [None]


def test_parse_group_thresholds():
    g1 = parse_group("x1>=1.2")
    assert g1([1.2, 0, 0]) and not g1([1.19, 0, 0])
    g2 = parse_group("0<=x1<1.2")
    assert g2([0.0]) and not g2([1.2]) and not g2([-0.1])
    assert parse_group("x2 < 1")([5.0, 0.5])
    for bad in ("x0<1", "y1<2", "1<x1>2"):
        with pytest.raises(CromsError):
            parse_group(bad)


def test_gap_examples():
    groups = [parse_group(f"{k}<=x1<{k + 1}") for k in range(4)]
    full = [rec([k + 0.5]) for k in range(4)]
    assert cov_gap(full, groups, 0.1) == pytest.approx(0.4)
    assert rob_gap(full, groups, 0.1) == pytest.approx(0.4)
    exact = [rec([k + 0.5], covered=j < 9) for k in range(4) for j in range(10)]
    assert cov_gap(exact, groups, 0.1) == pytest.approx(0.0, abs=1e-12)
    two = [rec([0.5], covered=j < 8) for j in range(10)] + [rec([1.5]) for _ in range(10)]
    assert cov_gap(two, groups[:2], 0.1) == pytest.approx(0.2)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(-3, 3), st.booleans()), min_size=1, max_size=30), st.floats(0.01, 0.5))
def test_gap_is_nonnegative_and_bounded(rows, alpha):
    rs = [rec([x], covered=c) for x, c in rows]
    groups = [parse_group("x1<0"), parse_group("x1>=0")]
    g = cov_gap(rs, groups, alpha)
    assert 0.0 <= g <= 2.0
