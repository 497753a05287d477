import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from croms.core import BoxSet, CromsError, EllipsoidSet, FiniteLabelSet, FinitePointSet, PortfolioLoss
from croms.cro import (
    PgdConfig,
    pareto_minimal,
    project_simplex,
    solve_box_portfolio,
    solve_ellipsoid_portfolio,
    solve_finite,
    solve_finite_masks,
    solve_finite_points,
    solve_set,
)
from croms.synth import covid_loss

import oracles


def test_covid_decisions():
    M = covid_loss()
    L = M.label_index
    cases = [
        ([L("Normal")], "No Action", 0.0),
        ([L("COVID-19"), L("Pneumonia")], "Additional Testing", 3.0),
        (range(4), "Additional Testing", 6.0),
    ]
    for labels, decision, worst in cases:
        sol = solve_finite(M, labels)
        assert M.decision_names[sol.decision] == decision
        assert sol.worst_case_loss == worst


def test_empty_label_set_falls_back_to_all_labels():
    sol = solve_finite(covid_loss(), [])
    assert sol.set_was_empty and sol.worst_case_loss == 6.0


def test_solve_finite_doctest_and_ties():
    assert solve_finite([[0, 1], [5, 2]], [0, 1]).decision == 1
    assert solve_finite([[1, 1], [1, 1]], [0, 1]).decision == 0


@settings(max_examples=200, deadline=None)
@given(hnp.arrays(float, st.tuples(st.integers(1, 5), st.integers(1, 4)), elements=st.integers(-5, 5).map(float)),
       st.data())
def test_finite_matches_enumeration(M, data):
    K = M.shape[0]
    mask = data.draw(hnp.arrays(bool, K))
    dec, worst, empty = solve_finite_masks(M, mask[None, :])
    z, w = oracles.robust_finite(M, np.flatnonzero(mask))
    assert (int(dec[0]), float(worst[0])) == (z, w)
    assert bool(empty[0]) == (not mask.any())


def test_box_examples():
    sol = solve_box_portfolio([0.5, 0.2], 0.1)
    np.testing.assert_array_equal(sol.decision, [1.0, 0.0])
    assert sol.worst_case_loss == pytest.approx(-0.4, abs=1e-15)
    sol = solve_box_portfolio([0.3, 0.3], 0.0)
    assert sol.worst_case_loss == pytest.approx(-0.3, abs=1e-15)


@settings(max_examples=150, deadline=None)
@given(hnp.arrays(float, 3, elements=st.floats(-3, 3)), st.floats(0, 2))
def test_box_matches_vertex_enumeration(mu, q):
    sol = solve_box_portfolio(mu, q)
    worst_vertex = max(-float(np.dot(mu + q * np.array(s), sol.decision))
                       for s in itertools.product((-1, 1), repeat=3))
    assert worst_vertex == pytest.approx(sol.worst_case_loss, abs=1e-12)
    # a pure asset is optimal, so no simplex vertex does better
    for k in range(3):
        assert -(mu[k] - q) >= sol.worst_case_loss - 1e-12


def test_ellipsoid_far_mean():
    sol = solve_ellipsoid_portfolio([10.0, 0.0], np.eye(2), 1.0)
    assert sol.worst_case_loss == pytest.approx(-9.0, abs=1e-6)
    assert sol.decision[0] == pytest.approx(1.0, abs=1e-6)


def test_ellipsoid_symmetric_case_is_closed_form():
    # equal means and identity covariance: the uniform portfolio, value -mu + sqrt(q/2)
    sol = solve_ellipsoid_portfolio([1.0, 1.0], np.eye(2), 0.5)
    assert sol.worst_case_loss == pytest.approx(-1.0 + np.sqrt(0.25), abs=1e-6)
    np.testing.assert_allclose(sol.decision, [0.5, 0.5], atol=1e-4)


@settings(max_examples=25, deadline=None)
@given(hnp.arrays(float, 2, elements=st.floats(-2, 2)), st.floats(0.01, 2.0), st.integers(0, 2**16))
def test_ellipsoid_against_simplex_grid(mu, q, seed):
    A = np.random.default_rng(seed).normal(size=(2, 2))
    S = A @ A.T + 0.2 * np.eye(2)
    sol = solve_ellipsoid_portfolio(mu, S, q)
    f = lambda Z: -Z @ mu + np.sqrt(q * np.einsum("bi,ij,bj->b", Z, S, Z))
    assert f(sol.decision[None, :])[0] == pytest.approx(sol.worst_case_loss, abs=1e-9)
    assert sol.worst_case_loss <= oracles.simplex_grid_min(f) + 1e-6


def test_ellipsoid_rejects_non_spd():
    with pytest.raises(CromsError):
        solve_ellipsoid_portfolio([0.0, 0.0], [[1.0, 0.0], [0.0, -1.0]], 1.0)


def test_finite_points_doctest_and_dominance():
    assert solve_finite_points(None, [[1.0, 0.0]]).worst_case_loss == -1.0
    P = [[1.0, 1.0], [2.0, 2.0], [0.0, 3.0]]
    np.testing.assert_array_equal(pareto_minimal(P), [[0.0, 3.0], [1.0, 1.0]])


def test_finite_points_two_assets():
    # max(-z1, -z2) is minimized by the uniform portfolio
    sol = solve_finite_points(None, [[1.0, 0.0], [0.0, 1.0]])
    assert sol.worst_case_loss == pytest.approx(-0.5, abs=1e-3)


@settings(max_examples=20, deadline=None)
@given(hnp.arrays(float, st.tuples(st.integers(1, 6), st.just(2)), elements=st.floats(-2, 2)))
def test_finite_points_against_simplex_grid(P):
    sol = solve_finite_points(PortfolioLoss(2), P)
    f = lambda Z: np.max(-Z @ P.T, axis=1)
    assert f(sol.decision[None, :])[0] == pytest.approx(sol.worst_case_loss, abs=1e-12)
    assert sol.worst_case_loss <= oracles.simplex_grid_min(f) + 1e-3


def test_simplex_projection_examples():
    np.testing.assert_allclose(project_simplex([0.5, 0.5]), [0.5, 0.5])
    np.testing.assert_allclose(project_simplex([2.0, 0.0]), [1.0, 0.0])
    np.testing.assert_allclose(project_simplex([0.0, 0.0, 0.0]), [1 / 3] * 3)
    np.testing.assert_allclose(project_simplex([-1.0, 3.0]), [0.0, 1.0])


@settings(max_examples=200, deadline=None)
@given(hnp.arrays(float, st.integers(1, 6), elements=st.floats(-10, 10)))
def test_simplex_projection_properties(v):
    z = project_simplex(v)
    assert np.all(z >= 0) and z.sum() == pytest.approx(1.0, abs=1e-12)
    # optimality: (v - z) . (w - z) <= 0 for every vertex w of the simplex
    for k in range(len(v)):
        w = np.zeros(len(v))
        w[k] = 1.0
        assert (v - z) @ (w - z) <= 1e-9
    np.testing.assert_allclose(project_simplex(z), z, atol=1e-12)


def test_dispatch():
    M = covid_loss()
    assert solve_set(FiniteLabelSet((0,)), M).worst_case_loss == 0.0
    assert solve_set(BoxSet([0.5, 0.2], 0.1), PortfolioLoss(2)).worst_case_loss == pytest.approx(-0.4)
    e = solve_set(EllipsoidSet([10.0, 0.0], np.eye(2), 1.0), PortfolioLoss(2))
    assert e.worst_case_loss == pytest.approx(-9.0, abs=1e-6)
    assert solve_set(FinitePointSet(np.array([[1.0, 0.0]])), PortfolioLoss(2)).worst_case_loss == -1.0
    with pytest.raises(CromsError):
        solve_set(BoxSet([0.0], 1.0), M)


def test_pgd_config_validation():
    with pytest.raises(CromsError):
        PgdConfig(max_iters=0)
    with pytest.raises(CromsError):
        PgdConfig(step_size=0.0)
    np.testing.assert_allclose(PgdConfig(init=(3.0, 1.0)).start(2), [1.0, 0.0])
