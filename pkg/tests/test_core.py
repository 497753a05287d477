import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from croms.core import (
    BoxSet,
    CromsError,
    DimensionError,
    EllipsoidSet,
    EmptyInputError,
    FiniteLabelSet,
    FiniteMatrixLoss,
    LabeledDataset,
    LabelGrid,
    PortfolioLoss,
    ScoreModel,
    evaluate_scores,
    loss,
    realized_losses,
)
from croms.synth import covid_loss


def const(v):
    v = np.asarray(v, dtype=float)
    return lambda xs: np.tile(v, (len(xs), 1))


def test_box_score_is_sup_norm_of_residual():
    m = ScoreModel.box(0, const([0.0, 0.0]))
    assert m.score([1.0], [3.0, -4.0]) == 4.0


def test_softmax_score_is_one_minus_probability():
    m = ScoreModel.softmax(0, const([0.7, 0.2, 0.1]), 3)
    assert m.score([0.0], 0) == pytest.approx(0.3, abs=1e-15)


def test_ellipsoid_score_is_squared_mahalanobis():
    m = ScoreModel.ellipsoid(0, const([0.0, 0.0]), lambda xs: np.broadcast_to(np.eye(2), (len(xs), 2, 2)))
    assert m.score([0.0], [1.0, 1.0]) == 2.0


def test_table1_losses():
    M = covid_loss()
    assert loss(M, M.label_index("Normal"), M.decision_index("No Action")) == 0.0
    assert loss(M, M.label_index("COVID-19"), M.decision_index("Quarantine")) == 0.0


def test_portfolio_loss():
    assert loss(PortfolioLoss(2), [1.0, 2.0], [0.5, 0.5]) == -1.5


def test_loss_errors():
    with pytest.raises(DimensionError):
        loss(covid_loss(), 4, 0)
    with pytest.raises(DimensionError):
        loss(PortfolioLoss(2), [1.0], [1.0, 0.0])


def test_matrix_loss_is_bit_identical():
    M = np.array([[0.1, 1 / 3], [np.pi, 2.0 ** -40]])
    spec = FiniteMatrixLoss(M)
    for y in range(2):
        for z in range(2):
            assert loss(spec, y, z) == M[y, z]


def test_dataset_validation():
    with pytest.raises(DimensionError):
        LabeledDataset(np.zeros((3, 2)), np.zeros(2), "classification")
    with pytest.raises(EmptyInputError):
        LabeledDataset(np.zeros((0, 2)), np.zeros(0), "classification")
    with pytest.raises(CromsError):
        LabeledDataset(np.zeros((2, 1)), [0.5, 1.0], "classification")
    d = LabeledDataset(np.zeros((2, 1)), np.ones((2, 3)), "regression")
    assert d.p == 3 and d.d == 1
    with pytest.raises(ValueError):
        d.xs[0, 0] = 1.0  # frozen


def test_evaluate_scores_dimension_mismatch():
    m = ScoreModel.box(0, const([0.0, 0.0]))
    with pytest.raises(DimensionError):
        evaluate_scores(m, LabeledDataset(np.zeros((2, 1)), np.zeros((2, 3)), "regression"))


@settings(max_examples=50, deadline=None)
@given(hnp.arrays(float, (6, 2), elements=st.floats(-5, 5)), st.permutations(range(6)))
def test_evaluate_scores_is_permutation_equivariant(ys, perm):
    m = ScoreModel.box(0, lambda xs: np.column_stack([xs[:, 0], -xs[:, 0]]))
    data = LabeledDataset(np.arange(6.0)[:, None], ys, "regression")
    perm = np.array(perm)
    np.testing.assert_array_equal(evaluate_scores(m, data)[perm], evaluate_scores(m, data.take(perm)))


@settings(max_examples=50, deadline=None)
@given(hnp.arrays(float, (4, 3), elements=st.floats(-10, 10)))
def test_box_score_vanishes_at_the_mean(xs):
    m = ScoreModel.box(0, lambda x: 2 * x[:, :2] + 1)
    assert np.all(m.scores(xs, 2 * xs[:, :2] + 1) == 0)


def test_set_invariants():
    assert FiniteLabelSet(()).is_empty
    assert FiniteLabelSet((3, 1, 3)).labels == (1, 3)
    with pytest.raises(CromsError):
        BoxSet([0.0], -1.0)
    with pytest.raises(CromsError):
        EllipsoidSet([0.0], [[1.0]], -0.1)
    assert BoxSet([0.0], np.inf).half_width == np.inf


def test_realized_losses_rowwise():
    spec = FiniteMatrixLoss([[0, 1], [2, 3]])
    np.testing.assert_array_equal(realized_losses(spec, [0, 1, 1], [1, 0, 1]), [1, 2, 3])
    np.testing.assert_array_equal(realized_losses(PortfolioLoss(2), [[1, 2], [3, 4]], [[1, 0], [0, 1]]), [-1, -4])


def test_label_grid_snapping_and_cells():
    g = LabelGrid((np.array([0.0, 1.0, 2.0]), np.array([0.0, 2.0])))
    assert g.points.shape == (6, 2)
    idx = g.snap_index([[0.4, 1.2], [1.5, -3.0]])
    np.testing.assert_array_equal(g.points[idx], [[0.0, 2.0], [1.0, 0.0]])  # 1.5 ties to the lower node
    assert g.covers([[2.0, 2.0]]) and not g.covers([[2.1, 0.0]])
    corners = g.cell_vertices([g.snap_index([[1.0, 0.0]])[0]])
    np.testing.assert_array_equal(corners, [[0.5, 0.0], [0.5, 1.0], [1.5, 0.0], [1.5, 1.0]])


@settings(max_examples=60, deadline=None)
@given(hnp.arrays(float, (5, 2), elements=st.floats(-3, 3)))
def test_label_in_grid_lies_in_its_snapped_cell(ys):
    g = LabelGrid.around(np.vstack([ys, [[-3.0, -3.0], [3.0, 3.0]]]), per_axis=7)
    for y in ys:
        box = g.cell_vertices(g.snap_index(y))
        assert np.all(box.min(axis=0) <= y + 1e-12) and np.all(y <= box.max(axis=0) + 1e-12)
