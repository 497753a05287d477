import numpy as np
import pytest

from croms.core import FiniteMatrixLoss, LabeledDataset, ScoreModel

ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])


def table_model(model_id: int, weights: np.ndarray, decimals: int | None = 1) -> ScoreModel:
    """Classification score ``round(x @ weights)``; rounding forces ties."""
    W = np.array(weights, dtype=float)

    def fn(xs, _W=W):
        s = np.asarray(xs, dtype=float) @ _W
        return np.round(s, decimals) if decimals is not None else s

    return ScoreModel.classifier(model_id, fn, W.shape[1])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def fig1_matrix():
    return FiniteMatrixLoss(np.array([
        [0, 3, 5, 7, 10],
        [2, 0, 4, 6, 9],
        [2.5, 4.5, 0, 7, 8],
        [3, 5, 6, 0, 7],
        [3.5, 6, 8, 10, 0],
    ]))


def random_classification_fixture(rng, n=None, K=None, L=None, d=3):
    n = n or int(rng.integers(1, 31))
    K = K or int(rng.integers(2, 7))
    L = L or int(rng.integers(1, 5))
    xs = rng.standard_normal((n, d))
    ys = rng.integers(0, K, size=n)
    models = [table_model(k, rng.standard_normal((d, K))) for k in range(L)]
    M = rng.integers(0, 10, size=(K, K)).astype(float)
    return LabeledDataset(xs, ys, "classification"), models, FiniteMatrixLoss(M)
