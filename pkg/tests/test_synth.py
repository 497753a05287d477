import numpy as np
import pytest

from croms import synth
from croms.core import CromsError, LabeledDataset, ScoreModel


def test_greedy_score_examples():
    P = np.array([[0.5, 0.3, 0.2]])
    S = synth.greedy_scores(P, 0.0)
    assert S[0, 0] == 0.5  # top class: its own probability
    assert S[0, 2] == pytest.approx(1.0, abs=1e-15)  # bottom class: all the mass
    assert synth.greedy_scores(P, 0.1)[0, 1] == pytest.approx(0.8 + 0.1 * (1 + 2), abs=1e-15)


def test_greedy_model_wraps_classifier():
    clf = ScoreModel.softmax(0, lambda xs: np.tile([0.2, 0.5, 0.3], (len(xs), 1)), 3)
    g = synth.make_greedy_score_model(clf, 0.0, model_id=4)
    assert g.id == 4
    np.testing.assert_allclose(g.label_scores(np.zeros((1, 1)))[0], [1.0, 0.5, 0.8])
    with pytest.raises(CromsError):
        synth.make_greedy_score_model(clf, -0.1)


def test_penalty_grid():
    np.testing.assert_allclose(synth.penalty_grid(5), [0.0, 0.05, 0.1, 0.15, 0.2])
    np.testing.assert_array_equal(synth.penalty_grid(1), [0.0])


def test_regression_mean_examples():
    np.testing.assert_array_equal(synth.regression_mean([[1.0, 1.0], [0.0, 0.0]]), [[-2.0, -2.0], [0.0, 0.0]])


def test_regression_noise_covariance():
    spec = synth.GeneratorSpec("regression_shift", 40_000, seed=3)
    d = synth.generate(spec)
    R = d.ys - synth.regression_mean(d.xs)
    np.testing.assert_allclose(np.cov(R.T), synth.REG_NOISE_COV, atol=0.02)
    zero = synth.GeneratorSpec("regression_shift", 5, seed=3, params={"noise_cov": np.zeros((2, 2))})
    z = synth.generate(zero)
    np.testing.assert_array_equal(z.ys, synth.regression_mean(z.xs))


def test_generators_are_seeded_and_shaped():
    for family, d, K in (("avg_classification", 7, 5), ("ind_classification", 3, 3)):
        spec = synth.GeneratorSpec(family, 50, seed=9)
        a, b = synth.generate(spec), synth.generate(spec)
        np.testing.assert_array_equal(a.xs, b.xs)
        np.testing.assert_array_equal(a.ys, b.ys)
        assert a.xs.shape == (50, d) and a.ys.max() < K


def test_avg_covariates_binary_part():
    d = synth.generate(synth.GeneratorSpec("avg_classification", 2000, seed=1))
    assert set(np.unique(d.xs[:, :4])) <= {0.0, 1.0}
    assert abs(d.xs[:, :4].mean() - 0.5) < 0.03


def test_class_probabilities_are_distributions(rng):
    P = synth.avg_class_probs(rng.normal(size=(10, 7)), synth.AVG_A)
    np.testing.assert_allclose(P.sum(axis=1), 1.0)
    assert np.all(P >= 0)


def test_logit_recovers_separable_labels(rng):
    x = rng.normal(size=(400, 2))
    y = (x[:, 0] > 0).astype(int)
    fit = synth.fit_multinomial_logit(LabeledDataset(x, y, "classification"), n_labels=2)
    pred = np.argmin(fit.model.label_scores(x), axis=1)
    assert np.mean(pred == y) > 0.95
    sub = synth.train_multinomial_logit(LabeledDataset(x, y, "classification"), [1], n_labels=2)
    assert np.mean(np.argmin(sub.label_scores(x), axis=1) == y) < 0.7  # the useless feature


def test_pool_models_and_bandwidth(rng):
    models = synth.shifted_pool_family(rng, size=300)
    assert len(models) == len(synth.REG_POOL_CENTERS)
    assert synth.neff_bandwidth(2.0, 16, 2) == 1.0
