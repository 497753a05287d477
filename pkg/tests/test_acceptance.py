"""Acceptance criteria 1 to 10, each at its stated tolerance.

Every test records one PASS/FAIL line, printed in the pytest terminal
summary. Run this file alone with ``pytest tests/test_acceptance.py -v``.
"""

from __future__ import annotations

from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest

from croms.cli import get_preset, run_rows
from croms.cli.main import execute
from croms.core import PortfolioLoss
from croms.cro import (
    ellipsoid_objective,
    solve_box_portfolio,
    solve_ellipsoid_portfolio,
    solve_finite,
    solve_finite_points,
)
from croms.kernel import KernelConfig
from croms.quantile import AugmentedQuantile, empirical_quantile, weighted_quantile
from croms.select import FCroms, FCroims
from croms.select.base import views

import oracles
from conftest import ACCEPTANCE, random_classification_fixture


def record(k: int, ok: bool, detail: str) -> None:
    line = f"criterion {k}: {'PASS' if ok else 'FAIL'} ({detail})"
    ACCEPTANCE[k] = line
    print(line)


def column(rows, method, key, param_value=None):
    return np.array([
        float(r[key]) for r in rows
        if r["method"] == method and (param_value is None or r["param_value"] == param_value)
    ])


# --- criteria 1 to 3 share one run ----------------------------------------------

FIG1_METHODS = ("naive-cp", "e-croms", "f-croms", "e2e-0.5")


@pytest.fixture(scope="module")
def fig1_rows():
    base = get_preset("fig1-classification")
    cfg = replace(
        base, n=200, m=100, replications=200, master_seed=11, sweep_param=None, sweep_values=(),
        methods=FIG1_METHODS, models=replace(base.models, size=5),
    )
    return run_rows(cfg, jobs=1)


def test_criterion_1_fcroms_marginal_coverage(fig1_rows):
    mis = column(fig1_rows, "f-croms", "miscoverage")
    pooled = float(mis.mean())  # every replication has the same m
    ok = 0.07 <= pooled <= 0.12
    record(1, ok, f"F-CROMS pooled miscoverage {pooled:.4f} over {len(mis)} replications, band [0.07, 0.12]")
    assert ok


def test_criterion_2_misrobustness_below_miscoverage(fig1_rows):
    bad = [
        (r["replication"], r["method"]) for r in fig1_rows
        if float(r["misrobustness"]) > float(r["miscoverage"])
    ]
    ok = not bad
    record(2, ok, f"{len(fig1_rows)} method-runs checked, {len(bad)} with misrobustness > miscoverage")
    assert ok, bad[:5]


def test_criterion_3_selection_beats_naive(fig1_rows):
    naive = column(fig1_rows, "naive-cp", "avg_loss")
    e = column(fig1_rows, "e-croms", "avg_loss")
    f = column(fig1_rows, "f-croms", "avg_loss")
    d_e, d_f = float(np.mean(e - naive)), float(np.mean(f - naive))
    ok = d_e <= 0.0 and d_f <= 0.0
    record(3, ok, f"mean paired loss difference vs Naive-CP: E-CROMS {d_e:+.4f}, F-CROMS {d_f:+.4f}")
    assert ok


# --- criterion 4 ----------------------------------------------------------------

def test_criterion_4_cached_fcroms_matches_naive():
    rng = np.random.default_rng(404)
    alphas = [Fraction(1, 10), Fraction(1, 5), Fraction(1, 4), Fraction(1, 3)]
    mismatches = 0
    for trial in range(100):
        lab, models, loss = random_classification_fixture(rng)
        alpha = alphas[trial % len(alphas)]
        K = loss.n_labels
        space = sorted(rng.choice(K, size=int(rng.integers(1, K + 1)), replace=False).tolist())
        space = sorted(set(space) | set(lab.ys.tolist()))
        x_test = rng.standard_normal((3, lab.d))
        out = FCroms(models, loss, float(alpha), label_space=space).fit(lab).predict(x_test)
        tables_lab = [m.label_scores(lab.xs) for m in models]
        for t in range(len(x_test)):
            tables_test = [m.label_scores(x_test[t:t + 1])[0] for m in models]
            acc, z, worst, chosen = oracles.naive_f_croms(tables_lab, lab.ys.tolist(), tables_test,
                                                          loss.matrix, alpha, space)
            res = out.result(t)
            same = (res.set.labels == acc and res.solution.decision == z
                    and res.solution.worst_case_loss == worst and res.lambda_hat == chosen)
            mismatches += not same
    ok = mismatches == 0
    record(4, ok, f"300 test points over 100 fixtures, {mismatches} mismatches")
    assert ok


# --- criterion 5 ----------------------------------------------------------------

def test_criterion_5_quantiles_match_sorted_oracles():
    rng = np.random.default_rng(505)
    levels = [Fraction(k, 20) for k in range(1, 21)] + [Fraction(21, 20), Fraction(99, 100), Fraction(1, 3)]
    bad = {"empirical": 0, "weighted": 0, "augmented": 0}
    for i in range(10_000):
        n = int(rng.integers(1, 40))
        vals = rng.integers(0, 12, size=n).astype(float)  # small support forces ties
        level = levels[i % len(levels)]
        if empirical_quantile(vals, float(level)) != oracles.sorted_quantile(vals, level):
            bad["empirical"] += 1
        counts = rng.integers(0, 5, size=n)
        counts[rng.integers(n)] += 1
        total = int(counts.sum())
        # dyadic totals make every float partial sum exact
        scale = 1 << 12
        ints = (counts * scale) // total
        ints[0] += scale - ints.sum()
        w = ints / scale
        wl = min(level, Fraction(1))
        if weighted_quantile(vals, w, float(wl)) != oracles.weighted_quantile_int(vals, ints.tolist(), scale, wl):
            bad["weighted"] += 1
        alpha = Fraction(int(rng.integers(1, 20)), 20)
        s = float(rng.integers(-1, 13))
        got = float(AugmentedQuantile(vals, float(alpha))(s))
        if got != oracles.augmented_quantile(vals, s, alpha):
            bad["augmented"] += 1
    ok = not any(bad.values())
    record(5, ok, f"10000 instances per quantile kind, mismatches {bad}")
    assert ok


# --- criterion 6 ----------------------------------------------------------------

def test_criterion_6_robust_solvers_match_enumeration():
    rng = np.random.default_rng(606)
    finite_bad = finite_cases = 0
    for _ in range(60):
        K, D = int(rng.integers(1, 9)), int(rng.integers(1, 9))
        M = rng.integers(0, 6, size=(K, D)).astype(float)
        for labels in oracles.all_label_subsets(K):
            sol = solve_finite(M, labels)
            z, w = oracles.robust_finite(M, labels)
            finite_cases += 1
            finite_bad += (sol.decision, sol.worst_case_loss) != (z, w)

    box_bad = 0
    for _ in range(500):
        p = int(rng.integers(1, 6))
        mu, q = rng.normal(size=p), float(rng.exponential())
        sol = solve_box_portfolio(mu, q)
        vertex = [-(mu[j] - q) for j in range(p)]  # worst case at vertex e_j
        box_bad += not (sol.worst_case_loss == min(vertex) and np.count_nonzero(sol.decision) == 1)

    gaps = []
    cases = [(np.zeros(2), np.eye(2), 1.0)]
    for _ in range(40):
        A = rng.normal(size=(2, 2))
        cases.append((rng.normal(size=2), A @ A.T + 0.1 * np.eye(2), float(rng.exponential(2.0))))
    for mu, S, q in cases:
        sol = solve_ellipsoid_portfolio(mu, S, q)
        grid = oracles.simplex_grid_min(lambda Z: ellipsoid_objective(
            Z, np.broadcast_to(mu, Z.shape), np.broadcast_to(S, (len(Z), 2, 2)), np.full(len(Z), q)))
        gaps.append(abs(sol.worst_case_loss - grid))
    reference = solve_ellipsoid_portfolio(np.zeros(2), np.eye(2), 1.0).worst_case_loss
    for _ in range(40):
        P = rng.normal(scale=3.0, size=(int(rng.integers(1, 12)), 2))
        sol = solve_finite_points(PortfolioLoss(2), P)
        grid = oracles.simplex_grid_min(lambda Z: np.max(-Z @ P.T, axis=1))
        gaps.append(abs(sol.worst_case_loss - grid))
    worst_gap = max(gaps)
    ok = finite_bad == 0 and box_bad == 0 and worst_gap <= 1e-3 and abs(reference - 0.70711) <= 1e-5
    record(6, ok, f"finite {finite_cases} cases/{finite_bad} bad, box 500/{box_bad} bad, "
                  f"PGD max grid gap {worst_gap:.2e}, unit-ellipsoid value {reference:.5f}")
    assert ok


# --- criterion 7 ----------------------------------------------------------------

def test_criterion_7_croims_conditional_behaviour():
    cfg = replace(get_preset("fig3-individualized"), m=500, replications=50, master_seed=7,
                  sweep_param="n", sweep_values=(100.0, 400.0), methods=("naive-lcp", "croims"))
    rows = run_rows(cfg, jobs=1)
    wc100 = float(column(rows, "croims", "wc_cond_miscoverage", "100.0").mean())
    wc400 = float(column(rows, "croims", "wc_cond_miscoverage", "400.0").mean())
    loss_c = float(column(rows, "croims", "avg_loss", "400.0").mean())
    loss_n = float(column(rows, "naive-lcp", "avg_loss", "400.0").mean())
    a = cfg.alpha
    ok = wc400 <= wc100 + 0.01 and a - 0.05 <= wc400 <= a + 0.08 and loss_c <= loss_n
    record(7, ok, f"CROiMS worst-case conditional miscoverage {wc100:.4f} (n=100) -> {wc400:.4f} (n=400), "
                  f"loss at n=400 CROiMS {loss_c:.4f} vs Naive-LCP {loss_n:.4f}")
    assert ok


# --- criterion 8 ----------------------------------------------------------------

def test_criterion_8_permutation_invariance():
    rng = np.random.default_rng(808)
    broken = 0
    for _ in range(5):
        lab, models, loss = random_classification_fixture(rng, n=int(rng.integers(8, 16)), K=3, L=3)
        x_test = rng.standard_normal((2, lab.d))
        base = FCroms(models, loss, 0.2).fit(lab).predict(x_test).aux["lambda_by_label"]
        kernel = KernelConfig("gaussian_sq", 1.5)
        fc = FCroims(models, loss, 0.2, kernel).fit(lab)
        test_views = views(models, x_test, loss)
        swapped = {y: fc.swapped_selections(test_views, 0, y) for y in range(3)}
        for _ in range(20):
            perm = rng.permutation(len(lab))
            plab = lab.take(perm)
            if FCroms(models, loss, 0.2).fit(plab).predict(x_test).aux["lambda_by_label"] != base:
                broken += 1
            pfc = FCroims(models, loss, 0.2, kernel).fit(plab)
            for y in range(3):
                # row j of the permuted data is row perm[j] of the original
                if not np.array_equal(pfc.swapped_selections(test_views, 0, y), swapped[y][perm]):
                    broken += 1
    ok = broken == 0
    record(8, ok, f"5 fixtures x 20 permutations, {broken} non-invariant outputs")
    assert ok


# --- criterion 9 ----------------------------------------------------------------

def test_criterion_9_regression_fcroms_coverage():
    base = get_preset("fig5-regression-shift")
    results = {}
    for size in (1, 4):
        cfg = replace(base, n=100, m=25, replications=200, master_seed=909 + size, sweep_param=None,
                      sweep_values=(), methods=("f-croms",), models=replace(base.models, size=size),
                      metrics=replace(base.metrics, names=("miscoverage", "misrobustness", "avg_loss")))
        rows = run_rows(cfg, jobs=1)
        results[size] = float(column(rows, "f-croms", "miscoverage").mean())
    ok = all(v <= 0.13 for v in results.values())
    record(9, ok, f"discretized F-CROMS miscoverage 1 candidate {results[1]:.4f}, 4 candidates {results[4]:.4f}, "
                  "limit 0.13")
    assert ok


# --- criterion 10 ---------------------------------------------------------------

def test_criterion_10_byte_identical_outputs(tmp_path):
    configs = [
        replace(get_preset("fig1-classification"), replications=4, m=20, sweep_values=(40.0, 80.0),
                models=replace(get_preset("fig1-classification").models, size=4)),
        replace(get_preset("fig3-individualized"), replications=3, m=60, sweep_values=(60.0,),
                methods=("e-croms", "croims", "naive-lcp")),
    ]
    same = True
    for c, cfg in enumerate(configs):
        outs = []
        for run, jobs in enumerate((1, 1, 8)):
            d = tmp_path / f"c{c}-r{run}"
            assert execute(cfg, d, jobs) == 0
            outs.append([(d / f).read_bytes() for f in ("results.csv", "summary.csv", "config.ini")])
        same &= outs[0] == outs[1] == outs[2]
    record(10, same, "two configs, runs with 1, 1 and 8 workers, results/summary/config bytes compared")
    assert same


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
