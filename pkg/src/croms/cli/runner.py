"""Replicated simulation runs: seeding, one replication, and the ordered worker pool."""

from __future__ import annotations

import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..core import EllipsoidGeometry, FiniteMatrixLoss, PortfolioLoss
from ..kernel import KernelConfig, select_bandwidth
from ..metrics import (
    CLOSED_FORM_TOL,
    PGD_TOL,
    average_loss,
    cov_gap,
    group_conditional_loss,
    make_records,
    marginal_miscoverage,
    marginal_misrobustness,
    parse_group,
    rob_gap,
    sample_balls,
    worst_case_conditional,
)
from ..select import E2E, Croims, ECroms, FCroims, FCroms, FCromsRegression, NaiveCP, NaiveLCP
from .. import synth
from .config import E2E as E2E_NAME, ConfigError, ExperimentConfig, validate_config

MASK64 = (1 << 64) - 1

BASE_COLUMNS = (
    "replication", "method", "param_name", "param_value",
    "miscoverage", "misrobustness", "avg_loss", "wc_cond_miscoverage",
    "wc_cond_misrobustness", "covgap", "robgap",
)
METRIC_COLUMNS = BASE_COLUMNS[4:]


def splitmix64(x: int) -> int:
    """One step of the SplitMix64 generator, used here as a 64-bit mixer."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def replication_seed(master_seed: int, r: int) -> int:
    """``seed_r = splitmix64(master_seed XOR splitmix64(r))``."""
    return splitmix64((int(master_seed) ^ splitmix64(int(r))) & MASK64)


def stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for one named purpose within a replication."""
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFF, seed >> 32, zlib.crc32(name.encode())]))


def group_columns(cfg: ExperimentConfig) -> list[str]:
    if "group_loss" not in cfg.metrics.names:
        return []
    return [f"group_loss_G{k}" for k in range(1, len(cfg.metrics.groups) + 1)]


def columns(cfg: ExperimentConfig) -> list[str]:
    return list(BASE_COLUMNS) + group_columns(cfg)


# --- building blocks -------------------------------------------------------------

_PARAM_NAMES = {"a": "A", "sigma": "Sigma", "l": "L"}


def generator_spec(cfg: ExperimentConfig, **extra) -> synth.GeneratorSpec:
    params = {_PARAM_NAMES.get(k, k): np.asarray(v, dtype=float) for k, v in cfg.generator_params}
    params.update(extra)
    return synth.GeneratorSpec(cfg.generator, cfg.n, params=params)


def make_loss(cfg: ExperimentConfig):
    if cfg.loss == "portfolio":
        return PortfolioLoss(2)
    return {"avg": synth.avg_loss, "ind": synth.ind_loss, "covid": synth.covid_loss}[cfg.loss]()


def build_models(cfg: ExperimentConfig, loss, rng: np.random.Generator) -> list:
    mc = cfg.models
    if mc.trainer == "greedy_logit":
        train = synth.generate(generator_spec(cfg), rng, mc.train_n)
        base = synth.train_multinomial_logit(train, None, synth.LogitConfig(pairwise=mc.pairwise), loss.n_labels)
        return [synth.make_greedy_score_model(base, float(lam), model_id=k)
                for k, lam in enumerate(synth.penalty_grid(mc.size, mc.penalty_max))]
    if mc.trainer == "subset_logit":
        train = synth.generate(generator_spec(cfg), rng, mc.train_n)
        lc = synth.LogitConfig(pairwise=mc.pairwise)
        return [synth.train_multinomial_logit(train, [f - 1 for f in s], lc, loss.n_labels, model_id=k)
                for k, s in enumerate(mc.subsets[:mc.size])]
    models = []
    for k, center in enumerate(mc.pool_centers[:mc.size]):
        spec = generator_spec(cfg, x_mean=np.asarray(center, dtype=float), x_cov=np.eye(2))
        pool = synth.generate(spec, rng, mc.train_n)
        if mc.trainer == "pool_box":
            models.append(synth.train_box_model(pool, model_id=k))
        else:
            models.append(synth.train_ellipsoid_model(pool, model_id=k))
    return models


def kernel_for(cfg: ExperimentConfig, lab_xs) -> KernelConfig:
    base = KernelConfig(cfg.kernel.family)
    if cfg.kernel.c is not None:
        n, d = lab_xs.shape
        return base.with_bandwidth(synth.neff_bandwidth(cfg.kernel.c, n, d))
    return base.with_bandwidth(select_bandwidth(lab_xs, cfg.kernel.target_neff, base).bandwidth)


def make_selector(method: str, cfg: ExperimentConfig, models, loss, rng, kernel):
    a = cfg.alpha
    if method == "naive-cp":
        return NaiveCP(models, loss, a, rng)
    if method == "e-croms":
        return ECroms(models, loss, a)
    if method == "f-croms":
        if isinstance(loss, FiniteMatrixLoss):
            return FCroms(models, loss, a)
        return FCromsRegression(models, loss, a, per_axis=cfg.grid_per_axis, margin=cfg.grid_margin)
    if method == "croims":
        return Croims(models, loss, a, kernel)
    if method == "naive-lcp":
        return NaiveLCP(models, loss, a, kernel, rng)
    if method == "f-croims":
        return FCroims(models, loss, a, kernel, budget=cfg.fcroims_budget)
    if m := E2E_NAME.match(method):
        return E2E(models, loss, a, float(m["f"]), rng)
    raise ConfigError(f"unknown method {method!r}")


def misrobust_tol(method: str, models, loss) -> float:
    """Closed-form solvers get the tight tolerance; gradient-based ones the loose one."""
    if isinstance(loss, FiniteMatrixLoss):
        return CLOSED_FORM_TOL
    if method == "f-croms" or any(isinstance(m.geometry, EllipsoidGeometry) for m in models):
        return PGD_TOL
    return CLOSED_FORM_TOL


def _cell(v) -> str:
    if v is None:
        return ""
    return repr(float(v))


# --- one replication -------------------------------------------------------------

def run_replication(cfg: ExperimentConfig, r: int) -> list[dict]:
    """Every (sweep value, method) row of replication ``r``, in config order."""
    seed = replication_seed(cfg.master_seed, r)
    rows = []
    groups = [parse_group(g, f"G{k}") for k, g in enumerate(cfg.metrics.groups, start=1)]
    for param, value in cfg.sweep():
        c = cfg.at(param, value)
        loss = make_loss(c)
        models = build_models(c, loss, stream(seed, "train"))
        lab = synth.generate(generator_spec(c), stream(seed, "labeled"), c.n)
        test = synth.generate(generator_spec(c), stream(seed, "test"), c.m)
        balls = sample_balls(test.xs, c.metrics.balls, c.metrics.ball_mass, stream(seed, "balls"))
        kernel = kernel_for(c, lab.xs) if any(mt in ("croims", "naive-lcp", "f-croims") for mt in c.methods) else None
        for method in c.methods:
            sel = make_selector(method, c, models, loss, stream(seed, f"method:{method}"), kernel)
            outcome = sel.fit(lab).predict(test.xs)
            records = make_records(outcome, test.xs, test.ys, loss, misrobust_tol(method, models, loss))
            row = {k: "" for k in columns(c)}
            row.update(replication=str(r), method=method, param_name=param, param_value=_cell(value))
            names = c.metrics.names
            if "miscoverage" in names:
                row["miscoverage"] = _cell(marginal_miscoverage(records))
            if "misrobustness" in names:
                row["misrobustness"] = _cell(marginal_misrobustness(records))
            if "avg_loss" in names:
                row["avg_loss"] = _cell(average_loss(records))
            if "wc_cond_miscoverage" in names:
                row["wc_cond_miscoverage"] = _cell(worst_case_conditional(records, balls, "miscoverage"))
            if "wc_cond_misrobustness" in names:
                row["wc_cond_misrobustness"] = _cell(worst_case_conditional(records, balls, "misrobustness"))
            if "covgap" in names:
                row["covgap"] = _cell(cov_gap(records, groups, c.alpha))
            if "robgap" in names:
                row["robgap"] = _cell(rob_gap(records, groups, c.alpha))
            if "group_loss" in names:
                for k, v in enumerate(group_conditional_loss(records, groups), start=1):
                    row[f"group_loss_G{k}"] = _cell(v)
            rows.append(row)
    return rows


# --- many replications -----------------------------------------------------------

@dataclass
class RunFailure(Exception):
    replication: int
    cause: BaseException
    rows: list

    def __str__(self):
        return f"replication {self.replication} failed: {self.cause}"


def check_runnable(cfg: ExperimentConfig) -> None:
    problems = validate_config(cfg)
    if problems:
        raise problems[0]
    loss = make_loss(cfg)
    k = {"avg_classification": 5, "ind_classification": 3}.get(cfg.generator)
    if k is not None and loss.n_labels != k:
        raise ConfigError(f"[experiment] loss: {cfg.loss!r} has {loss.n_labels} labels, "
                          f"{cfg.generator} has {k}")


def iter_replications(cfg: ExperimentConfig, jobs: int = 1):
    """Yield ``(r, rows)`` in replication order, whatever the worker count."""
    R = cfg.replications
    if jobs <= 1 or R == 1:
        for r in range(R):
            yield r, run_replication(cfg, r)
        return
    with ProcessPoolExecutor(max_workers=min(jobs, R)) as pool:
        futures = [pool.submit(run_replication, cfg, r) for r in range(R)]
        try:
            for r, fut in enumerate(futures):
                yield r, fut.result()
        except BaseException:
            pool.shutdown(wait=True, cancel_futures=True)
            raise


def run_rows(cfg: ExperimentConfig, jobs: int = 1) -> list[dict]:
    """All rows of the experiment; on failure the completed rows ride on the exception."""
    rows, done = [], 0
    try:
        for r, block in iter_replications(cfg, jobs):
            rows.extend(block)
            done = r + 1
    except Exception as e:
        raise RunFailure(done, e, rows) from e
    return rows


def summarize(cfg: ExperimentConfig, rows: list[dict]) -> list[dict]:
    """Mean and sample standard deviation of each metric per (sweep value, method)."""
    metric_cols = list(METRIC_COLUMNS) + group_columns(cfg)
    out = []
    for param, value in cfg.sweep():
        for method in cfg.methods:
            block = [r for r in rows if r["method"] == method and r["param_name"] == param
                     and r["param_value"] == _cell(value)]
            s = {"method": method, "param_name": param, "param_value": _cell(value), "replications": str(len(block))}
            for col in metric_cols:
                vals = [float(r[col]) for r in block if r[col] != ""]
                s[f"{col}_mean"] = _cell(math.fsum(vals) / len(vals)) if vals else ""
                if len(vals) >= 2:
                    mu = math.fsum(vals) / len(vals)
                    s[f"{col}_sd"] = _cell(math.sqrt(math.fsum((v - mu) ** 2 for v in vals) / (len(vals) - 1)))
                else:
                    s[f"{col}_sd"] = ""
            out.append(s)
    return out


def summary_columns(cfg: ExperimentConfig) -> list[str]:
    cols = ["method", "param_name", "param_value", "replications"]
    for col in list(METRIC_COLUMNS) + group_columns(cfg):
        cols += [f"{col}_mean", f"{col}_sd"]
    return cols
