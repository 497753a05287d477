"""Built-in experiment presets, pinned to the published simulation settings."""

from __future__ import annotations

from dataclasses import replace

from .config import ConfigError, ExperimentConfig, KernelSection, MetricsConfig, ModelsConfig

IND_GROUPS = ("x1>=1.2", "0<=x1<1.2", "-1.2<=x1<0", "x1<-1.2")

PRESETS = {
    "fig1-classification": ExperimentConfig(
        name="fig1-classification",
        generator="avg_classification",
        loss="avg",
        methods=("naive-cp", "e-croms", "f-croms", "e2e-0.5", "e2e-0.75"),
        n=400,
        m=100,
        alpha=0.1,
        replications=100,
        master_seed=20250101,
        sweep_param="n",
        sweep_values=(50.0, 100.0, 200.0, 400.0),
        models=ModelsConfig(trainer="greedy_logit", size=10, train_n=400, penalty_max=0.2, pairwise=True),
        metrics=MetricsConfig(names=("miscoverage", "misrobustness", "avg_loss")),
        output_dir="results/fig1-classification",
    ),
    "fig3-individualized": ExperimentConfig(
        name="fig3-individualized",
        generator="ind_classification",
        loss="ind",
        methods=("e-croms", "f-croms", "e2e-0.5", "naive-lcp", "croims"),
        n=200,
        m=1000,
        alpha=0.1,
        replications=100,
        master_seed=20250103,
        sweep_param="n",
        sweep_values=(100.0, 200.0, 400.0, 800.0),
        models=ModelsConfig(trainer="subset_logit", size=3, train_n=400, pairwise=False),
        kernel=KernelSection(family="gaussian_sq", c=6.06, target_neff=50.0),
        metrics=MetricsConfig(
            names=("miscoverage", "misrobustness", "avg_loss", "wc_cond_miscoverage",
                   "wc_cond_misrobustness", "covgap", "robgap", "group_loss"),
            balls=20, ball_mass=0.1, groups=IND_GROUPS,
        ),
        output_dir="results/fig3-individualized",
    ),
    "fig5-regression-shift": ExperimentConfig(
        name="fig5-regression-shift",
        generator="regression_shift",
        loss="portfolio",
        methods=("e-croms", "f-croms", "e2e-0.5", "naive-lcp", "croims"),
        n=100,
        m=200,
        alpha=0.1,
        replications=100,
        master_seed=20250105,
        sweep_param="n",
        sweep_values=(100.0, 200.0, 400.0),
        models=ModelsConfig(trainer="pool_ellipsoid", size=4, train_n=500),
        kernel=KernelSection(family="gaussian_sq", c=5.38, target_neff=50.0),
        metrics=MetricsConfig(
            names=("miscoverage", "misrobustness", "avg_loss", "wc_cond_miscoverage", "wc_cond_misrobustness"),
            balls=20, ball_mass=0.2,
        ),
        output_dir="results/fig5-regression-shift",
    ),
}


def list_presets() -> list[str]:
    return sorted(PRESETS)


def get_preset(name: str, **overrides) -> ExperimentConfig:
    try:
        cfg = PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(list_presets())}") from None
    return replace(cfg, **overrides) if overrides else cfg


def describe(name: str) -> str:
    cfg = get_preset(name)
    sweep = f", {cfg.sweep_param} in {{{', '.join(f'{v:g}' for v in cfg.sweep_values)}}}" if cfg.sweep_param else ""
    return (f"{name}: {cfg.generator}, n = {cfg.n}, |Lambda| = {cfg.models.size}, alpha = {cfg.alpha:g}, "
            f"R = {cfg.replications}{sweep}")
