"""Experiment configuration: an INI-style file of typed ``key = value`` pairs.

Every parse or validation problem is reported as ``source:line: message`` so
it can be found in the file directly.
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import asdict, dataclass, field, fields, replace

from ..core import CromsError
from ..metrics import parse_group
from ..synth import GENERATORS

METHODS = ("naive-cp", "e-croms", "f-croms", "croims", "naive-lcp", "f-croims")
E2E = re.compile(r"^e2e-(?P<f>\d*\.?\d+)$")
TRAINERS = ("greedy_logit", "subset_logit", "pool_ellipsoid", "pool_box")
LOSSES = ("avg", "ind", "covid", "portfolio")
KERNEL_FAMILIES = ("gaussian_sq", "exponential", "box")
METRICS = (
    "miscoverage", "misrobustness", "avg_loss", "wc_cond_miscoverage",
    "wc_cond_misrobustness", "covgap", "robgap", "group_loss",
)
SWEEPABLE = ("n", "m", "alpha", "size", "train_n")
LOCAL_METHODS = ("croims", "naive-lcp", "f-croims")


class ConfigError(CromsError):
    def __init__(self, message: str, line: int | None = None, source: str = "<config>"):
        self.message, self.line, self.source = message, line, source
        where = f"{source}:{line}" if line else source
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class ModelsConfig:
    trainer: str = "greedy_logit"
    size: int = 10
    train_n: int = 400
    penalty_max: float = 0.2
    pairwise: bool = True
    subsets: tuple = ((1, 2), (1, 3), (2, 3))  # 1-based feature indices
    pool_centers: tuple = ((0.0, 0.0), (2.0, 0.0), (0.0, 2.0), (2.0, 2.0))


@dataclass(frozen=True)
class KernelSection:
    family: str = "gaussian_sq"
    c: float | None = None  # h = c * n^(-1/(d+2)); None means choose c from target_neff
    target_neff: float = 50.0


@dataclass(frozen=True)
class MetricsConfig:
    names: tuple = METRICS[:3]
    balls: int = 20
    ball_mass: float = 0.1
    groups: tuple = ()


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    generator: str = "avg_classification"
    generator_params: tuple = ()  # sorted (key, value) pairs
    loss: str = "avg"
    methods: tuple = ("naive-cp", "e-croms", "f-croms")
    n: int = 200
    m: int = 100
    alpha: float = 0.1
    replications: int = 10
    master_seed: int = 0
    sweep_param: str | None = None
    sweep_values: tuple = ()
    grid_per_axis: int = 25
    grid_margin: float = 0.25
    fcroims_budget: float = 1e5
    models: ModelsConfig = field(default_factory=ModelsConfig)
    kernel: KernelSection = field(default_factory=KernelSection)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    output_dir: str = "results"

    @property
    def params(self) -> dict:
        return {k: v for k, v in self.generator_params}

    def sweep(self) -> list[tuple[str, float]]:
        """The (param_name, param_value) blocks to run; one block when nothing is swept."""
        if self.sweep_param is None:
            return [("none", 0.0)]
        return [(self.sweep_param, v) for v in self.sweep_values]

    def at(self, param: str, value) -> "ExperimentConfig":
        """This config with one swept parameter set."""
        if param == "none":
            return self
        if param in ("n", "m", "replications"):
            return replace(self, **{param: int(value)})
        if param == "alpha":
            return replace(self, alpha=float(value))
        if param in ("size", "train_n"):
            return replace(self, models=replace(self.models, **{param: int(value)}))
        raise ConfigError(f"cannot sweep {param!r}")


# --- value codecs ---------------------------------------------------------------

def _num(text: str) -> float:
    return float(text.strip())


def _vector(text: str) -> tuple:
    return tuple(_num(t) for t in text.split(",") if t.strip())


def _matrix(text: str) -> tuple:
    return tuple(_vector(row) for row in text.split(";") if row.strip())


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def _fmt_vector(v) -> str:
    return ", ".join(_fmt(x) for x in v)


def _fmt_matrix(rows) -> str:
    return "; ".join(_fmt_vector(r) for r in rows)


def _param_value(text: str):
    """Generator parameters are scalars, vectors (``1, 1``) or matrices (``1, 0; 0, 1``)."""
    if ";" in text:
        return _matrix(text)
    if "," in text:
        return _vector(text)
    return _num(text)


def _fmt_param(v) -> str:
    if isinstance(v, tuple) and v and isinstance(v[0], tuple):
        return _fmt_matrix(v)
    if isinstance(v, tuple):
        return _fmt_vector(v)
    return _fmt(v)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected true or false, got {text!r}")


def _names(text: str) -> tuple:
    return tuple(t.strip() for t in text.split(",") if t.strip())


# --- parsing --------------------------------------------------------------------

_SECTION = re.compile(r"^\s*\[(?P<s>[^\]]+)\]")
_KEY = re.compile(r"^\s*(?P<k>[^=:#;\s][^=:]*?)\s*[=:]")


def _line_map(text: str) -> dict:
    """``(section, key) -> line`` and ``(section, None) -> line`` for headers."""
    out, section = {}, None
    for i, line in enumerate(text.splitlines(), start=1):
        if m := _SECTION.match(line):
            section = m["s"].strip()
            out.setdefault((section, None), i)
        elif section is not None and (m := _KEY.match(line)) and not line[:1].isspace():
            out.setdefault((section, m["k"].strip().lower()), i)
    return out


KNOWN = {
    "experiment": {"name", "generator", "loss", "methods", "n", "m", "alpha", "replications", "master_seed",
                   "sweep_param", "sweep_values", "grid_per_axis", "grid_margin", "fcroims_budget"},
    "generator": None,  # free-form parameters
    "models": {"trainer", "size", "train_n", "penalty_max", "pairwise", "subsets", "pool_centers"},
    "kernel": {"family", "c", "target_neff"},
    "metrics": {"names", "balls", "ball_mass", "groups"},
    "output": {"dir"},
}


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse and validate a config; raises :class:`ConfigError` on the first problem."""
    cfg, problems = _parse(text, source)
    if problems:
        raise problems[0]
    problems = validate_config(cfg, _line_map(text), source)
    if problems:
        raise problems[0]
    return cfg


def _parse(text: str, source: str):
    lines = _line_map(text)
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    try:
        cp.read_string(text, source=source)
    except configparser.Error as e:
        return None, [ConfigError(str(e).splitlines()[0], getattr(e, "lineno", None), source)]
    problems = []
    for sec in cp.sections():
        if sec not in KNOWN:
            problems.append(ConfigError(f"unknown section [{sec}]", lines.get((sec, None)), source))
            continue
        allowed = KNOWN[sec]
        if allowed is not None:
            for key in cp[sec]:
                if key not in allowed:
                    problems.append(ConfigError(f"unknown key {key!r} in [{sec}]", lines.get((sec, key)), source))
    if problems:
        return None, problems

    def get(sec, key, conv, default):
        if not cp.has_option(sec, key):
            return default
        raw = cp.get(sec, key)
        try:
            return conv(raw)
        except (ValueError, TypeError) as e:
            problems.append(ConfigError(f"[{sec}] {key}: {e}", lines.get((sec, key)), source))
            return default

    d = ExperimentConfig()
    sweep_param = get("experiment", "sweep_param", lambda s: s.strip() or None, None)
    if sweep_param == "none":
        sweep_param = None
    models = ModelsConfig(
        trainer=get("models", "trainer", str.strip, d.models.trainer),
        size=get("models", "size", int, d.models.size),
        train_n=get("models", "train_n", int, d.models.train_n),
        penalty_max=get("models", "penalty_max", float, d.models.penalty_max),
        pairwise=get("models", "pairwise", _bool, d.models.pairwise),
        subsets=get("models", "subsets", lambda s: tuple(tuple(int(v) for v in r) for r in _matrix(s)),
                    d.models.subsets),
        pool_centers=get("models", "pool_centers", _matrix, d.models.pool_centers),
    )
    c = get("kernel", "c", lambda s: None if s.strip() == "auto" else float(s), d.kernel.c)
    kernel = KernelSection(
        family=get("kernel", "family", str.strip, d.kernel.family),
        c=c,
        target_neff=get("kernel", "target_neff", float, d.kernel.target_neff),
    )
    metrics = MetricsConfig(
        names=get("metrics", "names", _names, d.metrics.names),
        balls=get("metrics", "balls", int, d.metrics.balls),
        ball_mass=get("metrics", "ball_mass", float, d.metrics.ball_mass),
        groups=get("metrics", "groups", lambda s: tuple(g.strip() for g in s.split(";") if g.strip()),
                   d.metrics.groups),
    )
    gen_params = ()
    if cp.has_section("generator"):
        gen_params = tuple(sorted(
            (k, get("generator", k, _param_value, None)) for k in cp["generator"]
        ))
    cfg = ExperimentConfig(
        name=get("experiment", "name", str.strip, d.name),
        generator=get("experiment", "generator", str.strip, d.generator),
        generator_params=gen_params,
        loss=get("experiment", "loss", str.strip, d.loss),
        methods=get("experiment", "methods", _names, d.methods),
        n=get("experiment", "n", int, d.n),
        m=get("experiment", "m", int, d.m),
        alpha=get("experiment", "alpha", float, d.alpha),
        replications=get("experiment", "replications", int, d.replications),
        master_seed=get("experiment", "master_seed", int, d.master_seed),
        sweep_param=sweep_param,
        sweep_values=get("experiment", "sweep_values", _vector, d.sweep_values),
        grid_per_axis=get("experiment", "grid_per_axis", int, d.grid_per_axis),
        grid_margin=get("experiment", "grid_margin", float, d.grid_margin),
        fcroims_budget=get("experiment", "fcroims_budget", float, d.fcroims_budget),
        models=models,
        kernel=kernel,
        metrics=metrics,
        output_dir=get("output", "dir", str.strip, d.output_dir),
    )
    return cfg, problems


def validate_config(cfg: ExperimentConfig, lines: dict | None = None, source: str = "<config>") -> list[ConfigError]:
    """Semantic checks; returns every problem found (empty when the config is usable)."""
    lines = lines or {}
    out = []

    def bad(sec, key, msg):
        out.append(ConfigError(f"[{sec}] {key}: {msg}", lines.get((sec, key)) or lines.get((sec, None)), source))

    if not 0.0 < cfg.alpha < 1.0 or not math.isfinite(cfg.alpha):
        bad("experiment", "alpha", f"alpha must lie in (0, 1), got {cfg.alpha:g}")
    if not cfg.methods:
        bad("experiment", "methods", "at least one method is required")
    for meth in cfg.methods:
        if meth in METHODS:
            continue
        if (e := E2E.match(meth)) and 0.0 < float(e["f"]) < 1.0:
            continue
        bad("experiment", "methods", f"unknown method {meth!r}")
    if len(set(cfg.methods)) != len(cfg.methods):
        bad("experiment", "methods", "duplicate method")
    if cfg.generator not in GENERATORS:
        bad("experiment", "generator", f"unknown generator {cfg.generator!r}; choose from {', '.join(GENERATORS)}")
    if cfg.loss not in LOSSES:
        bad("experiment", "loss", f"unknown loss {cfg.loss!r}; choose from {', '.join(LOSSES)}")
    regression = cfg.generator == "regression_shift"
    if cfg.generator in GENERATORS and (cfg.loss == "portfolio") != regression:
        bad("experiment", "loss", f"loss {cfg.loss!r} does not fit generator {cfg.generator!r}")
    for key in ("n", "m", "replications"):
        if getattr(cfg, key) < 1:
            bad("experiment", key, f"{key} must be at least 1")
    if cfg.master_seed < 0:
        bad("experiment", "master_seed", "seed must be nonnegative")
    if cfg.sweep_param is not None:
        if cfg.sweep_param not in SWEEPABLE:
            bad("experiment", "sweep_param", f"cannot sweep {cfg.sweep_param!r}; choose from {', '.join(SWEEPABLE)}")
        if not cfg.sweep_values:
            bad("experiment", "sweep_values", "a sweep needs at least one value")
    elif cfg.sweep_values:
        bad("experiment", "sweep_values", "values given without sweep_param")
    if cfg.grid_per_axis < 2:
        bad("experiment", "grid_per_axis", "need at least 2 grid points per axis")
    if cfg.grid_margin < 0:
        bad("experiment", "grid_margin", "margin must be nonnegative")
    if regression and "f-croims" in cfg.methods:
        bad("experiment", "methods", "f-croims needs a classification generator")

    mc = cfg.models
    if mc.trainer not in TRAINERS:
        bad("models", "trainer", f"unknown trainer {mc.trainer!r}; choose from {', '.join(TRAINERS)}")
    elif (mc.trainer.startswith("pool")) != regression:
        bad("models", "trainer", f"trainer {mc.trainer!r} does not fit generator {cfg.generator!r}")
    if mc.size < 1:
        bad("models", "size", "size must be at least 1")
    if mc.train_n < 2:
        bad("models", "train_n", "train_n must be at least 2")
    if mc.penalty_max < 0:
        bad("models", "penalty_max", "penalties must be nonnegative")
    if mc.trainer == "subset_logit" and mc.size > len(mc.subsets):
        bad("models", "size", f"size {mc.size} exceeds the {len(mc.subsets)} listed subsets")
    if mc.trainer.startswith("pool") and mc.size > len(mc.pool_centers):
        bad("models", "size", f"size {mc.size} exceeds the {len(mc.pool_centers)} pool centers")
    if any(len(c) != 2 for c in mc.pool_centers):
        bad("models", "pool_centers", "pool centers are 2-vectors")
    if any(v < 1 for s in mc.subsets for v in s):
        bad("models", "subsets", "features are numbered from 1")

    kc = cfg.kernel
    if kc.family not in KERNEL_FAMILIES:
        bad("kernel", "family", f"unknown kernel {kc.family!r}; choose from {', '.join(KERNEL_FAMILIES)}")
    if kc.c is not None and not kc.c > 0:
        bad("kernel", "c", "bandwidth constant must be positive")
    if not kc.target_neff >= 1:
        bad("kernel", "target_neff", "target effective sample size must be at least 1")

    me = cfg.metrics
    for name in me.names:
        if name not in METRICS:
            bad("metrics", "names", f"unknown metric {name!r}")
    if me.balls < 1:
        bad("metrics", "balls", "need at least one ball")
    if not 0.0 < me.ball_mass <= 1.0:
        bad("metrics", "ball_mass", "ball_mass must lie in (0, 1]")
    for g in me.groups:
        try:
            parse_group(g)
        except CromsError as e:
            bad("metrics", "groups", str(e))
    if any(n in me.names for n in ("covgap", "robgap", "group_loss")) and not me.groups:
        bad("metrics", "groups", "group metrics need a groups list")

    for key, value in cfg.generator_params:
        if value is None:
            bad("generator", key, "unreadable value")
    return out


# --- rendering ------------------------------------------------------------------

def render_config(cfg: ExperimentConfig) -> str:
    """Text form that :func:`parse_config` reads back to an equal config."""
    e = cfg
    lines = [
        "[experiment]",
        f"name = {e.name}",
        f"generator = {e.generator}",
        f"loss = {e.loss}",
        f"methods = {', '.join(e.methods)}",
        f"n = {e.n}",
        f"m = {e.m}",
        f"alpha = {_fmt(e.alpha)}",
        f"replications = {e.replications}",
        f"master_seed = {e.master_seed}",
        f"sweep_param = {e.sweep_param or 'none'}",
    ]
    if e.sweep_values:
        lines.append(f"sweep_values = {_fmt_vector(e.sweep_values)}")
    lines += [
        f"grid_per_axis = {e.grid_per_axis}",
        f"grid_margin = {_fmt(e.grid_margin)}",
        f"fcroims_budget = {_fmt(e.fcroims_budget)}",
        "",
    ]
    if e.generator_params:
        lines.append("[generator]")
        lines += [f"{k} = {_fmt_param(v)}" for k, v in e.generator_params]
        lines.append("")
    mc = e.models
    lines += [
        "[models]",
        f"trainer = {mc.trainer}",
        f"size = {mc.size}",
        f"train_n = {mc.train_n}",
        f"penalty_max = {_fmt(mc.penalty_max)}",
        f"pairwise = {_fmt(mc.pairwise)}",
        f"subsets = {'; '.join(', '.join(str(v) for v in s) for s in mc.subsets)}",
        f"pool_centers = {_fmt_matrix(mc.pool_centers)}",
        "",
        "[kernel]",
        f"family = {e.kernel.family}",
        f"c = {'auto' if e.kernel.c is None else _fmt(e.kernel.c)}",
        f"target_neff = {_fmt(e.kernel.target_neff)}",
        "",
        "[metrics]",
        f"names = {', '.join(e.metrics.names)}",
        f"balls = {e.metrics.balls}",
        f"ball_mass = {_fmt(e.metrics.ball_mass)}",
    ]
    if e.metrics.groups:
        lines.append(f"groups = {'; '.join(e.metrics.groups)}")
    lines += ["", "[output]", f"dir = {e.output_dir}", ""]
    return "\n".join(lines)


def config_dict(cfg: ExperimentConfig) -> dict:
    return asdict(cfg)


__all__ = [
    "ConfigError", "ExperimentConfig", "KernelSection", "METHODS", "METRICS", "MetricsConfig",
    "ModelsConfig", "config_dict", "parse_config", "render_config", "validate_config",
]
