"""Command line: ``croms run | validate | presets | preset dump``.

Exit codes: 0 success, 1 runtime failure (completed rows are still written),
2 invalid configuration or usage.
"""

from __future__ import annotations

import argparse
import os
import platform
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from ..core import CromsError
from .config import ConfigError, ExperimentConfig, parse_config, render_config
from .output import write_csv, write_json, write_plots
from .presets import describe, get_preset, list_presets
from .runner import (
    METRIC_COLUMNS,
    RunFailure,
    check_runnable,
    columns,
    group_columns,
    replication_seed,
    run_rows,
    summarize,
    summary_columns,
)

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


def load_config(ref: str) -> ExperimentConfig:
    """A config file path, or ``preset:<name>`` for a built-in preset."""
    if ref.startswith("preset:"):
        return get_preset(ref.split(":", 1)[1])
    path = Path(ref)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config: {e.strerror}", source=ref) from None
    return parse_config(text, source=ref)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def execute(cfg: ExperimentConfig, out_dir: Path, jobs: int = 1) -> int:
    """Run ``cfg`` and write every result file into ``out_dir``."""
    check_runnable(cfg)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.ini").write_text(render_config(cfg), encoding="utf-8")
    started = _now()
    status, error = EXIT_OK, None
    try:
        rows = run_rows(cfg, jobs)
    except RunFailure as f:
        rows, status, error = f.rows, EXIT_RUNTIME, str(f)
    write_csv(out_dir / "results.csv", rows, columns(cfg))
    summary = summarize(cfg, rows)
    write_csv(out_dir / "summary.csv", summary, summary_columns(cfg))
    plotted = [m for m in list(METRIC_COLUMNS) + group_columns(cfg)]
    xlabel = cfg.sweep_param or "replicated setting"
    plots = write_plots(out_dir, summary, plotted, xlabel)
    write_json(out_dir / "run_meta.json", {
        "name": cfg.name,
        "started": started,
        "finished": _now(),
        "status": "ok" if status == EXIT_OK else "failed",
        "error": error,
        "jobs": jobs,
        "master_seed": cfg.master_seed,
        "seed_rule": "seed_r = splitmix64(master_seed XOR splitmix64(r))",
        "replication_seeds": [replication_seed(cfg.master_seed, r) for r in range(cfg.replications)],
        "groups": {f"G{k}": g for k, g in enumerate(cfg.metrics.groups, start=1)},
        "plots": [p.name for p in plots],
        "python": platform.python_version(),
        "numpy": np.__version__,
    })
    if error:
        print(f"error: {error}", file=sys.stderr)
    return status


def _int_env(name: str) -> int | None:
    v = os.environ.get(name)
    if v is None or v == "":
        return None
    try:
        return int(v)
    except ValueError:
        raise ConfigError(f"{name} must be an integer, got {v!r}", source="environment") from None


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, master_seed=args.seed)
    if args.replications is not None:
        cfg = replace(cfg, replications=args.replications)
    jobs = args.jobs if args.jobs is not None else (_int_env("CROMS_JOBS") or 1)
    out = args.out or os.environ.get("CROMS_OUT") or cfg.output_dir
    if jobs < 1:
        raise ConfigError("jobs must be at least 1", source="--jobs")
    status = execute(cfg, Path(out), jobs)
    if status == EXIT_OK:
        print(f"wrote {Path(out) / 'results.csv'}")
    return status


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    check_runnable(cfg)
    print("ok")
    return EXIT_OK


def cmd_presets(args) -> int:
    for name in list_presets():
        print(describe(name))
    return EXIT_OK


def cmd_preset(args) -> int:
    sys.stdout.write(render_config(get_preset(args.name)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="croms", description="Decision-focused conformal model selection experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config", help="config file, or preset:<name>")
    r.add_argument("--out", help="output directory (env CROMS_OUT)")
    r.add_argument("--jobs", type=int, help="worker processes (env CROMS_JOBS)")
    r.add_argument("--seed", type=int, help="override master_seed")
    r.add_argument("--replications", type=int, help="override the replication count")
    r.set_defaults(func=cmd_run)
    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("config")
    v.set_defaults(func=cmd_validate)
    ps = sub.add_parser("presets", help="list built-in presets")
    ps.set_defaults(func=cmd_presets)
    pr = sub.add_parser("preset", help="preset utilities")
    prs = pr.add_subparsers(dest="action", required=True)
    d = prs.add_parser("dump", help="print a preset as a config file")
    d.add_argument("name")
    d.set_defaults(func=cmd_preset)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except CromsError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
