"""Command-line interface: run configs, run presets, validate, export cohorts."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .experiments import (
    ConfigError,
    export_cohort_file,
    run_experiment,
    validate_config,
)
from .presets import PRESETS, run_preset


def _fail(message: str, details: list[str] | None = None, code: int = 1) -> int:
    payload = {"error": message}
    if details:
        payload["details"] = details
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return code


def _load_config(path: str):
    text = Path(path).read_text(encoding="utf-8")
    return validate_config(text)


def _apply_overrides(cfg, args):
    updates = {}
    if args.seed:
        updates["seeds"] = tuple(args.seed)
    if args.out:
        updates["output_dir"] = args.out
    return dataclasses.replace(cfg, **updates) if updates else cfg


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="fedsim",
        description="Deterministic simulator of collaborative training strategies "
        "on synthetic multi-site cohorts.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config", help="path to a JSON experiment config")
    p_run.add_argument("--seed", type=int, action="append", help="override config seeds")
    p_run.add_argument("--out", help="override output directory")
    p_run.add_argument("--jobs", type=int, default=1, help="parallel seed processes")

    p_preset = sub.add_parser("preset", help="run a shipped preset")
    p_preset.add_argument("name", help=f"one of: {', '.join(sorted(PRESETS))}")
    p_preset.add_argument("--seed", type=int, action="append", help="override preset seeds")
    p_preset.add_argument("--out", default="runs", help="output directory")
    p_preset.add_argument("--jobs", type=int, default=1, help="parallel seed processes")

    p_val = sub.add_parser("validate", help="validate a config without running it")
    p_val.add_argument("config")

    p_exp = sub.add_parser("export-cohort", help="write the config's cohort to a file")
    p_exp.add_argument("config")
    p_exp.add_argument("path")

    args = parser.parse_args(argv)

    try:
        if args.command == "run":
            cfg = _apply_overrides(_load_config(args.config), args)
            manifests = run_experiment(cfg, jobs=args.jobs)
            for manifest in manifests:
                print(f"seed {manifest.seed}: wrote {manifest.artifacts['metrics_report']}")
            return 0
        if args.command == "preset":
            out = run_preset(args.name, args.out, seeds=args.seed, jobs=args.jobs)
            print(f"preset {args.name}: artifacts in {out}")
            return 0
        if args.command == "validate":
            cfg = _load_config(args.config)
            print(f"config ok: strategy={cfg.strategy} seeds={list(cfg.seeds)}")
            return 0
        if args.command == "export-cohort":
            cfg = _load_config(args.config)
            export_cohort_file(cfg, args.path)
            print(f"cohort written to {args.path}")
            return 0
    except ConfigError as exc:
        return _fail("invalid config", exc.errors, code=2)
    except FileNotFoundError as exc:
        return _fail(str(exc), code=2)
    except ValueError as exc:
        return _fail(str(exc), code=1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
