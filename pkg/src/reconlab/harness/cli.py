"""Command-line entry point: ``run``, ``validate`` and ``list-experiments``."""

from __future__ import annotations

import argparse
import json
import sys

from reconlab.exceptions import ReconLabError, SolverError
from reconlab.harness.config import EXPERIMENTS, SCHEMAS, ExperimentConfig, apply_overrides, load_config, validate
from reconlab.harness.runner import resolve_output_dir, run, summary_table

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="reconlab", description="Run reconstruction and disclosure-control experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config", help="path to a JSON config")
    r.add_argument("--set", dest="overrides", action="append", default=[], metavar="K=V", help="override a field")
    r.add_argument("--out", help="output directory")
    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("config")
    v.add_argument("--set", dest="overrides", action="append", default=[], metavar="K=V")
    sub.add_parser("list-experiments", help="list experiment names and parameters")
    return p


def _load(args) -> tuple[dict | None, list[str]]:
    try:
        raw = apply_overrides(load_config(args.config), args.overrides)
    except (OSError, json.JSONDecodeError, ValueError) as exc:
        return None, [f"cannot load config: {exc}"]
    if not isinstance(raw, dict):
        return None, ["config must be a JSON object"]
    return raw, validate(raw)


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "list-experiments":
        for name in EXPERIMENTS:
            params = ", ".join(f"{k}={p.default!r}" for k, p in SCHEMAS[name].items())
            print(f"{name}: {params}")
        return EXIT_OK

    raw, problems = _load(args)
    if problems:
        for msg in problems:
            print(f"invalid: {msg}", file=sys.stderr)
        return EXIT_INVALID
    if args.command == "validate":
        print("ok")
        return EXIT_OK

    cfg = ExperimentConfig.from_dict(raw)
    try:
        report = run(cfg)
    except SolverError as exc:
        print(f"error: {exc} (status={exc.status}, diagnostics={exc.diagnostics})", file=sys.stderr)
        return EXIT_RUNTIME
    except ReconLabError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    out_dir = resolve_output_dir(args.out, cfg.output_path, cfg.experiment)
    path = report.write(out_dir)
    print(f"{cfg.experiment} (seed {cfg.seed}, {report.runtime_ms} ms)")
    print(summary_table(report))
    print(f"report: {path}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
