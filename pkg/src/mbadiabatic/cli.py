"""Command-line entry point: ``mbadiabatic run|validate|list-experiments|report``."""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .errors import ConfigError, NumericalError, ResourceError
from .harness.config import load_config, parse_config
from .harness.recipes import RECIPES, default_config, run_experiment
from .harness.report import emit_report, load_summary

OUTPUT_ENV = "MBADIABATIC_OUTPUT"

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2, 3


def _resolve_config(target: str, backend: str | None, seed: int | None):
    """A path to a TOML file, or the name of a recipe run with its defaults."""
    path = Path(target)
    if path.suffix == ".toml" or path.exists():
        cfg = load_config(path)
    elif target in RECIPES:
        cfg = default_config(target)
    else:
        raise ConfigError(f"{target!r} is neither a config file nor a known experiment", ["kind"])
    update = {}
    if backend is not None:
        update["backend"] = backend
    if seed is not None:
        update["seed"] = seed
    if update:
        cfg = parse_config({**cfg.model_dump(), **update})
    return cfg


def _output_dir(cfg, override: str | None) -> Path:
    if override:
        return Path(override)
    if cfg.output_dir:
        return Path(cfg.output_dir)
    return Path(os.environ.get(OUTPUT_ENV, "runs")) / cfg.kind


def _print_verdicts(verdicts) -> None:
    for name, v in verdicts:
        status = "PASS" if v["passed"] else "FAIL"
        print(f"{status}  {name} = {v['value']:.6g}  ({v['threshold']})")


def cmd_run(args) -> int:
    cfg = _resolve_config(args.config, args.backend, args.seed)
    report = run_experiment(cfg, jobs=args.jobs)
    out = _output_dir(cfg, args.output)
    emit_report(report, out)
    _print_verdicts((v.name, {"passed": v.passed, "value": v.value, "threshold": v.threshold}) for v in report.verdicts)
    print(f"wrote {out}")
    return EXIT_PASS if report.passed else EXIT_FAIL


def cmd_validate(args) -> int:
    cfg = _resolve_config(args.config, None, None)
    print(f"ok: {cfg.kind}")
    return EXIT_PASS


def cmd_list(args) -> int:
    for name in sorted(RECIPES):
        print(f"{name:20s} {RECIPES[name][1]}")
    return EXIT_PASS


def cmd_report(args) -> int:
    try:
        summary = load_summary(args.dir)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    verdicts = summary.get("verdicts", {})
    _print_verdicts(sorted(verdicts.items()))
    return EXIT_PASS if summary.get("passed", False) else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mbadiabatic", description="Adiabatic evolution experiments for gapped lattice systems.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment from a TOML config or by recipe name")
    r.add_argument("config")
    r.add_argument("--backend", choices=["spectral", "quadrature"])
    r.add_argument("--jobs", type=int, default=1)
    r.add_argument("--seed", type=int)
    r.add_argument("--output", help=f"output directory (default: ${OUTPUT_ENV}/<kind> or runs/<kind>)")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("config")
    v.set_defaults(func=cmd_validate)

    ls = sub.add_parser("list-experiments", help="list the named recipes")
    ls.set_defaults(func=cmd_list)

    rep = sub.add_parser("report", help="print the verdicts stored in an output directory")
    rep.add_argument("dir")
    rep.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "jobs", 1) is not None and getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be at least 1")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, ResourceError) as exc:
        print(f"numerical error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
