"""Command line entry point: ``stfreg {run,synth,cv,anova,krige}``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, load_config
from .pipeline import EXIT_CONFIG, EXIT_OK, StageError, run_pipeline, summarize, synthesize


def _flag(parser, name: str, **kw):
    # Accept both --field_name (exact config name) and --field-name.
    names = [f"--{name}"]
    if "_" in name:
        names.append(f"--{name.replace('_', '-')}")
    parser.add_argument(*names, dest=name, default=None, **kw)


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON config file; flags override its fields")
    _flag(p, "output_dir")
    _flag(p, "t_min", type=float)
    _flag(p, "t_max", type=float)
    _flag(p, "grid_step", type=float)
    _flag(p, "seed", type=int)
    p.add_argument("-v", "--verbose", action="store_true")


def _inputs(p: argparse.ArgumentParser):
    _flag(p, "climate_path")
    _flag(p, "response_path")
    _flag(p, "n_neighbors", type=int)
    _flag(p, "bases", nargs="+", metavar="FAMILY:ORDER")
    _flag(p, "variogram_families", nargs="+")
    _flag(p, "qgls_iterations", type=int)
    _flag(p, "n_bins", type=int)
    _flag(p, "cv_mode", choices=["honest", "fast"])
    _flag(p, "class_edges", type=float, nargs="+")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stfreg",
        description="Functional regression of a scalar response on two kriged climate curves.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "run": "full pipeline: krige, cross-validate, fit, test and write all tables",
        "krige": "interpolate climate records onto the response sites only",
        "cv": "krige and write the cross-validation report",
        "anova": "krige and run the nested-model F tests with the first basis",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        _common(p)
        _inputs(p)
    p = sub.add_parser("synth", help="write a synthetic dataset with a truth file")
    _common(p)
    _flag(p, "scenario")
    _flag(p, "n_response_sites", type=int)
    _flag(p, "n_climate_sites", type=int)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "synth":
            out = synthesize(cfg)
        else:
            out = run_pipeline(cfg, args.command)
    except StageError as exc:
        print(f"error in stage '{exc.stage}': {exc.cause}", file=sys.stderr)
        return exc.exit_code
    summarize(out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
