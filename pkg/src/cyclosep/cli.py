"""Command-line front end.

Four subcommands: ``generate`` draws a labeled dataset and writes the
binary container, ``covariance`` dumps an analytic covariance matrix,
``benchmark`` runs an SIR sweep and writes curve files, and
``export-dataset`` re-exports an existing container (typically to strip
latents for a training view).  Every failure prints a one-line JSON
object on stderr and exits nonzero, so callers never have to scrape
prose.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .benchmark import (
    ESTIMATOR_NAMES,
    PROFILE_NAMES,
    BenchmarkConfig,
    emit_curves,
    make_profile,
    run_benchmark,
)
from .dataset_io import export_dataset, import_dataset, write_covariance
from .mixture import MixtureConfig, config_from_dict, config_to_dict, make_dataset
from .models import conditional_covariance, marginal_covariance, model_from_config


def _fail(message: str, kind: str, code: int) -> None:
    print(json.dumps({"error": message, "kind": kind}), file=sys.stderr)
    raise SystemExit(code)


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors are machine-readable."""

    def error(self, message):
        _fail(message, kind="usage", code=2)


def _load_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _resolve_mixture(args) -> MixtureConfig:
    """Mixture from --profile or --config, with --sigma applied on top."""
    if args.profile is None and args.config is None:
        _fail("one of --profile or --config is required", kind="usage", code=2)
    if args.profile is not None and args.config is not None:
        _fail("--profile and --config are mutually exclusive", kind="usage", code=2)
    if args.profile is not None:
        mixture = make_profile(args.profile, sigma=args.sigma).mixture
    else:
        data = _load_json(args.config)
        mixture = config_from_dict(data)
        if args.sigma is not None:
            mixture = MixtureConfig(
                source=mixture.source, interference=mixture.interference,
                n=mixture.n, sigma=args.sigma, kappa_levels=mixture.kappa_levels,
            )
    return mixture


def _cmd_generate(args) -> None:
    mixture = _resolve_mixture(args)
    records = make_dataset(mixture, args.count, args.seed)
    metadata = {"mixture": config_to_dict(mixture), "seed": args.seed}
    export_dataset(records, args.out, include_latents=args.latents,
                   metadata=metadata)
    print(json.dumps({"written": args.out, "count": args.count,
                      "n": mixture.n, "latents": bool(args.latents)}))


def _cmd_covariance(args) -> None:
    model = model_from_config(_load_json(args.config))
    if args.marginal:
        matrix = marginal_covariance(model, args.n)
    else:
        matrix = conditional_covariance(model, args.tau, args.n)
    write_covariance(args.out, matrix)
    print(json.dumps({"written": args.out, "n": args.n,
                      "kind": "marginal" if args.marginal else "conditional"}))


def _cmd_benchmark(args) -> None:
    estimators = None
    if args.estimators is not None:
        estimators = tuple(name.strip() for name in args.estimators.split(",")
                           if name.strip())
    if args.profile is not None:
        if args.config is not None:
            _fail("--profile and --config are mutually exclusive", kind="usage",
                  code=2)
        config = make_profile(args.profile, sigma=args.sigma, trials=args.trials,
                              estimators=estimators, seed=args.seed,
                              out_path=args.out)
    else:
        if args.config is None:
            _fail("one of --profile or --config is required", kind="usage", code=2)
        mixture = config_from_dict(_load_json(args.config))
        if args.sigma is not None:
            mixture = MixtureConfig(
                source=mixture.source, interference=mixture.interference,
                n=mixture.n, sigma=args.sigma, kappa_levels=mixture.kappa_levels,
            )
        config = BenchmarkConfig(
            mixture=mixture,
            trials=1000 if args.trials is None else args.trials,
            estimators=ESTIMATOR_NAMES if estimators is None else estimators,
            seed=args.seed,
            out_path=args.out,
        )
    table = run_benchmark(config)
    emit_curves(table, args.out, args.format)
    print(json.dumps({"written": args.out, "cells": len(table.cells),
                      "estimators": list(table.estimators()),
                      "notices": table.metadata["notices"]}))


def _cmd_export_dataset(args) -> None:
    records, metadata = import_dataset(args.in_path)
    if args.latents and any(rec.tau_s is None for rec in records):
        _fail("input carries no latents to re-export", kind="usage", code=2)
    export_dataset(records, args.out, include_latents=args.latents,
                   metadata=metadata)
    print(json.dumps({"written": args.out, "count": len(records),
                      "latents": bool(args.latents)}))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cyclosep",
                     description="Cyclostationary source-separation toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="draw a labeled dataset")
    gen.add_argument("--config", help="mixture config JSON")
    gen.add_argument("--profile", choices=PROFILE_NAMES,
                     help="canned experiment mixture")
    gen.add_argument("--sigma", type=float, help="noise level override")
    gen.add_argument("--count", type=int, required=True, help="records to draw")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--latents", action="store_true",
                     help="keep latent triples in the file (evaluation sets)")
    gen.add_argument("--out", required=True, help="output dataset path")
    gen.set_defaults(func=_cmd_generate)

    cov = sub.add_parser("covariance", help="dump an analytic covariance")
    cov.add_argument("--config", required=True, help="model config JSON")
    cov.add_argument("--n", type=int, required=True, help="window length")
    cov.add_argument("--tau", type=int, default=0, help="offset (conditional)")
    cov.add_argument("--marginal", action="store_true",
                     help="offset-averaged covariance instead of conditional")
    cov.add_argument("--out", required=True, help="output matrix path")
    cov.set_defaults(func=_cmd_covariance)

    ben = sub.add_parser("benchmark", help="run an SIR sweep")
    ben.add_argument("--config", help="mixture config JSON")
    ben.add_argument("--profile", choices=PROFILE_NAMES)
    ben.add_argument("--sigma", type=float, help="noise level override")
    ben.add_argument("--trials", type=int, help="records per SIR level")
    ben.add_argument("--seed", type=int, default=0)
    ben.add_argument("--estimators",
                     help=f"comma-separated subset of {','.join(ESTIMATOR_NAMES)}")
    ben.add_argument("--format", choices=("csv", "json"), default="csv")
    ben.add_argument("--out", required=True, help="output curve path")
    ben.set_defaults(func=_cmd_benchmark)

    exp = sub.add_parser("export-dataset",
                         help="re-export a dataset container")
    exp.add_argument("--in", dest="in_path", required=True,
                     help="existing dataset path")
    exp.add_argument("--latents", action="store_true",
                     help="keep latents; default strips them for training views")
    exp.add_argument("--out", required=True, help="output dataset path")
    exp.set_defaults(func=_cmd_export_dataset)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except SystemExit:
        raise
    except (ValueError, OSError, KeyError, RuntimeError) as exc:
        _fail(str(exc), kind=type(exc).__name__, code=1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
