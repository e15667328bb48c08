"""Batch command-line front end.

Subcommands: extract (populate the feature cache), run (cross-validated
experiment), report (render a stored report), validate (config and
manifest lint), synth (seeded synthetic dataset for smoke tests).

Exit codes: 0 success, 1 usage error, 2 data error, 3 leakage abort.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import EXPRESSION_MODES, MODALITIES, expression_to_cli, load_config
from .data import load_manifest
from .errors import DataError, LeakageError, VeracityError
from .experiment import run_experiment
from .extract import FeatureCache, extract_all, resolve_cache_dir
from .microexpression import EXPRESSIONS
from .report import bar_series, load_report, render_text, write_report
from .text import load_embeddings

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_LEAKAGE = 3


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad usage; this toolkit reserves 2
    for data errors, so usage failures are remapped to 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _config_overrides(args: argparse.Namespace) -> dict:
    overrides: dict = {}
    if getattr(args, "modalities", None):
        overrides["mode.modalities"] = list(args.modalities)
    if getattr(args, "expressions", None):
        overrides["mode.expressions"] = args.expressions
    if getattr(args, "expression_subset", None):
        overrides["mode.expression_subset"] = list(args.expression_subset)
    if getattr(args, "folds", None) is not None:
        overrides["evaluation.folds"] = args.folds
    if getattr(args, "seed", None) is not None:
        overrides["evaluation.seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        overrides["evaluation.workers"] = args.workers
    if getattr(args, "fold_plan", None):
        overrides["evaluation.fold_plan"] = str(Path(args.fold_plan).absolute())
    if getattr(args, "out", None):
        overrides["output.directory"] = str(Path(args.out).absolute())
    return overrides


def cmd_extract(args: argparse.Namespace) -> int:
    config = load_config(args.config, _config_overrides(args))
    config.validate_paths()
    manifest = load_manifest(config.manifest)
    cache = FeatureCache(resolve_cache_dir(config))
    extract_all(manifest, config, cache)
    print(
        f"extracted features for {len(manifest.records)} video(s): "
        f"{cache.hits} cache hit(s), {cache.misses} miss(es)"
    )
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config, _config_overrides(args))
    config.validate_paths()
    manifest = load_manifest(config.manifest)
    cache = FeatureCache(resolve_cache_dir(config))
    report = run_experiment(manifest, config, cache)
    paths = write_report(report, config.output_dir)
    print(f"report written to {paths['json']}")
    print(f"text table written to {paths['text']}")
    print(f"config hash {report.config_hash}, seed {report.seed}")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    doc = load_report(args.report)
    sys.stdout.write(render_text(doc))
    sys.stdout.write("\n")
    sys.stdout.write(bar_series(doc))
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    config = load_config(args.config, _config_overrides(args))
    config.validate_paths()
    manifest = load_manifest(config.manifest)
    identities = manifest.identities
    if len(identities) < config.folds:
        raise DataError(
            f"{len(identities)} identities cannot fill {config.folds} folds"
        )
    if "transcript" in config.modalities:
        table = load_embeddings(config.embeddings, limit=config.embedding_limit)
        print(f"embedding table: {len(table)} token(s), dim {table.dim}")
    print(
        f"ok: {len(manifest.records)} video(s), {len(identities)} identities, "
        f"class counts {manifest.class_counts}"
    )
    print(f"config hash {config.config_hash()}")
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    from .synthetic import generate_dataset, write_default_config

    paths = generate_dataset(args.out, n_identities=args.identities, seed=args.seed)
    config_path = write_default_config(paths.root)
    print(f"dataset written under {paths.root}")
    print(f"config written to {config_path}")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(
        prog="veracity",
        description="multimodal deception detection pipeline",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", metavar="command")

    def add_config_flags(p: _Parser, with_run_flags: bool = False) -> None:
        p.add_argument("--config", required=True, help="TOML pipeline config")
        if with_run_flags:
            p.add_argument(
                "--modalities",
                nargs="+",
                choices=MODALITIES,
                help="restrict the experiment to these modalities",
            )
            p.add_argument(
                "--expressions",
                choices=EXPRESSION_MODES,
                help="predicted detector scores or ground-truth annotations",
            )
            p.add_argument(
                "--expression-subset",
                nargs="+",
                choices=[expression_to_cli(e) for e in EXPRESSIONS],
                help="single-expression ablation: keep only these score dims",
            )
            p.add_argument("--folds", type=int)
            p.add_argument("--seed", type=int)
            p.add_argument("--workers", type=int)
            p.add_argument("--fold-plan", help="JSON fold plan overriding the split")
            p.add_argument("--out", help="output directory for report files")

    p_extract = sub.add_parser("extract", help="populate the feature cache")
    add_config_flags(p_extract)
    p_extract.set_defaults(func=cmd_extract)

    p_run = sub.add_parser("run", help="run the cross-validated experiment")
    add_config_flags(p_run, with_run_flags=True)
    p_run.set_defaults(func=cmd_run)

    p_report = sub.add_parser("report", help="render a stored JSON report")
    p_report.add_argument("report", help="path to report.json")
    p_report.set_defaults(func=cmd_report)

    p_validate = sub.add_parser("validate", help="lint a config and its manifest")
    add_config_flags(p_validate)
    p_validate.set_defaults(func=cmd_validate)

    p_synth = sub.add_parser("synth", help="generate a synthetic smoke-test dataset")
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--identities", type=int, default=40)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.set_defaults(func=cmd_synth)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING
    if args.verbose == 1:
        level = logging.INFO
    elif args.verbose >= 2:
        level = logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    if not getattr(args, "func", None):
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except LeakageError as exc:
        sys.stderr.write(f"leakage abort: {exc}\n")
        return EXIT_LEAKAGE
    except VeracityError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_DATA
    except OSError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
