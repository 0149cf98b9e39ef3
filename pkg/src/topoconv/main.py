"""Entry point: topoconv run / verify / presets / entropy."""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

from . import __version__
from .analysis import AlphaGrid, AnalysisError
from .config import ConfigError, RunConfig, load_config, with_environment
from .dmrg import DmrgError
from .exact import OracleError
from .models import ModelError
from .mps import MpsError
from .numerics import NumericsError

log = logging.getLogger("topoconv")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_MISMATCH = 3

NUMERICAL_ERRORS = (NumericsError, DmrgError, MpsError, AnalysisError, ModelError, OracleError)


def resolve_config(target: str) -> RunConfig:
    """A config file path, or the name of a built-in preset."""
    from .presets import ALL_PRESETS

    path = Path(target)
    if path.is_file():
        return load_config(path)
    if target in ALL_PRESETS:
        return with_environment(ALL_PRESETS[target].config())
    raise ConfigError(f"{target!r} is neither a config file nor a preset name")


def _cmd_run(args: argparse.Namespace) -> int:
    from .runner import run

    report = run(resolve_config(args.config))
    if report.unconverged:
        log.warning(
            "%d point(s) did not converge: %s",
            len(report.unconverged),
            ", ".join(f"{p:g}" for p in report.unconverged),
        )
    if report.failed:
        log.warning("%d point(s) failed; see manifest.json", len(report.failed))
        return EXIT_NUMERICAL
    return EXIT_OK


def _cmd_verify(args: argparse.Namespace) -> int:
    from .runner import verify

    report = verify(resolve_config(args.config))
    return EXIT_OK if report.passed else EXIT_MISMATCH


def _cmd_presets(args: argparse.Namespace) -> int:
    from .presets import ALL_PRESETS

    if args.write is not None:
        out = Path(args.write)
        out.mkdir(parents=True, exist_ok=True)
        for name, preset in ALL_PRESETS.items():
            (out / f"{name}.ini").write_text(preset.to_ini())
        log.info("Wrote %d presets to %s", len(ALL_PRESETS), out)
    for name, preset in ALL_PRESETS.items():
        print(f"{name:14s} {preset.description}")
    return EXIT_OK


def _cmd_entropy(args: argparse.Namespace) -> int:
    from .runner import entropy_table

    try:
        alphas = AlphaGrid.parse(args.alpha)
    except AnalysisError as e:
        raise ConfigError(str(e)) from None
    try:
        rows = entropy_table(args.spectra, alphas)
    except (OSError, ValueError, KeyError) as e:
        if isinstance(e, NUMERICAL_ERRORS):
            raise
        raise ConfigError(f"cannot read {args.spectra}: {e}") from None
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["p", "partition", "alpha", "entropy"])
    for p, label, alpha, value in rows:
        alpha_text = "inf" if math.isinf(alpha) else f"{alpha:.17g}"
        writer.writerow([f"{p:.17g}", label, alpha_text, f"{value:.17g}"])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="topoconv",
        description="Differential local convertibility of 1d SPT ground states via DMRG.",
    )
    parser.add_argument("--version", action="version", version=f"topoconv {__version__}")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    verbosity.add_argument("--quiet", action="store_true", help="warnings and errors only")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a parameter sweep")
    p.add_argument("config", help="config file or preset name")
    p.set_defaults(handler=_cmd_run)

    p = sub.add_parser("verify", help="compare DMRG against the exact oracles")
    p.add_argument("config", help="config file or preset name")
    p.set_defaults(handler=_cmd_verify)

    p = sub.add_parser("presets", help="list built-in presets")
    p.add_argument("--write", metavar="DIR", help="also write each preset as DIR/<name>.ini")
    p.set_defaults(handler=_cmd_presets)

    p = sub.add_parser("entropy", help="Renyi entropies from a spectra.json")
    p.add_argument("spectra", help="spectra.json written by run")
    p.add_argument("--alpha", default="0.5,1,2,inf", help='e.g. "0.5,1,2,inf" or "logspace:0.1:100:40"')
    p.set_defaults(handler=_cmd_entropy)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(name)s: %(message)s", stream=sys.stderr)

    try:
        return args.handler(args)
    except ConfigError as e:
        log.error("%s", e)
        return EXIT_CONFIG
    except NUMERICAL_ERRORS as e:
        log.error("%s", e, exc_info=args.verbose)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
