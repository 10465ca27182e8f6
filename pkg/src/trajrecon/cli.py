"""``trajrecon`` command line: simulate, degrade, build-dataset, reconstruct, evaluate, plot, all.

Configuration comes from an optional YAML/JSON file plus flat overrides of
the form ``--section.key=value``, e.g.::

    trajrecon all --config run.yaml --simulate.n_flights=200 --llm.endpoint=mock:oracle

The endpoint URL and auth token may also come from the environment
(``TRAJRECON_LLM_BASE_URL``, ``TRAJRECON_LLM_TOKEN``).
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Sequence

from .config import METHODS, load_config
from .errors import ConfigInvalidError, MissingPriorStageError, TrajReconError
from .pipeline import STAGES, Pipeline

log = logging.getLogger("trajrecon")

EXIT_OK = 0
EXIT_STAGE_ERROR = 1
EXIT_CONFIG = 2
EXIT_MISSING_PRIOR = 3
SUBCOMMANDS = (*STAGES, "all")


def run_subcommand(
    name: str,
    config_path: str | None = None,
    overrides: Sequence[str] = (),
    methods: Sequence[str] | None = None,
) -> int:
    """Run one stage (or ``all``) and return a process exit status.

    Failures are logged with their context; nothing is raised.
    """
    if name not in SUBCOMMANDS:
        log.error("unknown subcommand %r; choose from %s", name, ", ".join(SUBCOMMANDS))
        return EXIT_CONFIG
    try:
        cfg = load_config(config_path, list(overrides))
        if methods:
            bad = [m for m in methods if m not in METHODS]
            if bad:
                raise ConfigInvalidError(f"unknown --method {bad}; choose from {METHODS}")
        counts = Pipeline(cfg).run(name, methods)
    except ConfigInvalidError as exc:
        log.error("invalid configuration: %s", exc)
        return EXIT_CONFIG
    except MissingPriorStageError as exc:
        log.error("%s: %s (run the earlier stages first)", name, exc)
        return EXIT_MISSING_PRIOR
    except (TrajReconError, OSError, ValueError) as exc:
        log.error("%s failed: %s: %s", name, type(exc).__name__, exc)
        return EXIT_STAGE_ERROR
    log.info("%s done: %s", name, counts)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trajrecon",
        description="Synthetic ADS-B trajectory reconstruction pipeline.",
        epilog="Any --section.key=value option overrides the matching config entry.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    common.add_argument("-q", "--quiet", action="store_true", help="only warnings and errors")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, parents=[common],
                           help=f"run the {name} stage" if name != "all" else "run every stage in order")
        p.add_argument("--config", "-c", help="YAML or JSON config file")
        p.add_argument("--out", help="output directory (same as --output_dir=...)")
        p.add_argument("--seed", type=int, help="global seed")
        p.add_argument("--jobs", "-j", type=int, help="parallel workers for per-flight work")
        if name in ("reconstruct", "all"):
            p.add_argument("--method", "-m", action="append", choices=METHODS,
                           help="reconstruction method (repeatable; default: config list)")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    bad = [a for a in extra if not (a.startswith("--") and "." in a.split("=", 1)[0] or "=" in a)]
    if bad:
        parser.error(f"unrecognized arguments: {' '.join(bad)}")

    level = logging.WARNING if args.quiet else (logging.DEBUG if args.verbose > 1 else logging.INFO)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.verbose < 2:
        logging.getLogger("httpx").setLevel(logging.WARNING)

    overrides = list(extra)
    for flag, key in (("out", "output_dir"), ("seed", "seed"), ("jobs", "jobs")):
        value = getattr(args, flag)
        if value is not None:
            overrides.append(f"--{key}={value}")
    return run_subcommand(args.command, args.config, overrides, getattr(args, "method", None))


if __name__ == "__main__":
    sys.exit(main())
