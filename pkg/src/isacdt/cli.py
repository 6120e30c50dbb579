"""Command-line entry point.

Exit codes: 0 success, 2 invalid configuration, 3 I/O failure. Diagnostics go
to stderr; per-experiment summaries to stdout.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - 3.10 fallback
    import tomli as tomllib

from . import __version__
from .engine import (ConfigError, ConfigValidationError, ExperimentKind,
                     config_from_dict, run_scenario)
from .presets import PRESETS, preset

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="isacdt",
                                     description="ISAC digital-twin network simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--preset", choices=sorted(PRESETS),
                       help="embedded scenario preset")
        p.add_argument("--config", type=Path, help="TOML scenario file")
        p.add_argument("--seed", type=int, help="override the scenario seed")
        p.add_argument("--trials", type=int, help="override the trial count")

    run = sub.add_parser("run", help="run a scenario and write metrics")
    add_common(run)
    run.add_argument("--out", type=Path, default=Path("."),
                     help="output directory (default: current directory)")
    run.add_argument("--jobs", type=int, default=1,
                     help="parallel trial workers (default 1; results identical)")

    val = sub.add_parser("validate", help="validate a scenario config")
    add_common(val)

    sub.add_parser("list-scenarios", help="list embedded presets")
    sub.add_parser("version", help="print the version")
    return parser


def _load_config_dict(args) -> dict:
    if args.preset and args.config:
        raise ConfigError("config", "--preset and --config are mutually exclusive")
    if args.preset:
        d = preset(args.preset)
    elif args.config:
        try:
            with open(args.config, "rb") as fh:
                d = tomllib.load(fh)
        except OSError as exc:
            raise IOError(f"cannot read {args.config}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError("config", f"malformed TOML: {exc}") from None
    else:
        raise ConfigError("config", "provide --preset or --config")
    if args.seed is not None:
        d["seed"] = args.seed
    if args.trials is not None:
        d["trials"] = args.trials
    return d


def cmd_run(args) -> int:
    try:
        cfg = config_from_dict(_load_config_dict(args))
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    except IOError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_IO
    table, artifacts = run_scenario(cfg, jobs=max(1, args.jobs))
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "metrics.csv").write_text(table.to_csv())
        for name, blob in artifacts.items():
            (args.out / name).write_bytes(blob)
    except OSError as exc:
        print(f"cannot write outputs: {exc}", file=sys.stderr)
        return EXIT_IO
    n_rows = len(next(iter(table.columns.values()), []))
    print(f"{cfg.name}: {cfg.experiment.value} seed={cfg.seed} "
          f"trials={cfg.trials} rows={n_rows} -> {args.out / 'metrics.csv'}")
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        config_from_dict(_load_config_dict(args))
    except ConfigValidationError as exc:
        for err in exc.errors:
            print(str(err), file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    except IOError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_IO
    print("OK")
    return EXIT_OK


def cmd_list_scenarios() -> int:
    for name in sorted(PRESETS):
        exp = PRESETS[name]["experiment"]
        print(f"{name}\t{exp}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args)
    if args.command == "validate":
        return cmd_validate(args)
    if args.command == "list-scenarios":
        return cmd_list_scenarios()
    if args.command == "version":
        print(__version__)
        return EXIT_OK
    return EXIT_CONFIG  # pragma: no cover


if __name__ == "__main__":
    sys.exit(main())
