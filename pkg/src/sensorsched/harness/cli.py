"""Command-line experiment runner.

Subcommands::

    run <config>              execute the experiment declared in the config
    verify-theorem1 <config>  expected-objective / expected-MSE bound check
    speedup <config>          classic vs randomized evaluation-count ratio
    curvature <config>        exact vs sampled curvature study
    theorem2 <config>         probabilistic curvature bound check
    network <config>          multi-node balanced-exchange simulation

Exit codes: 0 success, 2 config error, 3 numeric or oracle-cap error,
4 bound violation detected in verify mode.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

import numpy as np

from ..errors import ConfigError, InstanceTooLargeError, SchedulingError
from .config import load_config
from .runner import VERIFY_KINDS, run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_VIOLATION = 4

# Subcommand -> required config kind (None: any kind allowed).
_COMMAND_KINDS = {
    "run": None,
    "verify-theorem1": "theorem1_verify",
    "speedup": "speedup",
    "curvature": "curvature_study",
    "theorem2": "theorem2_study",
    "network": "network_balance",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sensorsched", description="Sensor scheduling experiment runner"
    )
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out-dir", default=None, help="override the output directory")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for trials")
    parser.add_argument("--format", choices=["csv", "json"], default="csv", dest="fmt")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMAND_KINDS:
        p = sub.add_parser(name)
        p.add_argument("config", help="path to a TOML experiment config")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        required = _COMMAND_KINDS[args.command]
        if required is not None and cfg.kind != required:
            raise ConfigError(
                f"kind: subcommand '{args.command}' requires kind '{required}', "
                f"config declares '{cfg.kind}'"
            )
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, seed=args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        summary, out = run_experiment(cfg, out_dir=args.out_dir, threads=args.threads, fmt=args.fmt)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InstanceTooLargeError, SchedulingError, np.linalg.LinAlgError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    violations = summary.get("violations", 0)
    print(f"{cfg.kind}: wrote {out}/metrics.* and {out}/summary.json")
    if cfg.kind in VERIFY_KINDS and violations:
        print(f"bound violations detected: {violations}", file=sys.stderr)
        return EXIT_VIOLATION
    return EXIT_OK


def entry() -> None:  # console_scripts hook
    raise SystemExit(main())


if __name__ == "__main__":
    raise SystemExit(main())
