"""Command-line entry point.

Verbs: forward | control | verify | sample-noise. Exit codes: 0 success,
1 configuration error, 2 numeric failure, 3 verification failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ExperimentConfig, default_config, load_config
from .errors import ConfigurationError, NumericError, VerificationFailure


def _parse_seed_range(text: str) -> list[int]:
    if ".." in text:
        lo, hi = text.split("..", 1)
        try:
            return list(range(int(lo), int(hi) + 1))
        except ValueError as err:
            raise ConfigurationError(f"bad seed range {text!r}; expected A..B") from err
    try:
        return [int(s) for s in text.split(",") if s]
    except ValueError as err:
        raise ConfigurationError(f"bad seed list {text!r}") from err


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stofhn",
        description=(
            "Path-wise forward solver and bound-constrained tracking control "
            "for an excitable reaction-diffusion model with monotone "
            "nonlinear diffusion and multiplicative noise."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("forward", "integrate a forward ensemble and export statistics"),
        ("control", "solve the tracking-control problem"),
        ("verify", "run the verification suites"),
        ("sample-noise", "sample and export noise paths"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", type=Path, default=None, help="experiment config (JSON)")
        cmd.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        cmd.add_argument(
            "--seeds",
            type=str,
            default=None,
            help="override the seed list: A..B (inclusive) or comma-separated",
        )
        cmd.add_argument(
            "--threads",
            type=int,
            default=1,
            help="worker threads for path fan-out (wall time only, never results)",
        )
        if name == "verify":
            cmd.add_argument(
                "--suites",
                type=str,
                default=None,
                help="comma-separated suite subset (default: all configured)",
            )
    return parser


def _load(args, kind: str) -> ExperimentConfig:
    if args.config is not None:
        cfg = load_config(args.config)
    else:
        cfg = default_config(kind)
    if cfg.data["kind"] != kind:
        cfg = cfg.replace(kind=kind)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    from . import runner  # deferred: matplotlib import is slow

    try:
        seeds = _parse_seed_range(args.seeds) if args.seeds else None
        if args.command == "forward":
            manifest = runner.run_forward(_load(args, "forward"), args.out, seeds, args.threads)
            completed = sum(1 for p in manifest.paths if p["status"] == "completed")
            print(f"forward: {completed}/{len(manifest.paths)} paths completed -> {args.out}")
            if completed == 0:
                return 2
        elif args.command == "control":
            runner.run_control(_load(args, "control"), args.out, seeds, args.threads)
            print(f"control: report written -> {args.out}")
        elif args.command == "sample-noise":
            manifest = runner.run_sample_noise(_load(args, "forward"), args.out, seeds)
            print(f"sample-noise: {len(manifest.paths)} paths -> {args.out}")
        elif args.command == "verify":
            suites = args.suites.split(",") if args.suites else None
            _, results = runner.run_verify(_load(args, "verify"), args.out, suites)
            for r in results:
                print(f"[{'PASS' if r.passed else 'FAIL'}] {r.name}: {r.summary}")
            if not all(r.passed for r in results):
                return 3
    except ConfigurationError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 1
    except NumericError as err:
        print(f"numeric failure: {err} {err.details}", file=sys.stderr)
        return 2
    except VerificationFailure as err:
        print(f"verification failure: {err}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
