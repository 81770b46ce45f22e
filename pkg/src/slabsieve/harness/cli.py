"""Command line entry point."""

from __future__ import annotations

import argparse
import json
import sys

from .config import load_config
from .experiments import resolve_threads, run_experiment
from .selfcheck import run_selfcheck

_SUBCOMMAND_KIND = {
    "rates": "rates",
    "lemma1": "lemma1",
    "coverage": "coverage",
    "sieve-verify": "sieve",
    "envelope": "envelope",
    "bayes-risk": "bayes-risk",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems are validation errors (exit 1)
        raise ValueError(f"E:harness:cli: {message}")


def _build_parser() -> _Parser:
    parser = _Parser(prog="slabsieve", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _SUBCOMMAND_KIND:
        sp = sub.add_parser(name, add_help=True)
        sp.add_argument("--config", required=True, help="experiment config (.json or .toml)")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--out-dir", default=None)
        sp.add_argument("--format", choices=("csv", "jsonl"), default=None)
    sc = sub.add_parser("selfcheck", add_help=True)
    sc.add_argument("--seed", type=int, default=7)
    sc.add_argument("--threads", type=int, default=1)
    sc.add_argument("--out-dir", default=".")
    return parser


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        threads = resolve_threads(args.threads)
        if args.command == "selfcheck":
            result = run_selfcheck(seed=args.seed, threads=threads, out_dir=args.out_dir)
            for c in result["checks"]:
                status = "ok" if c["ok"] else "FAIL"
                print(f"[{status}] {c['name']} (worst {c['worst']:.3e})")
            print(f"backend: {result['backend']}; manifest: {result['manifest']}")
            return 0 if result["ok"] else 2

        cfg = load_config(args.config)
        expected = _SUBCOMMAND_KIND[args.command]
        if cfg.kind != expected:
            raise ValueError(
                f"E:harness:config: kind: config says {cfg.kind!r} but "
                f"subcommand expects {expected!r}"
            )
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out_dir is not None:
            cfg.out_dir = args.out_dir
        if args.format is not None:
            cfg.format = args.format
        report = run_experiment(cfg, threads=threads)
        summary = {k: v for k, v in report.items()
                   if k not in ("rows", "records", "config")}
        print(json.dumps(_compact(summary), sort_keys=True, default=str))
        return 0
    except ValueError as exc:
        print(exc, file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - the CLI boundary
        print(f"E:harness:runtime: {exc}", file=sys.stderr)
        return 2


def _compact(obj, depth: int = 0):
    """Trim bulky per-replicate arrays out of the stdout summary."""
    if isinstance(obj, dict):
        return {k: _compact(v, depth + 1) for k, v in obj.items()
                if k not in ("mass_outside", "mass_outside_log")}
    if isinstance(obj, (list, tuple)) and depth >= 1 and len(obj) > 24:
        return f"[{len(obj)} values]"
    if isinstance(obj, (list, tuple)):
        return [_compact(v, depth + 1) for v in obj]
    return obj


if __name__ == "__main__":
    sys.exit(main())
