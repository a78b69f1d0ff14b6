"""Command line entry point: ``lyaplab run|exponents|measure|boundedness``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys

from ..errors import ConfigError
from .config import ExperimentConfig, config_from_dict, load_config
from .runner import run_experiment


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int, help="worker threads (results do not depend on it)")
    p.add_argument("--strict", action="store_true", help="exit 2 on any inconclusive verdict")
    p.add_argument("-v", "--verbose", action="store_true")


def _inline(p: argparse.ArgumentParser, analysis: str) -> None:
    p.add_argument("--config", help="base config; inline flags override it")
    p.add_argument("--system", help="zoo system name")
    if analysis == "exponents":
        p.add_argument("--n", type=int)
        p.add_argument("--n-samples", type=int)
        p.add_argument("--qr-stride", type=int)
        p.add_argument("--burn-in", type=int)
    elif analysis == "measure":
        p.add_argument("--x-cells", type=int)
        p.add_argument("--theta-bins", type=int)
        p.add_argument("--n-iter", type=int)
        p.add_argument("--n-particles", type=int)
        p.add_argument("--window-bins", type=int)
    else:
        p.add_argument("--K-list", type=float, nargs="+", dest="K_list")
        p.add_argument("--N", type=int, dest="N")
        p.add_argument("--delta", type=float)
        p.add_argument("--bound-samples", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lyaplab", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run every analysis listed in a config file")
    run.add_argument("--config", required=True)
    _common(run)
    for name in ("exponents", "measure", "boundedness"):
        p = sub.add_parser(name, help=f"{name} analysis only")
        _inline(p, name)
        _common(p)
    return ap


_SKIP = {"command", "config", "verbose", "seed", "out", "threads", "strict"}


def _resolve(args) -> ExperimentConfig:
    if args.command == "run":
        cfg = load_config(args.config)
    else:
        base = dataclasses.asdict(load_config(args.config)) if args.config else {}
        for k, v in vars(args).items():
            if k not in _SKIP and v is not None:
                base[k] = v
        base["analyses"] = [args.command]
        cfg = config_from_dict(base)
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.out is not None:
        over["out"] = args.out
    if args.threads is not None:
        over["threads"] = args.threads
    if args.strict:
        over["strict"] = True
    if over:
        cfg = config_from_dict({**dataclasses.asdict(cfg), **over})
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _resolve(args)
        rep = run_experiment(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    summary = {"config_hash": rep.data["config_hash"], "exit_code": rep.exit_code, "files": rep.files,
               "inconclusive": rep.data["inconclusive"]}
    print(json.dumps(summary, indent=2))
    return rep.exit_code


if __name__ == "__main__":
    sys.exit(main())
