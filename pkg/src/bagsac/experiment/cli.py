"""Command-line entry point: train, sweep, evaluate, diagnose, aggregate."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from ..errors import ConfigError, InsufficientCheckpoints, MissingArtifacts, NumericalAbort

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_MISSING = 0, 1, 2, 3


def _train(args) -> int:
    from .config import load
    from .runner import train_run

    cfg = load(args.config)
    if args.seed is not None:
        cfg = cfg.with_overrides({"schedule": {"seed": str(args.seed)}})
    out = Path(args.out) if args.out else Path("runs") / f"{cfg.method.name}_{cfg.pomdp.level}_s{cfg.seed}"
    summary, paths = train_run(cfg, out)
    print(json.dumps({"run": str(paths.root), **summary.to_dict()}, indent=2))
    return EXIT_OK


def _sweep(args) -> int:
    from .sweep import sweep

    matrix = Path(args.matrix)
    if not matrix.is_file():
        raise ConfigError(f"matrix file not found: {matrix}")
    result = sweep(matrix.read_text(), args.out, args.jobs)
    print(json.dumps({k: v["aggregate"] for k, v in result["cells"].items()}, indent=2))
    return EXIT_NUMERIC if result["errors"] else EXIT_OK


def _evaluate(args) -> int:
    from .runner import evaluate_run

    rec = evaluate_run(args.run, args.episodes)
    print(json.dumps(asdict(rec), indent=2))
    return EXIT_OK


def _diagnose(args) -> int:
    from .diagnose import diagnose

    print(json.dumps(diagnose(args.run), indent=2))
    return EXIT_OK


def _aggregate(args) -> int:
    from .sweep import aggregate

    result = aggregate(args.campaign)
    print(json.dumps({k: v["aggregate"] for k, v in result["cells"].items()}, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bagsac", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run one seeded training run")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--out")
    t.set_defaults(func=_train)

    s = sub.add_parser("sweep", help="run a campaign matrix")
    s.add_argument("--matrix", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=_sweep)

    e = sub.add_parser("evaluate", help="re-evaluate a finished run")
    e.add_argument("--run", required=True)
    e.add_argument("--episodes", type=int)
    e.set_defaults(func=_evaluate)

    d = sub.add_parser("diagnose", help="lambda activity and blindness report")
    d.add_argument("--run", required=True)
    d.set_defaults(func=_diagnose)

    a = sub.add_parser("aggregate", help="rebuild campaign.json")
    a.add_argument("--campaign", required=True)
    a.set_defaults(func=_aggregate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, InsufficientCheckpoints) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except MissingArtifacts as exc:
        print(f"missing artifacts: {exc}", file=sys.stderr)
        return EXIT_MISSING


if __name__ == "__main__":
    sys.exit(main())
