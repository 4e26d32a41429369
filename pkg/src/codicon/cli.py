"""Command-line entry points: train, eval, dump."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import VARIANTS, apply_variant, load_config
from .evaluate import dump_state_rewards, evaluate_bundle
from .params_io import load_params
from .training import TrainingDiverged, run_training


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="codicon",
        description="Competitive ranked intrinsic rewards on the Pac-Men gridworld.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="run one training experiment")
    train.add_argument("--config", required=True, help="INI config file")
    train.add_argument("--variant", choices=VARIANTS)
    train.add_argument("--seed", type=int)
    train.add_argument("--out", help="directory to create the run directory in")
    train.add_argument("--lambda", dest="lam", type=float,
                       help="intrinsic reward weight")
    train.add_argument("--iterations", type=int)
    train.add_argument("--episodes", dest="episodes_per_iter", type=int)
    train.add_argument("--alpha", type=float, help="policy learning rate")
    train.add_argument("--beta", type=float, help="ranking-net learning rate")
    train.add_argument("--beta1", type=float, help="target-loss coefficient")
    train.add_argument("--beta2", type=float, help="variance-loss coefficient")
    train.add_argument("--entropy-coef", dest="entropy_coef", type=float)
    train.add_argument("--map", dest="map_path", help="map text file")
    train.add_argument("--assignment", choices=("identity", "rank_position"))
    train.add_argument("--no-eta-updates", action="store_true",
                       help="freeze the ranking net (both of its update steps)")
    train.add_argument("--fresh-meta-samples", action="store_true",
                       help="collect a fresh batch under the updated policies "
                            "for the outer-objective gradient")

    ev = sub.add_parser("eval", help="greedy evaluation of a parameter file")
    ev.add_argument("--params", required=True)
    ev.add_argument("--episodes", type=int, required=True)
    ev.add_argument("--seed", type=int, required=True)
    ev.add_argument("--map", dest="map_path")

    dump = sub.add_parser("dump", help="write a state/reward CSV from rollouts")
    dump.add_argument("--params", required=True)
    dump.add_argument("--episodes", type=int, default=16)
    dump.add_argument("--seed", type=int, default=0)
    dump.add_argument("--out", default="state_reward_dump.csv")
    dump.add_argument("--map", dest="map_path")
    return parser


_OVERRIDES = (
    "variant", "seed", "out", "lam", "iterations", "episodes_per_iter",
    "alpha", "beta", "beta1", "beta2", "entropy_coef", "map_path", "assignment",
)


def _cmd_train(args) -> int:
    try:
        cfg = load_config(args.config)
        for name in _OVERRIDES:
            value = getattr(args, name)
            if value is not None:
                setattr(cfg, name, value)
        if args.no_eta_updates:
            cfg.train_eta = False
        if args.fresh_meta_samples:
            cfg.fresh_meta_samples = True
        apply_variant(cfg)
        cfg.validate()
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    try:
        run_dir = run_training(cfg)
    except TrainingDiverged as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    print(f"run complete: {run_dir}")
    return 0


def _load_map(args):
    from . import pacmen

    return pacmen.load_map(args.map_path) if args.map_path else None


def _cmd_eval(args) -> int:
    if not Path(args.params).is_file():
        print(f"error: no such parameter file: {args.params}", file=sys.stderr)
        return 2
    try:
        bundle = load_params(args.params)
        report = evaluate_bundle(bundle, args.episodes, args.seed, gmap=_load_map(args))
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    print(report.summary_text())
    return 0


def _cmd_dump(args) -> int:
    if not Path(args.params).is_file():
        print(f"error: no such parameter file: {args.params}", file=sys.stderr)
        return 2
    try:
        bundle = load_params(args.params)
        rows = dump_state_rewards(bundle, args.out, args.episodes, args.seed,
                                  gmap=_load_map(args))
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    print(f"wrote {rows} rows to {args.out}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return {"train": _cmd_train, "eval": _cmd_eval, "dump": _cmd_dump}[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
