"""Command line entry point: ``tcdqn {train,eval,ablate,baseline,plot}``.

Exit codes: 0 success, 2 configuration or usage error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import logging
import sys

from .agent import TOGGLES
from .config import ConfigError, RunConfig, load_config, parse_toggle, validate, with_overrides
from .harness import (HarnessError, MetricsParseError, emit_plot_data, run_ablation, run_baseline, run_eval,
                      run_training, sweep_fixed_time)
from .neural import CheckpointError

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run config (defaults used when omitted)")
    common.add_argument("--seed", type=int)
    common.add_argument("--episodes", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--toggle", action="append", default=[], metavar="NAME=off",
                        help=f"switch a component on/off; one of {', '.join(TOGGLES)} (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="tcdqn", description="Traffic-signal DQN experiments")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[common], help="train an agent")

    ev = sub.add_parser("eval", parents=[common], help="greedy evaluation of a checkpoint")
    ev.add_argument("checkpoint")
    ev.add_argument("--scenario", type=int, choices=(1, 2, 3))
    ev.add_argument("--seeds", type=int)

    ab = sub.add_parser("ablate", parents=[common], help="train every ablation variant")
    ab.add_argument("--seeds", type=int, default=3, help="number of seeds, starting at --seed")
    ab.add_argument("--only", nargs="+", choices=TOGGLES, help="toggles to ablate (default: all)")

    bs = sub.add_parser("baseline", parents=[common], help="evaluate a non-learning controller")
    bs.add_argument("--kind", choices=("ft", "sotl", "random"), default="ft")
    bs.add_argument("--scenario", type=int, choices=(1, 2, 3))
    bs.add_argument("--seeds", type=int)
    bs.add_argument("--sweep", action="store_true", help="with --kind ft: pick the best plan from the grid first")

    pl = sub.add_parser("plot", help="raw and smoothed series from metrics CSVs")
    pl.add_argument("metrics", nargs="*")
    pl.add_argument("--out", default="plots")
    pl.add_argument("--decay", type=float, default=0.99)
    pl.add_argument("--svg", action="store_true", help="also draw one SVG line chart per run")
    return p


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else validate(RunConfig())
    toggles = dict(parse_toggle(t) for t in args.toggle)
    return with_overrides(cfg, seed=args.seed, episodes=args.episodes, out_dir=args.out, toggles=toggles)


def _run(args) -> None:
    if args.command == "plot":
        if not args.metrics:
            raise ConfigError("metrics", "plot needs at least one metrics CSV")
        for path in emit_plot_data(args.metrics, args.out, args.decay, args.svg):
            print(path)
        return
    cfg = _config(args)
    if args.command == "train":
        res = run_training(cfg, progress=args.verbose)
        tail = [r.omega_T for r in res.records[-100:]]
        print(f"episodes {len(res.records)}  final mean omega_T {sum(tail) / len(tail):.1f}")
        print(f"metrics {res.metrics_path}")
        print(f"checkpoint {res.checkpoints[-1]}")
    elif args.command == "eval":
        summary, _ = run_eval(cfg, args.checkpoint, args.scenario, args.seeds, args.episodes)
        _print_summary(summary)
    elif args.command == "baseline":
        if args.sweep:
            if args.kind != "ft":
                raise ConfigError("sweep", "--sweep only applies to --kind ft")
            plan, _ = sweep_fixed_time(cfg, scenario=args.scenario)
            cfg.baselines.ft_plan = [list(e) for e in plan.entries]
            print(f"best plan {list(plan.entries)}")
        summary, _ = run_baseline(cfg, args.kind, args.scenario, args.seeds, args.episodes)
        _print_summary(summary)
    elif args.command == "ablate":
        seeds = tuple(range(cfg.seed, cfg.seed + args.seeds))
        res = run_ablation(cfg, tuple(args.only) if args.only else TOGGLES, seeds)
        print(f"summary {res['summary']}")


def _print_summary(summary: dict) -> None:
    print("  ".join(f"{k}={v}" for k, v in summary.items()))


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(message)s")
    try:
        _run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (HarnessError, CheckpointError, MetricsParseError, OSError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
