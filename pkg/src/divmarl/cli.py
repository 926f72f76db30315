"""Command line front end.

  train    run training for each configured seed, writing run artifacts
  eval     roll out a saved checkpoint and report mean/SD return
  analyze  aggregate a run directory into tables and figures

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .analysis import AnalysisError, analyze_run_dir
from .checkpoint import CheckpointError, load_checkpoint
from .config import (
    ConfigError,
    apply_ablation,
    build_run_config,
    describe_keys,
    parse_assignment,
    read_config_file,
    write_config_snapshot,
    KEY_REGISTRY,
    ABLATIONS,
)
from .envs.base import EnvContractError
from .envs.pacmen import PacMenEnv
from .runner import evaluate, run_training
from .seeding import seed_bundle
from .traces import TraceError, write_traces


class UsageError(Exception):
    """Bad flags or arguments; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse would exit(2)
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> _Parser:
    parser = _Parser(prog="divmarl", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)

    train = sub.add_parser("train", help="train on the foraging gridworld")
    train.add_argument("--config", help="flat key=value config file")
    train.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a single config key (repeatable)",
    )
    train.add_argument("--seed", help="comma-separated seed list, overrides run.seeds")
    train.add_argument("--out", help="output directory, overrides run.out_dir")
    train.add_argument("--ablation", choices=ABLATIONS, help="overrides learner.ablation")
    train.add_argument(
        "--deterministic",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="overrides run.deterministic",
    )
    train.add_argument("--list-keys", action="store_true", help="print all config keys and exit")
    train.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="evaluate a checkpoint")
    ev.add_argument("checkpoint", help="path to a checkpoint .npz")
    ev.add_argument("--eval-episodes", type=int, default=100)
    ev.add_argument("--epsilon", type=float, default=0.0)
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--out", help="directory for traces.jsonl and eval_report.json")
    ev.set_defaults(func=cmd_eval)

    an = sub.add_parser("analyze", help="aggregate a run directory")
    an.add_argument("run_dir", help="directory written by train (holds seed_* subdirectories)")
    an.add_argument("--out", help="where to write analysis outputs (default <run_dir>/analysis)")
    an.set_defaults(func=cmd_analyze)
    return parser


def cmd_train(args) -> int:
    if args.list_keys:
        print(describe_keys())
        return 0
    pairs = read_config_file(args.config) if args.config else {}
    for assignment in args.set:
        key, value = parse_assignment(assignment)
        if key not in KEY_REGISTRY:
            raise ConfigError(f"unknown config key {key!r} in --set {assignment!r}")
        pairs[key] = value
    if args.seed is not None:
        pairs["run.seeds"] = args.seed
    if args.out is not None:
        pairs["run.out_dir"] = args.out
    if args.ablation is not None:
        pairs["learner.ablation"] = args.ablation
    if args.deterministic is not None:
        pairs["run.deterministic"] = "true" if args.deterministic else "false"

    cfg = build_run_config(pairs)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_config_snapshot(out_dir / "config.cfg", apply_ablation(cfg))

    for seed in cfg.seeds:
        report = run_training(cfg, seed, out_dir / f"seed_{seed}")
        print(
            f"seed {seed}: episodes {report['episodes']}, env_steps {report['env_steps']}, "
            f"eval mean return {report['mean_return']:.3f} (sd {report['sd_return']:.3f})"
        )
    print(f"artifacts written to {out_dir}")
    return 0


def cmd_eval(args) -> int:
    if args.eval_episodes < 1:
        raise UsageError("--eval-episodes must be at least 1")
    if not 0.0 <= args.epsilon <= 1.0:
        raise UsageError("--epsilon must lie in [0, 1]")
    loaded = load_checkpoint(args.checkpoint)
    env = PacMenEnv()
    if loaded.spec != env.spec:
        raise CheckpointError(
            f"checkpoint spec {loaded.spec} does not match the environment spec {env.spec}"
        )
    result = evaluate(
        loaded.agent, env, args.eval_episodes, args.epsilon, seed_bundle(args.seed).eval
    )
    print(
        f"episodes {args.eval_episodes}, epsilon {args.epsilon}: "
        f"mean return {result.mean:.4f} (sd {result.sd:.4f}, "
        f"min {result.returns.min():.1f}, max {result.returns.max():.1f})"
    )
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_traces(out_dir / "traces.jsonl", result.traces)
        import json

        report = {
            "checkpoint": str(args.checkpoint),
            "eval_episodes": args.eval_episodes,
            "eval_epsilon": args.epsilon,
            "mean_return": result.mean,
            "sd_return": result.sd,
        }
        (out_dir / "eval_report.json").write_text(json.dumps(report, indent=2) + "\n")
        print(f"traces and report written to {out_dir}")
    return 0


def cmd_analyze(args) -> int:
    summary = analyze_run_dir(args.run_dir, args.out)
    for entry in summary["seeds"]:
        rooms = entry["room_assignment"]
        covered = entry["distinct_room_visitors"]
        print(
            f"{entry['seed_dir']}: mean return {entry['mean_return']}, "
            f"{covered} distinct room visitors, "
            f"sd ratio corridors+center {entry['corridor_center_sd_ratio']:.3f} "
            f"vs edge rooms {entry['edge_room_sd_ratio']:.3f}"
        )
        print(f"  rooms: {rooms}")
    out = Path(args.out) if args.out else Path(args.run_dir) / "analysis"
    print(f"analysis written to {out}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "func", None) is None:
            parser.print_help()
            return 1
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (CheckpointError, AnalysisError, TraceError, EnvContractError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
