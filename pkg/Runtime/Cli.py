"""
Command line entry point.

    python -m Runtime.Cli train --config configs/discern-uniform.cfg --out runs/a [--seed N] [--actors N] [--frames N]
    python -m Runtime.Cli eval --checkpoint runs/a/checkpoint.dsrn --goals goals.dsgs --trials 20 --out eval.csv
    python -m Runtime.Cli dump-goals --checkpoint runs/a/checkpoint.dsrn --out buffer.dsgb
    python -m Runtime.Cli preset discern-diverse --out runs/b
    python -m Runtime.Cli goals --out goals.dsgs
    python -m Runtime.Cli compare --runs uniform=runs/a diverse=runs/b --out compare.svg
    python -m Runtime.Cli serve
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import pandas as pd

from Evaluation.Evaluate import evaluate
from Evaluation.GoalSet import build_goal_set, load_goal_set, save_goal_set
from Evaluation.Presets import PRESETS, run_preset
from Evaluation.Report import emit_comparison
from GoalBuffer.Buffer import GoalBuffer
from Runtime.Checkpoint import Checkpoint, checkpoint_load
from Runtime.Config import build_config, load_config
from Runtime.Trainer import METRICS_NAME, read_buffer_state, read_params, train
from shared.errors import DiscernError, EmptyReportError
from shared.logs import configure_logging
from shared.schemas import ExperimentConfig

log = logging.getLogger("discern.cli")


def _overrides(args: argparse.Namespace) -> dict:
    return {"seed": args.seed, "actors": args.actors, "total_frames": args.frames}


def _config_from_checkpoint(ckpt: Checkpoint) -> ExperimentConfig:
    return build_config(ckpt.blobs["config"])


def cmd_train(args: argparse.Namespace) -> int:
    config = load_config(args.config, _overrides(args))
    rows = train(config, Path(args.out), resume=args.resume)
    log.info("train done rows=%d final_achievement=%.4f", len(rows), rows[-1].achievement_overall)
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    ckpt = checkpoint_load(Path(args.checkpoint))
    config = _config_from_checkpoint(ckpt)
    goal_set = load_goal_set(Path(args.goals))
    report = evaluate(read_params(ckpt, "params"), goal_set, args.trials, config.episode_length, config.env,
                      seed=config.eval_seed, workers=args.workers, frames=ckpt.blobs["learner"]["frames"])
    row = {"frames": report.frames, "n_goals": report.n_goals, "trials_per_goal": report.trials_per_goal,
           "achievement_overall": report.overall}
    row.update({f"achievement_dim_{i}": v for i, v in enumerate(report.per_dimension)})
    pd.DataFrame([row]).to_csv(args.out, index=False)
    return 0


def cmd_dump_goals(args: argparse.Namespace) -> int:
    ckpt = checkpoint_load(Path(args.checkpoint))
    config = _config_from_checkpoint(ckpt)
    buffer = GoalBuffer(config.buffer_capacity, config.env.obs_shape, config.buffer_strategy,
                        warmup=config.goal_warmup)
    buffer.restore(read_buffer_state(ckpt))
    buffer.dump(Path(args.out))
    return 0


def cmd_preset(args: argparse.Namespace) -> int:
    base = load_config(args.config, _overrides(args)) if args.config else build_config({}, _overrides(args))
    rows = run_preset(args.name, Path(args.out), base)
    log.info("preset %s done rows=%d final_achievement=%.4f", args.name, len(rows), rows[-1].achievement_overall)
    return 0


def cmd_goals(args: argparse.Namespace) -> int:
    config = load_config(args.config) if args.config else ExperimentConfig()
    n_goals = args.n or config.eval_goals
    seed = config.eval_seed if args.seed is None else args.seed
    save_goal_set(Path(args.out), build_goal_set(config.env, n_goals, seed))
    log.info("goal set written path=%s goals=%d seed=%d", args.out, n_goals, seed)
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    runs = {}
    for spec in args.runs:
        label, sep, run_dir = spec.partition("=")
        if not sep:
            label, run_dir = Path(spec).name, spec
        metrics = Path(run_dir) / METRICS_NAME
        if not metrics.exists():
            raise EmptyReportError(f"no {METRICS_NAME} in {run_dir}")
        runs[label] = metrics
    emit_comparison(runs, Path(args.out))
    log.info("comparison written path=%s runs=%d", args.out, len(runs))
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    uvicorn.run("Runtime.Backend:app", host=args.host, port=args.port, reload=False)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="discern", description="Desk-scale goal-reaching agent")
    parser.add_argument("--log-level", default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    def run_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--actors", type=int, default=None)
        p.add_argument("--frames", type=int, default=None)

    p = sub.add_parser("train", help="train an agent")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--resume", action="store_true", help="continue from the checkpoint in --out")
    run_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a goal set")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--goals", required=True)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("dump-goals", help="write the goal buffer of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dump_goals)

    p = sub.add_parser("preset", help="train one of the named experiment presets")
    p.add_argument("name", help="one of: " + ", ".join(sorted(PRESETS)))
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None, help="base config the preset deltas apply to")
    run_flags(p)
    p.set_defaults(func=cmd_preset)

    p = sub.add_parser("goals", help="build a fixed evaluation goal set")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_goals)

    p = sub.add_parser("compare", help="plot the achievement curves of several runs together")
    p.add_argument("--runs", nargs="+", required=True, metavar="LABEL=DIR")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("serve", help="start the run-control backend")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.func(args)
    except DiscernError as e:
        log.error("%s: %s", type(e).__name__, e)
        return 2


if __name__ == "__main__":
    sys.exit(main())
