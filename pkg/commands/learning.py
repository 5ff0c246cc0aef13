"""train, rollout, eval and ablate."""
import logging
from pathlib import Path

import pandas as pd

from commands.common import emit, floats, words
from helpers.checkpoint import load_checkpoint, save_checkpoint
from helpers.demos_io import load_demos
from helpers.errors import IoError, UsageError
from helpers.evaluation import ablate, aggregate, evaluate, held_out_seeds, run_episodes, success_rate, training_demos
from helpers.policy import train
from models.config import TrainConfig
from models.enums import AblationAxis
from models.reports import StepLosses

logger = logging.getLogger(__name__)


def _load_config(args) -> TrainConfig:
    config = TrainConfig.load(args.config)
    if args.seed is not None:
        config = TrainConfig.parse({**config.dump(), "seed": args.seed})
    return config


def train_command(args) -> int:
    config = _load_config(args)
    demos = load_demos(args.demos) if args.demos else training_demos(config)
    out = Path(args.out)

    def evaluator(policy):
        return success_rate(policy, config.eval.episodes, config.seed)

    result = train(config, demos, evaluator if config.eval.every else None)
    save_checkpoint(result.policy, out)
    losses = pd.DataFrame([record.model_dump() for record in result.losses], columns=list(StepLosses.model_fields))
    history = pd.DataFrame(result.evaluations, columns=["step", "success_rate"])
    try:
        losses.to_csv(out / "loss.csv", index=False)
        history.to_csv(out / "train_history.csv", index=False)
    except OSError as e:
        raise IoError(f"cannot write training history to {out}: {e}")

    last = result.losses[-1]
    emit(
        {
            "out": str(out),
            "demos": len(demos),
            "steps": last.step,
            "parameters": result.policy.parameter_count(),
            "final_loss": last.loss,
        }
    )
    return 0


def rollout_command(args) -> int:
    policy = load_checkpoint(args.ckpt)
    seeds = held_out_seeds(args.seed, args.episodes)
    results = run_episodes(policy, seeds, workers=args.workers)
    emit(
        {
            "episodes": [result.model_dump() for result in results],
            "aggregates": aggregate(results).model_dump(),
        }
    )
    return 0


def eval_command(args) -> int:
    policy = load_checkpoint(args.ckpt)
    report = evaluate(policy, args.episodes, seed=args.seed, workers=args.workers, timings=args.timings)
    try:
        Path(args.report).parent.mkdir(parents=True, exist_ok=True)
        Path(args.report).write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot write report {args.report}: {e}")
    emit(report.aggregates.model_dump())
    return 0


def ablate_command(args) -> int:
    config = _load_config(args)
    axis = AblationAxis(args.axis)
    values = words(args.values)
    if not values:
        raise UsageError("--values is empty")
    seeds = [int(seed) for seed in floats(args.seeds, "--seeds")]
    _, summary = ablate(config, axis, values, seeds, args.out, workers=args.workers)
    emit({"out": str(args.out), "summary": summary.to_dict(orient="records")})
    return 0


def register(subparsers) -> None:
    p = subparsers.add_parser("train", help="train a policy from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.add_argument("--demos", help="JSONL demonstrations; generated from the config when absent")
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.set_defaults(handler=train_command)

    p = subparsers.add_parser("rollout", help="run a checkpoint on held-out episodes")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--episodes", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(handler=rollout_command)

    p = subparsers.add_parser("eval", help="evaluate a checkpoint and write a report")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--timings", action="store_true", help="include wall-clock timings in the report")
    p.set_defaults(handler=eval_command)

    p = subparsers.add_parser("ablate", help="train and evaluate variants along one ablation axis")
    p.add_argument("--config", required=True)
    p.add_argument("--axis", choices=[axis.value for axis in AblationAxis], required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--seeds", default="0", help="comma-separated training seeds")
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(handler=ablate_command, seed=None)
