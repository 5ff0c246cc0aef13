"""gen-demos, keyframes and plot-data."""
import logging
from pathlib import Path

import pandas as pd

from commands.common import emit
from helpers.demos_io import load_demos, save_demos
from helpers.errors import IoError, UsageError
from helpers.keyframes import keyframe_stats, keyframe_summary
from helpers.tasks import generate_demos
from models.enums import TaskName

logger = logging.getLogger(__name__)


def gen_demos_command(args) -> int:
    demos = generate_demos(args.task, args.num, args.seed)
    save_demos(args.out, demos)
    emit(
        {
            "task": args.task,
            "requested": args.num,
            "written": len(demos),
            "seeds": [demo.seed for demo in demos],
            "path": str(args.out),
        }
    )
    return 0


def keyframes_command(args) -> int:
    demos = load_demos(args.input)
    if args.stats:
        emit(
            {
                "per_demo": keyframe_stats(demos).to_dict(orient="records"),
                "per_task": keyframe_summary(demos).to_dict(orient="records"),
            }
        )
    else:
        emit([{"task": demo.task.value, "seed": demo.seed, "keyframes": list(demo.keyframes)} for demo in demos])
    return 0


def _read_csv(path: Path):
    try:
        return pd.read_csv(path) if path.exists() else None
    except (OSError, pd.errors.ParserError) as e:
        raise IoError(f"cannot read {path}: {e}")


def plot_data_command(args) -> int:
    """Gather training and ablation outputs into plot-ready CSV series."""
    if not args.run and not args.ablation:
        raise UsageError("plot-data needs --run and/or --ablation")
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        written = _write_series(args, out)
    except OSError as e:
        raise IoError(f"cannot write plot data to {out}: {e}")

    if not written:
        logger.warning("no input series found for plot-data")
    emit({"out": str(out), "written": written})
    return 0


def _write_series(args, out: Path) -> list:
    written = []
    if args.run:
        run = Path(args.run)
        losses = _read_csv(run / "loss.csv")
        if losses is not None:
            losses[["step", "loss", "loss_ee", "loss_joint"]].to_csv(out / "loss_curve.csv", index=False)
            written.append("loss_curve.csv")
        history = _read_csv(run / "train_history.csv")
        if history is not None:
            history[["step", "success_rate"]].to_csv(out / "success_vs_steps.csv", index=False)
            written.append("success_vs_steps.csv")

    if args.ablation:
        ablation = _read_csv(Path(args.ablation) / "ablation.csv")
        if ablation is not None:
            demos = ablation[ablation["axis"] == "demos"]
            if not demos.empty:
                table = (
                    demos.assign(num_demos=demos["value"].astype(int))
                    .groupby("num_demos")
                    .agg(success_rate=("success_rate", "mean"), seeds=("seed", "count"))
                    .reset_index()
                    .sort_values("num_demos")
                )
                table.to_csv(out / "success_vs_demos.csv", index=False)
                written.append("success_vs_demos.csv")
    return written


def register(subparsers) -> None:
    p = subparsers.add_parser("gen-demos", help="scripted expert demonstrations as JSONL")
    p.add_argument("--task", choices=[task.value for task in TaskName], required=True)
    p.add_argument("--num", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=gen_demos_command)

    p = subparsers.add_parser("keyframes", help="keyframes of a demonstration file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--stats", action="store_true", help="per-demo and per-task keyframe statistics")
    p.set_defaults(handler=keyframes_command)

    p = subparsers.add_parser("plot-data", help="CSV series for external plotting")
    p.add_argument("--run", help="training output directory")
    p.add_argument("--ablation", help="ablation output directory")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=plot_data_command)
