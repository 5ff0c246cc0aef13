import logging
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import cachetools.func
import pandas as pd

from helpers.errors import ConfigError, IoError
from helpers.policy import Policy, rollout, train
from helpers.tasks import generate_demos, task_spec
from models.config import RolloutOptions, TrainConfig
from models.demos import Demonstration
from models.enums import AblationAxis, TaskName
from models.reports import Aggregates, EpisodeResult, RunReport

logger = logging.getLogger(__name__)

HELD_OUT_BASE = 1_000_000
COMPONENT_VARIANTS = ("full", "no_kr", "no_kr_no_graph")
ABLATION_COLUMNS = [
    "axis",
    "value",
    "seed",
    "success_rate",
    "feasibility_rate",
    "mean_collisions",
    "mean_ik_failures",
]


def held_out_seeds(seed: int, episodes: int) -> List[int]:
    """Environment seeds disjoint from the demonstration seeds."""
    return [HELD_OUT_BASE + seed * 1000 + i for i in range(episodes)]


def run_episodes(
    policy: Policy,
    seeds: Sequence[int],
    opts: Optional[RolloutOptions] = None,
    workers: int = 1,
    task: Optional[TaskName] = None,
) -> List[EpisodeResult]:
    """Roll out one episode per seed; results keep the order of ``seeds``."""
    spec = task_spec(task or policy.config.task)
    if workers <= 1:
        return [rollout(policy, spec, opts, seed) for seed in seeds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda seed: rollout(policy, spec, opts, seed), seeds))


def episodes_frame(episodes: Sequence[EpisodeResult]) -> pd.DataFrame:
    columns = list(EpisodeResult.model_fields)
    return pd.DataFrame([episode.model_dump() for episode in episodes], columns=columns)


def aggregate(episodes: Sequence[EpisodeResult]) -> Aggregates:
    df = episodes_frame(episodes)
    if df.empty:
        return Aggregates(
            episodes=0, success_rate=0.0, mean_collisions=0.0, mean_ik_failures=0.0, mean_steps=0.0, feasibility_rate=0.0
        )
    predicted = int(df["predicted_poses"].sum())
    return Aggregates(
        episodes=len(df),
        success_rate=float(df["success"].mean()),
        mean_collisions=float(df["collisions"].mean()),
        mean_ik_failures=float(df["ik_failures"].mean()),
        mean_steps=float(df["steps"].mean()),
        feasibility_rate=float(df["feasible_poses"].sum() / predicted) if predicted else 0.0,
    )


def evaluate(
    policy: Policy,
    episodes: int,
    seed: int = 0,
    workers: int = 1,
    timings: bool = False,
    opts: Optional[RolloutOptions] = None,
) -> RunReport:
    seeds = held_out_seeds(seed, episodes)
    started = time.perf_counter()
    results = run_episodes(policy, seeds, opts, workers)
    elapsed = time.perf_counter() - started

    config = {
        "train": policy.config.dump(),
        "task": policy.config.task.value,
        "episodes": episodes,
        "seed": seed,
        "workers": workers,
    }
    report = RunReport(
        config=config,
        episodes=tuple(results),
        aggregates=aggregate(results),
        timings={"total_s": elapsed, "per_episode_s": elapsed / max(episodes, 1)} if timings else None,
    )
    logger.info("evaluated %d episodes: success %.3f", episodes, report.aggregates.success_rate)
    return report


def success_rate(policy: Policy, episodes: int, seed: int = 0) -> float:
    return aggregate(run_episodes(policy, held_out_seeds(seed, episodes))).success_rate


@cachetools.func.lru_cache(maxsize=16)
def _cached_demos(task: TaskName, num: int, seed: int, opts: RolloutOptions) -> Tuple[Demonstration, ...]:
    return tuple(generate_demos(task, num, seed, opts))


def training_demos(config: TrainConfig) -> List[Demonstration]:
    return list(_cached_demos(config.task, config.num_demos, config.demo_seed, config.rollout))


def variant(config: TrainConfig, axis: AblationAxis, value, seed: int) -> TrainConfig:
    """``config`` with one ablation axis set to ``value`` and the training seed replaced."""
    axis = AblationAxis(axis)
    update: Dict[str, object] = {"seed": seed}
    try:
        if axis is AblationAxis.LAM:
            update["lam"] = float(value)
        elif axis is AblationAxis.CHUNK:
            update["chunk"] = int(value)
        elif axis is AblationAxis.HISTORY:
            update["graph"] = config.graph.model_copy(update={"history": int(value)})
        elif axis is AblationAxis.DEMOS:
            update["num_demos"] = int(value)
        elif value == "full":
            update.update(use_graph=True, use_reference=True)
        elif value == "no_kr":
            update.update(lam=1.0, use_graph=True, use_reference=False)
        elif value == "no_kr_no_graph":
            update.update(lam=1.0, use_graph=False, use_reference=False)
        else:
            raise ConfigError(f"unknown component variant {value!r}; choose one of {list(COMPONENT_VARIANTS)}")
    except ValueError:
        raise ConfigError(f"invalid value {value!r} for ablation axis {axis.value}")
    return TrainConfig.parse({**config.dump(), **{k: _plain(v) for k, v in update.items()}})


def _plain(value):
    return value.model_dump(mode="json") if hasattr(value, "model_dump") else value


def ablate(
    config: TrainConfig,
    axis: AblationAxis,
    values: Sequence,
    seeds: Sequence[int],
    out_dir: Union[str, Path],
    workers: int = 1,
) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """Train and evaluate one variant per (value, seed); writes ablation.csv and ablation_summary.csv."""
    axis = AblationAxis(axis)
    rows = []
    for value in values:
        for seed in seeds:
            cfg = variant(config, axis, value, seed)
            logger.info("ablation %s=%s seed %d", axis.value, value, seed)
            result = train(cfg, training_demos(cfg))
            report = evaluate(result.policy, cfg.eval.episodes, seed=seed, workers=workers)
            agg = report.aggregates
            rows.append(
                {
                    "axis": axis.value,
                    "value": str(value),
                    "seed": seed,
                    "success_rate": agg.success_rate,
                    "feasibility_rate": agg.feasibility_rate,
                    "mean_collisions": agg.mean_collisions,
                    "mean_ik_failures": agg.mean_ik_failures,
                }
            )

    df = pd.DataFrame(rows, columns=ABLATION_COLUMNS)
    summary = (
        df.groupby(["axis", "value"], sort=False)
        .agg(
            seeds=("seed", "count"),
            success_rate=("success_rate", "mean"),
            feasibility_rate=("feasibility_rate", "mean"),
            mean_collisions=("mean_collisions", "mean"),
            mean_ik_failures=("mean_ik_failures", "mean"),
        )
        .reset_index()
    )
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        df.to_csv(out_dir / "ablation.csv", index=False)
        summary.to_csv(out_dir / "ablation_summary.csv", index=False)
    except OSError as e:
        raise IoError(f"cannot write ablation results to {out_dir}: {e}")
    return df, summary
