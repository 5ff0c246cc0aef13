"""Keyframe discovery: gripper toggles and motion stops, plus the final step."""
from typing import List, Sequence

import numpy as np
import pandas as pd

from helpers.errors import EmptyTrajectory
from models.demos import Demonstration, StepRecord

STOP_SPEED = 1e-3


def joint_speeds(joint_configs) -> np.ndarray:
    """Largest per-joint change at each step; step 0 has speed 0."""
    thetas = np.asarray(joint_configs, dtype=float)
    speeds = np.zeros(len(thetas))
    if len(thetas) > 1:
        speeds[1:] = np.abs(np.diff(thetas, axis=0)).max(axis=1)
    return speeds


def keyframe_indices(joint_configs, grippers, stop_speed: float = STOP_SPEED) -> List[int]:
    thetas = np.asarray(joint_configs, dtype=float)
    if len(thetas) == 0:
        raise EmptyTrajectory("cannot extract keyframes from an empty trajectory")
    is_open = np.asarray(grippers, dtype=float).reshape(len(thetas), -1) > 0.5
    speeds = joint_speeds(thetas)

    keyframes = {len(thetas) - 1}
    for i in range(1, len(thetas)):
        if np.any(is_open[i] != is_open[i - 1]):
            keyframes.add(i)
        elif speeds[i] < stop_speed <= speeds[i - 1]:
            keyframes.add(i)
    return sorted(keyframes)


def keyframe_discovery(steps: Sequence[StepRecord], stop_speed: float = STOP_SPEED) -> List[int]:
    if not steps:
        raise EmptyTrajectory("cannot extract keyframes from an empty trajectory")
    return keyframe_indices(
        [step.observation.joint_config for step in steps],
        [step.grippers for step in steps],
        stop_speed,
    )


def keyframe_stats(demos: Sequence[Demonstration]) -> pd.DataFrame:
    rows = [
        {"task": demo.task.value, "seed": demo.seed, "steps": len(demo), "keyframes": len(demo.keyframes)}
        for demo in demos
    ]
    return pd.DataFrame(rows, columns=["task", "seed", "steps", "keyframes"])


def keyframe_summary(demos: Sequence[Demonstration]) -> pd.DataFrame:
    df = keyframe_stats(demos)
    if df.empty:
        return pd.DataFrame(columns=["task", "demos", "mean_keyframes", "min_keyframes", "max_keyframes", "mean_steps"])
    return (
        df.groupby("task")
        .agg(
            demos=("seed", "count"),
            mean_keyframes=("keyframes", "mean"),
            min_keyframes=("keyframes", "min"),
            max_keyframes=("keyframes", "max"),
            mean_steps=("steps", "mean"),
        )
        .reset_index()
    )
