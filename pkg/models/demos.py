from typing import Optional, Tuple

import numpy as np
from pydantic import Field, field_validator, model_validator

from . import BaseSchema
from .enums import TaskName
from .pose import PoseVector

INSTRUCTIONS = {
    TaskName.LIFT_PLATE: "Lift the plate.",
    TaskName.HANDOVER: "Handover the item.",
    TaskName.PUSH_BOX: "Push the box to the red area.",
}
VOCABULARY = tuple(INSTRUCTIONS.values())


def instruction_id(task: TaskName) -> int:
    return VOCABULARY.index(INSTRUCTIONS[TaskName(task)])


class Observation(BaseSchema):
    timestep: int
    joint_config: Tuple[float, ...]
    ee_poses: PoseVector
    object_state: Tuple[float, ...]
    instruction_id: int = Field(ge=0, lt=len(VOCABULARY))

    @property
    def width(self) -> int:
        return len(self.joint_config) + len(self.ee_poses.values) + len(self.object_state)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.joint_config, self.ee_poses.values, self.object_state])


class StepRecord(BaseSchema):
    """State after one environment step and the command that produced it."""

    observation: Observation
    joint_targets: Tuple[float, ...]
    gripper_cmds: Tuple[float, float]

    @property
    def joint_config(self) -> np.ndarray:
        return np.asarray(self.observation.joint_config)

    @property
    def ee_poses(self) -> PoseVector:
        return self.observation.ee_poses

    @property
    def grippers(self) -> Tuple[float, float]:
        return self.observation.ee_poses.grippers()


class Demonstration(BaseSchema):
    task: TaskName
    seed: int
    model_name: str
    steps: Tuple[StepRecord, ...]
    keyframes: Tuple[int, ...]

    @field_validator("steps")
    @classmethod
    def not_empty(cls, steps):
        if not steps:
            raise ValueError("demonstration has no steps")
        return steps

    @model_validator(mode="after")
    def keyframes_valid(self):
        keyframes = list(self.keyframes)
        if keyframes != sorted(set(keyframes)):
            raise ValueError("keyframes must be sorted and unique")
        if any(k < 0 or k >= len(self.steps) for k in keyframes):
            raise ValueError("keyframe index out of range")
        if not keyframes or keyframes[-1] != len(self.steps) - 1:
            raise ValueError("the last step must be a keyframe")
        return self

    def __len__(self) -> int:
        return len(self.steps)

    def joint_configs(self) -> np.ndarray:
        return np.array([step.observation.joint_config for step in self.steps])

    def grippers(self) -> np.ndarray:
        return np.array([step.grippers for step in self.steps])

    def observation(self, index: int) -> Observation:
        return self.steps[index].observation

    def keyframe_actions(self) -> Tuple[PoseVector, ...]:
        return tuple(self.steps[k].ee_poses for k in self.keyframes)


class DemoHeader(BaseSchema):
    schema_: str = Field("kstar-demo/1", alias="schema")
    count: Optional[int] = None


class ActionChunk(BaseSchema):
    """Consecutive predicted keyframe actions, the first one executed."""

    actions: Tuple[PoseVector, ...]

    def __len__(self) -> int:
        return len(self.actions)

    def as_array(self) -> np.ndarray:
        return np.concatenate([action.as_array() for action in self.actions])
