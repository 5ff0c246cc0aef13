from pathlib import Path

import numpy as np
import pytest

from helpers.keyframes import keyframe_discovery
from helpers.tasks import drive, env_reset, observe, task_spec
from helpers.urdf import builtin_model
from models.config import TrainConfig
from models.demos import Demonstration, StepRecord
from models.enums import BuiltinModel, TaskName

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

TWO_ARM_URDF = """
<robot name="two_arms">
  <link name="base"/>
  <link name="l1"/>
  <link name="l2"/>
  <link name="l_tool"/>
  <link name="r1"/>
  <link name="r2"/>
  <joint name="left_shoulder" type="revolute">
    <parent link="base"/>
    <child link="l1"/>
    <origin xyz="-0.2 0 0" rpy="0 0 0"/>
    <axis xyz="0 0 1"/>
    <limit lower="-3" upper="3" velocity="1.5"/>
  </joint>
  <joint name="left_elbow" type="revolute">
    <parent link="l1"/>
    <child link="l2"/>
    <origin xyz="0.3 0 0"/>
    <axis xyz="0 0 2"/>
    <limit lower="-2" upper="2"/>
  </joint>
  <joint name="left_tool" type="fixed">
    <parent link="l2"/>
    <child link="l_tool"/>
    <origin xyz="0.1 0 0"/>
  </joint>
  <joint name="right_shoulder" type="revolute">
    <parent link="base"/>
    <child link="r1"/>
    <origin xyz="0.2 0 0"/>
    <axis xyz="0 0 1"/>
    <limit lower="-3" upper="3"/>
  </joint>
  <joint name="right_slide" type="prismatic">
    <parent link="r1"/>
    <child link="r2"/>
    <origin xyz="0.3 0 0"/>
    <axis xyz="1 0 0"/>
    <limit lower="0" upper="0.2"/>
  </joint>
</robot>
"""


@pytest.fixture(scope="session")
def planar():
    return builtin_model(BuiltinModel.PLANAR_BIMANUAL_3DOF)


@pytest.fixture(scope="session")
def spatial():
    return builtin_model(BuiltinModel.SPATIAL_BIMANUAL_7DOF)


@pytest.fixture
def two_arm_urdf():
    return TWO_ARM_URDF


@pytest.fixture(scope="session")
def smoke_config():
    return TrainConfig.load(CONFIGS / "smoke.json")


def move_right_arm_demo(seed: int) -> Demonstration:
    """Push-task demonstration that swings the right arm and toggles its gripper."""
    spec = task_spec(TaskName.PUSH_BOX)
    state = env_reset(spec, seed)
    records = [StepRecord(observation=observe(state), joint_targets=state.theta, gripper_cmds=state.grippers)]
    target = np.asarray(state.theta) + np.array([0.0, 0.0, 0.0, 0.2, -0.2, 0.1])
    for grippers, goal in (((1.0, 1.0), target), ((1.0, 0.0), target), ((1.0, 0.0), np.asarray(state.theta))):
        for executed in drive(state, goal, grippers):
            state = executed.state
            records.append(
                StepRecord(
                    observation=observe(state),
                    joint_targets=executed.joint_targets,
                    gripper_cmds=executed.gripper_cmds,
                )
            )
    steps = tuple(records)
    return Demonstration(
        task=spec.name,
        seed=seed,
        model_name=BuiltinModel.PLANAR_BIMANUAL_3DOF.value,
        steps=steps,
        keyframes=tuple(keyframe_discovery(steps)),
    )


@pytest.fixture(scope="session")
def synthetic_demos():
    return [move_right_arm_demo(seed) for seed in (0, 1)]
