from typing import Optional, Tuple

import numpy as np
from pydantic import field_validator

from helpers.rotations import (
    matrix_to_quat,
    quat_canonical,
    quat_conjugate,
    quat_multiply,
    quat_normalize,
    quat_to_matrix,
)
from . import BaseSchema
from .enums import ArmLabel

Vector3 = Tuple[float, float, float]
Quaternion = Tuple[float, float, float, float]


class Pose(BaseSchema):
    """Element of SE(3): position in meters and a unit quaternion (w, x, y, z) with w >= 0."""

    position: Vector3 = (0.0, 0.0, 0.0)
    orientation: Quaternion = (1.0, 0.0, 0.0, 0.0)

    @field_validator("orientation")
    @classmethod
    def unit_orientation(cls, q: Quaternion) -> Quaternion:
        arr = np.asarray(q, dtype=float)
        norm = np.linalg.norm(arr)
        if norm < 1e-12:
            raise ValueError("orientation quaternion has zero norm")
        if abs(norm - 1.0) > 1e-12:
            arr = arr / norm
        return tuple(float(v) for v in quat_canonical(arr))

    @classmethod
    def from_matrix(cls, T: np.ndarray) -> "Pose":
        T = np.asarray(T, dtype=float)
        return cls(
            position=tuple(float(v) for v in T[:3, 3]),
            orientation=tuple(float(v) for v in matrix_to_quat(T[:3, :3])),
        )

    @classmethod
    def from_array(cls, values) -> "Pose":
        values = np.asarray(values, dtype=float)
        return cls(position=tuple(values[:3]), orientation=tuple(values[3:7]))

    def to_matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = quat_to_matrix(self.orientation)
        T[:3, 3] = self.position
        return T

    def as_array(self) -> np.ndarray:
        return np.array([*self.position, *self.orientation])

    def compose(self, other: "Pose") -> "Pose":
        q = quat_multiply(self.orientation, other.orientation)
        p = np.asarray(self.position) + quat_to_matrix(self.orientation) @ np.asarray(other.position)
        return Pose(position=tuple(p), orientation=tuple(quat_normalize(q)))

    def inverse(self) -> "Pose":
        q = quat_conjugate(self.orientation)
        p = -(quat_to_matrix(q) @ np.asarray(self.position))
        return Pose(position=tuple(p), orientation=tuple(q))


class JointConfiguration(BaseSchema):
    """Joint values in model order: radians for revolute joints, meters for prismatic ones."""

    values: Tuple[float, ...]
    model_name: Optional[str] = None

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    @classmethod
    def of(cls, values, model_name: Optional[str] = None) -> "JointConfiguration":
        return cls(values=tuple(float(v) for v in np.ravel(values)), model_name=model_name)


ARM_WIDTH = 8
POSE_VECTOR_WIDTH = 2 * ARM_WIDTH


class PoseVector(BaseSchema):
    """Bimanual end-effector action: per arm position (3), quaternion (4), gripper in [0, 1].

    Layout is left block then right block. ``degenerate`` flags arms whose
    quaternion block was replaced by the identity during normalization.
    """

    values: Tuple[float, ...]
    degenerate: Tuple[bool, bool] = (False, False)

    @field_validator("values")
    @classmethod
    def sixteen_values(cls, values):
        if len(values) != POSE_VECTOR_WIDTH:
            raise ValueError(f"pose vector needs {POSE_VECTOR_WIDTH} values, got {len(values)}")
        return values

    @classmethod
    def from_arms(cls, left: Pose, left_gripper: float, right: Pose, right_gripper: float) -> "PoseVector":
        return cls(
            values=(
                *left.position,
                *left.orientation,
                float(left_gripper),
                *right.position,
                *right.orientation,
                float(right_gripper),
            )
        )

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def block(self, arm: ArmLabel) -> np.ndarray:
        start = 0 if ArmLabel(arm) is ArmLabel.LEFT else ARM_WIDTH
        return self.as_array()[start : start + ARM_WIDTH]

    def pose(self, arm: ArmLabel) -> Pose:
        return Pose.from_array(self.block(arm)[:7])

    def gripper(self, arm: ArmLabel) -> float:
        return float(self.block(arm)[7])

    def grippers(self) -> Tuple[float, float]:
        return (self.gripper(ArmLabel.LEFT), self.gripper(ArmLabel.RIGHT))
