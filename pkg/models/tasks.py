from typing import Optional, Tuple

from pydantic import Field

from . import BaseSchema
from .demos import instruction_id
from .enums import ArmLabel, BuiltinModel, TaskName
from .pose import PoseVector

Point2 = Tuple[float, float]


class TaskSpec(BaseSchema):
    name: TaskName
    success_pos_tol: float = Field(0.02, gt=0)
    step_budget: int = Field(50, ge=1)
    object_ranges: Tuple[Tuple[float, float], ...] = ()
    model_name: str = BuiltinModel.PLANAR_BIMANUAL_3DOF.value

    @property
    def instruction_id(self) -> int:
        return instruction_id(self.name)


class EnvState(BaseSchema):
    """Kinematic world state. ``obj`` is the plate centroid, item or box in the XY plane."""

    task: TaskName
    seed: int
    theta: Tuple[float, ...]
    grippers: Tuple[float, float]
    ee_poses: PoseVector
    obj: Point2
    target: Point2
    held: Tuple[bool, bool] = (False, False)
    offsets: Tuple[Point2, Point2] = ((0.0, 0.0), (0.0, 0.0))
    holder: Optional[ArmLabel] = None
    time: int = 0
    streak: int = 0
    success: bool = False
    colliding: bool = False
