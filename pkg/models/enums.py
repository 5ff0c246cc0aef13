from enum import Enum


class JointKind(str, Enum):
    REVOLUTE: str = "revolute"
    PRISMATIC: str = "prismatic"
    FIXED: str = "fixed"


class ArmLabel(str, Enum):
    LEFT: str = "left"
    RIGHT: str = "right"

    @property
    def one_hot(self) -> tuple:
        return (1.0, 0.0) if self is ArmLabel.LEFT else (0.0, 1.0)


class BuiltinModel(str, Enum):
    PLANAR_BIMANUAL_3DOF: str = "planar_bimanual_3dof"
    SPATIAL_BIMANUAL_7DOF: str = "spatial_bimanual_7dof"


class TaskName(str, Enum):
    LIFT_PLATE: str = "lift_plate_2d"
    HANDOVER: str = "handover_2d"
    PUSH_BOX: str = "push_box_2d"


class FindingCode(str, Enum):
    DUPLICATE_LINK: str = "DUPLICATE_LINK"
    DUPLICATE_JOINT: str = "DUPLICATE_JOINT"
    MISSING_LINK: str = "MISSING_LINK"
    ROOT_NOT_DECLARED: str = "ROOT_NOT_DECLARED"
    ROOT_HAS_PARENT: str = "ROOT_HAS_PARENT"
    MULTIPLE_PARENTS: str = "MULTIPLE_PARENTS"
    CYCLE: str = "CYCLE"
    DISCONNECTED_LINK: str = "DISCONNECTED_LINK"
    LIMITS_INVERTED: str = "LIMITS_INVERTED"
    LIMITS_NOT_FINITE: str = "LIMITS_NOT_FINITE"
    AXIS_NOT_UNIT: str = "AXIS_NOT_UNIT"
    ARM_OVERLAP: str = "ARM_OVERLAP"
    ARM_UNKNOWN_JOINT: str = "ARM_UNKNOWN_JOINT"
    UNASSIGNED_JOINT: str = "UNASSIGNED_JOINT"
    ARM_LABEL_MISMATCH: str = "ARM_LABEL_MISMATCH"


class AblationAxis(str, Enum):
    LAM: str = "lam"
    CHUNK: str = "chunk"
    HISTORY: str = "history"
    DEMOS: str = "demos"
    COMPONENTS: str = "components"
