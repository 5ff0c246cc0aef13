from typing import List, Optional, Tuple

from . import BaseSchema
from .enums import ArmLabel, FindingCode, JointKind
from .pose import Pose, Vector3


class JointLimits(BaseSchema):
    lower: float
    upper: float
    max_velocity: Optional[float] = None


class JointSpec(BaseSchema):
    name: str
    kind: JointKind
    parent_link: str
    child_link: str
    origin: Pose = Pose()
    axis: Vector3 = (0.0, 0.0, 1.0)
    limits: JointLimits = JointLimits(lower=0.0, upper=0.0)
    arm_label: Optional[ArmLabel] = None

    @property
    def movable(self) -> bool:
        return self.kind is not JointKind.FIXED


class RobotModel(BaseSchema):
    name: str
    links: Tuple[str, ...]
    joints: Tuple[JointSpec, ...]
    root_link: str
    arms: Tuple[Tuple[str, ...], Tuple[str, ...]]

    @property
    def movable_joints(self) -> Tuple[JointSpec, ...]:
        return tuple(joint for joint in self.joints if joint.movable)

    @property
    def dof(self) -> int:
        return len(self.movable_joints)

    def joint(self, name: str) -> JointSpec:
        for joint in self.joints:
            if joint.name == name:
                return joint
        raise KeyError(name)

    def arm(self, label: ArmLabel) -> Tuple[str, ...]:
        return self.arms[0] if ArmLabel(label) is ArmLabel.LEFT else self.arms[1]

    def movable_index(self, name: str) -> int:
        for index, joint in enumerate(self.movable_joints):
            if joint.name == name:
                return index
        raise KeyError(name)

    def arm_indices(self, label: ArmLabel) -> Tuple[int, ...]:
        return tuple(self.movable_index(name) for name in self.arm(label))

    def lower_limits(self) -> List[float]:
        return [joint.limits.lower for joint in self.movable_joints]

    def upper_limits(self) -> List[float]:
        return [joint.limits.upper for joint in self.movable_joints]


class KinematicChain(BaseSchema):
    """Serial view base -> tip over movable joints only.

    Fixed joints on the path are folded into the origin of the following
    movable joint; fixed joints after the last movable joint form ``tip_offset``.
    """

    joints: Tuple[JointSpec, ...]
    base_pose: Pose = Pose()
    tip_offset: Pose = Pose()
    base_link: str
    tip_link: str

    def __len__(self) -> int:
        return len(self.joints)


class Finding(BaseSchema):
    code: FindingCode
    subject: str
    message: str


class ValidationReport(BaseSchema):
    model_name: str
    findings: Tuple[Finding, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.findings

    def codes(self) -> List[FindingCode]:
        return [finding.code for finding in self.findings]
