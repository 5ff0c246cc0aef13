"""URDF ingestion for the kinematic subset: robot, link, joint, origin, axis, limit.

Other elements (visual, collision, inertial, mimic, transmission, ...) are
ignored with a warning. Origins are roll-pitch-yaw in the fixed-axis XYZ
convention and are stored as unit quaternions.
"""
import logging
import math
import xml.etree.ElementTree as ET
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from helpers.errors import (
    ArmAssignmentError,
    CycleDetected,
    IoError,
    MalformedXml,
    MissingLink,
    NotConnected,
    UnknownModel,
    UnsupportedJointKind,
)
from helpers.rotations import quat_to_rpy, rpy_to_quat
from models.enums import ArmLabel, BuiltinModel, FindingCode, JointKind
from models.pose import Pose
from models.robot import (
    Finding,
    JointLimits,
    JointSpec,
    KinematicChain,
    RobotModel,
    ValidationReport,
)

logger = logging.getLogger(__name__)

DEFAULT_LEFT_PREFIX = "left_"
DEFAULT_RIGHT_PREFIX = "right_"

KINEMATIC_JOINT_TAGS = {"parent", "child", "origin", "axis", "limit"}
UNIT_TOLERANCE = 1e-9


def _floats(text: Optional[str], default: Sequence[float], what: str) -> List[float]:
    if text is None:
        return list(default)
    try:
        values = [float(v) for v in text.split()]
    except ValueError:
        raise MalformedXml(f"non-numeric {what}: {text!r}")
    if len(values) != len(default):
        raise MalformedXml(f"{what} needs {len(default)} values, got {text!r}")
    return values


def _parse_origin(element: Optional[ET.Element]) -> Pose:
    if element is None:
        return Pose()
    xyz = _floats(element.get("xyz"), (0.0, 0.0, 0.0), "origin xyz")
    rpy = _floats(element.get("rpy"), (0.0, 0.0, 0.0), "origin rpy")
    return Pose(position=tuple(xyz), orientation=tuple(rpy_to_quat(rpy)))


def _parse_limits(element: Optional[ET.Element], kind: JointKind, name: str) -> JointLimits:
    if kind is JointKind.FIXED:
        return JointLimits(lower=0.0, upper=0.0)
    if element is None:
        if kind is JointKind.REVOLUTE:
            return JointLimits(lower=-math.pi, upper=math.pi)
        raise MalformedXml(f"prismatic joint {name!r} has no limit element")

    try:
        lower = float(element.get("lower", "0"))
        upper = float(element.get("upper", "0"))
        velocity = element.get("velocity")
        velocity = float(velocity) if velocity is not None else None
    except ValueError:
        raise MalformedXml(f"non-numeric limit on joint {name!r}")
    if not (math.isfinite(lower) and math.isfinite(upper)):
        raise MalformedXml(f"joint {name!r} has non-finite limits")
    if lower > upper:
        raise MalformedXml(f"joint {name!r} has lower limit {lower} above upper limit {upper}")
    return JointLimits(lower=lower, upper=upper, max_velocity=velocity)


def _warn_ignored(element: ET.Element, allowed: set, owner: str, warned: set) -> None:
    for child in element:
        if child.tag not in allowed and (owner, child.tag) not in warned:
            warned.add((owner, child.tag))
            logger.warning("ignoring <%s> inside <%s>", child.tag, owner)


def parse_urdf(
    text: Union[str, bytes],
    left_prefix: str = DEFAULT_LEFT_PREFIX,
    right_prefix: str = DEFAULT_RIGHT_PREFIX,
    arms: Optional[Tuple[Sequence[str], Sequence[str]]] = None,
) -> RobotModel:
    """Parse URDF text into a validated RobotModel.

    Movable joints are grouped into arms by name prefix unless ``arms`` gives
    the (left, right) joint-name lists explicitly.
    """
    try:
        root = ET.fromstring(text)
    except ET.ParseError as e:
        raise MalformedXml(f"unparseable URDF: {e}")
    if root.tag != "robot":
        raise MalformedXml(f"root element is <{root.tag}>, expected <robot>")

    warned: set = set()
    _warn_ignored(root, {"link", "joint"}, "robot", warned)

    links: List[str] = []
    for link in root.findall("link"):
        name = link.get("name")
        if not name:
            raise MalformedXml("link without a name")
        if name in links:
            raise MalformedXml(f"duplicate link {name!r}")
        _warn_ignored(link, set(), "link", warned)
        links.append(name)

    joints: List[JointSpec] = []
    seen = set()
    for joint in root.findall("joint"):
        name = joint.get("name")
        if not name:
            raise MalformedXml("joint without a name")
        if name in seen:
            raise MalformedXml(f"duplicate joint {name!r}")
        seen.add(name)

        try:
            kind = JointKind(joint.get("type"))
        except ValueError:
            raise UnsupportedJointKind(f"joint {name!r} has unsupported type {joint.get('type')!r}")
        _warn_ignored(joint, KINEMATIC_JOINT_TAGS, "joint", warned)

        parent = joint.find("parent")
        child = joint.find("child")
        if parent is None or child is None or not parent.get("link") or not child.get("link"):
            raise MalformedXml(f"joint {name!r} needs <parent link=...> and <child link=...>")
        for link_name in (parent.get("link"), child.get("link")):
            if link_name not in links:
                raise MissingLink(f"joint {name!r} references undeclared link {link_name!r}")

        axis = (0.0, 0.0, 1.0)
        if kind is not JointKind.FIXED:
            axis = np.asarray(_floats(_attr(joint.find("axis"), "xyz"), (1.0, 0.0, 0.0), "axis"))
            norm = np.linalg.norm(axis)
            if norm < 1e-12:
                raise MalformedXml(f"joint {name!r} has a zero axis")
            axis = tuple(float(v) for v in axis / norm)

        joints.append(
            JointSpec(
                name=name,
                kind=kind,
                parent_link=parent.get("link"),
                child_link=child.get("link"),
                origin=_parse_origin(joint.find("origin")),
                axis=axis,
                limits=_parse_limits(joint.find("limit"), kind, name),
            )
        )

    root_link = _find_root(links, joints)
    left, right = _assign_arms(joints, left_prefix, right_prefix, arms)
    labels = {name: ArmLabel.LEFT for name in left}
    labels.update({name: ArmLabel.RIGHT for name in right})
    joints = [joint.model_copy(update={"arm_label": labels.get(joint.name)}) for joint in joints]

    model = RobotModel(
        name=root.get("name", "robot"),
        links=tuple(links),
        joints=tuple(joints),
        root_link=root_link,
        arms=(tuple(left), tuple(right)),
    )
    logger.info("parsed %s: %d links, %d movable joints", model.name, len(links), model.dof)
    return model


def _attr(element: Optional[ET.Element], key: str) -> Optional[str]:
    return None if element is None else element.get(key)


def _find_root(links: List[str], joints: List[JointSpec]) -> str:
    parent_of: Dict[str, str] = {}
    for joint in joints:
        if joint.child_link in parent_of:
            raise CycleDetected(f"link {joint.child_link!r} has more than one parent joint")
        parent_of[joint.child_link] = joint.parent_link

    roots = [link for link in links if link not in parent_of]
    if not roots:
        raise CycleDetected("every link has a parent; the link graph has a cycle")
    if len(roots) > 1:
        raise MalformedXml(f"link graph is not connected; candidate roots {roots}")

    for link in links:
        visited = set()
        while link in parent_of:
            if link in visited:
                raise CycleDetected(f"cycle through link {link!r}")
            visited.add(link)
            link = parent_of[link]
    return roots[0]


def _assign_arms(
    joints: List[JointSpec],
    left_prefix: str,
    right_prefix: str,
    arms: Optional[Tuple[Sequence[str], Sequence[str]]],
) -> Tuple[List[str], List[str]]:
    movable = [joint.name for joint in joints if joint.movable]
    if arms is not None:
        left, right = list(arms[0]), list(arms[1])
    else:
        left = [name for name in movable if name.startswith(left_prefix)]
        right = [name for name in movable if name.startswith(right_prefix) and name not in left]

    overlap = set(left) & set(right)
    if overlap:
        raise ArmAssignmentError(f"joints assigned to both arms: {sorted(overlap)}")
    unknown = [name for name in left + right if name not in movable]
    if unknown:
        raise ArmAssignmentError(f"arm lists name unknown or fixed joints: {unknown}")
    unassigned = [name for name in movable if name not in left and name not in right]
    if unassigned:
        raise ArmAssignmentError(
            f"movable joints match neither prefix {left_prefix!r} nor {right_prefix!r}: {unassigned}"
        )
    return left, right


def validate_model(model: RobotModel) -> ValidationReport:
    findings: List[Finding] = []

    def report(code: FindingCode, subject: str, message: str):
        findings.append(Finding(code=code, subject=subject, message=message))

    links = set()
    for link in model.links:
        if link in links:
            report(FindingCode.DUPLICATE_LINK, link, "link declared twice")
        links.add(link)

    names = set()
    parent_of: Dict[str, str] = {}
    for joint in model.joints:
        if joint.name in names:
            report(FindingCode.DUPLICATE_JOINT, joint.name, "joint declared twice")
        names.add(joint.name)

        for link in (joint.parent_link, joint.child_link):
            if link not in links:
                report(FindingCode.MISSING_LINK, joint.name, f"references undeclared link {link!r}")
        if joint.child_link in parent_of:
            report(FindingCode.MULTIPLE_PARENTS, joint.child_link, "link has more than one parent joint")
        parent_of[joint.child_link] = joint.parent_link

        limits = joint.limits
        if not (math.isfinite(limits.lower) and math.isfinite(limits.upper)):
            report(FindingCode.LIMITS_NOT_FINITE, joint.name, "joint limits must be finite")
        elif limits.lower > limits.upper:
            report(
                FindingCode.LIMITS_INVERTED,
                joint.name,
                f"lower limit {limits.lower} is above upper limit {limits.upper}",
            )
        if joint.movable and abs(np.linalg.norm(joint.axis) - 1.0) > UNIT_TOLERANCE:
            report(FindingCode.AXIS_NOT_UNIT, joint.name, f"axis {joint.axis} is not unit length")

    if model.root_link not in links:
        report(FindingCode.ROOT_NOT_DECLARED, model.root_link, "root link is not declared")
    if model.root_link in parent_of:
        report(FindingCode.ROOT_HAS_PARENT, model.root_link, "root link is the child of a joint")

    for link in model.links:
        if link == model.root_link:
            continue
        visited = set()
        current = link
        while current in parent_of and current not in visited:
            visited.add(current)
            current = parent_of[current]
        if current in visited:
            report(FindingCode.CYCLE, link, "link lies on a cycle")
        elif current != model.root_link:
            report(FindingCode.DISCONNECTED_LINK, link, "link is not connected to the root")

    movable = {joint.name: joint for joint in model.joints if joint.movable}
    left, right = model.arms
    for name in sorted(set(left) & set(right)):
        report(FindingCode.ARM_OVERLAP, name, "joint appears in both arm lists")
    for label, arm in zip((ArmLabel.LEFT, ArmLabel.RIGHT), model.arms):
        for name in arm:
            if name not in movable:
                report(FindingCode.ARM_UNKNOWN_JOINT, name, f"{label.value} arm lists a fixed or unknown joint")
            elif name not in (set(left) & set(right)) and movable[name].arm_label not in (None, label):
                report(FindingCode.ARM_LABEL_MISMATCH, name, f"joint is labelled {movable[name].arm_label}")
    for name in movable:
        if name not in left and name not in right:
            report(FindingCode.UNASSIGNED_JOINT, name, "movable joint belongs to no arm")

    return ValidationReport(model_name=model.name, findings=tuple(findings))


def _parent_joint_map(model: RobotModel) -> Dict[str, JointSpec]:
    return {joint.child_link: joint for joint in model.joints}


def link_path(model: RobotModel, base: str, tip: str) -> List[JointSpec]:
    """Joints on the tree path base -> tip, in order."""
    for link in (base, tip):
        if link not in model.links:
            raise MissingLink(f"unknown link {link!r}")

    parent_joint = _parent_joint_map(model)
    path: List[JointSpec] = []
    link = tip
    while link != base:
        if link not in parent_joint:
            raise NotConnected(f"link {tip!r} is not a descendant of {base!r}")
        joint = parent_joint[link]
        path.append(joint)
        link = joint.parent_link
    return path[::-1]


def extract_chain(model: RobotModel, base: str, tip: str) -> KinematicChain:
    path = link_path(model, base, tip)

    pending = Pose()
    joints: List[JointSpec] = []
    for joint in path:
        if joint.movable:
            joints.append(joint.model_copy(update={"origin": pending.compose(joint.origin)}))
            pending = Pose()
        else:
            pending = pending.compose(joint.origin)

    base_pose = Pose()
    for joint in link_path(model, model.root_link, base):
        base_pose = base_pose.compose(joint.origin)

    return KinematicChain(
        joints=tuple(joints),
        base_pose=base_pose,
        tip_offset=pending,
        base_link=base,
        tip_link=tip,
    )


def arm_tip_link(model: RobotModel, label: ArmLabel) -> str:
    """Child link of the arm's last joint, followed down single fixed joints (tool frames)."""
    arm = model.arm(label)
    if not arm:
        raise NotConnected(f"{ArmLabel(label).value} arm has no joints")
    link = model.joint(arm[-1]).child_link
    while True:
        children = [joint for joint in model.joints if joint.parent_link == link]
        if len(children) != 1 or children[0].movable:
            return link
        link = children[0].child_link


def arm_chain(model: RobotModel, label: ArmLabel) -> KinematicChain:
    return _arm_chain(model, ArmLabel(label))


@lru_cache(maxsize=32)
def _arm_chain(model: RobotModel, label: ArmLabel) -> KinematicChain:
    chain = extract_chain(model, model.root_link, arm_tip_link(model, label))
    names = tuple(joint.name for joint in chain.joints)
    if sorted(names) != sorted(model.arm(label)):
        raise NotConnected(f"{label.value} arm joints {model.arm(label)} do not form the serial chain {names}")
    return chain


def _fmt(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def to_urdf(model: RobotModel) -> str:
    """Serialize the kinematic content of a model back to URDF text."""
    robot = ET.Element("robot", name=model.name)
    for link in model.links:
        ET.SubElement(robot, "link", name=link)
    for joint in model.joints:
        element = ET.SubElement(robot, "joint", name=joint.name, type=joint.kind.value)
        ET.SubElement(element, "parent", link=joint.parent_link)
        ET.SubElement(element, "child", link=joint.child_link)
        ET.SubElement(
            element,
            "origin",
            xyz=_fmt(joint.origin.position),
            rpy=_fmt(quat_to_rpy(joint.origin.orientation)),
        )
        if joint.movable:
            ET.SubElement(element, "axis", xyz=_fmt(joint.axis))
            limit = {"lower": repr(joint.limits.lower), "upper": repr(joint.limits.upper)}
            if joint.limits.max_velocity is not None:
                limit["velocity"] = repr(joint.limits.max_velocity)
            ET.SubElement(element, "limit", **limit)
    ET.indent(robot)
    return ET.tostring(robot, encoding="unicode")


PLANAR_LINK_LENGTHS = (0.30, 0.25, 0.15)
PLANAR_BASE_X = 0.25

# simplified Panda-like serial arm: (origin xyz, axis, lower, upper)
SPATIAL_ARM = (
    ((0.0, 0.0, 0.333), (0.0, 0.0, 1.0), -2.8973, 2.8973),
    ((0.0, 0.0, 0.0), (0.0, 1.0, 0.0), -1.7628, 1.7628),
    ((0.0, 0.0, 0.316), (0.0, 0.0, 1.0), -2.8973, 2.8973),
    ((0.0825, 0.0, 0.0), (0.0, 1.0, 0.0), -3.0718, 0.0698),
    ((-0.0825, 0.0, 0.384), (0.0, 0.0, 1.0), -2.8973, 2.8973),
    ((0.0, 0.0, 0.0), (0.0, 1.0, 0.0), -0.0175, 3.7525),
    ((0.088, 0.0, 0.0), (0.0, 0.0, 1.0), -2.8973, 2.8973),
)
SPATIAL_FLANGE = (0.0, 0.0, 0.207)
SPATIAL_BASE_X = 0.4


def _serial_arm(prefix: str, base_xyz, segments, flange: Pose) -> Tuple[List[str], List[JointSpec]]:
    links = [f"{prefix}link0"]
    joints = [
        JointSpec(
            name=f"{prefix}base_joint",
            kind=JointKind.FIXED,
            parent_link="base",
            child_link=f"{prefix}link0",
            origin=Pose(position=tuple(base_xyz)),
        )
    ]
    label = ArmLabel.LEFT if prefix == DEFAULT_LEFT_PREFIX else ArmLabel.RIGHT
    for i, (xyz, axis, lower, upper) in enumerate(segments, start=1):
        links.append(f"{prefix}link{i}")
        joints.append(
            JointSpec(
                name=f"{prefix}joint{i}",
                kind=JointKind.REVOLUTE,
                parent_link=f"{prefix}link{i - 1}",
                child_link=f"{prefix}link{i}",
                origin=Pose(position=tuple(xyz)),
                axis=tuple(axis),
                limits=JointLimits(lower=lower, upper=upper),
                arm_label=label,
            )
        )
    links.append(f"{prefix}gripper")
    joints.append(
        JointSpec(
            name=f"{prefix}gripper_joint",
            kind=JointKind.FIXED,
            parent_link=f"{prefix}link{len(segments)}",
            child_link=f"{prefix}gripper",
            origin=flange,
        )
    )
    return links, joints


def _bimanual(name: str, base_x: float, segments, flanges: Tuple[Pose, Pose]) -> RobotModel:
    links = ["base"]
    joints: List[JointSpec] = []
    arms = []
    for prefix, sign, flange in ((DEFAULT_LEFT_PREFIX, -1.0, flanges[0]), (DEFAULT_RIGHT_PREFIX, 1.0, flanges[1])):
        arm_links, arm_joints = _serial_arm(prefix, (sign * base_x, 0.0, 0.0), segments, flange)
        links += arm_links
        joints += arm_joints
        arms.append(tuple(joint.name for joint in arm_joints if joint.movable))
    return RobotModel(name=name, links=tuple(links), joints=tuple(joints), root_link="base", arms=tuple(arms))


def builtin_model(name: Union[str, BuiltinModel]) -> RobotModel:
    try:
        key = BuiltinModel(name)
    except ValueError:
        raise UnknownModel(f"unknown built-in model {name!r}; choose one of {[m.value for m in BuiltinModel]}")
    return _builtin_model(key)


@lru_cache(maxsize=None)
def _builtin_model(key: BuiltinModel) -> RobotModel:
    if key is BuiltinModel.PLANAR_BIMANUAL_3DOF:
        offsets = (0.0,) + PLANAR_LINK_LENGTHS[:-1]
        segments = [((offset, 0.0, 0.0), (0.0, 0.0, 1.0), -math.pi, math.pi) for offset in offsets]
        flange = (PLANAR_LINK_LENGTHS[-1], 0.0, 0.0)
        # right gripper frame is turned half a revolution so it faces the left arm with yaw 0
        flanges = (Pose(position=flange), Pose(position=flange, orientation=(0.0, 0.0, 0.0, 1.0)))
        return _bimanual(key.value, PLANAR_BASE_X, segments, flanges)
    flange = Pose(position=SPATIAL_FLANGE)
    return _bimanual(key.value, SPATIAL_BASE_X, SPATIAL_ARM, (flange, flange))


def load_model(
    source: str,
    left_prefix: str = DEFAULT_LEFT_PREFIX,
    right_prefix: str = DEFAULT_RIGHT_PREFIX,
) -> RobotModel:
    """Built-in model by name, otherwise a URDF file path."""
    if source in {m.value for m in BuiltinModel}:
        return builtin_model(source)
    path = Path(source)
    if not path.exists():
        raise UnknownModel(f"{source!r} is neither a built-in model nor a URDF file")
    try:
        mtime = path.stat().st_mtime_ns
    except OSError as e:
        raise IoError(f"cannot read {source}: {e}")
    return _load_urdf_file(str(path.resolve()), mtime, left_prefix, right_prefix)


# keyed on mtime so an edited file is parsed again
@lru_cache(maxsize=16)
def _load_urdf_file(path: str, mtime: int, left_prefix: str, right_prefix: str) -> RobotModel:
    return parse_urdf(Path(path).read_text(encoding="utf-8"), left_prefix, right_prefix)


def model_summary(model: RobotModel) -> dict:
    return {
        "name": model.name,
        "root_link": model.root_link,
        "links": len(model.links),
        "joints": len(model.joints),
        "movable_joints": model.dof,
        "left_arm": list(model.arms[0]),
        "right_arm": list(model.arms[1]),
    }
