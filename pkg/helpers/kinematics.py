"""Forward kinematics, geometric Jacobian, damped-least-squares IK and the
differentiable FK used as the policy's reference embedding."""
import logging
from functools import lru_cache
from typing import Dict, List, NamedTuple, Tuple, Union

import numpy as np

from helpers.autodiff import Var, concat, cos, sin, sqrt
from helpers.errors import LengthMismatch, NoConvergence, Unreachable
from helpers.rotations import (
    IDENTITY_QUAT,
    axis_angle_matrix,
    make_transform,
    quat_conjugate,
    quat_log,
    quat_multiply,
    skew,
)
from helpers.urdf import arm_chain, arm_tip_link
from models import BaseSchema
from models.enums import ArmLabel, JointKind
from models.pose import ARM_WIDTH, POSE_VECTOR_WIDTH, JointConfiguration, Pose, PoseVector
from models.robot import JointSpec, KinematicChain, RobotModel

logger = logging.getLogger(__name__)

Theta = Union[JointConfiguration, np.ndarray, List[float], Tuple[float, ...]]

DEGENERATE_QUAT_NORM = 1e-8


def as_theta(theta: Theta, n: int) -> np.ndarray:
    values = theta.as_array() if isinstance(theta, JointConfiguration) else np.asarray(theta, dtype=float)
    values = values.ravel()
    if values.size != n:
        raise LengthMismatch(f"expected {n} joint values, got {values.size}")
    return values


def joint_motion(joint: JointSpec, q: float) -> np.ndarray:
    if joint.kind is JointKind.REVOLUTE:
        return make_transform(R=axis_angle_matrix(joint.axis, q))
    if joint.kind is JointKind.PRISMATIC:
        return make_transform(p=np.asarray(joint.axis) * q)
    return np.eye(4)


def chain_frames(chain: KinematicChain, theta: Theta) -> Tuple[np.ndarray, np.ndarray]:
    """World frames at each joint origin (before its motion) and the tip frame."""
    theta = as_theta(theta, len(chain))
    T = chain.base_pose.to_matrix()
    frames = np.empty((len(chain), 4, 4))
    for i, (joint, q) in enumerate(zip(chain.joints, theta)):
        T = T @ joint.origin.to_matrix()
        frames[i] = T
        T = T @ joint_motion(joint, q)
    return frames, T @ chain.tip_offset.to_matrix()


def fk_pose(chain: KinematicChain, theta: Theta) -> Pose:
    return Pose.from_matrix(chain_frames(chain, theta)[1])


@lru_cache(maxsize=32)
def _tree_order(model: RobotModel) -> Tuple[JointSpec, ...]:
    children: Dict[str, List[JointSpec]] = {}
    for joint in model.joints:
        children.setdefault(joint.parent_link, []).append(joint)
    ordered: List[JointSpec] = []
    stack = [model.root_link]
    while stack:
        link = stack.pop()
        for joint in children.get(link, []):
            ordered.append(joint)
            stack.append(joint.child_link)
    return tuple(ordered)


@lru_cache(maxsize=32)
def _movable_positions(model: RobotModel) -> Dict[str, int]:
    return {joint.name: i for i, joint in enumerate(model.movable_joints)}


def link_frames(model: RobotModel, theta: Theta) -> Dict[str, np.ndarray]:
    """World transform of every link reachable from the root."""
    theta = as_theta(theta, model.dof)
    index = _movable_positions(model)
    frames = {model.root_link: np.eye(4)}
    for joint in _tree_order(model):
        q = theta[index[joint.name]] if joint.movable else 0.0
        frames[joint.child_link] = frames[joint.parent_link] @ joint.origin.to_matrix() @ joint_motion(joint, q)
    return frames


def joint_frames(model: RobotModel, theta: Theta) -> np.ndarray:
    """(m, 4, 4) world frames at each movable joint's origin, in model order."""
    frames = link_frames(model, theta)
    result = np.empty((model.dof, 4, 4))
    for i, joint in enumerate(model.movable_joints):
        result[i] = frames[joint.parent_link] @ joint.origin.to_matrix()
    return result


def fk_joint_positions(model: RobotModel, theta: Theta) -> np.ndarray:
    return joint_frames(model, theta)[:, :3, 3]


class BimanualFk(NamedTuple):
    joint_positions: np.ndarray
    link_frames: Dict[str, np.ndarray]
    left: Pose
    right: Pose

    def tip_position(self, arm: ArmLabel) -> np.ndarray:
        return np.asarray((self.left if ArmLabel(arm) is ArmLabel.LEFT else self.right).position)


def fk_all(model: RobotModel, theta: Theta) -> BimanualFk:
    frames = link_frames(model, theta)
    positions = np.empty((model.dof, 3))
    for i, joint in enumerate(model.movable_joints):
        positions[i] = (frames[joint.parent_link] @ joint.origin.to_matrix())[:3, 3]
    left, right = (Pose.from_matrix(frames[arm_tip_link(model, label)]) for label in ArmLabel)
    return BimanualFk(positions, frames, left, right)


def chain_indices(model: RobotModel, arm: ArmLabel) -> Tuple[int, ...]:
    """Positions in the model's joint vector of the arm's joints, in chain order."""
    return tuple(model.movable_index(joint.name) for joint in arm_chain(model, arm).joints)


def arm_theta(model: RobotModel, theta: Theta, arm: ArmLabel) -> np.ndarray:
    theta = as_theta(theta, model.dof)
    return theta[list(chain_indices(model, arm))]


def bimanual_poses(model: RobotModel, theta: Theta) -> Tuple[Pose, Pose]:
    return tuple(fk_pose(arm_chain(model, label), arm_theta(model, theta, label)) for label in ArmLabel)


def jacobian(chain: KinematicChain, theta: Theta) -> np.ndarray:
    frames, tip = chain_frames(chain, theta)
    p = tip[:3, 3]
    J = np.zeros((6, len(chain)))
    for i, joint in enumerate(chain.joints):
        z = frames[i][:3, :3] @ np.asarray(joint.axis)
        if joint.kind is JointKind.REVOLUTE:
            J[:3, i] = np.cross(z, p - frames[i][:3, 3])
            J[3:, i] = z
        elif joint.kind is JointKind.PRISMATIC:
            J[:3, i] = z
    return J


def pose_error(a: Pose, b: Pose) -> Tuple[float, float]:
    pos_err = float(np.linalg.norm(np.subtract(a.position, b.position)))
    dot = min(1.0, abs(float(np.dot(a.orientation, b.orientation))))
    return pos_err, float(2.0 * np.arccos(dot))


class IkOptions(BaseSchema):
    max_iters: int = 200
    damping: float = 1e-2
    pos_tol: float = 1e-4
    rot_tol: float = 1e-3
    max_step: float = 0.5


def chain_reach(chain: KinematicChain) -> float:
    """Upper bound on the tip's distance from the first joint origin."""
    reach = float(np.linalg.norm(chain.tip_offset.position))
    for i, joint in enumerate(chain.joints):
        if i > 0:
            reach += float(np.linalg.norm(joint.origin.position))
        if joint.kind is JointKind.PRISMATIC:
            reach += max(abs(joint.limits.lower), abs(joint.limits.upper))
    return reach


def _pose_error_vector(current: np.ndarray, target: Pose) -> np.ndarray:
    current = Pose.from_matrix(current)
    dp = np.subtract(target.position, current.position)
    dq = quat_multiply(target.orientation, quat_conjugate(current.orientation))
    return np.concatenate([dp, quat_log(dq)])


def ik_solve(
    chain: KinematicChain,
    target: Pose,
    theta_init: Theta,
    opts: IkOptions = IkOptions(),
) -> JointConfiguration:
    """Damped least squares: dtheta = J^T (J J^T + damping^2 I)^-1 e, clamped to limits."""
    lower = np.array([joint.limits.lower for joint in chain.joints])
    upper = np.array([joint.limits.upper for joint in chain.joints])
    theta = np.clip(as_theta(theta_init, len(chain)), lower, upper)

    if len(chain):
        origin = (chain.base_pose.to_matrix() @ chain.joints[0].origin.to_matrix())[:3, 3]
        distance = float(np.linalg.norm(np.subtract(target.position, origin)))
        if distance > chain_reach(chain) + opts.pos_tol:
            raise Unreachable(f"target is {distance:.4f} m from the chain base, reach is {chain_reach(chain):.4f} m")

    damping = opts.damping**2 * np.eye(6)
    for iteration in range(opts.max_iters + 1):
        frames, tip = chain_frames(chain, theta)
        pos_err, rot_err = pose_error(Pose.from_matrix(tip), target)
        if pos_err < opts.pos_tol and rot_err < opts.rot_tol:
            logger.debug("ik converged in %d iterations", iteration)
            return JointConfiguration.of(theta)
        if iteration == opts.max_iters or not len(chain):
            break

        error = _pose_error_vector(tip, target)
        J = jacobian(chain, theta)
        step = J.T @ np.linalg.solve(J @ J.T + damping, error)
        norm = np.linalg.norm(step)
        if norm > opts.max_step:
            step *= opts.max_step / norm
        theta = np.clip(theta + step, lower, upper)

    raise NoConvergence(
        f"no convergence after {opts.max_iters} iterations (pos {pos_err:.2e} m, rot {rot_err:.2e} rad)",
        theta=theta.tolist(),
    )


def normalize_action(raw) -> PoseVector:
    values = np.array(raw, dtype=float).ravel()
    if values.size != POSE_VECTOR_WIDTH:
        raise LengthMismatch(f"pose vector needs {POSE_VECTOR_WIDTH} values, got {values.size}")
    degenerate = []
    for start in (0, ARM_WIDTH):
        q = values[start + 3 : start + 7]
        norm = np.linalg.norm(q)
        if not np.isfinite(norm) or norm < DEGENERATE_QUAT_NORM:
            q = IDENTITY_QUAT
            degenerate.append(True)
        else:
            q = q / norm
            degenerate.append(False)
        values[start + 3 : start + 7] = -q if q[0] < 0 else q
        values[start + 7] = np.clip(values[start + 7], 0.0, 1.0)
    return PoseVector(values=tuple(float(v) for v in values), degenerate=tuple(degenerate))


def _dfk_rotation_to_quat(R: Var) -> Var:
    """(B, 3, 3) rotation Var -> (B, 4) quaternion Var with w >= 0.

    Each row uses the branch with the largest radicand, chosen on the forward
    values; non-selected rows see a constant radicand of 1 so every branch
    stays finite.
    """
    values = R.value
    diag = np.stack([values[:, 0, 0], values[:, 1, 1], values[:, 2, 2]], axis=1)
    radicands = np.stack(
        [
            1.0 + diag.sum(axis=1),
            1.0 + diag[:, 0] - diag[:, 1] - diag[:, 2],
            1.0 - diag[:, 0] + diag[:, 1] - diag[:, 2],
            1.0 - diag[:, 0] - diag[:, 1] + diag[:, 2],
        ],
        axis=1,
    )
    branch = np.argmax(radicands, axis=1)
    batch = values.shape[0]

    r = {(i, j): R[:, i, j] for i in range(3) for j in range(3)}
    q = None
    for b in np.unique(branch):
        mask = (branch == b).astype(float)
        if b == 0:
            radicand = 1.0 + r[0, 0] + r[1, 1] + r[2, 2]
        elif b == 1:
            radicand = 1.0 + r[0, 0] - r[1, 1] - r[2, 2]
        elif b == 2:
            radicand = 1.0 - r[0, 0] + r[1, 1] - r[2, 2]
        else:
            radicand = 1.0 - r[0, 0] - r[1, 1] + r[2, 2]
        s = 2.0 * sqrt(radicand * mask + (1.0 - mask))
        if b == 0:
            parts = [s * 0.25, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s]
        elif b == 1:
            parts = [(r[2, 1] - r[1, 2]) / s, s * 0.25, (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s]
        elif b == 2:
            parts = [(r[0, 2] - r[2, 0]) / s, (r[0, 1] + r[1, 0]) / s, s * 0.25, (r[1, 2] + r[2, 1]) / s]
        else:
            parts = [(r[1, 0] - r[0, 1]) / s, (r[0, 2] + r[2, 0]) / s, (r[1, 2] + r[2, 1]) / s, s * 0.25]
        block = concat([part.reshape(batch, 1) for part in parts], axis=1) * mask[:, None]
        q = block if q is None else q + block

    sign = np.where(q.value[:, :1] < 0.0, -1.0, 1.0)
    return q * sign


def _dfk_arm(x: Var, model: RobotModel, label: ArmLabel) -> Var:
    chain = arm_chain(model, label)
    indices = chain_indices(model, label)
    batch = x.shape[0]
    tape = x.tape

    base = chain.base_pose.to_matrix()
    R = tape.const(np.broadcast_to(base[:3, :3], (batch, 3, 3)))
    p = tape.const(np.broadcast_to(base[:3, 3], (batch, 3)))
    for joint, index in zip(chain.joints, indices):
        origin = joint.origin.to_matrix()
        p = p + R @ origin[:3, 3]
        R = R @ origin[:3, :3]
        q = x[:, index]
        if joint.kind is JointKind.REVOLUTE:
            K = skew(joint.axis)
            s = sin(q).reshape(batch, 1, 1)
            c = cos(q).reshape(batch, 1, 1)
            R = R @ (np.eye(3) + s * K + (1.0 - c) * (K @ K))
        else:
            p = p + (R @ np.asarray(joint.axis)) * q.reshape(batch, 1)
    tip = chain.tip_offset.to_matrix()
    p = p + R @ tip[:3, 3]
    R = R @ tip[:3, :3]
    return concat([p, _dfk_rotation_to_quat(R)], axis=1)


def dfk(a_joint: Var, model: RobotModel) -> Var:
    """Differentiable bimanual FK: (m,) -> (14,) or (B, m) -> (B, 14).

    Per arm the block is position (3) then quaternion (4), left arm first.
    """
    if a_joint.ndim not in (1, 2) or a_joint.shape[-1] != model.dof:
        raise LengthMismatch(f"dfk expects {model.dof} joint values per row, got shape {a_joint.shape}")
    x = a_joint if a_joint.ndim == 2 else a_joint.reshape(1, model.dof)
    out = concat([_dfk_arm(x, model, label) for label in ArmLabel], axis=1)
    return out if a_joint.ndim == 2 else out.reshape(-1)
