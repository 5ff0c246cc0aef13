import numpy as np
import pytest

from helpers.autodiff import Tape, check_gradient
from helpers.errors import LengthMismatch, NoConvergence, Unreachable
from helpers.kinematics import (
    IkOptions,
    arm_theta,
    bimanual_poses,
    dfk,
    fk_all,
    fk_joint_positions,
    fk_pose,
    ik_solve,
    jacobian,
    normalize_action,
    pose_error,
)
from helpers.urdf import arm_chain
from models.enums import ArmLabel
from models.pose import Pose


def planar_tip(base_x, angles, yaw_offset=0.0):
    lengths = (0.30, 0.25, 0.15)
    heading = np.cumsum(angles)
    x = base_x + sum(l * np.cos(h) for l, h in zip(lengths, heading))
    y = sum(l * np.sin(h) for l, h in zip(lengths, heading))
    return np.array([x, y, 0.0]), heading[-1] + yaw_offset


def same_rotation(q1, q2, atol=1e-9):
    return np.allclose(q1, q2, atol=atol) or np.allclose(q1, -np.asarray(q2), atol=atol)


def random_theta(model, rng):
    return rng.uniform(model.lower_limits(), model.upper_limits())


def test_planar_fk_matches_closed_form(planar):
    rng = np.random.default_rng(0)
    for _ in range(50):
        theta = random_theta(planar, rng)
        left, right = bimanual_poses(planar, theta)
        for pose, base_x, angles, offset in (
            (left, -0.25, theta[:3], 0.0),
            (right, 0.25, theta[3:], np.pi),
        ):
            position, yaw = planar_tip(base_x, angles, offset)
            np.testing.assert_allclose(pose.position, position, atol=1e-12)
            assert same_rotation(pose.orientation, (np.cos(yaw / 2), 0.0, 0.0, np.sin(yaw / 2)))


def test_zero_configuration(planar):
    left, right = bimanual_poses(planar, np.zeros(6))
    np.testing.assert_allclose(left.position, (0.45, 0.0, 0.0), atol=1e-12)
    np.testing.assert_allclose(right.position, (0.95, 0.0, 0.0), atol=1e-12)
    assert same_rotation(left.orientation, (1.0, 0.0, 0.0, 0.0))
    assert same_rotation(right.orientation, (0.0, 0.0, 0.0, 1.0))


def test_fk_all_agrees_with_chain_fk(spatial):
    rng = np.random.default_rng(1)
    theta = random_theta(spatial, rng)
    fk = fk_all(spatial, theta)
    for label, pose in ((ArmLabel.LEFT, fk.left), (ArmLabel.RIGHT, fk.right)):
        expected = fk_pose(arm_chain(spatial, label), arm_theta(spatial, theta, label))
        np.testing.assert_allclose(pose.position, expected.position, atol=1e-12)
        assert same_rotation(pose.orientation, expected.orientation)
    np.testing.assert_allclose(fk.joint_positions, fk_joint_positions(spatial, theta))
    np.testing.assert_allclose(fk.joint_positions[0], (-0.4, 0.0, 0.333), atol=1e-12)


def test_length_mismatch(planar):
    with pytest.raises(LengthMismatch):
        bimanual_poses(planar, np.zeros(5))


def test_jacobian_matches_finite_differences(spatial):
    chain = arm_chain(spatial, ArmLabel.LEFT)
    theta = np.random.default_rng(2).uniform(-1.0, 1.0, len(chain))
    J = jacobian(chain, theta)
    h = 1e-6
    for i in range(len(chain)):
        step = np.zeros(len(chain))
        step[i] = h
        plus = np.asarray(fk_pose(chain, theta + step).position)
        minus = np.asarray(fk_pose(chain, theta - step).position)
        np.testing.assert_allclose(J[:3, i], (plus - minus) / (2 * h), atol=1e-7)


def test_ik_recovers_reachable_targets(spatial):
    rng = np.random.default_rng(3)
    chain = arm_chain(spatial, ArmLabel.RIGHT)
    lower = np.array([joint.limits.lower for joint in chain.joints])
    upper = np.array([joint.limits.upper for joint in chain.joints])
    for _ in range(5):
        truth = rng.uniform(lower + 0.3, upper - 0.3)
        target = fk_pose(chain, truth)
        solution = ik_solve(chain, target, np.clip(truth + rng.uniform(-0.1, 0.1, len(chain)), lower, upper))
        values = solution.as_array()
        assert np.all(values >= lower) and np.all(values <= upper)
        pos_err, rot_err = pose_error(fk_pose(chain, values), target)
        assert pos_err < 1e-4
        assert rot_err < 1e-3


def test_ik_planar_arm(planar):
    chain = arm_chain(planar, ArmLabel.LEFT)
    target = fk_pose(chain, (0.4, 0.5, -0.3))
    solution = ik_solve(chain, target, (0.3, 0.4, -0.2))
    np.testing.assert_allclose(fk_pose(chain, solution.values).position, target.position, atol=1e-4)


def test_ik_rejects_targets_beyond_reach(planar):
    chain = arm_chain(planar, ArmLabel.LEFT)
    with pytest.raises(Unreachable):
        ik_solve(chain, Pose(position=(3.0, 0.0, 0.0)), np.zeros(3))


def test_ik_reports_no_convergence(planar):
    chain = arm_chain(planar, ArmLabel.LEFT)
    # in reach but out of the plane the arm moves in
    with pytest.raises(NoConvergence) as info:
        ik_solve(chain, Pose(position=(0.0, 0.3, 0.2)), np.zeros(3), IkOptions(max_iters=20))
    assert len(info.value.details["theta"]) == 3


def test_normalize_action():
    raw = np.zeros(16)
    raw[3:7] = (-2.0, 0.0, 0.0, 0.0)
    raw[7] = 1.7
    raw[15] = -0.3
    action = normalize_action(raw)

    assert action.degenerate == (False, True)
    assert action.values[3:7] == (1.0, 0.0, 0.0, 0.0)
    assert action.values[11:15] == (1.0, 0.0, 0.0, 0.0)
    assert action.grippers() == (1.0, 0.0)
    with pytest.raises(LengthMismatch):
        normalize_action(np.zeros(15))


def test_dfk_matches_fk(spatial, planar):
    rng = np.random.default_rng(4)
    for model in (planar, spatial):
        theta = random_theta(model, rng)
        out = dfk(Tape().leaf(theta), model).value
        assert out.shape == (14,)
        for start, pose in zip((0, 7), bimanual_poses(model, theta)):
            np.testing.assert_allclose(out[start : start + 3], pose.position, atol=1e-12)
            assert same_rotation(out[start + 3 : start + 7], pose.orientation)


def test_dfk_batches(planar):
    thetas = np.random.default_rng(5).uniform(-1.0, 1.0, (4, 6))
    batch = dfk(Tape().leaf(thetas), planar).value
    assert batch.shape == (4, 14)
    for row, theta in zip(batch, thetas):
        np.testing.assert_allclose(row, dfk(Tape().leaf(theta), planar).value, atol=1e-12)
    with pytest.raises(LengthMismatch):
        dfk(Tape().leaf(np.zeros(5)), planar)


@pytest.mark.parametrize("seed", range(5))
def test_dfk_gradient(spatial, seed):
    theta = np.random.default_rng(seed).uniform(-1.0, 1.0, spatial.dof)
    assert check_gradient(lambda v: dfk(v, spatial), theta) < 1e-5
