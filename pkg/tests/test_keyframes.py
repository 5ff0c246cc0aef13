import numpy as np
import pytest

from helpers.errors import EmptyTrajectory
from helpers.keyframes import joint_speeds, keyframe_discovery, keyframe_indices, keyframe_stats, keyframe_summary


def test_motion_stop_and_last_step():
    thetas = [[0.0], [0.1], [0.2], [0.2], [0.2]]
    grippers = [[1.0, 1.0]] * 5
    np.testing.assert_allclose(joint_speeds(thetas), [0.0, 0.1, 0.1, 0.0, 0.0])
    assert keyframe_indices(thetas, grippers) == [3, 4]


def test_gripper_toggle():
    thetas = [[0.0]] * 4
    grippers = [[1.0, 1.0], [1.0, 1.0], [1.0, 0.0], [1.0, 0.0]]
    assert keyframe_indices(thetas, grippers) == [2, 3]


def test_single_step_trajectory():
    assert keyframe_indices([[0.0, 0.0]], [[1.0, 1.0]]) == [0]


def test_empty_trajectory():
    with pytest.raises(EmptyTrajectory):
        keyframe_indices([], [])
    with pytest.raises(EmptyTrajectory):
        keyframe_discovery([])


def test_demonstration_keyframes(synthetic_demos):
    demo = synthetic_demos[0]
    assert list(demo.keyframes) == [11, 12, 23]
    assert keyframe_discovery(demo.steps) == [11, 12, 23]
    assert demo.keyframe_actions()[1].grippers() == (1.0, 0.0)


def test_keyframe_statistics(synthetic_demos):
    stats = keyframe_stats(synthetic_demos)
    assert list(stats["keyframes"]) == [3, 3]
    summary = keyframe_summary(synthetic_demos)
    assert summary.loc[0, "task"] == "push_box_2d"
    assert summary.loc[0, "demos"] == 2
    assert summary.loc[0, "mean_steps"] == 24
    assert keyframe_summary([]).empty
