"""Slow end-to-end checks; run with ``pytest -m bench``."""
from pathlib import Path

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from helpers.errors import NoConvergence, Unreachable
from helpers.evaluation import COMPONENT_VARIANTS, ablate, evaluate, training_demos
from helpers.kinematics import fk_pose, ik_solve, pose_error
from helpers.policy import train
from helpers.st_graph import build_spatial_graph, build_st_graph, workspace_around
from helpers.tasks import generate_demos
from helpers.urdf import arm_chain
from models.config import TrainConfig
from models.enums import AblationAxis, ArmLabel, JointKind, TaskName
from models.pose import Pose


pytestmark = pytest.mark.bench

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def oracle_matrix(pose: Pose) -> np.ndarray:
    w, x, y, z = pose.orientation
    T = np.eye(4)
    T[:3, :3] = Rotation.from_quat([x, y, z, w]).as_matrix()
    T[:3, 3] = pose.position
    return T


def oracle_tip(chain, theta) -> np.ndarray:
    T = oracle_matrix(chain.base_pose)
    for joint, q in zip(chain.joints, theta):
        T = T @ oracle_matrix(joint.origin)
        motion = np.eye(4)
        if joint.kind is JointKind.REVOLUTE:
            motion[:3, :3] = Rotation.from_rotvec(np.asarray(joint.axis) * q).as_matrix()
        else:
            motion[:3, 3] = np.asarray(joint.axis) * q
        T = T @ motion
    return T @ oracle_matrix(chain.tip_offset)


def random_theta(chain, rng) -> np.ndarray:
    return rng.uniform([j.limits.lower for j in chain.joints], [j.limits.upper for j in chain.joints])


@pytest.mark.parametrize("model_fixture", ["planar", "spatial"])
def test_fk_matches_transform_composition(request, model_fixture):
    model = request.getfixturevalue(model_fixture)
    rng = np.random.default_rng(0)
    for label in ArmLabel:
        chain = arm_chain(model, label)
        for _ in range(250):
            theta = random_theta(chain, rng)
            pose = fk_pose(chain, theta)
            expected = oracle_tip(chain, theta)
            np.testing.assert_allclose(pose.position, expected[:3, 3], atol=1e-9)
            w, x, y, z = pose.orientation
            q = np.array([x, y, z, w])
            q_ref = Rotation.from_matrix(expected[:3, :3]).as_quat()
            assert min(np.linalg.norm(q - q_ref), np.linalg.norm(q + q_ref)) < 1e-9


def test_ik_feasibility_loop(planar):
    rng = np.random.default_rng(1)
    converged = 0
    for i in range(200):
        chain = arm_chain(planar, ArmLabel.LEFT if i % 2 else ArmLabel.RIGHT)
        target = fk_pose(chain, random_theta(chain, rng))
        try:
            solution = ik_solve(chain, target, random_theta(chain, rng))
        except NoConvergence:
            continue
        theta = solution.as_array()
        assert all(j.limits.lower <= q <= j.limits.upper for j, q in zip(chain.joints, theta))
        pos_err, rot_err = pose_error(fk_pose(chain, theta), target)
        assert pos_err < 1e-4 and rot_err < 1e-3
        converged += 1
    assert converged >= 190

    chain = arm_chain(planar, ArmLabel.LEFT)
    for direction in rng.normal(size=(20, 3)):
        far = Pose(position=tuple(2.0 * direction / np.linalg.norm(direction)))
        with pytest.raises(Unreachable):
            ik_solve(chain, far, np.zeros(3))


def test_spatial_graph_dimensions(spatial):
    theta = np.zeros(spatial.dof)
    workspace = workspace_around(spatial)
    graph = build_st_graph([build_spatial_graph(spatial, theta, workspace)] * 3)
    assert graph.num_nodes == 42
    assert graph.features.shape[1] == 3 + 14 + 2


def test_lift_plate_training_reaches_high_success():
    config = TrainConfig.load(CONFIGS / "lift_plate.json")
    config = TrainConfig.parse({**config.dump(), "eval": {"every": 0, "episodes": 50}})
    result = train(config, training_demos(config))
    report = evaluate(result.policy, config.eval.episodes, seed=0)
    assert report.aggregates.success_rate >= 0.8


def seed_means(config, axis, values, out_dir):
    _, summary = ablate(config, axis, values, [0, 1, 2], out_dir)
    return summary.set_index("value")


@pytest.fixture
def handover():
    config = TrainConfig.load(CONFIGS / "handover.json")
    return TrainConfig.parse({**config.dump(), "eval": {"every": 0, "episodes": 20}})


def test_removing_components_never_helps(tmp_path, handover):
    means = seed_means(handover, AblationAxis.COMPONENTS, list(COMPONENT_VARIANTS), tmp_path)
    full, no_kr, no_kr_no_graph = (means.loc[value] for value in COMPONENT_VARIANTS)
    assert no_kr.feasibility_rate < full.feasibility_rate
    assert no_kr.success_rate <= full.success_rate
    assert no_kr_no_graph.success_rate <= no_kr.success_rate


def test_history_helps(tmp_path, handover):
    means = seed_means(handover, AblationAxis.HISTORY, [0, 2], tmp_path)
    assert means.loc["0"].success_rate < means.loc["2"].success_rate


def test_success_grows_with_demonstrations(tmp_path, handover):
    means = seed_means(handover, AblationAxis.DEMOS, [20, 50, 100], tmp_path)
    rates = [means.loc[value].success_rate for value in ("20", "50", "100")]
    assert rates == sorted(rates)


def test_training_overfits_a_small_demo_set(smoke_config):
    config = TrainConfig.parse(
        {
            **smoke_config.dump(),
            "num_demos": 16,
            "optim": {"batch_size": 16, "lr": 0.001, "warmup_steps": 0, "steps": 200},
            "log_every": 50,
        }
    )
    demos = generate_demos(TaskName.PUSH_BOX, 16, seed=0)
    losses = [record.loss for record in train(config, demos).losses]
    assert len(losses) == 200
    assert np.mean(losses[-10:]) < 0.1 * np.mean(losses[:5])
