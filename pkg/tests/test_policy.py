import numpy as np
import pytest

from helpers.autodiff import Tape, check_gradient
from helpers.errors import HistoryLengthMismatch, NonFiniteLoss
from helpers.kinematics import normalize_action
from helpers.optim import AdamW
from helpers.policy import (
    Policy,
    build_samples,
    condition,
    encode_observation,
    featurize,
    loss_terms,
    pad_history,
    predict,
    rollout,
    step_embedding,
    train,
    train_step,
)
from helpers.tasks import task_spec
from models.config import TrainConfig
from models.enums import TaskName

OBS_WIDTH = 26


def leaky(x):
    return np.where(x > 0, x, 0.01 * x)


@pytest.fixture
def policy(smoke_config):
    return Policy.init(smoke_config, OBS_WIDTH)


def test_parameter_layout(policy):
    p = policy.params
    assert p["embedding"].shape == (3, 8)
    assert p["encoder.0.weight"].shape == (2 * OBS_WIDTH, 8)
    assert p["encoder.1.weight"].shape == (8, 8)
    np.testing.assert_array_equal(p["film.0.gamma.bias"], np.ones(8))
    assert p["gcn.0.weight"].shape == (11, 8)
    assert p["gcn.1.weight"].shape == (8, 8)
    assert p["joint_head.weight"].shape == (16, 6)
    assert p["denoiser.0.weight"].shape == (32 + 8 + 8 + 8 + 14, 16)
    assert p["denoiser.1.weight"].shape == (16, 32)
    assert policy.parameter_count() == sum(value.size for value in p.values())


def test_initialization_is_seeded(smoke_config):
    a = Policy.init(smoke_config, OBS_WIDTH)
    b = Policy.init(smoke_config, OBS_WIDTH)
    c = Policy.init(smoke_config, OBS_WIDTH, seed=1)
    for name in a.params:
        np.testing.assert_array_equal(a.params[name], b.params[name])
    assert not np.array_equal(a.params["encoder.0.weight"], c.params["encoder.0.weight"])


def test_step_embedding():
    emb = step_embedding(np.array([0, 5]), 8)
    assert emb.shape == (2, 8)
    np.testing.assert_allclose(emb[0], [0, 0, 0, 0, 1, 1, 1, 1])
    assert emb[1, 0] == pytest.approx(np.sin(5.0))


def test_pad_history(synthetic_demos):
    obs = [synthetic_demos[0].observation(i) for i in range(3)]
    assert pad_history(obs[:1], 2) == [obs[0]] * 3
    assert pad_history(obs, 1) == obs[1:]
    with pytest.raises(HistoryLengthMismatch):
        pad_history([], 1)


def test_featurize(policy, synthetic_demos):
    history = [synthetic_demos[0].observation(0), synthetic_demos[0].observation(5)]
    obs, instruction, graph = featurize(policy, history)
    assert obs.shape == (2 * OBS_WIDTH,)
    assert instruction == 2
    assert graph.shape == (12, 11)
    with pytest.raises(HistoryLengthMismatch):
        featurize(policy, history[:1])


def test_encode_observation_with_neutral_film(policy, synthetic_demos):
    policy.params["film.0.gamma.weight"] = np.zeros_like(policy.params["film.0.gamma.weight"])
    policy.params["film.0.beta.weight"] = np.zeros_like(policy.params["film.0.beta.weight"])
    history = [synthetic_demos[0].observation(0), synthetic_demos[0].observation(1)]
    H = encode_observation(history, policy).value

    p = policy.params
    x = np.concatenate([o.flat() for o in history])
    h = leaky(x @ p["encoder.0.weight"] + p["encoder.0.bias"])
    expected = leaky(h @ p["encoder.1.weight"] + p["encoder.1.bias"])
    np.testing.assert_allclose(H, expected, atol=1e-12)

def test_instruction_changes_the_observation_encoding(policy, synthetic_demos):
    history = [synthetic_demos[0].observation(0), synthetic_demos[0].observation(1)]
    relabeled = [obs.model_copy(update={"instruction_id": 0}) for obs in history]
    H_push = encode_observation(history, policy).value
    H_lift = encode_observation(relabeled, policy).value
    assert not np.allclose(H_push, H_lift)



def test_build_samples(policy, synthetic_demos):
    samples = build_samples(policy, synthetic_demos)
    assert len(samples) == 6
    assert samples.chunks.shape == (6, 32)
    assert samples.graphs.shape == (6, 12, 11)

    demo = synthetic_demos[0]
    actions = [action.as_array() for action in demo.keyframe_actions()]
    np.testing.assert_array_equal(samples.chunks[0], np.concatenate(actions[:2]))
    np.testing.assert_array_equal(samples.chunks[2], np.concatenate([actions[2], actions[2]]))
    np.testing.assert_array_equal(samples.joints[1], demo.steps[12].joint_config)
    first = demo.observation(0).flat()
    np.testing.assert_array_equal(samples.obs[0], np.concatenate([first, first]))
    np.testing.assert_array_equal(
        samples.obs[1], np.concatenate([first, demo.observation(11).flat()])
    )


def test_ablated_conditioning_is_zero(smoke_config, synthetic_demos):
    config = TrainConfig.parse({**smoke_config.dump(), "use_graph": False, "use_reference": False})
    policy = Policy.init(config, OBS_WIDTH)
    batch = build_samples(policy, synthetic_demos)
    cond = condition(policy, policy.bind(Tape()), batch.obs, batch.instruction_ids, batch.graphs)
    np.testing.assert_array_equal(cond.H_G.value, np.zeros((6, 8)))
    np.testing.assert_array_equal(cond.H_R.value, np.zeros((6, 14)))
    assert cond.H_B.shape == (6, 8)


@pytest.mark.parametrize("name", ["joint_head.bias", "gcn.1.bias", "film.0.beta.bias", "denoiser.1.bias"])
def test_loss_gradient_matches_finite_differences(policy, synthetic_demos, name):
    batch = build_samples(policy, synthetic_demos)
    rng = np.random.default_rng(0)
    k = rng.integers(1, policy.schedule.K + 1, size=len(batch))
    eps = rng.standard_normal(batch.chunks.shape)

    def total(v):
        return loss_terms(policy, policy.bind(v.tape, {name: v}), batch, k, eps)[0]

    assert check_gradient(total, policy.params[name]) < 1e-4

SAMPLED_ENTRIES = {"embedding": 4, "gcn": 4, "joint_head": 4, "denoiser": 4, "encoder": 2, "film": 2}


def sampled_entries(params, seed=0):
    rng = np.random.default_rng(seed)
    entries = []
    for prefix, count in SAMPLED_ENTRIES.items():
        names = sorted(name for name in params if name.split(".")[0] == prefix)
        for _ in range(count):
            name = names[rng.integers(len(names))]
            index = tuple(int(rng.integers(size)) for size in params[name].shape)
            if name == "embedding":
                # only the push instruction row is read by these demos
                index = (2, index[1])
            entries.append((name, index))
    return entries


def test_loss_gradient_on_sampled_entries(policy, synthetic_demos):
    batch = build_samples(policy, synthetic_demos)
    rng = np.random.default_rng(1)
    k = rng.integers(1, policy.schedule.K + 1, size=len(batch))
    eps = rng.standard_normal(batch.chunks.shape)

    entries = sampled_entries(policy.params)
    assert len(entries) == 20
    for name, index in entries:
        value = policy.params[name]
        mask = np.zeros_like(value)
        mask[index] = 1.0
        rest = value * (1.0 - mask)

        def total(x):
            return loss_terms(policy, policy.bind(x.tape, {name: x * mask + rest}), batch, k, eps)[0]

        assert check_gradient(total, value[index]) < 1e-4, (name, index)


def test_embedding_gradient_matches_finite_differences(policy, synthetic_demos):
    batch = build_samples(policy, synthetic_demos)
    rng = np.random.default_rng(2)
    k = rng.integers(1, policy.schedule.K + 1, size=len(batch))
    eps = rng.standard_normal(batch.chunks.shape)

    def total(v):
        return loss_terms(policy, policy.bind(v.tape, {"embedding": v}), batch, k, eps)[0]

    assert check_gradient(total, policy.params["embedding"]) < 1e-5



def test_reference_carries_joint_gradient_into_the_denoiser_loss(policy, synthetic_demos):
    batch = build_samples(policy, synthetic_demos)
    k = np.full(len(batch), 3)
    eps = np.zeros(batch.chunks.shape)
    tape = Tape()
    P = policy.bind(tape)
    _, l_ee, _ = loss_terms(policy, P, batch, k, eps)
    grad = tape.backward(l_ee)[P["joint_head.bias"]]
    assert np.any(grad != 0.0)


def test_train_step_updates_parameters(policy, synthetic_demos):
    batch = build_samples(policy, synthetic_demos)
    before = {name: value.copy() for name, value in policy.params.items()}
    record, params = train_step(policy, batch, AdamW(lr=1e-3, warmup_steps=0, total_steps=10), np.random.default_rng(0))
    assert record.step == 1
    assert np.isfinite(record.loss)
    assert record.loss == pytest.approx(0.9 * record.loss_ee + 0.1 * record.loss_joint)
    assert any(not np.array_equal(before[name], params[name]) for name in params)


def test_non_finite_loss_is_reported(policy, synthetic_demos):
    policy.params["joint_head.bias"] = np.full(6, np.nan)
    batch = build_samples(policy, synthetic_demos)
    with pytest.raises(NonFiniteLoss):
        train_step(policy, batch, AdamW(), np.random.default_rng(0))


def test_train_smoke(smoke_config, synthetic_demos):
    result = train(smoke_config, synthetic_demos)
    assert [record.step for record in result.losses] == [1, 2, 3]
    assert all(np.isfinite(record.loss) for record in result.losses)
    assert result.losses[0].lr == pytest.approx(2e-4 * 0.75)
    assert result.evaluations == []

def test_training_is_reproducible(smoke_config, synthetic_demos):
    first = np.array([[r.loss, r.loss_ee, r.loss_joint, r.lr] for r in train(smoke_config, synthetic_demos).losses])
    second = np.array([[r.loss, r.loss_ee, r.loss_joint, r.lr] for r in train(smoke_config, synthetic_demos).losses])
    assert first.tobytes() == second.tobytes()



def test_train_calls_the_evaluator(smoke_config, synthetic_demos):
    config = TrainConfig.parse({**smoke_config.dump(), "eval": {"every": 2, "episodes": 1}})
    seen = []

    def evaluate(policy):
        seen.append(policy.parameter_count())
        return 0.5

    result = train(config, synthetic_demos, evaluate)
    assert result.evaluations == [(2, 0.5)]
    assert len(seen) == 1


def test_predict_returns_normalized_chunk(policy, synthetic_demos):
    history = [synthetic_demos[0].observation(0)] * 2
    chunk = predict(history, policy, np.random.default_rng(0))
    assert len(chunk) == 2
    for action in chunk.actions:
        for arm in range(2):
            q = np.asarray(action.values[8 * arm + 3 : 8 * arm + 7])
            assert np.linalg.norm(q) == pytest.approx(1.0)
            assert q[0] >= 0.0
            assert 0.0 <= action.values[8 * arm + 7] <= 1.0


def test_predict_with_a_constant_denoiser_returns_the_constant(policy, synthetic_demos):
    demo = synthetic_demos[0]
    target = np.concatenate([normalize_action(demo.steps[k].ee_poses.as_array()).as_array() for k in (5, 20)])
    policy.params["denoiser.1.weight"] = np.zeros_like(policy.params["denoiser.1.weight"])
    policy.params["denoiser.1.bias"] = target

    chunk = predict([demo.observation(0)] * 2, policy, np.random.default_rng(0))
    np.testing.assert_allclose(chunk.as_array(), target, atol=1e-12)


def test_predict_is_reproducible(policy, synthetic_demos):
    history = [synthetic_demos[0].observation(0)] * 2
    a = predict(history, policy, np.random.default_rng(7))
    b = predict(history, policy, np.random.default_rng(7))
    assert a == b


def test_rollout_is_seeded(policy):
    spec = task_spec(TaskName.PUSH_BOX)
    first = rollout(policy, spec, seed=3)
    assert first == rollout(policy, spec, seed=3)
    assert first.seed == 3
    assert 0 <= first.feasible_poses <= first.predicted_poses
    assert first.steps <= spec.step_budget
