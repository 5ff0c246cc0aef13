"""The keyframe diffusion policy.

Pipeline per sample: the observation history is flattened, encoded to H_B and
modulated by the instruction embedding (FiLM); the joint graph of the same
history is encoded to H_G; a linear joint head predicts the next keyframe
joint configuration from [H_B, H_G], whose differentiable FK gives the
reference H_R. The denoiser predicts the clean action chunk from a noised
chunk, the step embedding and C = [H_B, H_G, H_R].

Parameters are a flat ``name -> ndarray`` mapping that is bound to a fresh
tape for every forward pass.
"""
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from helpers.autodiff import Tape, Var, concat, leaky_relu
from helpers.diffusion import NoiseSchedule, add_noise, loss_ee, loss_joint, loss_total, make_schedule, sample
from helpers.errors import EmptyTrajectory, HistoryLengthMismatch, NonFiniteLoss, ShapeMismatch
from helpers.kinematics import dfk, normalize_action
from helpers.optim import AdamW
from helpers.st_graph import (
    GCNParams,
    build_spatial_graph,
    build_st_graph,
    feature_width,
    gcn_encode,
    movable_adjacency,
    normalized_adjacency,
    st_edges,
    workspace_around,
)
from helpers.tasks import ActionSource, run_episode
from helpers.urdf import load_model
from models.config import RolloutOptions, TrainConfig
from models.demos import VOCABULARY, ActionChunk, Demonstration, Observation
from models.graph import Workspace
from models.pose import POSE_VECTOR_WIDTH
from models.reports import EpisodeResult, StepLosses
from models.robot import RobotModel
from models.tasks import TaskSpec

logger = logging.getLogger(__name__)

Params = Dict[str, np.ndarray]
Bound = Dict[str, Var]

REFERENCE_WIDTH = 14
EMBEDDING_STD = 0.02


def resolve_model(config: TrainConfig) -> RobotModel:
    return load_model(config.model.source, config.model.left_prefix, config.model.right_prefix)


def _xavier(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, (fan_in, fan_out))


def step_width(config: TrainConfig) -> int:
    return 2 * (config.backbone.step_embedding // 2)


def init_params(config: TrainConfig, model: RobotModel, obs_width: int, rng: np.random.Generator) -> Params:
    backbone, graph = config.backbone, config.graph
    params: Params = {"embedding": rng.normal(0.0, EMBEDDING_STD, (len(VOCABULARY), backbone.text_width))}

    width = obs_width * (graph.history + 1)
    for i in range(2):
        params[f"encoder.{i}.weight"] = _xavier(rng, width, backbone.obs_hidden)
        params[f"encoder.{i}.bias"] = np.zeros(backbone.obs_hidden)
        width = backbone.obs_hidden

    for i in range(backbone.film_layers):
        params[f"film.{i}.gamma.weight"] = _xavier(rng, backbone.text_width, backbone.obs_hidden)
        params[f"film.{i}.gamma.bias"] = np.ones(backbone.obs_hidden)
        params[f"film.{i}.beta.weight"] = _xavier(rng, backbone.text_width, backbone.obs_hidden)
        params[f"film.{i}.beta.bias"] = np.zeros(backbone.obs_hidden)

    params.update(GCNParams.init(rng, feature_width(model), graph.hidden, graph.layers).named("gcn"))

    params["joint_head.weight"] = _xavier(rng, backbone.obs_hidden + graph.hidden, model.dof)
    params["joint_head.bias"] = np.zeros(model.dof)

    action = POSE_VECTOR_WIDTH * config.chunk
    width = action + step_width(config) + backbone.obs_hidden + graph.hidden + REFERENCE_WIDTH
    for i in range(backbone.denoiser_layers):
        params[f"denoiser.{i}.weight"] = _xavier(rng, width, backbone.denoiser_hidden)
        params[f"denoiser.{i}.bias"] = np.zeros(backbone.denoiser_hidden)
        width = backbone.denoiser_hidden
    last = backbone.denoiser_layers
    params[f"denoiser.{last}.weight"] = _xavier(rng, width, action)
    params[f"denoiser.{last}.bias"] = np.zeros(action)
    return params


@dataclass
class Policy:
    config: TrainConfig
    model: RobotModel
    obs_width: int
    params: Params

    @classmethod
    def init(cls, config: TrainConfig, obs_width: int, seed: Optional[int] = None) -> "Policy":
        model = resolve_model(config)
        rng = np.random.default_rng(config.seed if seed is None else seed)
        policy = cls(config, model, obs_width, init_params(config, model, obs_width, rng))
        logger.info("policy initialized with %d parameters", policy.parameter_count())
        return policy

    @property
    def history(self) -> int:
        return self.config.graph.history

    @property
    def steps(self) -> int:
        return self.config.graph.history + 1

    @property
    def chunk(self) -> int:
        return self.config.chunk

    @property
    def action_width(self) -> int:
        return POSE_VECTOR_WIDTH * self.config.chunk

    @cached_property
    def schedule(self) -> NoiseSchedule:
        d = self.config.diffusion
        return make_schedule(d.K, d.beta_start, d.beta_end)

    @cached_property
    def workspace(self) -> Workspace:
        return workspace_around(self.model)

    @cached_property
    def a_hat(self) -> np.ndarray:
        spatial, temporal = st_edges(
            self.model.dof, movable_adjacency(self.model), self.steps, self.config.graph.all_pairs_temporal
        )
        return normalized_adjacency(self.model.dof * self.steps, spatial + temporal)

    def parameter_count(self) -> int:
        return int(sum(value.size for value in self.params.values()))

    def bind(self, tape: Tape, overrides: Optional[Mapping[str, Var]] = None) -> Bound:
        overrides = overrides or {}
        return {
            name: overrides[name] if name in overrides else tape.param(value, name)
            for name, value in self.params.items()
        }

    def gcn_layers(self, P: Bound) -> List[Tuple[Var, Var]]:
        return [(P[f"gcn.{i}.weight"], P[f"gcn.{i}.bias"]) for i in range(self.config.graph.layers)]


# forward pieces


def film(H: Var, E_T: Var, P: Bound, layers: int) -> Var:
    """H <- leaky_relu(gamma(E_T) * H + beta(E_T)) per layer."""
    for i in range(layers):
        gamma = E_T @ P[f"film.{i}.gamma.weight"] + P[f"film.{i}.gamma.bias"]
        beta = E_T @ P[f"film.{i}.beta.weight"] + P[f"film.{i}.beta.bias"]
        H = leaky_relu(gamma * H + beta)
    return H


def encode_batch(P: Bound, obs: np.ndarray, instruction_ids: np.ndarray, film_layers: int) -> Var:
    """(B, steps * obs_width) observations and (B,) instruction ids -> H_B of shape (B, hidden)."""
    W0 = P["encoder.0.weight"]
    if obs.ndim != 2 or obs.shape[1] != W0.shape[0]:
        raise ShapeMismatch(f"encoder expects (B, {W0.shape[0]}) observations, got {obs.shape}")
    E_T = P["embedding"][np.asarray(instruction_ids, dtype=int)]
    H = leaky_relu(obs @ W0 + P["encoder.0.bias"])
    H = H @ P["encoder.1.weight"] + P["encoder.1.bias"]
    return film(H, E_T, P, film_layers)


def joint_head(H_B: Var, H_G: Var, P: Bound) -> Var:
    """Next keyframe joint configuration from [H_B, H_G]; unclamped."""
    W = P["joint_head.weight"]
    if H_B.ndim != H_G.ndim or H_B.shape[-1] + H_G.shape[-1] != W.shape[0]:
        raise ShapeMismatch(f"joint head expects widths summing to {W.shape[0]}, got {H_B.shape} and {H_G.shape}")
    return concat([H_B, H_G], axis=H_B.ndim - 1) @ W + P["joint_head.bias"]


def reference(a_joint: Var, model: RobotModel) -> Var:
    return dfk(a_joint, model)


def step_embedding(k, width: int) -> np.ndarray:
    """Sinusoidal embedding of diffusion steps: (B,) -> (B, width)."""
    k = np.atleast_1d(np.asarray(k, dtype=float))
    half = width // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / max(half - 1, 1))
    angles = k[:, None] * freqs[None, :]
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=1)


def _layer_count(P: Bound, prefix: str) -> int:
    return sum(1 for name in P if name.startswith(prefix + ".") and name.endswith(".weight"))


def denoise(a_k, k, C: Sequence[Var], P: Bound, width: int = 32) -> Var:
    """Predicted clean chunk from a noised chunk ``a_k`` at step ``k`` under condition ``C``."""
    tape = C[0].tape
    a = tape.lift(a_k)
    single = a.ndim == 1
    if single:
        a = a.reshape(1, a.shape[0])
    rows = a.shape[0]
    C = [c if c.ndim == 2 else c.reshape(1, c.shape[0]) for c in C]
    emb = step_embedding(np.broadcast_to(np.asarray(k), (rows,)), width)

    x = concat([a, emb, *C], axis=1)
    if x.shape[1] != P["denoiser.0.weight"].shape[0]:
        raise ShapeMismatch(f"denoiser expects input width {P['denoiser.0.weight'].shape[0]}, got {x.shape[1]}")
    layers = _layer_count(P, "denoiser")
    for i in range(layers):
        x = x @ P[f"denoiser.{i}.weight"] + P[f"denoiser.{i}.bias"]
        if i < layers - 1:
            x = leaky_relu(x)
    return x.reshape(-1) if single else x


class Conditioning(NamedTuple):
    H_B: Var
    H_G: Var
    H_R: Var
    a_joint: Var

    @property
    def C(self) -> Tuple[Var, Var, Var]:
        return self.H_B, self.H_G, self.H_R


def condition(policy: Policy, P: Bound, obs: np.ndarray, instruction_ids: np.ndarray, graphs: np.ndarray) -> Conditioning:
    """Batched H_B, H_G, H_R and the joint-head output; ablated parts are zeros."""
    tape = P["embedding"].tape
    rows = obs.shape[0]
    H_B = encode_batch(P, obs, instruction_ids, policy.config.backbone.film_layers)
    if policy.config.use_graph:
        H_G = gcn_encode(graphs, policy.a_hat, policy.gcn_layers(P))
    else:
        H_G = tape.const(np.zeros((rows, policy.config.graph.hidden)))
    a_joint = joint_head(H_B, H_G, P)
    if policy.config.use_reference:
        H_R = reference(a_joint, policy.model)
    else:
        H_R = tape.const(np.zeros((rows, REFERENCE_WIDTH)))
    return Conditioning(H_B, H_G, H_R, a_joint)


# observations -> arrays


def pad_history(history: Sequence[Observation], n: int) -> List[Observation]:
    """The last n + 1 observations, front-padded with the earliest one."""
    if not history:
        raise HistoryLengthMismatch("history is empty")
    window = list(history[-(n + 1) :])
    return [window[0]] * (n + 1 - len(window)) + window


def featurize(policy: Policy, history: Sequence[Observation]) -> Tuple[np.ndarray, int, np.ndarray]:
    """Flat observation vector, instruction id and stacked graph features of one history."""
    if len(history) != policy.steps:
        raise HistoryLengthMismatch(f"policy needs {policy.steps} observations, got {len(history)}")
    obs = np.concatenate([o.flat() for o in history])
    if obs.size != policy.steps * policy.obs_width:
        raise ShapeMismatch(f"observations are {obs.size // policy.steps} wide, policy expects {policy.obs_width}")
    slices = [build_spatial_graph(policy.model, o.joint_config, policy.workspace) for o in history]
    graph = build_st_graph(slices, policy.config.graph.all_pairs_temporal)
    return obs, history[-1].instruction_id, graph.features


def encode_observation(obs_history: Sequence[Observation], policy: Policy, P: Optional[Bound] = None) -> Var:
    """H_B of one history, oldest observation first."""
    obs, instruction, _ = featurize(policy, obs_history)
    P = P if P is not None else policy.bind(Tape())
    H = encode_batch(P, obs[None, :], np.array([instruction]), policy.config.backbone.film_layers)
    return H.reshape(-1)


@dataclass
class Samples:
    obs: np.ndarray
    instruction_ids: np.ndarray
    graphs: np.ndarray
    chunks: np.ndarray
    joints: np.ndarray

    def __len__(self) -> int:
        return len(self.obs)

    def take(self, index) -> "Samples":
        return Samples(
            self.obs[index], self.instruction_ids[index], self.graphs[index], self.chunks[index], self.joints[index]
        )


def build_samples(policy: Policy, demos: Sequence[Demonstration]) -> Samples:
    """One sample per keyframe: the history ending before it, the chunk starting at it."""
    rows = []
    for demo in demos:
        aligned = [demo.observation(0)] + [demo.observation(k) for k in demo.keyframes]
        actions = demo.keyframe_actions()
        for i, k in enumerate(demo.keyframes):
            history = pad_history(aligned[: i + 1], policy.history)
            chunk = [actions[min(i + j, len(actions) - 1)].as_array() for j in range(policy.chunk)]
            joints = demo.steps[k].joint_config
            if joints.size != policy.model.dof:
                raise ShapeMismatch(f"demo has {joints.size} joints, model {policy.model.name} has {policy.model.dof}")
            obs, instruction, features = featurize(policy, history)
            rows.append((obs, instruction, features, np.concatenate(chunk), joints))
    if not rows:
        raise EmptyTrajectory("no training samples in the demonstrations")
    columns = list(zip(*rows))
    return Samples(
        obs=np.stack(columns[0]),
        instruction_ids=np.asarray(columns[1], dtype=int),
        graphs=np.stack(columns[2]),
        chunks=np.stack(columns[3]),
        joints=np.stack(columns[4]),
    )


# training


def loss_terms(policy: Policy, P: Bound, batch: Samples, k: np.ndarray, eps: np.ndarray) -> Tuple[Var, Var, Var]:
    """(total, ee, joint) losses for fixed diffusion steps and noise."""
    a_k = add_noise(batch.chunks, k, eps, policy.schedule)
    cond = condition(policy, P, batch.obs, batch.instruction_ids, batch.graphs)
    width = step_width(policy.config)
    l_ee = loss_ee(batch.chunks, a_k, k, cond.C, lambda a, steps, C: denoise(a, steps, C, P, width))
    l_joint = loss_joint(batch.joints, cond.a_joint)
    return loss_total(l_ee, l_joint, policy.config.lam), l_ee, l_joint


def train_step(
    policy: Policy, batch: Samples, optimizer: AdamW, rng: np.random.Generator
) -> Tuple[StepLosses, Params]:
    k = rng.integers(1, policy.schedule.K + 1, size=len(batch))
    eps = rng.standard_normal(batch.chunks.shape)
    tape = Tape()
    P = policy.bind(tape)
    total, l_ee, l_joint = loss_terms(policy, P, batch, k, eps)

    values = (float(total.value), float(l_ee.value), float(l_joint.value))
    if not np.all(np.isfinite(values)):
        raise NonFiniteLoss(
            f"loss became non-finite at step {optimizer.step_count + 1}: total {values[0]}, ee {values[1]}, joint {values[2]}"
        )
    grads = tape.backward(total)
    params = optimizer.step(policy.params, {name: grads[var] for name, var in P.items()})
    return StepLosses(step=optimizer.step_count, loss=values[0], loss_ee=values[1], loss_joint=values[2], lr=optimizer.current_lr()), params


class TrainResult(NamedTuple):
    policy: Policy
    losses: List[StepLosses]
    evaluations: List[Tuple[int, float]]


def train(
    config: TrainConfig,
    demos: Sequence[Demonstration],
    evaluate: Optional[Callable[[Policy], float]] = None,
) -> TrainResult:
    """Train from scratch; ``evaluate`` returns a success rate and runs every ``eval.every`` steps."""
    if not demos:
        raise EmptyTrajectory("no demonstrations to train on")
    policy = Policy.init(config, demos[0].observation(0).width)
    samples = build_samples(policy, demos)
    logger.info("training on %d samples from %d demonstrations", len(samples), len(demos))

    optimizer = AdamW.from_config(config.optim)
    rng = np.random.default_rng([config.seed, 1])
    batch_size = config.optim.batch_size
    losses: List[StepLosses] = []
    evaluations: List[Tuple[int, float]] = []

    for step in range(1, config.optim.steps + 1):
        index = rng.choice(len(samples), size=batch_size, replace=len(samples) < batch_size)
        record, policy.params = train_step(policy, samples.take(index), optimizer, rng)
        losses.append(record)
        if step == 1 or step % config.log_every == 0:
            logger.info(
                "step %d loss %.5f (ee %.5f, joint %.5f) lr %.2e",
                step, record.loss, record.loss_ee, record.loss_joint, record.lr,
            )
        if evaluate is not None and config.eval.every and step % config.eval.every == 0:
            rate = evaluate(policy)
            evaluations.append((step, rate))
            logger.info("step %d success rate %.3f", step, rate)

    return TrainResult(policy, losses, evaluations)


# inference


def chunk_from_array(values, chunk: int) -> ActionChunk:
    rows = np.asarray(values, dtype=float).reshape(chunk, POSE_VECTOR_WIDTH)
    return ActionChunk(actions=tuple(normalize_action(row) for row in rows))


def predict(
    obs_history: Sequence[Observation],
    policy: Policy,
    rng: np.random.Generator,
    reverse_steps: Optional[int] = None,
) -> ActionChunk:
    obs, instruction, features = featurize(policy, obs_history)
    tape = Tape()
    P = policy.bind(tape)
    cond = condition(policy, P, obs[None, :], np.array([instruction]), features[None])
    width = step_width(policy.config)

    def denoiser(a, k_rows):
        return denoise(a, k_rows, cond.C, P, width).value

    steps = reverse_steps or policy.config.diffusion.reverse_steps
    raw = sample(denoiser, (1, policy.action_width), policy.schedule, rng, steps)
    return chunk_from_array(raw[0], policy.chunk)


def policy_source(policy: Policy, rng: np.random.Generator) -> ActionSource:
    """Receding horizon: only the first action of each predicted chunk is executed."""

    def source(history: Sequence[Observation]):
        return predict(pad_history(history, policy.history), policy, rng).actions[0]

    return source


def rollout(
    policy: Policy, spec: TaskSpec, opts: Optional[RolloutOptions] = None, seed: int = 0
) -> EpisodeResult:
    rng = np.random.default_rng(seed)
    return run_episode(spec, policy_source(policy, rng), opts or policy.config.rollout, seed)
