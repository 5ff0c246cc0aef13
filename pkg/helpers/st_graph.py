"""Joint graphs over a robot model and the GCN that encodes them.

Nodes are movable joints. Two joints share a spatial edge when one is the
nearest movable ancestor of the other (fixed joints are collapsed). Temporal
edges link the same joint in consecutive slices, or in every pair of slices
with ``all_pairs``.
"""
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple, Union

import cachetools.func
import numpy as np

from helpers.autodiff import Tape, Var, leaky_relu
from helpers.errors import InconsistentSlices, ShapeMismatch
from helpers.kinematics import as_theta, chain_reach, fk_joint_positions, Theta
from helpers.urdf import arm_chain
from models.enums import ArmLabel
from models.graph import Edge, SpatialGraph, STGraph, Workspace
from models.robot import RobotModel

logger = logging.getLogger(__name__)

GCN_LAYERS = 4
GCN_HIDDEN = 128


def feature_width(model: RobotModel) -> int:
    return 3 + model.dof + 2


def workspace_around(model: RobotModel) -> Workspace:
    """Box centered on the root that contains every arm at full reach."""
    half = np.zeros(3)
    for label in ArmLabel:
        chain = arm_chain(model, label)
        origin = chain.base_pose.compose(chain.joints[0].origin) if len(chain) else chain.base_pose
        half = np.maximum(half, np.abs(origin.position) + chain_reach(chain))
    half = np.maximum(half, 1e-3)
    return Workspace(lower=tuple(-half), upper=tuple(half))


@lru_cache(maxsize=32)
def _one_hot(model: RobotModel) -> np.ndarray:
    labels = np.zeros((model.dof, 2))
    for label in ArmLabel:
        for name in model.arm(label):
            labels[model.movable_index(name)] = label.one_hot
    return labels


def node_features(model: RobotModel, theta: Theta, workspace: Workspace) -> np.ndarray:
    """Rows: [normalized joint coordinates (3) | distances to every joint (m) | arm one-hot (2)]."""
    as_theta(theta, model.dof)
    positions = fk_joint_positions(model, theta)
    distances = np.linalg.norm(positions[:, None, :] - positions[None, :, :], axis=-1)
    return np.concatenate([workspace.normalize(positions), distances, _one_hot(model)], axis=1)


@lru_cache(maxsize=32)
def movable_adjacency(model: RobotModel) -> Tuple[Edge, ...]:
    parent_joint = {joint.child_link: joint for joint in model.joints}
    edges = []
    for i, joint in enumerate(model.movable_joints):
        link = joint.parent_link
        while link in parent_joint:
            ancestor = parent_joint[link]
            if ancestor.movable:
                j = model.movable_index(ancestor.name)
                edges.append((min(i, j), max(i, j)))
                break
            link = ancestor.parent_link
    return tuple(sorted(edges))


def build_spatial_graph(model: RobotModel, theta: Theta, workspace: Workspace) -> SpatialGraph:
    return SpatialGraph(
        num_nodes=model.dof,
        edges=movable_adjacency(model),
        features=node_features(model, theta, workspace),
    )


@lru_cache(maxsize=64)
def st_edges(
    joints: int, spatial: Tuple[Edge, ...], steps: int, all_pairs: bool = False
) -> Tuple[Tuple[Edge, ...], Tuple[Edge, ...]]:
    spatial_edges = tuple((t * joints + i, t * joints + j) for t in range(steps) for i, j in spatial)
    if all_pairs:
        pairs = [(t, u) for t in range(steps) for u in range(t + 1, steps)]
    else:
        pairs = [(t, t + 1) for t in range(steps - 1)]
    temporal_edges = tuple((t * joints + i, u * joints + i) for t, u in pairs for i in range(joints))
    return spatial_edges, temporal_edges


def build_st_graph(history: Sequence[SpatialGraph], all_pairs: bool = False) -> STGraph:
    """Stack per-timestep graphs, oldest first."""
    if not history:
        raise InconsistentSlices("history is empty")
    first = history[0]
    for graph in history[1:]:
        if graph.num_nodes != first.num_nodes or graph.edges != first.edges:
            raise InconsistentSlices("history slices disagree on nodes or edges")
        if graph.features.shape != first.features.shape:
            raise InconsistentSlices("history slices disagree on feature shape")

    spatial, temporal = st_edges(first.num_nodes, first.edges, len(history), all_pairs)
    return STGraph(
        steps=len(history),
        joints=first.num_nodes,
        spatial_edges=spatial,
        temporal_edges=temporal,
        features=np.concatenate([graph.features for graph in history], axis=0),
    )


@cachetools.func.lru_cache(maxsize=64)
def normalized_adjacency(num_nodes: int, edges: Tuple[Edge, ...]) -> np.ndarray:
    """D^-1/2 (A + I) D^-1/2."""
    A = np.eye(num_nodes)
    for i, j in edges:
        A[i, j] = A[j, i] = 1.0
    d = 1.0 / np.sqrt(A.sum(axis=1))
    a_hat = A * d[:, None] * d[None, :]
    a_hat.setflags(write=False)
    return a_hat


@dataclass
class GCNParams:
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    @classmethod
    def init(
        cls, rng: np.random.Generator, in_dim: int, hidden: int = GCN_HIDDEN, layers: int = GCN_LAYERS
    ) -> "GCNParams":
        weights, biases = [], []
        width = in_dim
        for _ in range(layers):
            bound = np.sqrt(6.0 / (width + hidden))
            weights.append(rng.uniform(-bound, bound, (width, hidden)))
            biases.append(np.zeros(hidden))
            width = hidden
        return cls(weights, biases)

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    def named(self, prefix: str = "gcn") -> dict:
        params = {}
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            params[f"{prefix}.{i}.weight"] = W
            params[f"{prefix}.{i}.bias"] = b
        return params

    def bind(self, tape: Tape, prefix: str = "gcn") -> List[Tuple[Var, Var]]:
        return [
            (tape.param(W, f"{prefix}.{i}.weight"), tape.param(b, f"{prefix}.{i}.bias"))
            for i, (W, b) in enumerate(zip(self.weights, self.biases))
        ]


def gcn_encode(features: Union[Var, np.ndarray], a_hat: np.ndarray, layers: Sequence[Tuple[Var, Var]]) -> Var:
    """H <- leaky_relu(A_hat H W + b) per layer, then the mean over nodes.

    ``features`` is (N, D) or (B, N, D); the result is (hidden,) or (B, hidden).
    """
    if not layers:
        raise ShapeMismatch("GCN needs at least one layer")
    tape = layers[0][0].tape
    H = tape.lift(features)
    if H.ndim not in (2, 3) or H.shape[-2] != a_hat.shape[0]:
        raise ShapeMismatch(f"features {H.shape} do not match a {a_hat.shape[0]}-node adjacency")
    for W, b in layers:
        if H.shape[-1] != W.shape[0]:
            raise ShapeMismatch(f"layer expects width {W.shape[0]}, got {H.shape[-1]}")
        H = leaky_relu(a_hat @ H @ W + b)
    return H.mean(axis=-2)


def gcn_forward(g: STGraph, params: GCNParams, tape: Optional[Tape] = None) -> Var:
    """H_G of a single graph, recorded on ``tape`` (a fresh one by default)."""
    if g.features.shape[1] != params.in_dim:
        raise ShapeMismatch(f"graph features are {g.features.shape[1]} wide, GCN expects {params.in_dim}")
    tape = tape or Tape()
    return gcn_encode(g.features, normalized_adjacency(g.num_nodes, g.edges), params.bind(tape))
