from typing import Tuple

import numpy as np
from pydantic import model_validator

from . import BaseSchema
from .pose import Vector3

Edge = Tuple[int, int]


class Workspace(BaseSchema):
    """Axis-aligned box used to normalize joint coordinates to [-1, 1]."""

    lower: Vector3
    upper: Vector3

    @model_validator(mode="after")
    def positive_extent(self):
        if any(hi <= lo for lo, hi in zip(self.lower, self.upper)):
            raise ValueError(f"workspace needs positive extent on every axis: {self.lower} .. {self.upper}")
        return self

    @property
    def center(self) -> np.ndarray:
        return (np.asarray(self.lower) + np.asarray(self.upper)) / 2.0

    @property
    def half_extent(self) -> np.ndarray:
        return (np.asarray(self.upper) - np.asarray(self.lower)) / 2.0

    def normalize(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points) - self.center) / self.half_extent

    def contains(self, point) -> bool:
        point = np.asarray(point)
        return bool(np.all(point >= self.lower) and np.all(point <= self.upper))


class SpatialGraph(BaseSchema):
    """Joint graph of one timestep: nodes are movable joints in model order."""

    num_nodes: int
    edges: Tuple[Edge, ...]
    features: np.ndarray

    @property
    def feature_width(self) -> int:
        return self.features.shape[1]


class STGraph(BaseSchema):
    """Spatial graphs stacked over time; node (i, t) has index t * m + i, oldest slice first."""

    steps: int
    joints: int
    spatial_edges: Tuple[Edge, ...]
    temporal_edges: Tuple[Edge, ...]
    features: np.ndarray

    @property
    def num_nodes(self) -> int:
        return self.steps * self.joints

    @property
    def edges(self) -> Tuple[Edge, ...]:
        return self.spatial_edges + self.temporal_edges

    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.num_nodes, self.num_nodes))
        for i, j in self.edges:
            A[i, j] = A[j, i] = 1.0
        return A

    def summary(self) -> dict:
        return {
            "steps": self.steps,
            "nodes": self.num_nodes,
            "spatial_edges": len(self.spatial_edges),
            "temporal_edges": len(self.temporal_edges),
            "edges": len(self.edges),
            "feature_width": int(self.features.shape[1]),
        }
