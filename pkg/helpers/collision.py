"""Inter-arm clearance with links modelled as line segments."""
import logging
from typing import List, NamedTuple, Optional, Tuple

import numpy as np

from helpers.kinematics import Theta, fk_all
from helpers.urdf import arm_chain
from models import BaseSchema
from models.enums import ArmLabel
from models.robot import RobotModel

logger = logging.getLogger(__name__)

COLLISION_CLEARANCE = 0.01
DEGENERATE_LENGTH = 1e-12


class Segment(NamedTuple):
    a: np.ndarray
    b: np.ndarray

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.b - self.a))


class CollisionReport(BaseSchema):
    min_distance: float
    colliding: bool
    closest_pair: Optional[Tuple[int, int]] = None


def closest_points(s1: Segment, s2: Segment) -> Tuple[np.ndarray, np.ndarray]:
    """Closest points between two segments, clamping both parameters to [0, 1]."""
    p1, q1 = np.asarray(s1.a, float), np.asarray(s1.b, float)
    p2, q2 = np.asarray(s2.a, float), np.asarray(s2.b, float)
    d1, d2, r = q1 - p1, q2 - p2, p1 - p2
    a, e, f = d1 @ d1, d2 @ d2, d2 @ r

    if a <= DEGENERATE_LENGTH and e <= DEGENERATE_LENGTH:
        return p1, p2
    if a <= DEGENERATE_LENGTH:
        return p1, p2 + np.clip(f / e, 0.0, 1.0) * d2
    c = d1 @ r
    if e <= DEGENERATE_LENGTH:
        return p1 + np.clip(-c / a, 0.0, 1.0) * d1, p2

    b = d1 @ d2
    denom = a * e - b * b
    s = np.clip((b * f - c * e) / denom, 0.0, 1.0) if denom > 1e-15 else 0.0
    t = (b * s + f) / e
    if t < 0.0:
        t, s = 0.0, np.clip(-c / a, 0.0, 1.0)
    elif t > 1.0:
        t, s = 1.0, np.clip((b - c) / a, 0.0, 1.0)
    return p1 + s * d1, p2 + t * d2


def segment_distance(s1: Segment, s2: Segment) -> float:
    c1, c2 = closest_points(s1, s2)
    return float(np.linalg.norm(c1 - c2))


def arm_segments(model: RobotModel, theta: Theta) -> Tuple[List[Segment], List[Segment]]:
    """Per arm: base link origin -> each joint -> tool tip, degenerate pieces dropped."""
    fk = fk_all(model, theta)
    segments = []
    for label in ArmLabel:
        chain = arm_chain(model, label)
        first = chain.joints[0] if len(chain) else None
        points = [fk.link_frames[first.parent_link][:3, 3]] if first is not None else []
        points += [fk.joint_positions[model.movable_index(joint.name)] for joint in chain.joints]
        points.append(fk.tip_position(label))
        pieces = [Segment(a, b) for a, b in zip(points, points[1:])]
        segments.append([piece for piece in pieces if piece.length > DEGENERATE_LENGTH])
    return segments[0], segments[1]


def self_collision_check(model: RobotModel, theta: Theta, clearance: float = COLLISION_CLEARANCE) -> CollisionReport:
    left, right = arm_segments(model, theta)
    best, pair = np.inf, None
    for i, s1 in enumerate(left):
        for j, s2 in enumerate(right):
            distance = segment_distance(s1, s2)
            if distance < best:
                best, pair = distance, (i, j)
    return CollisionReport(min_distance=float(best), colliding=bool(best < clearance), closest_pair=pair)
