from typing import Dict, Optional, Tuple

from . import BaseSchema


class EpisodeResult(BaseSchema):
    seed: int
    success: bool
    steps: int
    collisions: int
    ik_failures: int
    predicted_poses: int = 0
    feasible_poses: int = 0

    @property
    def feasibility(self) -> Optional[float]:
        return self.feasible_poses / self.predicted_poses if self.predicted_poses else None


class Aggregates(BaseSchema):
    episodes: int
    success_rate: float
    mean_collisions: float
    mean_ik_failures: float
    mean_steps: float
    feasibility_rate: float


class RunReport(BaseSchema):
    config: dict
    episodes: Tuple[EpisodeResult, ...]
    aggregates: Aggregates
    timings: Optional[Dict[str, float]] = None


class StepLosses(BaseSchema):
    step: int
    loss: float
    loss_ee: float
    loss_joint: float
    lr: float
