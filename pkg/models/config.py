import json
from pathlib import Path
from typing import Optional, Tuple, Union

from pydantic import ConfigDict, Field, ValidationError, field_validator

from helpers.errors import ConfigError, IoError
from . import BaseSchema
from .enums import TaskName


class ConfigSection(BaseSchema):
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)


class ModelSection(ConfigSection):
    source: str = "planar_bimanual_3dof"
    left_prefix: str = "left_"
    right_prefix: str = "right_"


class DiffusionSection(ConfigSection):
    K: int = Field(100, ge=1)
    beta_start: float = 1e-4
    beta_end: float = 2e-2
    reverse_steps: Optional[int] = Field(None, ge=1)


class GraphSection(ConfigSection):
    layers: int = Field(4, ge=1)
    hidden: int = Field(128, ge=1)
    history: int = Field(2, ge=0)
    all_pairs_temporal: bool = False


class BackboneSection(ConfigSection):
    obs_hidden: int = Field(64, ge=1)
    film_layers: int = Field(3, ge=0)
    text_width: int = Field(512, ge=1)
    denoiser_hidden: int = Field(256, ge=1)
    denoiser_layers: int = Field(3, ge=1)
    step_embedding: int = Field(32, ge=2)


class OptimSection(ConfigSection):
    batch_size: int = Field(64, ge=1)
    lr: float = Field(2e-4, gt=0)
    weight_decay: float = Field(1e-6, ge=0)
    warmup_steps: int = Field(5000, ge=0)
    steps: int = Field(2000, ge=1)
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8


class EvalSection(ConfigSection):
    every: int = Field(0, ge=0)
    episodes: int = Field(10, ge=1)


class RolloutOptions(ConfigSection):
    """How keyframe actions are realized: IK per arm, then joint-space interpolation."""

    substeps: int = Field(10, ge=1)
    settle_steps: int = Field(5, ge=1)
    ik_max_iters: int = Field(100, ge=1)
    ik_damping: float = 1e-2
    ik_pos_tol: float = 5e-3
    ik_rot_tol: float = 5e-2
    max_retries: int = Field(3, ge=0)
    step_budget: Optional[int] = Field(None, ge=1)


class TrainConfig(ConfigSection):
    model: ModelSection = ModelSection()
    task: TaskName = TaskName.LIFT_PLATE
    seed: int = 0
    diffusion: DiffusionSection = DiffusionSection()
    graph: GraphSection = GraphSection()
    backbone: BackboneSection = BackboneSection()
    optim: OptimSection = OptimSection()
    lam: float = Field(0.9, ge=0.0, le=1.0)
    chunk: int = Field(2, ge=1)
    num_demos: int = Field(100, ge=1)
    demo_seed: int = 0
    use_graph: bool = True
    use_reference: bool = True
    eval: EvalSection = EvalSection()
    rollout: RolloutOptions = RolloutOptions()
    log_every: int = Field(50, ge=1)

    @field_validator("model", mode="before")
    @classmethod
    def model_shorthand(cls, value):
        if isinstance(value, str):
            return {"source": value}
        return value

    @classmethod
    def parse(cls, data: dict) -> "TrainConfig":
        try:
            return cls.model_validate(data)
        except ValidationError as e:
            raise ConfigError(f"invalid training config: {e.errors(include_url=False)}")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "TrainConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as e:
            raise IoError(f"cannot read config {path}: {e}")
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {path} is not valid JSON: {e}")
        return cls.parse(data)

    def dump(self) -> dict:
        return self.model_dump(mode="json")
