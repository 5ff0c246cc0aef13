from typing import Tuple

from pydantic import Field, NonNegativeInt

from . import BaseSchema


class ParamEntry(BaseSchema):
    name: str
    shape: Tuple[NonNegativeInt, ...]
    offset: NonNegativeInt


class CheckpointManifest(BaseSchema):
    """``manifest.json`` of a checkpoint directory; ``offset`` and ``total`` count elements."""

    schema_: str = Field(alias="schema")
    dtype: str
    model: str
    obs_width: int = Field(gt=0)
    total: NonNegativeInt
    params: Tuple[ParamEntry, ...]
