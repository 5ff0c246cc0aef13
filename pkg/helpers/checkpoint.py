"""Checkpoint directories: ``config.json``, ``manifest.json`` and ``params.bin``.

``params.bin`` is every parameter as little-endian float64, C order, packed
back to back; the manifest gives each one's name, shape and element offset.
"""
import json
import logging
from pathlib import Path
from typing import Union

import numpy as np
from pydantic import ValidationError

from helpers.errors import IoError, SchemaViolation
from helpers.policy import Policy, resolve_model
from models.checkpoint import CheckpointManifest, ParamEntry
from models.config import TrainConfig

logger = logging.getLogger(__name__)

CHECKPOINT_SCHEMA = "kstar-checkpoint/1"
DTYPE = "<f8"


def save_checkpoint(policy: Policy, directory: Union[str, Path]) -> Path:
    directory = Path(directory)
    entries, offset, blobs = [], 0, []
    for name in sorted(policy.params):
        value = np.ascontiguousarray(policy.params[name], dtype=DTYPE)
        entries.append(ParamEntry(name=name, shape=value.shape, offset=offset))
        offset += value.size
        blobs.append(value.tobytes(order="C"))

    manifest = CheckpointManifest(
        schema=CHECKPOINT_SCHEMA,
        dtype=DTYPE,
        model=policy.model.name,
        obs_width=policy.obs_width,
        total=offset,
        params=entries,
    )
    try:
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "config.json").write_text(json.dumps(policy.config.dump(), indent=2), encoding="utf-8")
        (directory / "manifest.json").write_text(
            json.dumps(manifest.model_dump(mode="json", by_alias=True), indent=2), encoding="utf-8"
        )
        (directory / "params.bin").write_bytes(b"".join(blobs))
    except OSError as e:
        raise IoError(f"cannot write checkpoint {directory}: {e}")
    logger.info("saved %d parameters to %s", offset, directory)
    return directory


def load_checkpoint(directory: Union[str, Path]) -> Policy:
    directory = Path(directory)
    config = TrainConfig.load(directory / "config.json")
    try:
        text = (directory / "manifest.json").read_text(encoding="utf-8")
        blob = np.frombuffer((directory / "params.bin").read_bytes(), dtype=DTYPE)
    except OSError as e:
        raise IoError(f"cannot read checkpoint {directory}: {e}")
    try:
        manifest = CheckpointManifest.model_validate_json(text)
    except ValidationError as e:
        raise SchemaViolation(f"bad checkpoint manifest: {e.errors(include_url=False)}")

    if manifest.schema_ != CHECKPOINT_SCHEMA:
        raise SchemaViolation(f"unsupported checkpoint schema {manifest.schema_!r}")
    if blob.size != manifest.total:
        raise SchemaViolation(f"params.bin holds {blob.size} values, manifest announces {manifest.total}")

    params = {}
    for entry in manifest.params:
        size = int(np.prod(entry.shape)) if entry.shape else 1
        if entry.offset + size > blob.size:
            raise SchemaViolation(f"parameter {entry.name} lies outside params.bin")
        params[entry.name] = blob[entry.offset : entry.offset + size].reshape(entry.shape).astype(np.float64)

    return Policy(config=config, model=resolve_model(config), obs_width=manifest.obs_width, params=params)
