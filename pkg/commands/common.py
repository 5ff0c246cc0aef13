import json
import sys
from typing import List

import numpy as np

from helpers.errors import UsageError


def emit(data) -> None:
    """One JSON document on standard output."""
    json.dump(data, sys.stdout, indent=2, default=_default)
    sys.stdout.write("\n")


def _default(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if hasattr(value, "model_dump"):
        return value.model_dump(mode="json")
    raise TypeError(f"cannot serialize {type(value).__name__}")


def floats(text: str, what: str) -> List[float]:
    """Comma-separated numbers, as given to --theta, --target and friends."""
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise UsageError(f"{what} must be comma-separated numbers, got {text!r}")


def words(text: str) -> List[str]:
    return [part.strip() for part in text.split(",") if part.strip()]
