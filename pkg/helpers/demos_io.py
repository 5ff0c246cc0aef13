"""Line-delimited JSON demonstration files.

The first line is the header ``{"schema": "kstar-demo/1", "count": N}``; every
following line is one ``Demonstration``. Floats are written in their shortest
round-trip decimal form, so ``load_demos(save_demos(...))`` is exact.
"""
import json
import logging
from pathlib import Path
from typing import List, Sequence, Union

from pydantic import ValidationError

from helpers.errors import IoError, SchemaViolation
from models.demos import DemoHeader, Demonstration

logger = logging.getLogger(__name__)

SCHEMA = "kstar-demo/1"


def save_demos(path: Union[str, Path], demos: Sequence[Demonstration]) -> Path:
    path = Path(path)
    header = DemoHeader(schema=SCHEMA, count=len(demos))
    lines = [header.model_dump_json(by_alias=True)]
    lines += [demo.model_dump_json() for demo in demos]
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}")
    logger.info("wrote %d demonstrations to %s", len(demos), path)
    return path


def _parse_header(line: str) -> DemoHeader:
    try:
        header = DemoHeader.model_validate_json(line)
    except ValidationError as e:
        raise SchemaViolation(f"bad header: {e.errors(include_url=False)}", line=1)
    if header.schema_ != SCHEMA:
        raise SchemaViolation(f"unsupported schema {header.schema_!r}, expected {SCHEMA!r}", line=1)
    return header


def load_demos(path: Union[str, Path]) -> List[Demonstration]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}")

    lines = text.splitlines()
    if not any(line.strip() for line in lines):
        return []
    header = _parse_header(lines[0])

    demos = []
    for number, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            demos.append(Demonstration.model_validate_json(line))
        except ValidationError as e:
            errors = e.errors(include_url=False)
            raise SchemaViolation(errors[0]["msg"] if errors else str(e), line=number)

    if header.count is not None and header.count != len(demos):
        raise SchemaViolation(f"header announces {header.count} demonstrations, found {len(demos)}", line=1)
    return demos


def peek_header(path: Union[str, Path]) -> dict:
    """The header line as a plain dict, without reading the rest of the file."""
    try:
        with Path(path).open(encoding="utf-8") as handle:
            first = handle.readline()
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}")
    try:
        return json.loads(first)
    except json.JSONDecodeError:
        raise SchemaViolation("header is not JSON", line=1)
