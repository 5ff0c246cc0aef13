import json

import pytest

from helpers.demos_io import SCHEMA, load_demos, peek_header, save_demos
from helpers.errors import IoError, SchemaViolation


def test_round_trip_is_exact(tmp_path, synthetic_demos):
    path = save_demos(tmp_path / "demos.jsonl", synthetic_demos)
    loaded = load_demos(path)
    assert loaded == synthetic_demos
    assert peek_header(path) == {"schema": SCHEMA, "count": 2}


def test_file_layout(tmp_path, synthetic_demos):
    path = save_demos(tmp_path / "nested" / "demos.jsonl", synthetic_demos[:1])
    lines = path.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 2
    record = json.loads(lines[1])
    assert record["task"] == "push_box_2d"
    assert record["keyframes"] == [11, 12, 23]
    assert len(record["steps"][0]["observation"]["ee_poses"]["values"]) == 16


def test_empty_file_has_no_demos(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("\n  \n", encoding="utf-8")
    assert load_demos(path) == []


def test_header_only_file(tmp_path):
    path = save_demos(tmp_path / "none.jsonl", [])
    assert load_demos(path) == []


def test_bad_schema(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"schema": "something-else/2"}\n', encoding="utf-8")
    with pytest.raises(SchemaViolation) as info:
        load_demos(path)
    assert info.value.line == 1


def test_bad_record_reports_its_line(tmp_path, synthetic_demos):
    path = save_demos(tmp_path / "demos.jsonl", synthetic_demos)
    lines = path.read_text(encoding="utf-8").splitlines()
    lines[2] = lines[2].replace('"keyframes":[11,12,23]', '"keyframes":[23,11]')
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    with pytest.raises(SchemaViolation) as info:
        load_demos(path)
    assert info.value.line == 3
    assert info.value.code == "SCHEMA_VIOLATION"


def test_count_mismatch(tmp_path, synthetic_demos):
    path = save_demos(tmp_path / "demos.jsonl", synthetic_demos)
    lines = path.read_text(encoding="utf-8").splitlines()
    path.write_text("\n".join(lines[:2]) + "\n", encoding="utf-8")
    with pytest.raises(SchemaViolation):
        load_demos(path)


def test_missing_file(tmp_path):
    with pytest.raises(IoError):
        load_demos(tmp_path / "nowhere.jsonl")
