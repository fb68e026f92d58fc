from __future__ import annotations

import json
import math

import numpy as np

from reifenberg.errors import StageError
from reifenberg.utils import is_hashable
from reifenberg.utils import make_hashable
from reifenberg.utils import parse_value
from reifenberg.utils import to_json


def test_none_values():
    assert parse_value(None) is None
    assert parse_value("") is None
    assert parse_value("null") is None
    assert parse_value("None") is None


def test_boolean_values():
    assert parse_value("true") is True
    assert parse_value("FALSE") is False


def test_numeric_values():
    assert parse_value("12") == 12
    assert parse_value("-3") == -3
    assert parse_value("0.04") == 0.04
    assert parse_value("1e-4") == 1e-4
    assert parse_value("inf") == math.inf
    assert parse_value("-Infinity") == -math.inf


def test_json_values():
    assert parse_value("[[0.5, 0.0], [-0.5, 0.0]]") == [[0.5, 0.0], [-0.5, 0.0]]
    assert parse_value('{"kind": "ball"}') == {"kind": "ball"}


def test_string_values():
    assert parse_value("half_space") == "half_space"
    assert parse_value(" tent ") == "tent"


def test_hashable_forms_of_containers():
    assert make_hashable({"b": [1, 2], "a": 1}) == (("a", 1), ("b", (1, 2)))
    assert make_hashable({1, 2}) == frozenset({1, 2})
    assert make_hashable(np.array([[1.0, 2.0]])) == ((1, 2), (1.0, 2.0))
    assert is_hashable(make_hashable({"x": {"y": [np.arange(2)]}}))


def test_unhashable_values_become_strings():
    class Opaque:
        __hash__ = None  # type: ignore

        def __str__(self):
            return "opaque"

    assert make_hashable(Opaque()) == "opaque"


def test_should_encode_numpy_and_errors():
    payload = {
        "array": np.arange(3),
        "count": np.int64(4),
        "ratio": np.float64(0.5),
        "ok": np.bool_(True),
        "error": StageError("enlarge", ValueError("bad")),
    }
    decoded = json.loads(to_json(payload))
    assert decoded["array"] == [0, 1, 2]
    assert decoded["count"] == 4
    assert decoded["ok"] is True
    assert decoded["error"]["type"] == "StageError"
    assert "enlarge" in decoded["error"]["message"]
