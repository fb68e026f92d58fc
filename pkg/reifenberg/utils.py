from __future__ import annotations

import dataclasses
import json
import math
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np

from reifenberg.errors import LaboratoryError


def make_hashable(item):
    if isinstance(item, dict):
        return tuple(sorted((k, make_hashable(v)) for k, v in item.items()))
    elif isinstance(item, (list, tuple)):
        return tuple(make_hashable(i) for i in item)
    elif isinstance(item, set):
        return frozenset(make_hashable(i) for i in item)
    elif isinstance(item, np.ndarray):
        return (item.shape, tuple(item.ravel().tolist()))
    elif is_hashable(item):
        return item
    else:
        return str(item)


def is_hashable(obj) -> bool:
    try:
        hash(obj)
        return True
    except TypeError:
        return False


def to_json(obj, indent: int | None = 4) -> str:
    return json.dumps(obj, indent=indent, cls=LaboratoryEncoder, sort_keys=False)


_LITERALS: dict[str, Any] = {
    "": None,
    "none": None,
    "null": None,
    "true": True,
    "false": False,
    "inf": math.inf,
    "infinity": math.inf,
    "-inf": -math.inf,
    "-infinity": -math.inf,
}


def parse_value(value: str | None) -> Any:
    """
    Value of a ``--set`` override: literals, then int, float and JSON (lists such as
    ``[[0.5, 0.0]]``); anything else stays a string.
    """
    if value is None:
        return None
    text = value.strip()
    if text.lower() in _LITERALS:
        return _LITERALS[text.lower()]
    for convert in (int, float, json.loads):
        try:
            return convert(text)
        except ValueError:
            continue
    return text


def parse_assignment(assignment: str) -> dict[str, Any]:
    """Turn ``section.key=value`` into a nested override dictionary."""
    if "=" not in assignment:
        raise ValueError(f"Expected key=value, got '{assignment}'")
    path, raw = assignment.split("=", 1)
    keys = [k.strip() for k in path.split(".") if k.strip()]
    if not keys:
        raise ValueError(f"Missing key in '{assignment}'")
    result: dict[str, Any] = {keys[-1]: parse_value(raw.strip())}
    for key in reversed(keys[:-1]):
        result = {key: result}
    return result


def random_stream(seed: int, index: int) -> np.random.Generator:
    """Counter-based generator for the ``index``-th stream of a root seed."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(index)])))


def dyadic_radii(r_max: float, r_min: float) -> np.ndarray:
    """Dyadic radii 2^-n lying in [r_min, r_max], largest first."""
    top = math.ceil(-math.log2(r_max) - 1e-12)
    bottom = math.floor(-math.log2(r_min) + 1e-12)
    return 2.0 ** -np.arange(top, bottom + 1, dtype=float)


class LaboratoryEncoder(json.JSONEncoder):
    def default(self, obj):
        if isinstance(obj, Enum):
            return obj.value
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        if isinstance(obj, np.integer):
            return int(obj)
        if isinstance(obj, np.floating):
            return float(obj)
        if isinstance(obj, np.bool_):
            return bool(obj)
        if isinstance(obj, Path):
            return obj.as_posix()

        if isinstance(obj, LaboratoryError):
            return {"type": type(obj).__name__, "message": obj.message or str(obj)}

        if isinstance(obj, Exception):
            return {"type": type(obj).__name__, "message": str(obj)}

        if hasattr(obj, "to_dict"):
            return obj.to_dict()

        if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
            return {f.name: getattr(obj, f.name) for f in dataclasses.fields(obj)}

        if hasattr(obj, "__dict__"):
            return obj.__dict__

        return str(obj)
