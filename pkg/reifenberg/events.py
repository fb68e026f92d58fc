from __future__ import annotations

import hashlib
import json
from enum import Enum
from typing import Any

from reifenberg.utils import make_hashable


class RunEventType(str, Enum):
    PIPELINE_STARTED = "PIPELINE_STARTED"
    PIPELINE_COMPLETED = "PIPELINE_COMPLETED"
    PIPELINE_FAILED = "PIPELINE_FAILED"

    STAGE_STARTED = "STAGE_STARTED"
    STAGE_COMPLETED = "STAGE_COMPLETED"
    STAGE_FAILED = "STAGE_FAILED"


class RunEvent:
    """A step of a run; ids are content hashes so reruns produce the same events."""

    def __init__(
        self,
        type: RunEventType,
        source_id: str,
        name: str,
        value: Any | None = None,
        id: str | None = None,
    ):
        self.type = type
        self.name = name
        self.source_id = source_id
        self.value = value
        self.id = id if id else self.__generate_id()

    def __eq__(self, other):
        if isinstance(other, RunEvent):
            return self.id == other.id and self.type == other.type
        return False

    def __repr__(self) -> str:
        return f"RunEvent({self.type.value}, {self.name})"

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "type": self.type,
            "source_id": self.source_id,
            "name": self.name,
            "value": self.value,
        }

    def __generate_id(self):
        args = {
            "name": self.name,
            "type": self.type.value,
            "source_id": self.source_id,
            "value": str(make_hashable(self.value)),
        }
        payload = json.dumps(args, sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]
