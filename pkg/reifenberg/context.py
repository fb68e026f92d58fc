from __future__ import annotations

import json
from contextvars import ContextVar
from typing import Any

import numpy as np
import scipy

from reifenberg.events import RunEvent
from reifenberg.events import RunEventType
from reifenberg.output_storage import OutputReference
from reifenberg.utils import LaboratoryEncoder

CURRENT_CONTEXT: ContextVar[RunContext | None] = ContextVar("current_run", default=None)


class RunContext:
    """State of one pipeline run: events, produced files and measured constants."""

    def __init__(
        self,
        name: str,
        config: dict[str, Any],
        run_id: str,
        events: list[RunEvent] | None = None,
    ):
        self._name = name
        self._config = config
        self._run_id = run_id
        self._events = events if events is not None else []
        self._outputs: list[OutputReference] = []
        self._constants: dict[str, Any] = {}

    @property
    def run_id(self) -> str:
        return self._run_id

    @property
    def name(self) -> str:
        return self._name

    @property
    def config(self) -> dict[str, Any]:
        return self._config

    @property
    def events(self) -> list[RunEvent]:
        return self._events

    @property
    def outputs(self) -> list[OutputReference]:
        return self._outputs

    @property
    def constants(self) -> dict[str, Any]:
        return self._constants

    @property
    def finished(self) -> bool:
        return len(self.events) > 0 and self.events[-1].type in (
            RunEventType.PIPELINE_COMPLETED,
            RunEventType.PIPELINE_FAILED,
        )

    @property
    def succeeded(self) -> bool:
        return self.finished and self.events[-1].type == RunEventType.PIPELINE_COMPLETED

    @property
    def failed(self) -> bool:
        return self.finished and self.events[-1].type == RunEventType.PIPELINE_FAILED

    @property
    def output(self) -> Any:
        if self.finished:
            return self.events[-1].value
        return None

    def record(self, reference: OutputReference) -> OutputReference:
        self._outputs.append(reference)
        return reference

    def measured(self, name: str, value: Any) -> None:
        self._constants[name] = value

    def manifest(self) -> RunManifest:
        return RunManifest(
            self.name,
            self.run_id,
            self.config,
            [e.type.value + ":" + e.name for e in self.events],
            list(self.outputs),
            dict(self.constants),
            {"numpy": np.__version__, "scipy": scipy.__version__},
        )

    def summary(self):
        return {key: value for key, value in self.to_dict().items() if key != "events"}

    def to_dict(self):
        return json.loads(self.to_json())

    def to_json(self):
        payload = {
            "name": self.name,
            "run_id": self.run_id,
            "succeeded": self.succeeded,
            "events": self.events,
            "outputs": self.outputs,
            "constants": self.constants,
        }
        return json.dumps(payload, indent=4, cls=LaboratoryEncoder)


class RunManifest:
    """Reproducible record of a run: no wall-clock data, files listed with their hashes."""

    def __init__(
        self,
        name: str,
        run_id: str,
        config: dict[str, Any],
        stages: list[str],
        outputs: list[OutputReference],
        constants: dict[str, Any],
        versions: dict[str, str] | None = None,
    ):
        self.name = name
        self.run_id = run_id
        self.config = config
        self.stages = stages
        self.outputs = outputs
        self.constants = constants
        self.versions = versions or {}

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "run_id": self.run_id,
            "config": self.config,
            "stages": self.stages,
            "outputs": [o.to_dict() for o in self.outputs],
            "constants": self.constants,
            "versions": self.versions,
        }
