from __future__ import annotations

import json

import numpy as np
import pytest

from reifenberg.cache import CacheManager
from reifenberg.context import RunContext
from reifenberg.decorators import pipeline
from reifenberg.decorators import stage
from reifenberg.encoders import write_json
from reifenberg.errors import LaboratoryError
from reifenberg.errors import StageError
from reifenberg.events import RunEvent
from reifenberg.events import RunEventType
from reifenberg.output_storage import LocalFileStorage

calls: list[float] = []


@stage
def halve(r: float) -> float:
    return r / 2


@stage.with_options(name="counted_square", cache=True)
def counted_square(values: np.ndarray) -> np.ndarray:
    calls.append(float(values.sum()))
    return values**2


@stage
def refuse(r: float) -> float:
    raise ValueError(f"radius {r} is not admissible")


@pipeline.with_options(name="radii")
def radii(ctx: RunContext, storage, r: float = 1.0) -> list[float]:
    result = [r, halve(r), halve(halve(r))]
    ctx.measured("smallest", result[-1])
    reference = storage.write("radii", "radii.json", lambda p: write_json(p, result))
    ctx.record(reference)
    return result


@pipeline
def broken(ctx: RunContext, storage) -> float:
    return refuse(0.5)


def test_should_hash_events_by_content():
    first = RunEvent(RunEventType.STAGE_STARTED, "halve_1", "halve", {"r": 1.0})
    second = RunEvent(RunEventType.STAGE_STARTED, "halve_1", "halve", {"r": 1.0})
    other = RunEvent(RunEventType.STAGE_STARTED, "halve_1", "halve", {"r": 0.5})
    assert first == second
    assert first.id == second.id
    assert first != other
    assert first.to_dict()["type"] == RunEventType.STAGE_STARTED


def test_should_run_stages_outside_pipelines():
    assert halve(1.0) == 0.5


def test_should_record_stage_events(output_dir):
    ctx = radii.run(r=1.0)
    assert ctx.succeeded
    assert ctx.output == {"items": 3}
    types = [e.type for e in ctx.events]
    assert types[0] == RunEventType.PIPELINE_STARTED
    assert types.count(RunEventType.STAGE_COMPLETED) == 3
    assert types[-1] == RunEventType.PIPELINE_COMPLETED
    assert ctx.constants["smallest"] == 0.25
    assert "config_hash" in ctx.constants


def test_should_write_manifest_with_file_digests(output_dir):
    ctx = radii.run(r=2.0)
    manifest = json.loads((output_dir / "manifest.json").read_text())
    assert manifest["name"] == "radii"
    assert manifest["run_id"] == ctx.run_id
    assert manifest["outputs"][0]["path"] == "radii.json"
    assert manifest["constants"]["smallest"] == 0.5
    assert set(manifest["versions"]) == {"numpy", "scipy"}
    assert "PIPELINE_COMPLETED:radii" in manifest["stages"]
    assert LocalFileStorage().verify(ctx.outputs[0])


def test_should_reproduce_manifest_across_runs(output_dir):
    radii.run(r=1.0)
    first = (output_dir / "manifest.json").read_bytes()
    radii.run(r=1.0)
    assert (output_dir / "manifest.json").read_bytes() == first


def test_should_notice_modified_outputs(output_dir):
    ctx = radii.run()
    (output_dir / "radii.json").write_text("[]\n")
    assert not LocalFileStorage().verify(ctx.outputs[0])


def test_should_record_failure_with_stage_name(output_dir):
    ctx = broken.run()
    assert ctx.failed
    failure = ctx.constants["failure"]
    assert failure["stage"] == "refuse"
    assert "not admissible" in failure["message"]
    assert ctx.events[-2].type == RunEventType.STAGE_FAILED
    assert (output_dir / "manifest.json").exists()


def test_should_wrap_stage_errors():
    with pytest.raises(StageError, match="Stage 'refuse' failed") as info:
        refuse(0.5)
    assert isinstance(info.value.inner_exception, ValueError)
    assert isinstance(info.value, LaboratoryError)


def test_should_serve_cached_stage_results():
    calls.clear()
    values = np.array([1.0, 2.0])
    assert np.array_equal(counted_square(values), [1.0, 4.0])
    assert np.array_equal(counted_square(values), [1.0, 4.0])
    assert calls == [3.0]
    counted_square(np.array([3.0]))
    assert calls == [3.0, 3.0]
    assert CacheManager.clear() == 2
    counted_square(values)
    assert len(calls) == 3


def test_should_summarise_context_without_events():
    ctx = radii.run(r=1.0)
    summary = ctx.summary()
    assert "events" not in summary
    assert summary["succeeded"] is True
    assert summary["outputs"][0]["kind"] == "radii"
