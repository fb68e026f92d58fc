from __future__ import annotations

import json

import pytest
from click.testing import CliRunner

from reifenberg.reifenberg import cli


@pytest.fixture
def runner(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return CliRunner()


def listed(output: str, kind: str) -> list[str]:
    prefix = f"{kind}: "
    return [line[len(prefix) :] for line in output.splitlines() if line.startswith(prefix)]


def constants(output: str) -> dict:
    start = output.index("{")
    return json.loads(output[start:])


def test_should_reject_slope_override_out_of_range(runner):
    result = runner.invoke(cli, ["--set", "snowflake.theta=1.5", "snowflake"])
    assert result.exit_code == 2
    assert "Error loading configuration" in result.output


def test_should_reject_slope_option_out_of_range(runner):
    result = runner.invoke(cli, ["snowflake", "--theta", "1.5"])
    assert result.exit_code == 2


def test_should_reject_malformed_assignment(runner):
    result = runner.invoke(cli, ["--set", "snowflake.theta", "snowflake"])
    assert result.exit_code == 2
    assert "Expected key=value" in result.output


@pytest.mark.slow
def test_should_export_one_mesh_per_generation(runner, tmp_path):
    args = ["--set", "snowflake.k_max=2", "snowflake", "--depth", "2", "--unbounded"]
    result = runner.invoke(cli, ["--output", "first", *args])
    assert result.exit_code == 0, result.output
    meshes = listed(result.output, "mesh")
    assert meshes == [f"snowflake/generation_{m}.off" for m in range(3)]
    assert (tmp_path / "first" / "manifest.json").exists()
    assert len(constants(result.output)["measures"]) == 3

    again = runner.invoke(cli, ["--output", "second", *args])
    assert again.exit_code == 0, again.output
    for name in [*meshes, "snowflake/G_2.csv", "snowflake/E_2.csv", "snowflake/area.dat"]:
        first = (tmp_path / "first" / name).read_bytes()
        assert (tmp_path / "second" / name).read_bytes() == first


def test_should_fit_synthetic_law(runner, tmp_path):
    result = runner.invoke(cli, ["--output", "law", "dimension", "--law", "1.5"])
    assert result.exit_code == 0, result.output
    assert constants(result.output)["slope_fit"] == pytest.approx(1.5)
    assert (tmp_path / "law" / "dimension" / "estimates.csv").exists()


@pytest.mark.slow
def test_should_count_boxes_of_koch_curve(runner):
    result = runner.invoke(cli, ["--output", "koch", "boxcount", "--koch", "6"])
    assert result.exit_code == 0, result.output
    assert listed(result.output, "counts") == ["boxcount/counts.csv"]
    assert 1.1 < constants(result.output)["dim_fit"] < 1.4


def test_should_estimate_harmonic_measure_of_disk_arc(runner, tmp_path):
    args = ["--domain", "ball", "--set", "harmonic.n=400", "wos", "--target", "1,0:0.5"]
    result = runner.invoke(cli, ["--output", "disk", *args])
    assert result.exit_code == 0, result.output
    assert constants(result.output)["walks"] == 400
    lines = (tmp_path / "disk" / "wos" / "estimates.csv").read_text().splitlines()
    assert lines[0] == "xi0,xi1,r,omega_hat,stderr,n,seed"
    assert len(lines) == 2


def test_should_reject_malformed_target(runner):
    result = runner.invoke(cli, ["--domain", "ball", "wos", "--target", "1,0"])
    assert result.exit_code != 0


def test_should_stop_pipeline_without_singular_candidates(runner, tmp_path):
    args = ["--domain", "ball", "--set", "harmonic.n=400", "pipeline"]
    result = runner.invoke(cli, ["--output", "smooth", *args])
    assert result.exit_code == 0, result.output
    assert listed(result.output, "report") == ["pipeline/candidates.json"]
    assert constants(result.output)["candidates"] == 0
    assert (tmp_path / "smooth" / "manifest.json").exists()
