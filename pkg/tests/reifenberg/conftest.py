from __future__ import annotations

import pytest

from reifenberg.config import Configuration
from reifenberg.domains import HalfSpace
from reifenberg.enlargement import enlarge
from reifenberg.executors import Executor
from reifenberg.whitney import DyadicBox


@pytest.fixture(autouse=True)
def laboratory(tmp_path):
    """Every test runs serially against its own home and report directory."""
    configuration = Configuration.get()
    configuration.reset()
    configuration.override(
        home=str(tmp_path / "home"),
        output_dir=str(tmp_path / "output"),
        threads=1,
    )
    Executor.reset()
    yield configuration
    configuration.reset()
    Executor.reset()


@pytest.fixture
def output_dir(tmp_path):
    return tmp_path / "output"


@pytest.fixture
def enlarged_half_plane(laboratory):
    """Half-plane joined with the balls of E = {0}, refined down to the annulus |x| > 1/8."""
    laboratory.override(enlargement={"sphere_resolution": 24})
    return enlarge(
        HalfSpace(2),
        [[0.0, 0.0]],
        epsilon=0.04,
        delta=0.0,
        strict=True,
        bbox=DyadicBox(2, (-2, -2), (2, 2)),
        max_level=12,
    )
