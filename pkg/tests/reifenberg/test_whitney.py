from __future__ import annotations

import itertools

import numpy as np
import pytest

from reifenberg.domains import HalfSpace
from reifenberg.errors import EmptyFamilyError
from reifenberg.geometry import DyadicCube
from reifenberg.whitney import DyadicBox
from reifenberg.whitney import PointSetComplement
from reifenberg.whitney import WhitneyConfig
from reifenberg.whitney import boundary_family
from reifenberg.whitney import decompose
from reifenberg.whitney import dyadic_power
from reifenberg.whitney import enclosing_box
from reifenberg.whitney import is_admissible
from reifenberg.whitney import validate_epsilon
from reifenberg.whitney import verify_properties


@pytest.fixture
def half_plane_decomposition():
    config = WhitneyConfig(K=4, r0=float("inf"), bbox=DyadicCube(-2, (0, 0)), max_level=3)
    return decompose(HalfSpace(2), config)


def test_should_admit_cube_far_from_boundary():
    assert is_admissible(HalfSpace(2), DyadicCube(0, (0, 2)), 4, float("inf"))


def test_should_reject_cube_close_to_boundary():
    assert not is_admissible(HalfSpace(2), DyadicCube(0, (0, 1)), 4, float("inf"))


def test_should_reject_cube_above_scale_cap():
    assert not is_admissible(HalfSpace(2), DyadicCube(0, (0, 8)), 4, 1.0)


def test_should_emit_maximal_cubes(half_plane_decomposition):
    cubes = set(half_plane_decomposition.cubes)
    assert DyadicCube(0, (0, 2)) in cubes
    assert DyadicCube(0, (0, 1)) not in cubes
    for cube in cubes:
        assert is_admissible(HalfSpace(2), cube, 4, float("inf"))
        assert not is_admissible(HalfSpace(2), cube.parent(), 4, float("inf"))


def test_should_emit_disjoint_cubes(half_plane_decomposition):
    for a, b in itertools.combinations(half_plane_decomposition.cubes, 2):
        assert a.interiors_disjoint(b)


def test_should_locate_points(half_plane_decomposition):
    W = half_plane_decomposition
    index = W.locate([[0.5, 2.5], [0.5, 0.01]])
    assert W.cubes[index[0]] == DyadicCube(0, (0, 2))
    assert index[1] == -1


def test_should_measure_whitney_constants(half_plane_decomposition):
    report = verify_properties(half_plane_decomposition, samples=200)
    assert report.size_ratio_min > 0
    assert report.size_ratio_max <= 4.0
    assert report.neighbour_ratio_max <= 4.0
    assert report.overlap_max >= 1
    assert report.samples == 200


def test_should_reject_small_dilation():
    with pytest.raises(ValueError, match="K must be at least 4"):
        WhitneyConfig(K=3, r0=1.0, bbox=DyadicCube(0, (0, 0)))


def test_should_cover_boxes_straddling_the_origin():
    box = enclosing_box([-1.0, 0.0], [1.0, 2.0])
    assert np.all(box.low <= [-1.0, 0.0])
    assert np.all(box.high > [1.0, 2.0])
    assert box.corners().shape[0] <= 4


def test_should_wrap_single_cube_as_box():
    box = DyadicBox.of(DyadicCube(1, (1, 2)))
    assert box.corners().tolist() == [[1, 2]]
    assert box.extent == 0.5


def test_should_test_boxes_against_point_sample():
    oracle = PointSetComplement([[0.0, 0.0]])
    assert not oracle.box_clear(np.array([-0.1, -0.1]), np.array([0.1, 0.1]))
    assert oracle.box_clear(np.array([0.1, 0.1]), np.array([0.2, 0.2]))


def test_should_round_dilation_to_power_of_two():
    assert dyadic_power(0.04) == 1024.0
    assert dyadic_power(1 / 32) == 1024.0


def test_should_validate_epsilon():
    with pytest.raises(ValueError, match="epsilon must lie in"):
        validate_epsilon(0.05)
    validate_epsilon(0.04)


def test_should_build_ball_family_along_a_point():
    family = boundary_family(HalfSpace(2), [[0.0, 0.0]], 0.04, max_level=12)
    assert len(family) > 0
    assert np.allclose(family.centers[:, -1], 0.0)
    distance = np.linalg.norm(family.centers, axis=1)
    assert np.allclose(family.radii, 0.04 * distance)
    assert family.c_low <= family.c_high


def test_should_raise_when_family_is_empty():
    E = np.column_stack([np.linspace(-8, 8, 4001), np.zeros(4001)])
    with pytest.raises(EmptyFamilyError):
        boundary_family(HalfSpace(2), E, 0.04, bbox=DyadicBox(0, (-2, -2), (2, 2)))
