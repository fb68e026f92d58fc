from __future__ import annotations

import math

import numpy as np
import pytest

from reifenberg.enlargement import GraphPatch
from reifenberg.enlargement import NeighborFamily
from reifenberg.errors import HypothesisViolationError
from reifenberg.errors import ResolutionError
from reifenberg.geometry import BoundaryMesh
from reifenberg.geometry import DyadicCube
from reifenberg.geometry import Hyperplane
from reifenberg.harmonic import PointMass
from reifenberg.harmonic import PowerLaw
from reifenberg.measure import Theorem31Verifier
from reifenberg.measure import ahlfors_ratio
from reifenberg.measure import box_count
from reifenberg.measure import candidate_dimension
from reifenberg.measure import flat_area
from reifenberg.measure import koch_curve
from reifenberg.measure import patch_area
from reifenberg.measure import polyline_samples
from reifenberg.measure import theorem31_verify
from reifenberg.measure import unit_ball_volume
from reifenberg.measure import verify_lower_bound

KOCH_DIMENSION = math.log(4) / math.log(3)


def ball_patch(floor: float) -> GraphPatch:
    return GraphPatch(
        q=0,
        cube=DyadicCube(4, (0, 0)),
        plane=Hyperplane(np.zeros(2), np.array([0.0, -1.0])),
        neighbors=NeighborFamily(0, np.array([0]), 0.0, 0.0),
        local_centers=np.zeros((1, 1)),
        heights=np.zeros(1),
        radii=np.array([0.1]),
        r_q=0.1,
        floor=floor,
        delta=0.0,
    )


def test_should_count_boxes_of_a_segment():
    points = polyline_samples(np.array([[0.0, 0.0], [1.0, 0.0]]), 2e-4)
    result = box_count(points, 2.0 ** -np.arange(4, 9), covering_radius=2e-4)
    assert result.dim_fit == pytest.approx(1.0, abs=0.05)
    assert np.all(np.abs(result.hd_estimates - 1.0) < 0.15)
    assert len(result.to_rows()) == 5


@pytest.mark.slow
def test_should_recover_koch_dimension():
    scales = 3.0 ** -np.arange(2, 7)
    spacing = scales.min() / 8
    points = polyline_samples(koch_curve(9), spacing)
    result = box_count(points, scales, covering_radius=spacing / 2)
    assert result.dim_fit == pytest.approx(KOCH_DIMENSION, abs=0.03)


@pytest.mark.slow
def test_should_measure_unit_square_as_unit_area():
    ticks = (np.arange(512) + 0.5) / 512
    x, y = np.meshgrid(ticks, ticks, indexing="ij")
    points = np.column_stack([x.ravel(), y.ravel(), np.zeros(x.size)])
    result = box_count(points, 2.0 ** -np.arange(3, 7), covering_radius=1e-3)
    assert result.d == 2
    assert result.hd_estimates[-1] == pytest.approx(1.0, abs=0.05)
    assert result.dim_fit == pytest.approx(2.0, abs=0.05)


def test_should_shift_grids_by_a_fraction_of_each_side():
    points = [[0.99, 0.0], [1.01, 0.0]]
    assert box_count(points, [4.0, 1.0], offsets=2).counts.tolist() == [1, 1]
    assert box_count(points, [4.0, 1.0], offsets=1).counts.tolist() == [1, 2]


def test_should_refuse_scales_below_the_covering_radius():
    with pytest.raises(ResolutionError):
        box_count(koch_curve(3), 2.0 ** -np.arange(2, 7), covering_radius=0.01)


def test_should_build_koch_vertices():
    vertices = koch_curve(2)
    assert vertices.shape == (17, 2)
    assert np.allclose(vertices[0], [0.0, 0.0])
    assert np.allclose(vertices[-1], [1.0, 0.0])
    assert vertices[8] == pytest.approx([0.5, math.sqrt(3) / 6])


def test_should_estimate_candidate_dimension_of_a_segment():
    points = polyline_samples(np.array([[0.0, 0.0], [0.0, 1.0]]), 1e-3)
    assert candidate_dimension(points).dim_fit == pytest.approx(1.0, abs=0.05)


def test_should_measure_flat_patch_as_a_disk():
    patch = ball_patch(floor=0.2)
    assert patch_area(patch) == pytest.approx(flat_area(patch))
    assert flat_area(patch) == pytest.approx(unit_ball_volume(1) * 1.0)


def test_should_add_the_arc_above_the_floor():
    patch = ball_patch(floor=0.06)
    arc = 0.1 * 2 * math.asin(0.8)
    expected = arc + 2.0 - 2 * 0.08
    assert patch_area(patch) == pytest.approx(expected, abs=5e-3)


def test_should_converge_at_second_order_on_a_smooth_cap():
    radius = 2.5
    patch = GraphPatch(
        q=0,
        cube=DyadicCube(4, (0, 0)),
        plane=Hyperplane(np.zeros(2), np.array([0.0, -1.0])),
        neighbors=NeighborFamily(0, np.array([0]), 0.0, 0.0),
        local_centers=np.zeros((1, 1)),
        heights=np.zeros(1),
        radii=np.array([radius]),
        r_q=0.1,
        floor=0.06,
        delta=0.0,
    )
    exact = 2 * radius * math.asin(1 / radius)
    errors = [abs(patch_area(patch, resolution=n) - exact) for n in (8, 16, 32)]
    assert errors[0] / errors[1] == pytest.approx(4.0, rel=0.1)
    assert errors[1] / errors[2] == pytest.approx(4.0, rel=0.1)


def test_should_know_unit_ball_volumes():
    assert unit_ball_volume(1) == pytest.approx(2.0)
    assert unit_ball_volume(2) == pytest.approx(math.pi)
    assert unit_ball_volume(3) == pytest.approx(4 * math.pi / 3)


def test_should_measure_ahlfors_ratio_of_a_segment():
    mesh = BoundaryMesh(np.array([[-1.0, 0.0], [1.0, 0.0]]), [[0, 1]])
    assert ahlfors_ratio(mesh, [0.0, 0.0], 0.5) == pytest.approx(2.0)
    assert ahlfors_ratio(mesh, [0.0, 3.0], 0.5) == 0.0


def test_should_measure_ahlfors_ratio_of_a_square():
    vertices = np.array([[-1.0, -1.0, 0.0], [1.0, -1.0, 0.0], [1.0, 1.0, 0.0], [-1.0, 1.0, 0.0]])
    mesh = BoundaryMesh(vertices, [[0, 1, 2], [0, 2, 3]])
    assert ahlfors_ratio(mesh, [0.0, 0.0, 0.0], 0.5) == pytest.approx(math.pi, rel=0.03)


def test_should_certify_lower_bound_of_matching_law():
    radii = 2.0 ** -np.arange(1, 6)
    cert = verify_lower_bound(PowerLaw(0.5), [[0.0, 0.0]], 0.5, 1.0, 1.0, radii, d=1)
    assert cert.passed
    assert cert.worst_ratio == pytest.approx(1.0)
    failed = verify_lower_bound(PowerLaw(0.5), [[0.0, 0.0]], 0.5, 2.0, 1.0, radii, d=1)
    assert not failed.passed
    assert failed.to_dict()["points"] == 1


def test_should_refuse_counting_bound_without_mass_on_e(enlarged_half_plane):
    with pytest.raises(HypothesisViolationError, match="mass lower bound"):
        theorem31_verify(enlarged_half_plane, PointMass([5.0, 5.0]), [0.3, 0.0], [0.01])


def test_should_anchor_every_cube_at_e(enlarged_half_plane):
    verifier = Theorem31Verifier(enlarged_half_plane, PowerLaw(0.5))
    assert np.allclose(verifier._xi_q, 0.0)
    meeting = verifier.cubes_meeting(np.array([0.0, 0.0]), 0.01)
    assert meeting.size == 0


def test_should_keep_cube_sides_comparable_away_from_e(enlarged_half_plane):
    verifier = Theorem31Verifier(enlarged_half_plane, PointMass([0.0, 0.0]), alpha=0.5)
    r = 2.0**-5
    report = verifier.verify([4 * r, 0.0], r)
    assert report.case == 1
    assert report.lhs > 0
    assert report.comparable is True
    assert report.side_ratio == 2.0**report.level_spread
    assert report.to_dict()["comparability_bound"] == report.comparability_bound


def test_should_skip_comparability_next_to_e(enlarged_half_plane):
    verifier = Theorem31Verifier(enlarged_half_plane, PointMass([0.0, 0.0]), alpha=0.5)
    report = verifier.verify([0.13, 0.0], 0.07)
    assert report.case == 2
    assert report.comparable is None
    assert report.comparability_bound is None


@pytest.mark.slow
def test_should_grow_both_sides_of_counting_bound_with_radius(enlarged_half_plane):
    radii = [2.0**-2, 2.0**-3]
    reports = theorem31_verify(enlarged_half_plane, PointMass([0.0, 0.0]), [0.0, 0.0], radii)
    assert [report.r for report in reports] == radii
    large, small = reports
    assert large.lhs >= small.lhs
    assert large.rhs >= small.rhs
    assert large.rhs == pytest.approx(large.r**0.5)
    assert large.overlap >= small.overlap
    assert all(math.isfinite(report.ratio) for report in reports)
    assert all(report.case == 2 for report in reports)
