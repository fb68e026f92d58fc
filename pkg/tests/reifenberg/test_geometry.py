from __future__ import annotations

import math

import numpy as np
import pytest

from reifenberg.errors import DegenerateFitError
from reifenberg.errors import EmptyIntersectionError
from reifenberg.errors import HypothesisViolationError
from reifenberg.geometry import Ball
from reifenberg.geometry import BoundaryMesh
from reifenberg.geometry import DyadicCube
from reifenberg.geometry import Hyperplane
from reifenberg.geometry import exhaustive_distance
from reifenberg.geometry import fit_hyperplane
from reifenberg.geometry import frame_from_normal
from reifenberg.geometry import local_hausdorff
from reifenberg.geometry import plane_proximity_bound
from reifenberg.geometry import simplex_eta


def polygon(count: int, radius: float = 1.0) -> BoundaryMesh:
    angles = 2 * math.pi * np.arange(count) / count
    vertices = radius * np.column_stack([np.cos(angles), np.sin(angles)])
    faces = np.column_stack([np.arange(count), (np.arange(count) + 1) % count])
    return BoundaryMesh(vertices, faces)


def test_should_return_zero_for_identical_samples():
    x = np.linspace(-2, 2, 401)
    A = np.column_stack([x, np.zeros_like(x)])
    assert local_hausdorff(A, A.copy(), Ball([0.0, 0.0], 1.0)) == 0.0


def test_should_measure_parallel_lines():
    x = np.linspace(-2, 2, 401)
    A = np.column_stack([x, np.zeros_like(x)])
    B = np.column_stack([x, np.full_like(x, 0.25)])
    assert local_hausdorff(A, B, Ball([0.0, 0.0], 1.0)) == pytest.approx(0.25, abs=1e-12)


def test_should_use_exact_distance_when_given():
    x = np.linspace(-2, 2, 41)
    A = np.column_stack([x, np.zeros_like(x)])
    B = np.column_stack([x + 0.05, np.zeros_like(x)])
    plane = Hyperplane([0.0, 0.0], [0.0, 1.0])
    value = local_hausdorff(A, B, Ball([0.0, 0.0], 1.0), plane.distance, plane.distance)
    assert value == pytest.approx(0.0, abs=1e-15)


def test_should_raise_when_ball_misses_a_sample():
    A = np.array([[0.0, 0.0], [0.1, 0.0]])
    B = np.array([[5.0, 5.0]])
    with pytest.raises(EmptyIntersectionError, match="Sample B has no point"):
        local_hausdorff(A, B, Ball([0.0, 0.0], 1.0))


def test_should_fit_coplanar_points_exactly():
    rng = np.random.default_rng(7)
    points = np.column_stack([rng.random((50, 2)) * 2 - 1, np.zeros(50)])
    fit = fit_hyperplane(points)
    assert fit.residual == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(fit.plane.normal, [0.0, 0.0, 1.0], atol=1e-9)
    assert not fit.degenerate


def test_should_fit_anchored_plane_through_anchor():
    x = np.linspace(-1, 1, 21)
    points = np.column_stack([x, np.full_like(x, 0.1)])
    fit = fit_hyperplane(points, anchor=[0.0, 0.0])
    assert fit.residual == pytest.approx(0.1, abs=1e-9)
    assert np.allclose(fit.plane.anchor, [0.0, 0.0])
    assert np.allclose(np.abs(fit.plane.normal), [0.0, 1.0], atol=1e-6)


def test_should_report_largest_deviation_as_residual():
    points = np.array([[-1.0, 0.0], [0.0, 0.0], [0.5, 0.0], [1.0, 0.3]])
    fit = fit_hyperplane(points)
    residuals = fit.plane.distance(points)
    assert fit.residual == pytest.approx(float(residuals.max()), rel=1e-9)


def test_should_raise_for_too_few_points():
    with pytest.raises(DegenerateFitError, match="At least 3 points"):
        fit_hyperplane(np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]))


def test_should_raise_for_coincident_points():
    with pytest.raises(DegenerateFitError, match="All points coincide"):
        fit_hyperplane(np.zeros((4, 2)))


def test_should_build_rotation_onto_last_axis():
    normal = np.array([1.0, 2.0, 2.0]) / 3.0
    R = frame_from_normal(normal)
    assert np.allclose(R @ normal, [0.0, 0.0, 1.0])
    assert np.linalg.det(R) == pytest.approx(1.0)
    assert np.allclose(R @ R.T, np.eye(3))


def test_should_pass_proximity_bound_for_identical_planes():
    plane = Hyperplane([0.0, 0.0], [0.0, 1.0])
    X = np.array([[0.0, 0.0], [1.0, 0.0]])
    verdict = plane_proximity_bound(plane, plane, X, theta=0.1, samples=200)
    assert verdict.passed
    assert verdict.worst_ratio == 0.0
    assert verdict.eta == pytest.approx(1.0)


def test_should_pass_proximity_bound_for_tilted_planes():
    X = np.array([[0.0, 0.0], [1.0, 0.0]])
    P1 = Hyperplane([0.0, 0.01], [0.0, 1.0])
    P2 = Hyperplane([0.0, 0.0], [-0.01, 1.0])
    verdict = plane_proximity_bound(P1, P2, X, theta=0.02, samples=500)
    assert verdict.passed


def test_should_reject_large_theta():
    plane = Hyperplane([0.0, 0.0], [0.0, 1.0])
    X = np.array([[0.0, 0.0], [1.0, 0.0]])
    with pytest.raises(HypothesisViolationError, match=r"Hypothesis \(a\) violated"):
        plane_proximity_bound(plane, plane, X, theta=0.3)


def test_should_reject_vertices_far_from_planes():
    P1 = Hyperplane([0.0, 0.0], [0.0, 1.0])
    P2 = Hyperplane([0.0, 0.5], [0.0, 1.0])
    X = np.array([[0.0, 0.0], [1.0, 0.0]])
    with pytest.raises(HypothesisViolationError, match=r"Hypothesis \(b\) violated"):
        plane_proximity_bound(P1, P2, X, theta=0.1)


def test_should_measure_simplex_eta():
    triangle = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3) / 2]])
    assert simplex_eta(triangle) == pytest.approx(math.sqrt(3) / 2)


def test_should_navigate_dyadic_cubes():
    cube = DyadicCube(1, (1, 2))
    assert cube.side == 0.5
    assert np.allclose(cube.lower, [0.5, 1.0])
    assert cube.parent() == DyadicCube(0, (0, 1))
    children = cube.children()
    assert len(children) == 4
    assert all(cube.contains_cube(child) for child in children)
    assert children[0].interiors_disjoint(children[1])
    assert not cube.interiors_disjoint(children[2])
    assert cube.contains([0.75, 1.25])[0]
    assert not cube.contains([1.0, 1.25])[0]


def test_should_match_exhaustive_distance():
    mesh = polygon(200)
    rng = np.random.default_rng(3)
    points = rng.random((300, 2)) * 4 - 2
    indexed = mesh.index.distance(points)
    assert np.allclose(indexed, exhaustive_distance(points, mesh), atol=1e-12)


def test_should_sample_mesh_densely():
    mesh = polygon(64)
    sample = mesh.sample(0.01)
    assert np.all(mesh.index.distance(sample) < 1e-12)
    assert sample.shape[0] >= mesh.measure / 0.01


def test_should_sample_only_inside_ball():
    mesh = polygon(64)
    ball = Ball([1.0, 0.0], 0.3)
    sample = mesh.sample_in_ball(0.01, ball)
    assert sample.shape[0] > 0
    assert np.all(ball.contains(sample))


def test_should_orient_polygon_outward():
    mesh = polygon(16)
    midpoints = mesh.simplices.mean(axis=1)
    assert np.all(np.sum(mesh.normals * midpoints, axis=1) > 0)


def rotation(angle: float) -> np.ndarray:
    return np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])


def scattered(seed: int, count: int, radius: float) -> np.ndarray:
    rng = np.random.default_rng(seed)
    angles = rng.random(count) * 2 * math.pi
    lengths = radius * np.sqrt(rng.random(count))
    return lengths[:, None] * np.column_stack([np.cos(angles), np.sin(angles)])


def test_should_be_symmetric_in_the_two_samples():
    A, B = scattered(1, 60, 0.5), scattered(2, 80, 0.5)
    ball = Ball([0.0, 0.0], 1.0)
    assert local_hausdorff(A, B, ball) == local_hausdorff(B, A, ball)


def test_should_move_at_most_as_far_as_the_sample():
    A, B = scattered(3, 60, 0.5), scattered(4, 80, 0.5)
    ball = Ball([0.0, 0.0], 1.0)
    step = 0.01 * scattered(5, 60, 1.0)
    before = local_hausdorff(A, B, ball)
    assert abs(local_hausdorff(A + step, B, ball) - before) <= 0.01 + 1e-15
    assert abs(local_hausdorff(A, B + step[:1], ball) - before) <= 0.01 + 1e-15


def test_should_fit_same_residual_after_rigid_motion():
    rng = np.random.default_rng(11)
    x = rng.uniform(-1, 1, 50)
    points = np.column_stack([x, 0.3 * x + 0.02 * rng.standard_normal(50)])
    anchor = np.array([0.1, 0.03])
    turn, shift = rotation(0.7), np.array([2.5, -1.25])
    moved = points @ turn.T + shift
    free = fit_hyperplane(points).residual
    assert fit_hyperplane(moved).residual == pytest.approx(free, abs=1e-9)
    anchored = fit_hyperplane(points, anchor=anchor).residual
    assert fit_hyperplane(moved, anchor=turn @ anchor + shift).residual == pytest.approx(
        anchored, abs=1e-9
    )


def test_should_keep_eta_under_rigid_motion():
    triangle = np.array([[0.0, 0.0], [1.3, 0.2], [0.4, 0.9]])
    moved = triangle @ rotation(1.1).T + np.array([-4.0, 7.5])
    assert simplex_eta(moved) == pytest.approx(simplex_eta(triangle), abs=1e-12)


@pytest.mark.parametrize("dimension, expected", [(2, 0.5), (3, 1 / math.sqrt(6))])
def test_should_give_scaled_standard_simplex_a_fixed_eta(dimension, expected):
    corners = np.vstack([np.zeros(dimension), np.eye(dimension)])
    for scale in (0.01, 1.0, 64.0):
        assert simplex_eta(scale * corners + 0.5) == pytest.approx(expected, abs=1e-12)
