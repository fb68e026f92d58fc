from __future__ import annotations

import math

import numpy as np
import pytest

from reifenberg.domains import BallDomain
from reifenberg.domains import HalfSpace
from reifenberg.domains import MeshDomain
from reifenberg.domains import distance_to_boundary
from reifenberg.domains import winding_numbers
from reifenberg.geometry import Ball
from reifenberg.geometry import BoundaryMesh


def square() -> BoundaryMesh:
    vertices = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
    return BoundaryMesh(vertices, [[0, 1], [1, 2], [2, 3], [3, 0]])


def test_should_measure_distance_in_half_space():
    assert distance_to_boundary([0.0, 3.0], HalfSpace(2)) == 3.0
    assert distance_to_boundary([0.5, 0.0, -2.0], HalfSpace(3)) == 2.0


def test_should_measure_distance_from_ball_center():
    assert distance_to_boundary([0.0, 0.0], BallDomain([0.0, 0.0], 1.0)) == 1.0


def test_should_return_array_for_many_points():
    d = distance_to_boundary([[0.0, 1.0], [0.0, 0.25]], HalfSpace(2))
    assert np.allclose(d, [1.0, 0.25])


def test_should_reject_points_of_wrong_dimension():
    with pytest.raises(ValueError, match="Expected points of dimension 2"):
        distance_to_boundary([0.0, 0.0, 1.0], HalfSpace(2))


def test_should_clip_lower_bound_outside():
    domain = HalfSpace(2)
    assert np.allclose(domain.dist_lower([[0.0, 2.0], [0.0, -2.0]]), [2.0, 0.0])
    ball = BallDomain([0.0, 0.0], 1.0)
    assert np.allclose(ball.dist_lower([[0.5, 0.0], [3.0, 0.0]]), [0.5, 0.0])


def test_should_sample_half_space_only_in_a_ball():
    domain = HalfSpace(2)
    with pytest.raises(ValueError, match="only be sampled inside a ball"):
        domain.sample_boundary(0.1)
    sample = domain.sample_boundary(0.1, Ball([0.0, 0.0], 1.0))
    assert np.all(sample[:, -1] == 0.0)
    assert np.all(np.abs(sample[:, 0]) <= 1.0 + 1e-12)


def test_should_sample_sphere_boundary():
    domain = BallDomain([1.0, 1.0, 1.0], 0.5)
    sample = domain.sample_boundary(0.05)
    assert np.allclose(np.linalg.norm(sample - 1.0, axis=1), 0.5)


def test_should_decide_inside_of_mesh_domain():
    domain = MeshDomain(square())
    inside = domain.inside([[0.0, 0.0], [0.9, -0.9], [2.0, 0.0], [0.0, 1.5]])
    assert inside.tolist() == [True, True, False, False]
    assert domain.diameter == pytest.approx(2 * math.sqrt(2))
    assert distance_to_boundary([0.0, 0.0], domain) == pytest.approx(1.0)


def test_should_count_winding_numbers():
    w = winding_numbers(np.array([[0.0, 0.0], [3.0, 0.0]]), square())
    assert w[0] == pytest.approx(1.0)
    assert w[1] == pytest.approx(0.0, abs=1e-12)


def test_should_default_poles_inside():
    assert HalfSpace(3).inside(HalfSpace(3).default_pole())[0]
    assert MeshDomain(square()).inside(MeshDomain(square()).default_pole())[0]
