from __future__ import annotations

import math

import numpy as np
import pytest

from reifenberg.errors import SlopeViolationError
from reifenberg.snowflake import AffinePlacement
from reifenberg.snowflake import BlipConfig
from reifenberg.snowflake import _canonical
from reifenberg.snowflake import add_blip
from reifenberg.snowflake import build_snowflake
from reifenberg.snowflake import check_tents
from reifenberg.snowflake import face_subdivision
from reifenberg.snowflake import increment_ratios
from reifenberg.snowflake import make_profile
from reifenberg.snowflake import sampled_distance
from reifenberg.snowflake import seed_generation
from reifenberg.snowflake import separation
from reifenberg.snowflake import shared_region_agreement
from reifenberg.utils import random_stream


@pytest.fixture
def planar_config():
    return BlipConfig.create(theta=0.1, b=0.05, dimension=2, k_max=2)


def test_should_evaluate_tent_at_origin():
    profile = make_profile("tent", theta=0.1, N=1)
    assert profile.psi([0.0])[0] == pytest.approx(0.05)
    assert profile.psi([0.5])[0] == pytest.approx(0.0)
    assert profile.max_slope == pytest.approx(0.1)


def test_should_shrink_support_with_frequency():
    profile = make_profile("tent", theta=0.1, N=10)
    assert profile.psi([0.0])[0] == pytest.approx(0.005)
    assert profile.psi([0.05])[0] == pytest.approx(0.0)
    assert np.all(profile.psi(np.linspace(0.05, 0.5, 20)[:, None]) == 0)


def test_should_be_flat_without_slope():
    profile = make_profile("tent", theta=0.0)
    assert profile.flat
    assert np.all(profile.psi(np.linspace(-0.5, 0.5, 11)[:, None]) == 0)
    assert profile.graph().measure == pytest.approx(1.0)


def test_should_measure_blip_length():
    profile = make_profile("tent", theta=0.1, N=10)
    assert profile.graph().measure == pytest.approx(1.000499, abs=1e-6)


def test_should_build_pyramid_in_the_plane():
    profile = make_profile("tent", theta=0.1, N=1, dimension=2, radius=0.35)
    assert profile.psi([[0.0, 0.0]])[0] == pytest.approx(0.035)
    assert profile.psi([[0.4, 0.0]])[0] == pytest.approx(0.0)
    assert profile.max_slope == pytest.approx(0.1)


def test_should_reject_theta_outside_unit_interval():
    with pytest.raises(ValueError, match="theta must lie in"):
        make_profile("tent", theta=1.5)


def test_should_reject_steep_custom_profile():
    facets = [([[-0.25], [0.0]], [0.0, 0.1]), ([[0.0], [0.25]], [0.1, 0.0])]
    facets += [([[-0.5], [-0.25]], [0.0, 0.0]), ([[0.25], [0.5]], [0.0, 0.0])]
    with pytest.raises(SlopeViolationError, match="exceeds theta"):
        make_profile("custom", theta=0.1, facets=facets)


def test_should_reject_support_reaching_the_boundary():
    facets = [([[-0.5], [0.0]], [0.02, 0.0]), ([[0.0], [0.5]], [0.0, 0.0])]
    with pytest.raises(ValueError, match="open ball of radius 1/2"):
        make_profile("custom", theta=0.1, facets=facets)


def test_should_choose_frequency_keeping_tent_clearance(planar_config):
    cfg = planar_config
    assert cfg.N >= 2
    assert separation(cfg.profile, cfg.b) >= cfg.b / 100
    assert separation(cfg.profile.with_frequency(1), cfg.b) < cfg.b / 100


def test_should_subdivide_segment_into_whitney_cubes():
    face = np.array([[-0.5, 0.0], [0.5, 0.0]])
    coarse = face_subdivision(face, np.array([0.0, -1.0]), k_max=1)
    assert len(coarse.cubes) == 6
    assert coarse.cube_measure == pytest.approx(0.75)
    assert sum(np.linalg.norm(p[1] - p[0]) for p in coarse.collar) == pytest.approx(0.25)

    fine = face_subdivision(face, np.array([0.0, -1.0]), k_max=2)
    assert len(fine.cubes) == 20
    assert fine.cube_measure == pytest.approx(0.96875)
    assert fine.ratio_high <= 1.0 + 1e-12


def test_should_seed_cube_with_all_faces(planar_config):
    square = seed_generation(planar_config, bounded=True)
    assert len(square.cubes) == 4
    assert square.measure == pytest.approx(4.0)

    cube_config = BlipConfig.create(theta=0.1, b=0.05, N=4, dimension=3, k_max=1)
    cube = seed_generation(cube_config, bounded=True)
    assert len(cube.cubes) == 6
    assert cube.measure == pytest.approx(6.0)


def test_should_seed_half_space_with_single_cube(planar_config):
    g0 = seed_generation(planar_config, bounded=False)
    assert len(g0.cubes) == 1
    assert g0.measure == pytest.approx(8.0)
    assert g0.domain.inside([[0.0, 0.5], [3.0, 1.0]]).all()
    assert not g0.domain.inside([[0.0, -0.5]])[0]


def test_should_replace_cube_by_blip_graph(planar_config):
    g0, g1 = build_snowflake(planar_config, bounded=False, depth=1)
    graph_length = planar_config.profile.graph().measure
    assert g1.measure == pytest.approx(7.0 + graph_length, rel=1e-9)
    assert g1.increment == pytest.approx(0.05 / planar_config.N, rel=1e-9)
    assert 0 < sampled_distance(g0, g1, 1 / 512) <= g1.increment * (1 + 1e-9)


def test_should_shrink_increments_geometrically(planar_config):
    generations = build_snowflake(planar_config, bounded=False, depth=2)
    assert [g.index for g in generations] == [0, 1, 2]
    measures = [g.measure for g in generations]
    assert measures == sorted(measures)
    ratios = increment_ratios(generations)
    assert len(ratios) == 1
    assert ratios[0] <= 0.5


def test_should_agree_below_the_plane(planar_config):
    _, bounded = build_snowflake(planar_config, bounded=True, depth=1)
    _, unbounded = build_snowflake(planar_config, bounded=False, depth=1)
    assert shared_region_agreement(bounded, unbounded) <= 1e-12


def test_should_add_single_blip(planar_config):
    g0 = seed_generation(planar_config, bounded=False)
    updated, children = add_blip(g0, g0.G[0])
    assert len(children) == len(planar_config.template.children)
    assert len(updated.cubes) == len(children)
    assert updated.measure == pytest.approx(7.0 + planar_config.profile.graph().measure)


def test_should_keep_tents_free_after_blip(planar_config):
    g0, g1 = build_snowflake(planar_config, bounded=True, depth=1)
    outer, inner = g0.G[0].tents(planar_config.b).sample(32)
    assert not g0.domain.inside(outer).any()
    assert g0.domain.inside(inner).all()
    assert check_tents(g0.domain, g0.G[0], planar_config.b, samples=32) == (0, 0)
    assert math.isfinite(g1.measure)


@pytest.mark.parametrize("m", [2, 3])
def test_should_match_sampled_increment(planar_config, m):
    generations = build_snowflake(planar_config, bounded=False, depth=m)
    previous, current = generations[m - 1], generations[m]
    measured = sampled_distance(previous, current, 1 / 512)
    assert measured == pytest.approx(current.increment, rel=1e-6)


def test_should_place_blips_conformally(planar_config):
    _, g1 = build_snowflake(planar_config, bounded=False, depth=1)
    cube = g1.G[0]
    placement = AffinePlacement.for_cube(cube)
    assert np.allclose(placement.rotation @ placement.rotation.T, np.eye(2), atol=1e-12)
    assert np.linalg.det(placement.rotation) == pytest.approx(1.0, abs=1e-12)
    points = random_stream(4, 0).random((40, 2)) - 0.5
    placed = placement(points)
    before = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=-1)
    after = np.linalg.norm(placed[:, None, :] - placed[None, :, :], axis=-1)
    assert np.allclose(after, cube.side * before, rtol=1e-9, atol=1e-12)
    assert np.allclose(placement(np.zeros(2)), cube.center)


def _rows(simplices: np.ndarray) -> set:
    flat = np.round(simplices.reshape(simplices.shape[0], -1), 12)
    return {tuple(row) for row in flat}


def test_should_change_boundary_only_inside_tents(planar_config):
    _, g1, g2 = build_snowflake(planar_config, bounded=False, depth=2)
    old, new = _rows(g1.simplices), _rows(g2.simplices)
    changed = np.asarray(sorted(old ^ new)).reshape(-1, 2, 2)
    assert changed.shape[0] > 0
    centroids = changed.mean(axis=1)
    covered = np.zeros(centroids.shape[0], dtype=bool)
    for cube in g1.G:
        tents = cube.tents(planar_config.b)
        covered |= tents.in_outer(centroids) | tents.in_inner(centroids)
    assert covered.all()


def test_should_order_an_empty_simplex_set():
    ordered = _canonical(np.zeros((0, 2, 2)))
    assert ordered.shape == (0, 4)
