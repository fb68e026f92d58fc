from __future__ import annotations

import math

import numpy as np
import pytest

from reifenberg.domains import BallDomain
from reifenberg.domains import HalfSpace
from reifenberg.errors import MonotonicityFailure
from reifenberg.errors import StepBudgetError
from reifenberg.errors import ZeroMassError
from reifenberg.executors import Executor
from reifenberg.harmonic import HarmonicMeasure
from reifenberg.harmonic import PointMass
from reifenberg.harmonic import PowerLaw
from reifenberg.harmonic import arc_half_angle
from reifenberg.harmonic import dimension_fit
from reifenberg.harmonic import estimate_header
from reifenberg.harmonic import estimate_omega
from reifenberg.harmonic import extract_singular_candidates
from reifenberg.harmonic import harmonic_disk_arc
from reifenberg.harmonic import monotonicity_check
from reifenberg.harmonic import poisson_halfplane_cdf
from reifenberg.harmonic import profile
from reifenberg.harmonic import sample_exits
from reifenberg.harmonic import select_candidates
from reifenberg.harmonic import smallest_radius
from reifenberg.harmonic import wos_hit
from reifenberg.utils import random_stream

RADII = 2.0 ** -np.arange(1, 7)


@pytest.mark.slow
def test_should_split_half_plane_measure_evenly():
    target = ([0.0, 0.0], 1.0)
    [estimate] = estimate_omega(HalfSpace(2), [0.0, 1.0], [target], n=2000, seed=0, tol=1e-3)
    expected = poisson_halfplane_cdf(1.0) - poisson_halfplane_cdf(-1.0)
    assert expected == pytest.approx(0.5)
    assert estimate.n == 2000
    assert estimate.omega_hat == pytest.approx(expected, abs=0.05)
    assert estimate.stderr == pytest.approx(math.sqrt(0.25 / 2000), rel=0.2)


def test_should_grow_with_nested_targets():
    targets = [([0.0, 0.0], r) for r in (0.5, 1.0, 2.0)]
    estimates = estimate_omega(HalfSpace(2), [0.0, 1.0], targets, n=1000, seed=1, tol=1e-3)
    values = [e.omega_hat for e in estimates]
    assert values == sorted(values)
    assert values[-1] <= 1.0


def test_should_leave_exits_on_the_boundary():
    sample = sample_exits(HalfSpace(2), [0.0, 1.0], n=200, seed=2, tol=1e-3)
    assert sample.n + sample.failures == 200
    assert np.allclose(sample.points[:, 1], 0.0)
    assert np.all(sample.steps >= 1)


def test_should_reproduce_exits_for_same_seed():
    first = sample_exits(BallDomain([0.0, 0.0], 1.0), n=100, seed=4)
    second = sample_exits(BallDomain([0.0, 0.0], 1.0), n=100, seed=4)
    assert np.array_equal(first.points, second.points)


def test_should_reject_pole_outside():
    with pytest.raises(ValueError, match="is not inside the domain"):
        sample_exits(HalfSpace(2), [0.0, -1.0], n=10)


@pytest.mark.slow
def test_should_match_disk_arc_measure():
    pole = np.array([0.3, 0.2])
    half = arc_half_angle(0.5)
    assert half == pytest.approx(2 * math.asin(0.25))
    expected = harmonic_disk_arc(pole, -half, half)
    disk = BallDomain([0.0, 0.0], 1.0)
    [estimate] = estimate_omega(disk, pole, [([1.0, 0.0], 0.5)], n=4000, seed=3)
    assert estimate.omega_hat == pytest.approx(expected, abs=0.04)


def test_should_give_arc_length_fraction_from_the_center():
    assert harmonic_disk_arc([0.0, 0.0], 0.0, math.pi) == pytest.approx(0.5)
    assert harmonic_disk_arc([0.0, 0.0], -0.5, 0.5) == pytest.approx(0.5 / math.pi)


def test_should_stop_walk_on_the_boundary():
    exit_point = wos_hit(HalfSpace(2), [0.0, 1.0], 1e-4, random_stream(0, 0))
    assert exit_point[1] == 0.0


def test_should_raise_when_walk_runs_out_of_steps():
    with pytest.raises(StepBudgetError):
        wos_hit(HalfSpace(2), [0.0, 1.0], 1e-9, random_stream(0, 0), max_steps=1)


def test_should_read_measure_from_shared_sample():
    sample = sample_exits(BallDomain([0.0, 0.0], 1.0), n=500, seed=6)
    measure = HarmonicMeasure(sample)
    everything, stderr = measure.measure([0.0, 0.0], 2.0)
    assert everything == 1.0
    assert stderr == 0.0
    assert len(measure.estimate([1.0, 0.0], 0.1).to_row()) == len(estimate_header(2))


def test_should_fit_power_law_slope():
    fit = dimension_fit(profile(PowerLaw(1.5), [0.0, 0.0], RADII))
    assert fit.slope_fit == pytest.approx(1.5, abs=0.01)
    assert fit.lower_dim == pytest.approx(1.5)
    assert fit.upper_dim == pytest.approx(1.5)
    assert fit.to_dict()["radii"] == sorted(RADII.tolist())


def test_should_fit_zero_slope_at_point_mass():
    fit = dimension_fit(profile(PointMass([0.0, 0.0]), [0.0, 0.0], RADII))
    assert fit.slope_fit == pytest.approx(0.0, abs=1e-12)
    assert fit.lower_dim == 0.0


def test_should_refuse_fit_without_mass():
    with pytest.raises(ZeroMassError, match="at least 4 are required"):
        dimension_fit(profile(PointMass([5.0, 5.0]), [0.0, 0.0], RADII))


def test_should_keep_point_mass_as_singular_candidate():
    result = select_candidates(
        PointMass([0.0, 0.0]),
        [[0.0, 0.0], [0.5, 0.5]],
        alpha=0.5,
        r0=0.25,
        r_min=2.0**-6,
        d=1,
    )
    assert len(result) == 1
    assert result.points.tolist() == [[0.0, 0.0]]
    assert result.certificate[0] > 1
    assert result.probes == 2


def test_should_reject_candidates_of_a_smooth_law():
    result = select_candidates(PowerLaw(1.0), [[0.0, 0.0]], alpha=0.5, r0=0.25, r_min=2.0**-6, d=1)
    assert len(result) == 0


def test_should_choose_smallest_dyadic_radius():
    assert smallest_radius(10_000, 0.5, 100) == 2.0**-13


def test_should_flag_loss_of_mass_in_smaller_domain():
    with pytest.raises(MonotonicityFailure):
        monotonicity_check(
            BallDomain([0.0, 0.0], 1.0),
            BallDomain([0.0, 0.0], 0.5),
            [0.0, 0.0],
            [[([1.0, 0.0], 0.3)]],
            n=500,
            seed=8,
        )


def test_should_pass_monotonicity_on_whole_boundary():
    report = monotonicity_check(
        BallDomain([0.0, 0.0], 1.0),
        BallDomain([0.0, 0.0], 1.0),
        [0.0, 0.0],
        [[([0.0, 0.0], 10.0)]],
        n=200,
        seed=9,
    )
    assert report.passed
    assert report.to_dict()["sets"][0]["omega"] == 1.0


def test_should_reject_alpha_outside_dimension_range():
    with pytest.raises(ValueError, match="alpha must lie in"):
        extract_singular_candidates(BallDomain([0.0, 0.0], 1.0), [0.0, 0.0], alpha=1.5, n=10)


def test_should_reject_test_radius_above_unit_scale():
    with pytest.raises(ValueError, match="exceeds min"):
        extract_singular_candidates(BallDomain([0.0, 0.0], 1.0), [0.0, 0.0], r0=1.5, n=10)


def test_should_find_no_singular_candidates_on_the_circle():
    result = extract_singular_candidates(BallDomain([0.0, 0.0], 1.0), [0.0, 0.0], n=2000, seed=8)
    assert len(result) == 0
    assert result.probes == 32
    assert result.r_min == 2.0**-8


def test_should_give_unit_mass_to_the_whole_boundary():
    sample = sample_exits(BallDomain([0.0, 0.0], 1.0), n=300, seed=6)
    value, stderr = HarmonicMeasure(sample).measure([0.0, 0.0], 2.0)
    assert value == 1.0
    assert stderr == 0.0


def test_should_add_measures_of_disjoint_targets():
    sample = sample_exits(BallDomain([0.0, 0.0], 1.0), n=400, seed=7)
    mu = HarmonicMeasure(sample)
    right, _ = mu.measure([1.0, 0.0], 0.5)
    left, _ = mu.measure([-1.0, 0.0], 0.5)
    both = sample.hits([1.0, 0.0], 0.5) | sample.hits([-1.0, 0.0], 0.5)
    assert np.count_nonzero(both) / sample.n == pytest.approx(right + left, abs=1e-12)
    assert 0 < right < 1 and 0 < left < 1


def test_should_reproduce_exits_across_thread_counts(laboratory):
    laboratory.override(harmonic={"batch_size": 50})
    domain = BallDomain([0.0, 0.0], 1.0)
    serial = sample_exits(domain, n=200, seed=9, executor=Executor.create(1))
    threaded = sample_exits(domain, n=200, seed=9, executor=Executor.create(4))
    assert np.array_equal(serial.points, threaded.points)
    assert np.array_equal(serial.steps, threaded.steps)
