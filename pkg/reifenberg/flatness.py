from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from reifenberg.config import Configuration
from reifenberg.domains import DomainRep
from reifenberg.errors import LaboratoryError
from reifenberg.errors import OrientationFailure
from reifenberg.errors import SeparationFailure
from reifenberg.executors import Executor
from reifenberg.geometry import Ball
from reifenberg.geometry import Hyperplane
from reifenberg.geometry import as_points
from reifenberg.geometry import fit_hyperplane
from reifenberg.geometry import local_hausdorff
from reifenberg.utils import random_stream

logger = logging.getLogger(__name__)

PROBE_OFFSET = 0.75
PROBE_RADIUS = 0.1


@dataclass(frozen=True, eq=False)
class FlatnessReport:
    x: np.ndarray
    r: float
    plane: Hyperplane
    delta: float
    normal: np.ndarray
    separation_ok: bool
    samples: int = 0

    @property
    def dimension(self) -> int:
        return self.x.shape[0]

    def to_row(self) -> list:
        return [
            *self.x.tolist(),
            self.r,
            self.delta,
            int(self.separation_ok),
            *self.normal.tolist(),
        ]

    def to_dict(self) -> dict:
        return {
            "x": self.x.tolist(),
            "r": self.r,
            "delta": self.delta,
            "normal": self.normal.tolist(),
            "separation_ok": self.separation_ok,
            "samples": self.samples,
        }


def report_header(dimension: int) -> list[str]:
    coords = [f"x{i}" for i in range(dimension)]
    normals = [f"n{i}" for i in range(dimension)]
    return [*coords, "r", "delta", "sep_ok", *normals]


def _component_grid(plane: Hyperplane, ball: Ball, gap: float, resolution: int, sign: float):
    """Grid of about resolution^d points in one side of the ball at height >= gap."""
    D = plane.dimension
    d = D - 1
    per_axis = max(int(math.ceil(resolution ** (d / D))), 2)
    r = ball.radius
    ticks = np.linspace(-r, r, per_axis)
    heights = np.linspace(gap, r, per_axis)
    grids = np.meshgrid(*([ticks] * d), heights, indexing="ij")
    local = np.stack(grids, axis=-1).reshape(-1, D)
    local[:, -1] *= sign
    centered = Hyperplane(plane.project(ball.center)[0], plane.normal)
    points = centered.from_local(local)
    return points[ball.contains(points, closed=False)]


def _separates(domain: DomainRep, plane: Hyperplane, ball: Ball, gap: float, resolution: int):
    """
    Side (+1 or -1) of the plane holding the complement, 0 when the sampled
    components are not one inside and one outside. None when both are empty.
    """
    above = _component_grid(plane, ball, gap, resolution, 1.0)
    below = _component_grid(plane, ball, gap, resolution, -1.0)
    if above.shape[0] == 0 and below.shape[0] == 0:
        return None
    inside_above = domain.inside(above) if above.shape[0] else np.empty(0, dtype=bool)
    inside_below = domain.inside(below) if below.shape[0] else np.empty(0, dtype=bool)
    if not np.any(inside_above) and np.all(inside_below):
        return 1
    if np.all(inside_above) and not np.any(inside_below):
        return -1
    return 0


def _ball_points(center: np.ndarray, radius: float) -> np.ndarray:
    D = center.shape[0]
    if D == 2:
        angles = 2 * math.pi * np.arange(16) / 16
        sphere = np.column_stack([np.cos(angles), np.sin(angles)])
    else:
        k = np.arange(32) + 0.5
        z = 1 - 2 * k / 32
        phi = math.pi * (1 + math.sqrt(5)) * k
        rho = np.sqrt(1 - z * z)
        sphere = np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])
    return np.vstack([center, center + radius * sphere, center + 0.5 * radius * sphere])


def _orientation_holds(domain: DomainRep, x: np.ndarray, r: float, normal: np.ndarray) -> bool:
    outer = _ball_points(x + PROBE_OFFSET * r * normal, PROBE_RADIUS * r)
    inner = _ball_points(x - PROBE_OFFSET * r * normal, PROBE_RADIUS * r)
    return not np.any(domain.inside(outer)) and bool(np.all(domain.inside(inner)))


def measure_flatness(
    domain: DomainRep,
    x,
    r: float,
    spacing: float | None = None,
    resolution: int | None = None,
    strict: bool = True,
) -> FlatnessReport:
    """
    Flatness of the boundary at (x, r).

    The plane is the minimax fit through x of the boundary sample in B(x, r); delta is
    the two-sided deviation of boundary and plane inside the ball relative to r. The
    separation test samples both sides of the ball away from the 2 delta r slab, and the
    normal is oriented so the ball of radius r/10 at x + 3r/4 N lies outside the domain
    and the one at x - 3r/4 N inside.
    """
    settings = Configuration.get().settings
    x = as_points(x, domain.dimension)[0]
    if not r > 0:
        raise ValueError(f"r must be positive, got {r}")
    spacing = spacing or settings.geometry.boundary_sample_spacing * r
    resolution = resolution or settings.flatness.separation_resolution

    ball = Ball(x, r)
    boundary = domain.sample_boundary(spacing, ball)
    boundary = boundary[ball.contains(boundary)]
    fit = fit_hyperplane(np.vstack([x, boundary]), anchor=x)
    plane = fit.plane
    on_plane = plane.sample_in_ball(ball, spacing)

    def to_boundary(points: np.ndarray) -> np.ndarray:
        return domain.boundary_distance(points)[0]

    deviation = local_hausdorff(
        boundary,
        on_plane,
        ball,
        dist_to_a=to_boundary,
        dist_to_b=plane.distance,
    )
    delta = deviation / r

    gap = 2 * delta * r * (1 + 1e-9) + 1e-12 * r
    side = _separates(domain, plane, ball, gap, resolution)
    if side == 0:
        finer = resolution * settings.flatness.recheck_factor
        logger.debug("Separation inconclusive at x=%s r=%g; rechecking at %d", x, r, finer)
        side = _separates(domain, plane, ball, gap, finer)
    separation_ok = side != 0
    if side is None:
        logger.debug("Slab covers B(x, r) at x=%s r=%g (delta=%.4g)", x, r, delta)
    if not separation_ok and strict:
        raise SeparationFailure(x, r, f"delta = {delta:.6g}")

    preferred = plane.normal if side in (None, 0, 1) else -plane.normal
    for normal in (preferred, -preferred):
        if _orientation_holds(domain, x, r, normal):
            break
    else:
        raise OrientationFailure(x, r)

    samples = boundary.shape[0]
    return FlatnessReport(x, float(r), plane, float(delta), normal, separation_ok, samples)


@dataclass(frozen=True, eq=False)
class Certification:
    delta_sup: float
    worst: FlatnessReport
    reports: list[FlatnessReport]

    def to_dict(self) -> dict:
        return {
            "delta_sup": self.delta_sup,
            "worst": self.worst.to_dict(),
            "probes": len(self.reports),
        }


def probe_region(domain: DomainRep) -> Ball | None:
    """Part of the boundary probed when none is given; bounded domains use all of it."""
    if domain.bounded:
        return None
    return Ball(np.zeros(domain.dimension), 1.0)


def certify_domain(
    domain: DomainRep,
    r0: float | None = None,
    n_probes: int | None = None,
    region: Ball | None = None,
    levels: int = 4,
    seed: int | None = None,
    executor: Executor | None = None,
    spacing: float | None = None,
    resolution: int | None = None,
) -> Certification:
    """Largest flatness over quasi-random boundary points and dyadic radii in (0, r0]."""
    settings = Configuration.get().settings
    n_probes = n_probes or settings.flatness.n_probes
    if n_probes < 1:
        raise ValueError(f"n_probes must be at least 1, got {n_probes}")
    seed = settings.seed if seed is None else seed
    r0 = r0 or (domain.r0 if math.isfinite(domain.r0) else 1.0)
    radii = r0 * 2.0 ** -np.arange(levels)
    region = region or probe_region(domain)

    sample_spacing = settings.geometry.boundary_sample_spacing * float(radii[-1])
    candidates = domain.sample_boundary(sample_spacing, region)
    if candidates.shape[0] == 0:
        raise ValueError("The probe region does not meet the boundary")

    sampler = qmc.Halton(d=2, scramble=True, seed=random_stream(seed, 0))
    u = sampler.random(n_probes)
    picks = np.minimum((u[:, 0] * candidates.shape[0]).astype(np.int64), candidates.shape[0] - 1)
    scales = radii[np.minimum((u[:, 1] * levels).astype(np.int64), levels - 1)]

    def probe(i: int) -> FlatnessReport:
        x, r = candidates[picks[i]], float(scales[i])
        try:
            return measure_flatness(domain, x, r, spacing, resolution)
        except LaboratoryError as ex:
            ex.add_note(f"while probing x={x.tolist()}, r={r:g}")
            raise

    executor = executor or Executor.get()
    reports = executor.map(probe, range(n_probes))
    worst = max(reports, key=lambda report: report.delta)
    logger.info(
        "Certified %d probes, r0=%g: delta_sup=%.6g at x=%s r=%g",
        n_probes,
        r0,
        worst.delta,
        worst.x,
        worst.r,
    )
    return Certification(worst.delta, worst, reports)


def orientation_consistency(domain: DomainRep, x, r: float) -> tuple[float, float]:
    """Angle between the normals at scales r and r/2 and its ratio to the measured delta."""
    coarse = measure_flatness(domain, x, r)
    fine = measure_flatness(domain, x, r / 2)
    cosine = float(np.clip(np.dot(coarse.normal, fine.normal), -1.0, 1.0))
    angle = math.acos(cosine)
    delta = max(coarse.delta, fine.delta)
    ratio = angle / delta if delta > 0 else (0.0 if angle == 0 else math.inf)
    logger.info("Normal angle %.4g between r=%g and r/2, angle/delta=%.4g", angle, r, ratio)
    return angle, ratio
