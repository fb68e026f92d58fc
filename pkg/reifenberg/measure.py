from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.spatial import cKDTree

from reifenberg.config import Configuration
from reifenberg.enlargement import EnlargedDomain
from reifenberg.enlargement import GraphPatch
from reifenberg.enlargement import build_patch
from reifenberg.enlargement import graph_function
from reifenberg.errors import HypothesisViolationError
from reifenberg.errors import ResolutionError
from reifenberg.errors import UnboundedOverlapError
from reifenberg.geometry import Ball
from reifenberg.geometry import BoundaryMesh
from reifenberg.geometry import as_points
from reifenberg.geometry import norm
from reifenberg.harmonic import MeasureProvider

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class BoxCount:
    scales: np.ndarray
    counts: np.ndarray
    hd_estimates: np.ndarray
    dim_fit: float
    d: int

    def to_rows(self) -> list[list[float]]:
        return [
            [float(s), int(c), float(h)]
            for s, c, h in zip(self.scales, self.counts, self.hd_estimates)
        ]

    def to_dict(self) -> dict:
        return {
            "scales": self.scales.tolist(),
            "counts": self.counts.tolist(),
            "hd_estimates": self.hd_estimates.tolist(),
            "dim_fit": self.dim_fit,
            "d": self.d,
        }


def box_count(
    points,
    scales,
    covering_radius: float | None = None,
    d: int | None = None,
    offsets: int | None = None,
) -> BoxCount:
    """
    Number of grid boxes of each side meeting a point sample.

    Each count is the smallest over ``offsets`` grids shifted diagonally by multiples of
    side / offsets. ``d`` is the exponent of
    the H^d proxy N(s) s^d and defaults to the ambient dimension minus one.
    """
    pts = as_points(points)
    scales = np.sort(np.asarray(scales, dtype=float))[::-1]
    d = pts.shape[1] - 1 if d is None else d
    offsets = offsets or Configuration.get().settings.measure.box_offsets
    if covering_radius is None:
        logger.debug("Box counting without a covering radius check")
    elif not covering_radius < scales.min() / 4:
        raise ResolutionError(covering_radius, float(scales.min()))

    fractions = np.arange(offsets) / offsets
    counts = np.empty(scales.size, dtype=np.int64)
    for i, s in enumerate(scales):
        best = None
        for shift in fractions * s:
            boxes = np.floor((pts + shift) / s).astype(np.int64)
            n = np.unique(boxes, axis=0).shape[0]
            best = n if best is None else min(best, n)
        counts[i] = best
    hd = counts * scales**d
    fit = stats.linregress(np.log(1 / scales), np.log(counts))
    result = BoxCount(scales, counts, hd, float(fit.slope), d)
    logger.info("Box counting over %d scales: dimension %.4g", scales.size, result.dim_fit)
    return result


def koch_curve(depth: int) -> np.ndarray:
    """Vertices of the middle-third Koch curve over [0, 1] after ``depth`` refinements."""
    points = np.array([[0.0, 0.0], [1.0, 0.0]])
    c, s = math.cos(math.pi / 3), math.sin(math.pi / 3)
    rotation = np.array([[c, -s], [s, c]])
    for _ in range(depth):
        a = points[:-1]
        b = points[1:]
        step = (b - a) / 3
        first = a + step
        apex = first + step @ rotation.T
        second = a + 2 * step
        refined = np.stack([a, first, apex, second], axis=1).reshape(-1, 2)
        points = np.vstack([refined, points[-1:]])
    return points


def polyline_samples(vertices: np.ndarray, spacing: float) -> np.ndarray:
    """Points along a polyline with gaps at most ``spacing``."""
    a = vertices[:-1]
    b = vertices[1:]
    lengths = norm(b - a)
    counts = np.maximum(np.ceil(lengths / spacing).astype(np.int64), 1)
    owner = np.repeat(np.arange(a.shape[0]), counts)
    starts = np.cumsum(counts) - counts
    t = (np.arange(counts.sum()) - np.repeat(starts, counts)) / counts[owner]
    return np.vstack([a[owner] + t[:, None] * (b - a)[owner], vertices[-1:]])


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def _disk_cells(d: int, radius: float, resolution: int) -> tuple[np.ndarray, float]:
    """Midpoints of the grid cells of [-R, R]^d whose centers lie in the closed disk."""
    h = radius / resolution
    ticks = -radius + h * (np.arange(2 * resolution) + 0.5)
    grid = np.stack(np.meshgrid(*([ticks] * d), indexing="ij"), axis=-1).reshape(-1, d)
    return grid[norm(grid) <= radius], h**d


def dot_rows(u: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->i", u, u)


def graph_gradients(patch: GraphPatch, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Heights and closed-form gradients of the graph function."""
    heights, achieving = graph_function(patch, x)
    gradients = np.zeros_like(x)
    active = achieving >= 0
    if np.any(active):
        k = np.searchsorted(patch.members, achieving[active])
        offset = x[active] - patch.local_centers[k]
        lift = np.sqrt(np.maximum(patch.radii[k] ** 2 - dot_rows(offset), 1e-300))
        gradients[active] = -offset / lift[:, None]
    return heights, gradients


def patch_area(
    patch: GraphPatch,
    ball: Ball | None = None,
    resolution: int | None = None,
    reach: float = 10.0,
) -> float:
    """
    Surface measure of the graph over L_Q within 10 B_Q by midpoint quadrature.

    With a ball only the part of the graph inside it is counted; the integrand is
    zeroed outside instead of clipping the patch.
    """
    resolution = resolution or Configuration.get().settings.measure.quadrature_resolution
    cells, volume = _disk_cells(patch.d, reach * patch.r_q, resolution)
    heights, gradients = graph_gradients(patch, cells)
    integrand = np.sqrt(1 + dot_rows(gradients))
    if ball is not None:
        world = patch.plane.from_local(np.column_stack([cells, heights]))
        integrand = np.where(ball.contains(world), integrand, 0.0)
    return float(integrand.sum() * volume)


def flat_area(patch: GraphPatch, reach: float = 10.0) -> float:
    return unit_ball_volume(patch.d) * (reach * patch.r_q) ** patch.d


def _segment_length_in_ball(s: np.ndarray, ball: Ball) -> np.ndarray:
    a = s[:, 0]
    u = s[:, 1] - a
    length = norm(u)
    f = a - ball.center
    qa = dot_rows(u)
    qb = 2 * np.einsum("ij,ij->i", f, u)
    qc = dot_rows(f) - ball.radius**2
    disc = qb * qb - 4 * qa * qc
    root = np.sqrt(np.maximum(disc, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        t0 = np.clip((-qb - root) / (2 * qa), 0.0, 1.0)
        t1 = np.clip((-qb + root) / (2 * qa), 0.0, 1.0)
    inside = np.where(disc > 0, np.maximum(t1 - t0, 0.0), 0.0)
    return np.nan_to_num(inside) * length


def ahlfors_ratio(mesh: BoundaryMesh, xi, r: float, level: int = 32) -> float:
    """Surface measure of the mesh inside B(xi, r) divided by r^d."""
    ball = Ball(np.asarray(xi, dtype=float), r)
    ids = mesh.faces_near(ball)
    d = mesh.dimension - 1
    if ids.size == 0:
        return 0.0
    s = mesh.simplices[ids]
    if mesh.dimension == 2:
        measure = float(_segment_length_in_ball(s, ball).sum())
    else:
        i, j = np.meshgrid(np.arange(level), np.arange(level), indexing="ij")
        keep = i + j < level
        up = np.column_stack([(i[keep] + 1 / 3) / level, (j[keep] + 1 / 3) / level])
        down_mask = i + j < level - 1
        down = np.column_stack([(i[down_mask] + 2 / 3) / level, (j[down_mask] + 2 / 3) / level])
        bary = np.vstack([up, down])
        bary = np.column_stack([1 - bary.sum(axis=1), bary])
        points = np.einsum("kj,fjd->fkd", bary, s)
        fraction = ball.contains(points.reshape(-1, 3)).reshape(points.shape[:2]).mean(axis=1)
        measure = float(np.sum(fraction * mesh.measures[ids]))
    return measure / r**d


@dataclass(frozen=True, eq=False)
class LowerBoundCert:
    c_mu: float
    alpha: float
    r0: float
    verified_on: np.ndarray
    worst_ratio: float

    @property
    def passed(self) -> bool:
        return self.worst_ratio >= 1.0

    def to_dict(self) -> dict:
        return {
            "c_mu": self.c_mu,
            "alpha": self.alpha,
            "r0": self.r0,
            "points": int(self.verified_on.shape[0]),
            "worst_ratio": self.worst_ratio,
        }


def verify_lower_bound(
    mu: MeasureProvider,
    E,
    alpha: float,
    c_mu: float,
    r0: float,
    radii,
    d: int,
    confidence_z: float | None = None,
) -> LowerBoundCert:
    """Smallest lower-confidence ratio mu(B(xi, r)) / (c_mu r^(d - alpha)) over E and radii."""
    z = Configuration.get().settings.harmonic.confidence_z if confidence_z is None else confidence_z
    points = as_points(E)
    worst = math.inf
    for xi in points:
        for r in radii:
            if r >= r0:
                continue
            value, stderr = mu.measure(xi, float(r))
            worst = min(worst, (value - z * stderr) / (c_mu * r ** (d - alpha)))
    return LowerBoundCert(c_mu, alpha, r0, points, float(worst))


@dataclass(frozen=True, eq=False)
class Theorem31Report:
    xi: np.ndarray
    r: float
    lhs: float
    rhs: float
    C: float
    case: int
    per_n: list[dict]
    level_spread: int
    side_ratio: float = 1.0
    comparability_bound: float | None = None

    @property
    def comparable(self) -> bool | None:
        """Case 1 only: whether the sides of the meeting cubes stay within the bound."""
        if self.comparability_bound is None:
            return None
        return self.side_ratio <= self.comparability_bound * (1 + 1e-9)

    @property
    def ratio(self) -> float:
        if self.rhs > 0:
            return self.lhs / self.rhs
        return 0.0 if self.lhs == 0 else math.inf

    @property
    def overlap(self) -> int:
        return max((row["overlap"] for row in self.per_n), default=0)

    def to_dict(self) -> dict:
        return {
            "xi": self.xi.tolist(),
            "r": self.r,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "ratio": self.ratio,
            "C": self.C,
            "per_n": self.per_n,
            "case": self.case,
            "level_spread": self.level_spread,
            "side_ratio": self.side_ratio,
            "comparability_bound": self.comparability_bound,
            "comparable": self.comparable,
        }


def _nearest_to_cubes(E: np.ndarray, tree: cKDTree, lower: np.ndarray, upper: np.ndarray):
    """Index of a point of E realising dist(Q, E) for every box."""
    centers = 0.5 * (lower + upper)
    half_diag = 0.5 * norm(upper - lower)
    reach, _ = tree.query(centers)
    result = np.empty(centers.shape[0], dtype=np.int64)
    for i in range(centers.shape[0]):
        hits = tree.query_ball_point(centers[i], reach[i] + half_diag[i])
        hits = np.asarray(hits, dtype=np.int64)
        excess = np.maximum(np.maximum(lower[i] - E[hits], E[hits] - upper[i]), 0.0)
        result[i] = hits[np.argmin(norm(excess))]
    return result


class Theorem31Verifier:
    """Counting bound for the surface measure of the enlarged boundary in small balls."""

    def __init__(
        self,
        enlarged: EnlargedDomain,
        mu: MeasureProvider,
        alpha: float | None = None,
        c_mu: float | None = None,
        resolution: int = 16,
    ):
        settings = Configuration.get().settings.measure
        self.enlarged = enlarged
        self.mu = mu
        self.alpha = settings.alpha if alpha is None else alpha
        self.c_mu = settings.c_mu if c_mu is None else c_mu
        self.resolution = resolution
        self._patches: dict[int, GraphPatch] = {}
        fam = enlarged.balls
        self._tree = cKDTree(enlarged.E)
        lower = np.asarray([q.lower for q in fam.cubes])
        upper = np.asarray([q.upper for q in fam.cubes])
        self._xi_q = enlarged.E[_nearest_to_cubes(enlarged.E, self._tree, lower, upper)]

    def patch(self, q: int) -> GraphPatch:
        if q not in self._patches:
            r_q = float(self.enlarged.balls.radii[q])
            self._patches[q] = build_patch(self.enlarged, q, spacing=30 * r_q / 8)
        return self._patches[q]

    def cubes_meeting(self, xi: np.ndarray, r: float) -> np.ndarray:
        """Cubes whose patch 10 B_Q reaches B(xi, r)."""
        fam = self.enlarged.balls
        gap = norm(fam.centers - xi)
        return np.flatnonzero(gap < r + 10 * fam.radii)

    def _comparability_bound(self, distance: float, r: float) -> float:
        """
        Largest side ratio allowed when dist(xi, E) >= 2r.

        A cube reaching B(xi, r) has |z_Q - xi| < r + 10 r_Q with r_Q = eps dist(z_Q, E),
        so with D = dist(xi, E) the distance dist(z_Q, E) lies between (D - r) / (1 + 10 eps)
        and (D + r) / (1 - 10 eps). Sides follow the radii up to the measured spread
        c_high / c_low.
        """
        fam = self.enlarged.balls
        eps = fam.epsilon
        reach = (distance + r) * (1 + 10 * eps) / ((distance - r) * (1 - 10 * eps))
        return fam.c_high / fam.c_low * reach

    def verify(self, xi, r: float) -> Theorem31Report:
        xi = np.asarray(xi, dtype=float)
        fam = self.enlarged.balls
        ball = Ball(xi, r)
        candidates = self.cubes_meeting(xi, r)
        areas = {int(q): patch_area(self.patch(int(q)), ball, self.resolution) for q in candidates}
        members = np.asarray([q for q in candidates if areas[int(q)] > 0], dtype=np.int64)

        per_n = []
        lhs = 0.0
        C = 1.0
        if members.size:
            sides = fam.sides[members]
            levels = fam.levels[members]
            xi_q = self._xi_q[members]
            C = max(1.0, float(np.max((norm(xi_q - xi) + sides) / r)))
            for n in np.unique(levels):
                chosen = members[levels == n]
                side = float(fam.sides[chosen[0]])
                counts = np.zeros(self.enlarged.E.shape[0], dtype=np.int64)
                for center in self._xi_q[chosen]:
                    counts[self._tree.query_ball_point(center, side * (1 - 1e-12))] += 1
                lhs_n = float(sum(areas[int(q)] for q in chosen))
                lhs += lhs_n
                per_n.append(
                    {
                        "n": int(n),
                        "count": int(chosen.size),
                        "overlap": int(counts.max()),
                        "lhs_n": lhs_n,
                    },
                )
        mass, _ = self.mu.measure(xi, C * r)
        rhs = r**self.alpha * mass
        distance, _ = self._tree.query(xi)
        case = 1 if distance >= 2 * r else 2
        spread = int(np.ptp(fam.levels[members])) if members.size else 0
        side_ratio = 1.0
        if members.size:
            side_ratio = float(fam.sides[members].max() / fam.sides[members].min())
        bound = self._comparability_bound(float(distance), r) if case == 1 else None
        report = Theorem31Report(
            xi, float(r), lhs, float(rhs), C, case, per_n, spread, side_ratio, bound
        )
        if report.comparable is False:
            logger.warning(
                "Sides of the cubes meeting B(%s, %g) spread by %.4g, above %.4g",
                xi,
                r,
                side_ratio,
                bound,
            )
        logger.info(
            "r=%g: lhs %.4g, rhs %.4g, ratio %.4g, C %.3g, overlap %d, case %d",
            r,
            lhs,
            rhs,
            report.ratio,
            C,
            report.overlap,
            case,
        )
        return report

    def sweep(self, xi, radii) -> list[Theorem31Report]:
        """Reports for decreasing radii; overlap counts must not keep growing."""
        reports = [self.verify(xi, float(r)) for r in sorted(radii, reverse=True)]
        overlaps = [report.overlap for report in reports]
        growing = len(overlaps) >= 3 and all(b > a for a, b in zip(overlaps, overlaps[1:]))
        if growing:
            raise UnboundedOverlapError(overlaps)
        return reports


def theorem31_verify(
    enlarged: EnlargedDomain,
    mu: MeasureProvider,
    xi,
    r,
    alpha: float | None = None,
    c_mu: float | None = None,
    r0: float | None = None,
    resolution: int = 16,
) -> list[Theorem31Report]:
    """
    Compare the surface measure of the enlarged boundary in B(xi, r) with r^alpha times
    the mass of B(xi, C r), after checking mu(B(zeta, s)) >= c_mu s^(d - alpha) on E.
    """
    verifier = Theorem31Verifier(enlarged, mu, alpha, c_mu, resolution)
    radii = np.atleast_1d(np.asarray(r, dtype=float))
    d = enlarged.rep.dimension - 1
    r0 = r0 or float(radii.max()) * 2
    cert = verify_lower_bound(mu, enlarged.E, verifier.alpha, verifier.c_mu, r0, radii, d)
    if not cert.passed:
        raise HypothesisViolationError(
            "mass lower bound",
            f"mu(B) / (c_mu r^(d - alpha)) reaches {cert.worst_ratio:.6g} < 1",
        )
    return verifier.sweep(xi, radii)


def candidate_dimension(points, scales=None) -> BoxCount:
    """Box-counting dimension of a candidate point set (no covering guarantee)."""
    pts = as_points(points)
    if scales is None:
        levels = Configuration.get().settings.measure.radius_levels
        scales = 2.0 ** -np.asarray(levels, dtype=float)
    return box_count(pts, scales)
