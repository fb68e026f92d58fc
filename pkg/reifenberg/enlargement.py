from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from dataclasses import field

import numpy as np
from scipy.spatial import cKDTree

from reifenberg.config import Configuration
from reifenberg.domains import DomainRep
from reifenberg.errors import CertificateFailure
from reifenberg.errors import FlatnessPreconditionError
from reifenberg.flatness import certify_domain
from reifenberg.flatness import measure_flatness
from reifenberg.geometry import Ball
from reifenberg.geometry import DyadicCube
from reifenberg.geometry import Hyperplane
from reifenberg.geometry import as_points
from reifenberg.geometry import fit_hyperplane
from reifenberg.geometry import frame_from_normal
from reifenberg.geometry import local_hausdorff
from reifenberg.geometry import norm
from reifenberg.utils import random_stream
from reifenberg.whitney import BallFamily
from reifenberg.whitney import DyadicBox
from reifenberg.whitney import boundary_family

logger = logging.getLogger(__name__)

NEIGHBOR_REACH = 20.0
CENTER_REACH = 30.0
PATCH_REACH = 10.0


def delta_cap(epsilon: float) -> float:
    factor = Configuration.get().settings.enlargement.delta_cap_factor
    return factor * epsilon**2


def sphere_points(center: np.ndarray, radius: float, resolution: int) -> np.ndarray:
    """About ``resolution`` points per great circle of the sphere."""
    D = center.shape[0]
    if D == 2:
        angles = 2 * math.pi * (np.arange(resolution) + 0.5) / resolution
        unit = np.column_stack([np.cos(angles), np.sin(angles)])
    else:
        count = max(int(math.ceil(resolution**2 / math.pi)), 8)
        k = np.arange(count) + 0.5
        z = 1 - 2 * k / count
        phi = math.pi * (1 + math.sqrt(5)) * k
        rho = np.sqrt(1 - z * z)
        unit = np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])
    return center + radius * unit


def sphere_intersections(
    c1: np.ndarray,
    r1: float,
    c2: np.ndarray,
    r2: float,
    spacing: float,
) -> np.ndarray:
    """
    Points of the intersection of two spheres: two points in the plane, a circle
    sampled about ``spacing`` apart in space. Empty when the spheres do not cross.
    """
    offset = c2 - c1
    gap = float(np.linalg.norm(offset))
    if not abs(r1 - r2) < gap < r1 + r2:
        return np.empty((0, c1.shape[0]))
    axis = offset / gap
    a = (gap * gap + r1 * r1 - r2 * r2) / (2 * gap)
    rho = math.sqrt(max(r1 * r1 - a * a, 0.0))
    middle = c1 + a * axis
    if c1.shape[0] == 2:
        across = np.array([-axis[1], axis[0]])
        return np.vstack([middle + rho * across, middle - rho * across])
    e1, e2 = frame_from_normal(axis)[:2]
    count = max(int(math.ceil(2 * math.pi * rho / spacing)), 8)
    t = 2 * math.pi * np.arange(count) / count
    return middle + rho * (np.outer(np.cos(t), e1) + np.outer(np.sin(t), e2))


def union_envelope(
    domain: DomainRep,
    family: BallFamily,
    spacing: float,
    region: Ball,
    resolution: int,
) -> np.ndarray:
    """
    Sample of the boundary of the domain joined with the balls, about ``spacing`` apart.

    Each distinct sphere is sampled with at least ``resolution`` points per great
    circle; pairwise sphere intersections are added so that every exposed arc keeps its
    end points however narrow it is. Points inside a ball or inside the domain are
    dropped, and the exposed part of the base boundary in ``region`` is appended.
    """
    D = family.dimension
    tolerance = 1e-9 * family.r_max
    balls = np.unique(np.column_stack([family.centers, family.radii]), axis=0)
    centers, radii = balls[:, :D], balls[:, D]

    chunks = [np.empty((0, D))]
    for center, radius in zip(centers, radii):
        count = max(resolution, int(math.ceil(2 * math.pi * radius / spacing)))
        chunks.append(sphere_points(center, float(radius), count))
    if len(radii) > 1:
        pairs = cKDTree(centers).query_pairs(2 * float(radii.max()), output_type="ndarray")
        for i, j in pairs:
            chunks.append(
                sphere_intersections(centers[i], radii[i], centers[j], radii[j], spacing)
            )
    spheres = np.vstack(chunks)
    spheres = spheres[(family.depth(spheres) <= tolerance) & ~domain.inside(spheres)]

    base_points = domain.sample_boundary(spacing, region)
    base_points = base_points[family.depth(base_points) <= 0]
    return np.vstack([spheres, base_points])


class EnlargedRep(DomainRep):
    """The base domain joined with the open balls of a family."""

    def __init__(
        self,
        base: DomainRep,
        family: BallFamily,
        cloud: np.ndarray,
        covering_radius: float = 0.0,
    ):
        super().__init__(base.dimension, base.r0 / 2)
        self.base = base
        self.family = family
        self.cloud = cloud
        self.tree = cKDTree(cloud)
        self._covering_radius = covering_radius

    @property
    def covering_radius(self) -> float:
        return self._covering_radius

    @property
    def diameter(self) -> float:
        if not self.base.bounded:
            return math.inf
        return self.base.diameter + 2 * self.family.r_max

    def inside(self, points) -> np.ndarray:
        pts = as_points(points, self.dimension)
        return self.base.inside(pts) | (self.family.depth(pts) > 0)

    def dist_lower(self, points) -> np.ndarray:
        pts = as_points(points, self.dimension)
        return np.maximum(self.base.dist_lower(pts), np.maximum(self.family.depth(pts), 0.0))

    def boundary_distance(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Distance to the boundary cloud; exact up to its covering radius."""
        d, i = self.tree.query(as_points(points, self.dimension))
        return d, self.cloud[i]

    def sample_boundary(self, spacing: float, ball: Ball | None = None) -> np.ndarray:
        if ball is None:
            return self.cloud
        hits = self.tree.query_ball_point(ball.center, ball.radius)
        return self.cloud[np.sort(np.asarray(hits, dtype=np.int64))]

    def default_pole(self) -> np.ndarray:
        return self.base.default_pole()


@dataclass(frozen=True, eq=False)
class EnlargedDomain:
    base: DomainRep
    balls: BallFamily
    rep: EnlargedRep
    E: np.ndarray
    epsilon: float
    delta: float | None
    covering_radius: float

    @property
    def boundary_cloud(self) -> np.ndarray:
        return self.rep.cloud

    def e_clearance(self) -> float:
        """Largest ball depth at E; negative when E stays on the boundary."""
        return float(np.max(self.balls.depth(self.E)))

    def sphere_residual(self, margin: float) -> float:
        """
        Largest distance from a cloud point at least ``margin`` away from E to the
        nearest sphere of the family.
        """
        cloud = self.rep.cloud
        far, _ = cKDTree(self.E).query(cloud)
        pts = cloud[far >= margin]
        if pts.shape[0] == 0 or len(self.balls) == 0:
            return 0.0
        k = min(8, len(self.balls))
        dd, ii = self.balls.tree.query(pts, k=k)
        dd = dd.reshape(pts.shape[0], k)
        ii = ii.reshape(pts.shape[0], k)
        return float(np.max(np.min(np.abs(dd - self.balls.radii[ii]), axis=1)))

    def ball_rows(self) -> list[list[float]]:
        return self.balls.to_rows()

    def e_rows(self) -> list[list[float]]:
        return self.E.tolist()

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "delta": self.delta,
            "balls": len(self.balls),
            "cloud": int(self.rep.cloud.shape[0]),
            "covering_radius": self.covering_radius,
            "c_low": self.balls.c_low,
            "c_high": self.balls.c_high,
        }


def _family_region(family: BallFamily, E: np.ndarray) -> Ball:
    center = E.mean(axis=0)
    reach = norm(family.centers - center) + family.radii
    return Ball(center, float(max(reach.max(), norm(E - center).max())) * (1 + 1e-9))


def enlarge(
    domain: DomainRep,
    E,
    epsilon: float | None = None,
    delta: float | None = None,
    strict: bool | None = None,
    bbox: DyadicCube | DyadicBox | None = None,
    max_level: int | None = None,
    spacing: float | None = None,
) -> EnlargedDomain:
    """
    Join the domain with the balls B(z_Q, r_Q) of its boundary family.

    With ``strict`` the base flatness (measured when ``delta`` is not supplied) must not
    exceed delta_cap(epsilon); otherwise the measured value is only logged.
    """
    settings = Configuration.get().settings
    epsilon = epsilon or settings.enlargement.epsilon
    strict = settings.enlargement.strict if strict is None else strict
    e_points = as_points(E, domain.dimension)

    cap = delta_cap(epsilon)
    if delta is None and strict:
        delta = certify_domain(domain).delta_sup
    if delta is not None:
        if delta > cap:
            if strict:
                raise FlatnessPreconditionError(delta, cap)
            logger.warning("Base flatness %.6g exceeds delta_cap %.6g; continuing", delta, cap)
        else:
            logger.info("Base flatness %.6g within delta_cap %.6g", delta, cap)

    family = boundary_family(domain, e_points, epsilon, bbox=bbox, max_level=max_level)
    region = _family_region(family, e_points)
    spacing = spacing or settings.geometry.boundary_sample_spacing * min(region.radius, 1.0)
    resolution = settings.enlargement.sphere_resolution

    envelope = union_envelope(domain, family, spacing, region, resolution)
    cloud = np.vstack([envelope, e_points])

    # gaps measured on a sample at half the spacing; the envelope lies within spacing / 2 of it
    check = union_envelope(domain, family, spacing / 2, region, 2 * resolution)
    covering = spacing / 2
    if check.shape[0]:
        gaps, _ = cKDTree(cloud).query(check)
        covering += float(gaps.max())
    rep = EnlargedRep(domain, family, cloud, covering)
    enlarged = EnlargedDomain(domain, family, rep, e_points, epsilon, delta, covering)
    logger.info(
        "Enlarged domain: %d balls, cloud of %d points, measured covering radius %.4g "
        "(spacing %.4g)",
        len(family),
        cloud.shape[0],
        covering,
        spacing,
    )
    clearance = enlarged.e_clearance()
    if clearance >= 0:
        logger.warning("A ball reaches E (depth %.4g)", clearance)
    return enlarged


@dataclass(frozen=True, eq=False)
class NeighborFamily:
    q: int
    members: np.ndarray
    center_ratio: float
    c1_measured: float
    offset_ratio: float | None = None

    def __len__(self) -> int:
        return int(self.members.size)


def neighbor_family(
    fam: BallFamily,
    q: int,
    plane: Hyperplane | None = None,
    delta: float | None = None,
    slack: float = 0.0,
) -> NeighborFamily:
    """
    Balls B_P meeting 20 B_Q, certified to have centers within 30 r_Q of z_Q, radii
    obeying |r_P - r_Q| <= eps |z_P - z_Q| and, when a plane is given, centers within
    30 delta r_Q of it. The spread max |r_P - r_Q| / (eps r_Q) is reported as c1.
    """
    c1 = Configuration.get().settings.enlargement.c1
    z_q = fam.centers[q]
    r_q = float(fam.radii[q])
    members = fam.meeting(z_q, NEIGHBOR_REACH * r_q)
    tolerance = 1e-12 * max(r_q, 1e-300)

    gaps = norm(fam.centers[members] - z_q)
    spread = np.abs(fam.radii[members] - r_q)
    center_ratio = float(gaps.max() / r_q)
    c1_measured = float(spread.max() / (fam.epsilon * r_q))
    far = np.flatnonzero(gaps > CENTER_REACH * r_q + tolerance)
    if far.size:
        p = int(members[far[0]])
        raise CertificateFailure(
            "center-distance",
            q,
            p,
            f"|z_P - z_Q| = {gaps[far[0]]:.6g} > 30 r_Q = {CENTER_REACH * r_q:.6g}",
        )
    wide = np.flatnonzero(spread > fam.epsilon * gaps + tolerance)
    if wide.size:
        p = int(members[wide[0]])
        raise CertificateFailure(
            "radius-comparability",
            q,
            p,
            f"|r_P - r_Q| = {spread[wide[0]]:.6g} exceeds "
            f"eps |z_P - z_Q| = {fam.epsilon * gaps[wide[0]]:.6g}",
        )
    if c1_measured > c1:
        logger.warning("Radius spread %.4g eps r_Q at %d exceeds c1 = %g", c1_measured, q, c1)

    offset_ratio = None
    if plane is not None and delta is not None:
        offsets = plane.distance(fam.centers[members])
        offset_ratio = float(offsets.max() / (CENTER_REACH * r_q))
        limit = CENTER_REACH * delta * r_q + slack + tolerance
        off = np.flatnonzero(offsets > limit)
        if off.size:
            p = int(members[off[0]])
            raise CertificateFailure(
                "plane-offset",
                q,
                p,
                f"dist(z_P, L_Q) = {offsets[off[0]]:.6g} > 30 delta r_Q = {limit:.6g}",
            )

    logger.debug(
        "Neighbors of %d: %d balls, max |z_P - z_Q|/r_Q = %.4g, c1 measured %.4g",
        q,
        members.size,
        center_ratio,
        c1_measured,
    )
    return NeighborFamily(q, members, center_ratio, c1_measured, offset_ratio)


@dataclass(frozen=True, eq=False)
class GraphPatch:
    """
    Local graph description of the enlarged boundary over the plane L_Q.

    Coordinates are taken in the frame of ``plane`` whose normal points out of the
    domain: the first d entries are in-plane, the last is the height.
    """

    q: int
    cube: DyadicCube
    plane: Hyperplane
    neighbors: NeighborFamily
    local_centers: np.ndarray
    heights: np.ndarray
    radii: np.ndarray
    r_q: float
    floor: float
    delta: float

    @property
    def members(self) -> np.ndarray:
        return self.neighbors.members

    @property
    def d(self) -> int:
        return self.local_centers.shape[1]


def build_patch(enlarged: EnlargedDomain, q: int, spacing: float | None = None) -> GraphPatch:
    settings = Configuration.get().settings
    fam = enlarged.balls
    z_q = fam.centers[q]
    r_q = float(fam.radii[q])
    scale = CENTER_REACH * r_q
    spacing = spacing or settings.geometry.boundary_sample_spacing * scale
    report = measure_flatness(enlarged.base, z_q, scale, spacing=spacing, strict=False)
    plane = Hyperplane(z_q, report.normal)
    neighbors = neighbor_family(fam, q, plane, report.delta, slack=spacing)
    local = plane.to_local(fam.centers[neighbors.members])
    floor = (1 - settings.enlargement.c2 * fam.epsilon) * r_q
    return GraphPatch(
        q,
        fam.cubes[q],
        plane,
        neighbors,
        local[:, :-1],
        local[:, -1],
        fam.radii[neighbors.members],
        r_q,
        floor,
        report.delta,
    )


def graph_function(patch: GraphPatch, x_tilde):
    """
    Height of the enlarged boundary above in-plane points of L_Q.

    f(x) is the largest upper hemisphere height sqrt(r_P^2 - |x - z_P|^2) + z_P,d over the
    neighbor balls whose shadow contains x, never below the floor (1 - c2 eps) r_Q.
    Returns heights and the achieving ball index (-1 where the floor wins); a single
    point gives a scalar height and an index or None.
    """
    single = np.asarray(x_tilde).ndim == 1
    x = as_points(x_tilde, patch.d)
    offsets = norm(x[:, None, :] - patch.local_centers[None, :, :])
    covered = offsets <= patch.radii[None, :]
    lift = np.sqrt(np.maximum(patch.radii[None, :] ** 2 - offsets**2, 0.0))
    caps = lift + patch.heights[None, :]
    caps = np.where(covered, np.maximum(caps, patch.floor), patch.floor)
    best = np.argmax(caps, axis=1)
    heights = caps[np.arange(x.shape[0]), best]
    above = covered[np.arange(x.shape[0]), best] & (heights > patch.floor)
    achieving = np.where(above, patch.members[best], -1)
    if single:
        return float(heights[0]), (int(achieving[0]) if achieving[0] >= 0 else None)
    return heights, achieving


def sphere_slope(patch: GraphPatch, x_tilde, p: int) -> float:
    """Closed-form gradient norm of the hemisphere of ball ``p`` at an in-plane point."""
    k = int(np.flatnonzero(patch.members == p)[0])
    s = float(np.linalg.norm(np.asarray(x_tilde, dtype=float) - patch.local_centers[k]))
    r = float(patch.radii[k])
    return s / math.sqrt(r * r - s * s) if s < r else math.inf


def graph_gradient(patch: GraphPatch, x_tilde, h: float | None = None) -> float:
    """Central finite-difference gradient norm of the graph function."""
    x = np.asarray(x_tilde, dtype=float)
    h = h or 1e-6 * patch.r_q
    grad = np.empty(patch.d)
    for i in range(patch.d):
        step = np.zeros(patch.d)
        step[i] = h
        up, _ = graph_function(patch, x + step)
        down, _ = graph_function(patch, x - step)
        grad[i] = (up - down) / (2 * h)
    return float(np.linalg.norm(grad))


@dataclass(frozen=True, eq=False)
class PatchReport:
    q: int
    c2_measured: float
    lip_measured: float
    lip_ratio: float
    c3_measured: float
    band_violations: int
    side_violations: int
    floor_columns: int
    graph_gap: float
    graph_violations: int
    witness: tuple[str, list[float]] | None = field(default=None)

    @property
    def passed(self) -> bool:
        return self.witness is None

    def to_dict(self) -> dict:
        return {
            "Q": self.q,
            "c2_measured": self.c2_measured,
            "lip_measured": self.lip_measured,
            "lip_ratio": self.lip_ratio,
            "c3_measured": self.c3_measured,
            "band_violations": self.band_violations,
            "side_violations": self.side_violations,
            "floor_columns": self.floor_columns,
            "graph_gap": self.graph_gap,
            "graph_violations": self.graph_violations,
            "witness": None if self.witness is None else list(self.witness),
        }


def _disk_samples(rng: np.random.Generator, count: int, d: int, radius: float) -> np.ndarray:
    directions = rng.standard_normal((count, d))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    lengths = radius * rng.random(count) ** (1.0 / d)
    return directions * lengths[:, None]


def verify_lemma23(
    enlarged: EnlargedDomain,
    patch: GraphPatch,
    n_samples: int = 256,
    seed: int | None = None,
) -> PatchReport:
    """
    Check the graph description of the enlarged boundary in 10 B_Q.

    Points below the graph (where a sphere is active, or well under the floor) must be
    inside, points above it outside; heights must stay in the band around r_Q; the
    sampled pairwise slope is reported against sqrt(eps); graph points must lie on the
    boundary cloud. The first violated check is kept with its witness point.
    """
    settings = Configuration.get().settings
    seed = settings.seed if seed is None else seed
    rng = random_stream(seed, patch.q)
    eps = enlarged.epsilon
    r_q = patch.r_q
    d = patch.d
    tol = 1e-6 * r_q
    witness: tuple[str, list[float]] | None = None

    x = _disk_samples(rng, n_samples, d, PATCH_REACH * r_q)
    f, achieving = graph_function(patch, x)
    active = achieving >= 0
    floor_columns = int(np.sum(~active))

    # side test
    heights = (2 * rng.random(n_samples) - 1) * PATCH_REACH * r_q
    local = np.column_stack([x, heights])
    world = patch.plane.from_local(local)
    in_reach = norm(world - enlarged.balls.centers[patch.q]) < PATCH_REACH * r_q
    inside = enlarged.rep.inside(world)
    below = in_reach & (heights < f - tol) & (active | (heights < patch.floor - tol))
    above = in_reach & active & (heights > f + tol)
    wrong = (below & ~inside) | (above & inside)
    side_violations = int(np.sum(wrong))
    if side_violations:
        witness = ("side", world[np.flatnonzero(wrong)[0]].tolist())

    # height band
    c2 = settings.enlargement.c2
    deviation = np.abs(f - r_q) / (eps * r_q)
    c2_measured = float(deviation.max())
    band = deviation > c2 * (1 + 1e-9)
    band_violations = int(np.sum(band))
    if band_violations and witness is None:
        column = np.append(x[np.flatnonzero(band)[0]], 0.0)
        witness = ("band", patch.plane.from_local(column)[0].tolist())

    # Lipschitz estimate over all sampled pairs
    gaps = norm(x[:, None, :] - x[None, :, :])
    rises = np.abs(f[:, None] - f[None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        slopes = np.where(gaps > 0, rises / gaps, 0.0)
    lip_measured = float(slopes.max())
    lip_ratio = lip_measured / math.sqrt(eps)

    c3_measured = 0.0
    if np.any(active):
        k = np.searchsorted(patch.members, achieving[active])
        offsets = norm(x[active] - patch.local_centers[k])
        c3_measured = float(np.max(offsets**2 / (2 * eps * patch.radii[k] ** 2)))

    # graph points on the cloud
    graph_world = patch.plane.from_local(np.column_stack([x, f])[active])
    graph_gap = 0.0
    graph_violations = 0
    if graph_world.shape[0]:
        gap, _ = enlarged.rep.boundary_distance(graph_world)
        graph_gap = float(gap.max())
        off_cloud = gap > enlarged.covering_radius * (1 + 1e-9) + tol
        graph_violations = int(np.sum(off_cloud))
        if graph_violations and witness is None:
            witness = ("graph", graph_world[np.flatnonzero(off_cloud)[0]].tolist())

    report = PatchReport(
        patch.q,
        c2_measured,
        lip_measured,
        lip_ratio,
        c3_measured,
        band_violations,
        side_violations,
        floor_columns,
        graph_gap,
        graph_violations,
        witness,
    )
    logger.info(
        "Patch %d: c2 %.4g, Lipschitz %.4g (%.4g sqrt(eps)), %d floor columns, witness %s",
        patch.q,
        c2_measured,
        lip_measured,
        lip_ratio,
        floor_columns,
        witness,
    )
    return report


@dataclass(frozen=True, eq=False)
class ScaleCase:
    kind: str
    q: int | None
    plane: Hyperplane
    deviation: float

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "Q": self.q,
            "normal": self.plane.normal.tolist(),
            "deviation": self.deviation,
        }


def classify_scale(enlarged: EnlargedDomain, x, r: float) -> ScaleCase:
    """
    Coarse when every ball meeting B(x, 2r) is small against r (r >= eps^-1/2 r_Q); the
    base plane at (x, r) then approximates the enlarged boundary. Otherwise the plane of
    the largest such ball, lifted by r_Q along its normal, is used.
    """
    x = as_points(x, enlarged.rep.dimension)[0]
    fam = enlarged.balls
    ball = Ball(x, r)
    cloud = enlarged.rep.sample_boundary(0.0, ball)
    meeting = fam.meeting(x, 2 * r)
    large = meeting[r < fam.radii[meeting] / math.sqrt(enlarged.epsilon)]

    if large.size == 0:
        base_points = enlarged.base.sample_boundary(
            Configuration.get().settings.geometry.boundary_sample_spacing * r,
            ball,
        )
        plane = fit_hyperplane(np.vstack([x, base_points]), anchor=x).plane
        kind, q = "coarse", None
    else:
        q = int(large[np.argmax(fam.radii[large])])
        patch = build_patch(enlarged, q)
        plane = patch.plane.shifted(patch.r_q)
        kind = "fine"

    cloud = cloud[ball.contains(cloud)]
    on_plane = plane.sample_in_ball(ball, r / 64)
    on_plane = on_plane[ball.contains(on_plane)]

    def to_cloud(points: np.ndarray) -> np.ndarray:
        return enlarged.rep.boundary_distance(points)[0]

    if cloud.shape[0] and on_plane.shape[0]:
        deviation = local_hausdorff(
            cloud, on_plane, ball, dist_to_a=to_cloud, dist_to_b=plane.distance
        )
    else:
        # a side missing the ball contributes nothing; the other is measured against the whole set
        sides = [0.0]
        if cloud.shape[0]:
            sides.append(float(np.max(plane.distance(cloud))))
        if on_plane.shape[0]:
            sides.append(float(np.max(to_cloud(on_plane))))
        deviation = max(sides)
    deviation /= r
    logger.debug("Scale (x=%s, r=%g) is %s, deviation %.4g", x, r, kind, deviation)
    return ScaleCase(kind, q, plane, float(deviation))
