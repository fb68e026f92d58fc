from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree

from reifenberg.config import Configuration
from reifenberg.domains import DomainRep
from reifenberg.errors import BudgetError
from reifenberg.errors import DepthLimitError
from reifenberg.errors import EmptyFamilyError
from reifenberg.geometry import Ball
from reifenberg.geometry import DyadicCube
from reifenberg.geometry import as_points
from reifenberg.geometry import norm
from reifenberg.utils import random_stream

logger = logging.getLogger(__name__)

Restriction = Callable[[np.ndarray, float], np.ndarray]


class PointSetComplement(DomainRep):
    """Complement of a finite point sample E."""

    def __init__(self, points):
        pts = as_points(points)
        super().__init__(pts.shape[1])
        self.points = pts
        self.tree = cKDTree(pts)

    def inside(self, points) -> np.ndarray:
        d, _ = self.tree.query(as_points(points, self.dimension))
        return d > 0

    def boundary_distance(self, points) -> tuple[np.ndarray, np.ndarray]:
        d, i = self.tree.query(as_points(points, self.dimension))
        return d, self.points[i]

    def dist_lower(self, points) -> np.ndarray:
        d, _ = self.tree.query(as_points(points, self.dimension))
        return d

    def sample_boundary(self, spacing: float, ball: Ball | None = None) -> np.ndarray:
        return self.points if ball is None else self.points[ball.contains(self.points)]

    def default_pole(self) -> np.ndarray:
        return self.points.mean(axis=0) + 1.0

    def box_clear(self, lower: np.ndarray, upper: np.ndarray) -> bool:
        """Exact test that the closed box contains no point of the sample."""
        center = 0.5 * (lower + upper)
        radius = 0.5 * float(np.linalg.norm(upper - lower))
        hits = self.tree.query_ball_point(center, radius * (1 + 1e-12))
        if not hits:
            return True
        pts = self.points[np.asarray(hits)]
        return not np.any(np.all((pts >= lower) & (pts <= upper), axis=1))


@dataclass(frozen=True)
class DyadicBox:
    """Block of same-level dyadic cubes with corners lower <= k < upper on every axis."""

    level: int
    lower: tuple[int, ...]
    upper: tuple[int, ...]

    @classmethod
    def of(cls, region: DyadicCube | DyadicBox) -> DyadicBox:
        if isinstance(region, DyadicBox):
            return region
        return cls(region.level, region.corner, tuple(k + 1 for k in region.corner))

    @property
    def dimension(self) -> int:
        return len(self.lower)

    @property
    def side(self) -> float:
        return 2.0**-self.level

    @property
    def low(self) -> np.ndarray:
        return np.asarray(self.lower, dtype=float) * self.side

    @property
    def high(self) -> np.ndarray:
        return np.asarray(self.upper, dtype=float) * self.side

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.low + self.high)

    @property
    def extent(self) -> float:
        return float(np.max(self.high - self.low))

    @property
    def diam(self) -> float:
        return float(np.linalg.norm(self.high - self.low))

    def corners(self) -> np.ndarray:
        axes = [np.arange(a, b, dtype=np.int64) for a, b in zip(self.lower, self.upper)]
        grid = np.meshgrid(*axes, indexing="ij")
        return np.stack(grid, axis=-1).reshape(-1, self.dimension)

    def contains(self, points) -> np.ndarray:
        pts = as_points(points)
        return np.all((pts >= self.low) & (pts < self.high), axis=-1)


@dataclass(frozen=True)
class WhitneyConfig:
    K: float
    r0: float
    bbox: DyadicCube | DyadicBox
    max_level: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "bbox", DyadicBox.of(self.bbox))
        if self.K < 4:
            raise ValueError(f"K must be at least 4, got {self.K}")
        if not self.r0 > 0:
            raise ValueError(f"r0 must be positive or infinite, got {self.r0}")

    @property
    def deepest(self) -> int:
        if self.max_level is not None:
            return self.max_level
        return Configuration.get().settings.whitney.max_level


@dataclass(frozen=True, eq=False)
class WhitneyDecomposition:
    cubes: list[DyadicCube]
    config: WhitneyConfig
    oracle: DomainRep
    truncated: int = 0

    def __len__(self) -> int:
        return len(self.cubes)

    @cached_property
    def sides(self) -> np.ndarray:
        return np.asarray([q.side for q in self.cubes])

    @cached_property
    def centers(self) -> np.ndarray:
        return np.asarray([q.center for q in self.cubes]).reshape(-1, self.config.bbox.dimension)

    @cached_property
    def _by_level(self) -> dict[int, dict[tuple[int, ...], int]]:
        table: dict[int, dict[tuple[int, ...], int]] = {}
        for i, q in enumerate(self.cubes):
            table.setdefault(q.level, {})[q.corner] = i
        return table

    def locate(self, points) -> np.ndarray:
        """Index of the cube containing each point, -1 when none does."""
        pts = as_points(points)
        result = np.full(pts.shape[0], -1, dtype=np.int64)
        for level, table in self._by_level.items():
            keys = np.floor(pts * 2.0**level).astype(np.int64)
            for row in np.flatnonzero(result < 0):
                hit = table.get(tuple(int(k) for k in keys[row]))
                if hit is not None:
                    result[row] = hit
        return result

    def to_lines(self) -> list[str]:
        return [" ".join(str(v) for v in (q.level, *q.corner)) for q in self.cubes]


def _children(corners: np.ndarray) -> np.ndarray:
    dimension = corners.shape[1]
    offsets = np.array(
        [[(bits >> i) & 1 for i in range(dimension)] for bits in range(2**dimension)],
        dtype=np.int64,
    )
    return (2 * corners[:, None, :] + offsets[None, :, :]).reshape(-1, dimension)


def _cells_clear(oracle: DomainRep, lower: np.ndarray, upper: np.ndarray, depth: int) -> bool:
    """Certify a closed box inside the open set by recursive subdivision."""
    if hasattr(oracle, "box_clear"):
        return oracle.box_clear(lower, upper)
    lows = lower[None, :]
    side = upper - lower
    for _ in range(depth + 1):
        centers = lows + 0.5 * side
        half_diag = 0.5 * float(np.linalg.norm(side))
        inradius = 0.5 * float(side.min())
        d = oracle.dist_lower(centers)
        if np.any(d <= inradius):
            return False
        pending = lows[d <= half_diag]
        if pending.shape[0] == 0:
            return True
        side = 0.5 * side
        offsets = np.array(
            [[(bits >> i) & 1 for i in range(side.shape[0])] for bits in range(2 ** side.shape[0])],
            dtype=float,
        )
        lows = (pending[:, None, :] + offsets[None, :, :] * side).reshape(-1, side.shape[0])
    return False


def _admissible(oracle: DomainRep, centers: np.ndarray, side: float, K: float, depth: int):
    dimension = centers.shape[1]
    diam = side * math.sqrt(dimension)
    d = oracle.dist_lower(centers)
    certified = d > 0.5 * K * diam
    rejected = d <= 0.5 * K * side
    result = certified.copy()
    half = 0.5 * K * side
    for row in np.flatnonzero(~certified & ~rejected):
        result[row] = _cells_clear(oracle, centers[row] - half, centers[row] + half, depth)
    return result, d


def enumerate_whitney(
    oracle: DomainRep,
    cfg: WhitneyConfig,
    restrict: Restriction | None = None,
) -> WhitneyDecomposition:
    settings = Configuration.get().settings.whitney
    dimension = cfg.bbox.dimension
    frontier = cfg.bbox.corners()
    level = cfg.bbox.level
    emitted: list[DyadicCube] = []
    sqrt_d = math.sqrt(dimension)

    while frontier.shape[0] and level <= cfg.deepest:
        side = 2.0**-level
        centers = (frontier + 0.5) * side
        if restrict is not None:
            keep = restrict(centers, side)
            frontier = frontier[keep]
            centers = centers[keep]
            if frontier.shape[0] == 0:
                break

        if cfg.K * side * sqrt_d <= cfg.r0:
            admissible, d = _admissible(oracle, centers, side, cfg.K, settings.certify_depth)
        else:
            admissible = np.zeros(frontier.shape[0], dtype=bool)
            d = oracle.dist_lower(centers)

        for corner in frontier[admissible]:
            emitted.append(DyadicCube(level, tuple(int(k) for k in corner)))

        rest = ~admissible
        outside = rest & (d <= 0)
        if np.any(outside):
            far, _ = oracle.boundary_distance(centers[outside])
            drop = np.zeros(frontier.shape[0], dtype=bool)
            drop[np.flatnonzero(outside)[far > 0.5 * side * sqrt_d]] = True
            rest &= ~drop

        frontier = _children(frontier[rest])
        level += 1
        if len(emitted) + frontier.shape[0] > settings.max_cubes:
            raise BudgetError("Whitney cube", len(emitted) + frontier.shape[0], settings.max_cubes)

    truncated = int(frontier.shape[0])
    if not emitted:
        raise DepthLimitError(cfg.deepest)
    if truncated:
        logger.info("Whitney enumeration truncated %d cubes at level %d", truncated, cfg.deepest)
    emitted.sort()
    return WhitneyDecomposition(emitted, cfg, oracle, truncated)


def decompose(open_set_oracle: DomainRep, cfg: WhitneyConfig) -> WhitneyDecomposition:
    """Maximal dyadic cubes Q in bbox with diam KQ <= r0 and KQ inside the open set."""
    return enumerate_whitney(open_set_oracle, cfg)


def is_admissible(oracle: DomainRep, cube: DyadicCube, K: float, r0: float) -> bool:
    if K * cube.diam > r0:
        return False
    depth = Configuration.get().settings.whitney.certify_depth
    result, _ = _admissible(oracle, cube.center[None, :], cube.side, K, depth)
    return bool(result[0])


@dataclass(frozen=True)
class WhitneyReport:
    size_ratio_min: float
    size_ratio_max: float
    neighbour_ratio_max: float
    touching_pairs: int
    overlap_max: int
    samples: int

    def to_dict(self) -> dict:
        return self.__dict__.copy()


def _dilated_boxes(W: WhitneyDecomposition, factor: float):
    half = 0.5 * factor * W.sides
    return W.centers - half[:, None], W.centers + half[:, None]


def verify_properties(W: WhitneyDecomposition, samples: int, seed: int = 0) -> WhitneyReport:
    """Measured constants of the three Whitney properties on sampled points and pairs."""
    if len(W) == 0:
        raise ValueError("Empty decomposition")
    rng = random_stream(seed, 0)
    K = W.config.K
    dimension = W.config.bbox.dimension
    owners = rng.integers(0, len(W), samples)
    points = W.centers[owners] + (rng.random((samples, dimension)) - 0.5) * W.sides[owners, None]

    distance = W.oracle.dist_lower(points)
    scale = np.minimum(W.config.r0, distance)
    ratios = W.sides[owners] * K / scale

    lows, highs = _dilated_boxes(W, K / 4)
    tree = cKDTree(W.centers)
    reach = 0.5 * (K / 4) * W.sides.max() * math.sqrt(dimension)
    neighbour_max = 1.0
    pairs = 0
    for i in range(len(W)):
        own = 0.5 * (K / 4) * W.sides[i] * math.sqrt(dimension)
        hits = tree.query_ball_point(W.centers[i], own + reach)
        hits = np.asarray([j for j in hits if j != i], dtype=np.int64)
        if hits.size == 0:
            continue
        touching = np.all((lows[hits] <= highs[i]) & (highs[hits] >= lows[i]), axis=1)
        if np.any(touching):
            pairs += int(touching.sum())
            neighbour_max = max(neighbour_max, float(np.max(W.sides[hits[touching]] / W.sides[i])))

    overlap = 0
    for p in points:
        hits = np.asarray(tree.query_ball_point(p, reach), dtype=np.int64)
        if hits.size:
            inside = np.all((lows[hits] <= p) & (highs[hits] >= p), axis=1)
            overlap = max(overlap, int(inside.sum()))

    report = WhitneyReport(
        float(ratios.min()),
        float(ratios.max()),
        neighbour_max,
        pairs // 2,
        overlap,
        samples,
    )
    logger.info("Whitney properties: %s", report)
    return report


def enclosing_box(lower, upper) -> DyadicBox:
    """
    Dyadic cubes of side at least the extent of [lower, upper] that cover it.

    A single dyadic cube cannot contain a box straddling a grid hyperplane through
    the origin, so the result has at most two cubes per axis.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    extent = float(np.max(upper - lower))
    level = -math.ceil(math.log2(max(extent, 1e-12)))
    side = 2.0**-level
    first = np.floor(lower / side).astype(np.int64)
    last = np.floor(upper / side).astype(np.int64) + 1
    return DyadicBox(level, tuple(int(k) for k in first), tuple(int(k) for k in last))


def dyadic_power(epsilon: float) -> float:
    """K = epsilon^-2 rounded up to a power of two."""
    return 2.0 ** math.ceil(math.log2(epsilon**-2) - 1e-12)


def validate_epsilon(epsilon: float) -> None:
    if not 0 < epsilon < 1 / 20:
        raise ValueError(f"epsilon must lie in (0, 1/20), got {epsilon}")
    if epsilon >= 1 / 100:
        logger.warning(
            "epsilon = %g is above 1/100; constants are reported, not guaranteed",
            epsilon,
        )


@dataclass(frozen=True, eq=False)
class BallFamily:
    cubes: list[DyadicCube]
    centers: np.ndarray
    radii: np.ndarray
    epsilon: float
    K: float
    r0: float
    c_low: float
    c_high: float

    def __len__(self) -> int:
        return len(self.cubes)

    @property
    def dimension(self) -> int:
        return self.centers.shape[1]

    def ball(self, i: int) -> Ball:
        return Ball(self.centers[i], float(self.radii[i]))

    @cached_property
    def tree(self) -> cKDTree:
        return cKDTree(self.centers)

    @cached_property
    def r_max(self) -> float:
        return float(self.radii.max()) if len(self) else 0.0

    @cached_property
    def sides(self) -> np.ndarray:
        return np.asarray([q.side for q in self.cubes])

    @cached_property
    def levels(self) -> np.ndarray:
        return np.asarray([q.level for q in self.cubes], dtype=np.int64)

    def meeting(self, center, radius: float) -> np.ndarray:
        """Indices P with B_P meeting the open ball B(center, radius)."""
        if len(self) == 0:
            return np.empty(0, dtype=np.int64)
        hits = np.asarray(self.tree.query_ball_point(center, radius + self.r_max), dtype=np.int64)
        if hits.size == 0:
            return hits
        gap = norm(self.centers[hits] - center)
        return np.sort(hits[gap < radius + self.radii[hits]])

    def depth(self, points) -> np.ndarray:
        """max over P of r_P - |p - z_P|; positive exactly inside some ball."""
        pts = as_points(points, self.dimension)
        best = np.full(pts.shape[0], -np.inf)
        if len(self) == 0:
            return best
        k = min(16, len(self))
        dd, ii = self.tree.query(pts, k=k)
        dd = dd.reshape(pts.shape[0], k)
        ii = ii.reshape(pts.shape[0], k)
        best = np.max(self.radii[ii] - dd, axis=1)
        if k < len(self):
            unresolved = np.flatnonzero(self.r_max - dd[:, -1] > best)
            for row in unresolved:
                hits = np.asarray(
                    self.tree.query_ball_point(pts[row], self.r_max - best[row]),
                    dtype=np.int64,
                )
                if hits.size:
                    depth = self.radii[hits] - norm(self.centers[hits] - pts[row])
                    best[row] = max(best[row], float(depth.max()))
        return best

    def to_rows(self) -> list[list[float]]:
        return [
            [q.level, *q.corner, *self.centers[i].tolist(), float(self.radii[i])]
            for i, q in enumerate(self.cubes)
        ]


def boundary_family(
    domain: DomainRep,
    E,
    epsilon: float,
    bbox: DyadicCube | DyadicBox | None = None,
    e_spacing: float | None = None,
    max_level: int | None = None,
) -> BallFamily:
    """
    Cubes of the Whitney decomposition of the complement of E that meet the boundary,
    each with a boundary point z_Q and the ball B(z_Q, epsilon min(r0, dist(z_Q, E))).
    """
    validate_epsilon(epsilon)
    e_points = as_points(E, domain.dimension)
    K = dyadic_power(epsilon)
    logger.info("Rounded K = epsilon^-2 = %.6g up to %g", epsilon**-2, K)

    if bbox is None:
        extent = float(np.max(e_points.max(axis=0) - e_points.min(axis=0)))
        pad = max(1.0, extent)
        bbox = enclosing_box(e_points.min(axis=0) - pad, e_points.max(axis=0) + pad)
    bbox = DyadicBox.of(bbox)
    spacing_fraction = Configuration.get().settings.geometry.boundary_sample_spacing
    if e_spacing is None:
        e_spacing = spacing_fraction * bbox.extent

    oracle = PointSetComplement(e_points)
    probe_ball = Ball(bbox.center, 0.5 * bbox.diam)
    probes = domain.sample_boundary(e_spacing, probe_ball)
    probes = probes[bbox.contains(probes)]
    if probes.shape[0] == 0 or np.all(oracle.dist_lower(probes) <= e_spacing * (1 + 1e-9)):
        raise EmptyFamilyError()

    sqrt_d = math.sqrt(domain.dimension)

    def meets_boundary(centers: np.ndarray, side: float) -> np.ndarray:
        d, _ = domain.boundary_distance(centers)
        return d <= 0.5 * side * sqrt_d * (1 + 1e-12)

    W = enumerate_whitney(oracle, WhitneyConfig(K, domain.r0, bbox, max_level), meets_boundary)

    cubes: list[DyadicCube] = []
    centers: list[np.ndarray] = []
    _, nearest = domain.boundary_distance(W.centers)
    for i, q in enumerate(W.cubes):
        z = nearest[i]
        if not q.contains(z)[0]:
            local = domain.sample_boundary(q.side / 8, Ball(q.center, 0.5 * q.diam))
            local = local[q.contains(local)] if local.shape[0] else local
            if local.shape[0] == 0:
                continue
            gap = norm(local - q.center)
            order = np.lexsort(tuple(local[:, j] for j in reversed(range(local.shape[1]))) + (gap,))
            z = local[order[0]]
        cubes.append(q)
        centers.append(z)

    if not cubes:
        raise EmptyFamilyError()
    z_points = np.asarray(centers)
    distance_to_e, _ = oracle.tree.query(z_points)
    radii = epsilon * np.minimum(domain.r0, distance_to_e)
    sides = np.asarray([q.side for q in cubes])
    scaled = sides / (epsilon * radii)
    family = BallFamily(
        cubes,
        z_points,
        radii,
        epsilon,
        K,
        domain.r0,
        float(scaled.min()),
        float(scaled.max()),
    )
    logger.info(
        "Ball family: %d cubes, l(Q)/r_Q in [%.4g eps, %.4g eps]",
        len(family),
        family.c_low,
        family.c_high,
    )
    return family
