from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree

from reifenberg.config import Configuration
from reifenberg.errors import DegenerateFitError
from reifenberg.errors import EmptyIntersectionError
from reifenberg.errors import HypothesisViolationError
from reifenberg.utils import random_stream

logger = logging.getLogger(__name__)

DistanceFn = Callable[[np.ndarray], np.ndarray]


def as_points(points, dimension: int | None = None) -> np.ndarray:
    array = np.asarray(points, dtype=float)
    if array.ndim == 1:
        array = array[None, :]
    if dimension is not None and array.shape[-1] != dimension:
        raise ValueError(f"Expected points of dimension {dimension}, got {array.shape[-1]}")
    return array


def dot(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Coordinate-ordered dot product over the last axis (bit-stable across shapes)."""
    result = u[..., 0] * v[..., 0]
    for i in range(1, u.shape[-1]):
        result = result + u[..., i] * v[..., i]
    return result


def norm(u: np.ndarray) -> np.ndarray:
    return np.sqrt(dot(u, u))


def frame_from_normal(normal: np.ndarray) -> np.ndarray:
    """
    Rotation matrix R (det +1) with R @ normal = e_{D}.

    The rows of R are the in-plane axes followed by the normal. The first in-plane
    axis is the projection of e_1 onto the plane (e_2 when e_1 is parallel to the
    normal); in the plane case the rotation is unique.
    """
    n = np.asarray(normal, dtype=float)
    n = n / np.linalg.norm(n)
    dimension = n.shape[0]
    if dimension == 2:
        return np.array([[n[1], -n[0]], [n[0], n[1]]])

    u1 = None
    for axis in range(dimension):
        e = np.zeros(dimension)
        e[axis] = 1.0
        projected = e - np.dot(e, n) * n
        length = np.linalg.norm(projected)
        if length > 1e-9:
            u1 = projected / length
            break
    assert u1 is not None
    u2 = np.cross(n, u1)
    return np.vstack([u1, u2, n])


@dataclass(frozen=True, eq=False)
class Hyperplane:
    anchor: np.ndarray
    normal: np.ndarray

    def __post_init__(self):
        anchor = np.asarray(self.anchor, dtype=float)
        normal = np.asarray(self.normal, dtype=float)
        length = np.linalg.norm(normal)
        if length == 0:
            raise ValueError("Hyperplane normal must be nonzero")
        object.__setattr__(self, "anchor", anchor)
        object.__setattr__(self, "normal", normal / length)

    @property
    def dimension(self) -> int:
        return self.anchor.shape[0]

    @cached_property
    def frame(self) -> np.ndarray:
        return frame_from_normal(self.normal)

    def signed_distance(self, points) -> np.ndarray:
        return dot(as_points(points) - self.anchor, self.normal)

    def distance(self, points) -> np.ndarray:
        return np.abs(self.signed_distance(points))

    def project(self, points) -> np.ndarray:
        pts = as_points(points)
        return pts - self.signed_distance(pts)[:, None] * self.normal

    def shifted(self, offset: float) -> Hyperplane:
        return Hyperplane(self.anchor + offset * self.normal, self.normal)

    def flipped(self) -> Hyperplane:
        return Hyperplane(self.anchor, -self.normal)

    def to_local(self, points) -> np.ndarray:
        """Coordinates in the plane frame: first d entries in-plane, last the height."""
        return (as_points(points) - self.anchor) @ self.frame.T

    def from_local(self, coords) -> np.ndarray:
        return as_points(coords) @ self.frame + self.anchor

    def sample_in_ball(self, ball: Ball, spacing: float) -> np.ndarray:
        """Grid points of the plane lying in the closed ball."""
        h = float(self.signed_distance(ball.center)[0])
        if abs(h) > ball.radius:
            return np.empty((0, self.dimension))
        radius = math.sqrt(max(ball.radius**2 - h * h, 0.0))
        foot = ball.center - h * self.normal
        count = max(int(math.ceil(radius / spacing)), 1)
        ticks = np.linspace(-radius, radius, 2 * count + 1)
        d = self.dimension - 1
        grid = np.stack(np.meshgrid(*([ticks] * d), indexing="ij"), axis=-1).reshape(-1, d)
        grid = grid[norm(grid) <= radius * (1 + 1e-12)]
        return foot + grid @ self.frame[:d]


@dataclass(frozen=True, eq=False)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if not self.radius > 0:
            raise ValueError(f"Ball radius must be positive, got {self.radius}")

    def contains(self, points, closed: bool = True) -> np.ndarray:
        d = norm(as_points(points) - self.center)
        return d <= self.radius if closed else d < self.radius

    def scaled(self, factor: float) -> Ball:
        return Ball(self.center, self.radius * factor)


@dataclass(frozen=True, order=True)
class DyadicCube:
    level: int
    corner: tuple[int, ...]

    @property
    def dimension(self) -> int:
        return len(self.corner)

    @property
    def side(self) -> float:
        return 2.0**-self.level

    @property
    def lower(self) -> np.ndarray:
        return np.asarray(self.corner, dtype=float) * self.side

    @property
    def upper(self) -> np.ndarray:
        return (np.asarray(self.corner, dtype=float) + 1.0) * self.side

    @property
    def center(self) -> np.ndarray:
        return (np.asarray(self.corner, dtype=float) + 0.5) * self.side

    @property
    def diam(self) -> float:
        return self.side * math.sqrt(self.dimension)

    def dilate(self, factor: float) -> tuple[np.ndarray, np.ndarray]:
        half = 0.5 * factor * self.side
        return self.center - half, self.center + half

    def parent(self) -> DyadicCube:
        return DyadicCube(self.level - 1, tuple(k >> 1 for k in self.corner))

    def children(self) -> list[DyadicCube]:
        base = [2 * k for k in self.corner]
        result = []
        for bits in range(2**self.dimension):
            offset = [(bits >> i) & 1 for i in range(self.dimension)]
            result.append(DyadicCube(self.level + 1, tuple(b + o for b, o in zip(base, offset))))
        return result

    def contains(self, points) -> np.ndarray:
        pts = as_points(points)
        return np.all((pts >= self.lower) & (pts < self.upper), axis=-1)

    def contains_cube(self, other: DyadicCube) -> bool:
        if other.level < self.level:
            return False
        shift = other.level - self.level
        return all((k >> shift) == c for k, c in zip(other.corner, self.corner))

    def interiors_disjoint(self, other: DyadicCube) -> bool:
        return not (self.contains_cube(other) or other.contains_cube(self))


def closest_points_on_segments(p: np.ndarray, a: np.ndarray, b: np.ndarray):
    """Closest points on segments [a, b]; returns points and an interior flag."""
    ab = b - a
    length2 = dot(ab, ab)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(length2 > 0, dot(p - a, ab) / length2, 0.0)
    interior = (t > 0) & (t < 1)
    t = np.clip(t, 0.0, 1.0)
    return a + t[..., None] * ab, interior


def closest_points_on_triangles(p: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray):
    """Vectorised closest point on triangles (vertex, edge and face regions in priority order)."""
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = dot(ab, ap)
    d2 = dot(ac, ap)
    bp = p - b
    d3 = dot(ab, bp)
    d4 = dot(ac, bp)
    cp = p - c
    d5 = dot(ab, cp)
    d6 = dot(ac, cp)
    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    with np.errstate(divide="ignore", invalid="ignore"):
        v_ab = d1 / (d1 - d3)
        w_ac = d2 / (d2 - d6)
        w_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        denom = 1.0 / (va + vb + vc)
        v_face = vb * denom
        w_face = vc * denom

    regions = [
        (d1 <= 0) & (d2 <= 0),
        (d3 >= 0) & (d4 <= d3),
        (vc <= 0) & (d1 >= 0) & (d3 <= 0),
        (d6 >= 0) & (d5 <= d6),
        (vb <= 0) & (d2 >= 0) & (d6 <= 0),
        (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0),
    ]
    choices = [
        a,
        b,
        a + v_ab[..., None] * ab,
        c,
        a + w_ac[..., None] * ac,
        b + w_bc[..., None] * (c - b),
    ]
    face_point = a + v_face[..., None] * ab + w_face[..., None] * ac
    result = face_point
    interior = np.ones(d1.shape, dtype=bool)
    for region, choice in zip(reversed(regions), reversed(choices)):
        result = np.where(region[..., None], choice, result)
        interior &= ~region
    return result, interior


def closest_points_on_simplices(p: np.ndarray, simplices: np.ndarray):
    """``simplices`` has shape (..., D, D); segments for D=2, triangles for D=3."""
    if simplices.shape[-1] == 2:
        return closest_points_on_segments(p, simplices[..., 0, :], simplices[..., 1, :])
    return closest_points_on_triangles(
        p,
        simplices[..., 0, :],
        simplices[..., 1, :],
        simplices[..., 2, :],
    )


@dataclass(frozen=True, eq=False)
class BoundaryMesh:
    """Oriented simplicial surface: segments in the plane, triangles in space.

    Segments are oriented so the outward normal is the direction vector turned
    clockwise; triangles are counter-clockwise seen from outside.
    """

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vertices", np.asarray(self.vertices, dtype=float))
        object.__setattr__(self, "faces", np.asarray(self.faces, dtype=np.int64))
        if self.faces.size and self.faces.shape[1] != self.vertices.shape[1]:
            raise ValueError("Faces must have as many vertices as the ambient dimension")

    @classmethod
    def from_simplices(cls, simplices: np.ndarray) -> BoundaryMesh:
        """Unwelded mesh with one vertex per simplex corner."""
        s = np.asarray(simplices, dtype=float)
        D = s.shape[-1]
        return cls(s.reshape(-1, D), np.arange(s.shape[0] * D).reshape(-1, D))

    @property
    def dimension(self) -> int:
        return self.vertices.shape[1]

    @property
    def face_count(self) -> int:
        return self.faces.shape[0]

    @cached_property
    def simplices(self) -> np.ndarray:
        return self.vertices[self.faces]

    @cached_property
    def normals(self) -> np.ndarray:
        s = self.simplices
        if self.dimension == 2:
            edge = s[:, 1] - s[:, 0]
            n = np.stack([edge[:, 1], -edge[:, 0]], axis=-1)
        else:
            n = np.cross(s[:, 1] - s[:, 0], s[:, 2] - s[:, 0])
        length = np.linalg.norm(n, axis=-1, keepdims=True)
        return np.divide(n, length, out=np.zeros_like(n), where=length > 0)

    @cached_property
    def measures(self) -> np.ndarray:
        s = self.simplices
        if self.dimension == 2:
            return np.linalg.norm(s[:, 1] - s[:, 0], axis=-1)
        return 0.5 * np.linalg.norm(np.cross(s[:, 1] - s[:, 0], s[:, 2] - s[:, 0]), axis=-1)

    @property
    def measure(self) -> float:
        return float(self.measures.sum())

    @cached_property
    def index(self) -> SimplexIndex:
        return SimplexIndex(self)

    def sample(self, spacing: float, faces: np.ndarray | None = None) -> np.ndarray:
        """Points on the selected faces with covering radius about ``spacing``."""
        ids = np.arange(self.face_count) if faces is None else np.asarray(faces, dtype=np.int64)
        if ids.size == 0:
            return np.empty((0, self.dimension))
        s = self.simplices[ids]
        if self.dimension == 2:
            counts = np.maximum(np.ceil(self.measures[ids] / spacing).astype(np.int64), 1)
            owner = np.repeat(np.arange(ids.size), counts)
            starts = np.cumsum(counts) - counts
            local = np.arange(counts.sum()) - np.repeat(starts, counts)
            t = (local + 0.5) / counts[owner]
            points = s[owner, 0] + t[:, None] * (s[owner, 1] - s[owner, 0])
            return np.vstack([points, self.vertices[np.unique(self.faces[ids])]])

        edges = np.stack(
            [
                np.linalg.norm(s[:, 1] - s[:, 0], axis=-1),
                np.linalg.norm(s[:, 2] - s[:, 1], axis=-1),
                np.linalg.norm(s[:, 0] - s[:, 2], axis=-1),
            ],
            axis=-1,
        ).max(axis=-1)
        levels = np.maximum(np.ceil(edges / spacing).astype(np.int64), 1)
        chunks = [self.vertices[np.unique(self.faces[ids])]]
        for level in np.unique(levels):
            members = np.flatnonzero(levels == level)
            bary = _triangle_lattice(int(level))
            tri = s[members]
            chunks.append(np.einsum("kj,fjd->fkd", bary, tri).reshape(-1, 3))
        return np.vstack(chunks)

    def faces_near(self, ball: Ball) -> np.ndarray:
        return self.index.faces_within(ball.center, ball.radius)

    def sample_in_ball(self, spacing: float, ball: Ball) -> np.ndarray:
        """Points of the faces inside the closed ball; work scales with the ball, not the faces."""
        ids = self.faces_near(ball)
        if ids.size == 0:
            return np.empty((0, self.dimension))
        s = self.simplices[ids]
        chunks = [self.vertices[np.unique(self.faces[ids])]]
        if self.dimension == 2:
            chunks.append(_clipped_segments(s[:, 0], s[:, 1], ball, spacing))
        else:
            for a, b in ((0, 1), (1, 2), (2, 0)):
                chunks.append(_clipped_segments(s[:, a], s[:, b], ball, spacing))
            chunks.append(_clipped_triangles(s, self.normals[ids], ball, spacing))
        points = np.vstack(chunks)
        return points[ball.contains(points)]

    def transformed(
        self,
        matrix: np.ndarray,
        offset: np.ndarray,
        scale: float = 1.0,
    ) -> BoundaryMesh:
        return BoundaryMesh(scale * self.vertices @ np.asarray(matrix).T + offset, self.faces)


def _clipped_segments(a: np.ndarray, b: np.ndarray, ball: Ball, spacing: float) -> np.ndarray:
    ab = b - a
    length2 = dot(ab, ab)
    ac = ball.center - a
    mid = np.divide(dot(ac, ab), length2, out=np.zeros_like(length2), where=length2 > 0)
    gap2 = np.maximum(dot(ac, ac) - mid * mid * length2, 0.0)
    reach2 = ball.radius**2 - gap2
    keep = (reach2 >= 0) & (length2 > 0)
    half = np.zeros_like(length2)
    half[keep] = np.sqrt(reach2[keep] / length2[keep])
    t0 = np.clip(mid - half, 0.0, 1.0)
    t1 = np.clip(mid + half, 0.0, 1.0)
    keep &= t1 > t0
    if not np.any(keep):
        return np.empty((0, a.shape[1]))
    a, ab, t0, t1 = a[keep], ab[keep], t0[keep], t1[keep]
    counts = np.maximum(np.ceil((t1 - t0) * np.sqrt(length2[keep]) / spacing), 1).astype(np.int64)
    owner = np.repeat(np.arange(counts.size), counts + 1)
    starts = np.cumsum(counts + 1) - (counts + 1)
    local = np.arange(owner.size) - starts[owner]
    t = t0[owner] + (t1 - t0)[owner] * local / counts[owner]
    return a[owner] + t[:, None] * ab[owner]


def _clipped_triangles(s: np.ndarray, normals: np.ndarray, ball: Ball, spacing: float):
    chunks = [np.empty((0, 3))]
    for tri, normal in zip(s, normals):
        if not np.any(normal):
            continue
        plane = Hyperplane(tri[0], normal)
        grid = plane.sample_in_ball(ball, spacing)
        if grid.shape[0] == 0:
            continue
        v0 = tri[1] - tri[0]
        v1 = tri[2] - tri[0]
        v2 = grid - tri[0]
        d00, d01, d11 = dot(v0, v0), dot(v0, v1), dot(v1, v1)
        d20, d21 = dot(v2, v0), dot(v2, v1)
        denom = d00 * d11 - d01 * d01
        v = (d11 * d20 - d01 * d21) / denom
        w = (d00 * d21 - d01 * d20) / denom
        inside = (v >= -1e-12) & (w >= -1e-12) & (v + w <= 1 + 1e-12)
        chunks.append(grid[inside])
    return np.vstack(chunks)


def _triangle_lattice(level: int) -> np.ndarray:
    """Barycentric centroids of the level-m subdivision of a triangle."""
    rows = []
    for i in range(level):
        for j in range(level - i):
            rows.append(((i + 1 / 3) / level, (j + 1 / 3) / level))
            if i + j <= level - 2:
                rows.append(((i + 2 / 3) / level, (j + 2 / 3) / level))
    uv = np.asarray(rows)
    return np.column_stack([1.0 - uv.sum(axis=1), uv[:, 0], uv[:, 1]])


@dataclass(frozen=True, eq=False)
class NearestResult:
    distance: np.ndarray
    point: np.ndarray
    face: np.ndarray
    interior: np.ndarray


class SimplexIndex:
    """
    Exact nearest-simplex queries.

    A k-d tree over simplex centroids proposes candidates; the answer is accepted when
    the k-th candidate centroid is further than the best distance plus the largest
    indexed circumradius, otherwise the ball of that radius is scanned. Very large
    simplices are kept out of the tree and always scanned.
    """

    def __init__(
        self,
        mesh: BoundaryMesh,
        knn: int | None = None,
        exhaustive_below: int | None = None,
        chunk: int = 8192,
    ):
        settings = Configuration.get().settings.geometry
        knn = knn or settings.knn
        if exhaustive_below is None:
            exhaustive_below = settings.exhaustive_below
        self.mesh = mesh
        self.knn = knn
        self.chunk = chunk
        simplices = mesh.simplices
        centroids = simplices.mean(axis=1)
        radii = np.linalg.norm(simplices - centroids[:, None, :], axis=-1).max(axis=-1)
        count = mesh.face_count

        if count <= exhaustive_below:
            self._large = np.arange(count)
            self._small = np.empty(0, dtype=np.int64)
        else:
            threshold = max(8.0 * float(np.median(radii)), 0.0)
            large = np.flatnonzero(radii > threshold)
            if large.size > 64:
                large = np.argsort(radii)[-64:]
            mask = np.ones(count, dtype=bool)
            mask[large] = False
            self._large = np.sort(large)
            self._small = np.flatnonzero(mask)

        self._radii = radii
        self._centroids = centroids
        self._rmax = float(radii[self._small].max()) if self._small.size else 0.0
        self._tree = cKDTree(centroids[self._small]) if self._small.size else None

    def faces_within(self, center: np.ndarray, radius: float) -> np.ndarray:
        """Faces that may meet the closed ball B(center, radius)."""
        gap = norm(self._centroids[self._large] - center)
        found = [self._large[gap <= radius + self._radii[self._large]]]
        if self._tree is not None:
            hits = self._tree.query_ball_point(center, radius + self._rmax)
            found.append(self._small[np.asarray(hits, dtype=np.int64)])
        return np.unique(np.concatenate(found))

    def query(self, points) -> NearestResult:
        pts = as_points(points, self.mesh.dimension)
        n = pts.shape[0]
        distance = np.empty(n)
        nearest = np.empty_like(pts)
        face = np.empty(n, dtype=np.int64)
        interior = np.empty(n, dtype=bool)
        for start in range(0, n, self.chunk):
            stop = min(start + self.chunk, n)
            d, c, f, i = self._query_chunk(pts[start:stop])
            distance[start:stop] = d
            nearest[start:stop] = c
            face[start:stop] = f
            interior[start:stop] = i
        return NearestResult(distance, nearest, face, interior)

    def distance(self, points) -> np.ndarray:
        return self.query(points).distance

    def _candidates_exact(self, pts: np.ndarray, candidates: np.ndarray):
        simplices = self.mesh.simplices[candidates]
        closest, interior = closest_points_on_simplices(pts[:, None, :], simplices)
        dist = norm(pts[:, None, :] - closest)
        best = np.argmin(dist, axis=1)
        rows = np.arange(pts.shape[0])
        return (
            dist[rows, best],
            closest[rows, best],
            candidates[rows, best],
            interior[rows, best],
        )

    def _query_chunk(self, pts: np.ndarray):
        n = pts.shape[0]
        columns = []
        if self._large.size:
            columns.append(np.broadcast_to(self._large, (n, self._large.size)))
        kth = np.full(n, np.inf)
        if self._tree is not None:
            k = min(self.knn, self._small.size)
            dd, ii = self._tree.query(pts, k=k)
            dd = dd.reshape(n, k)
            ii = ii.reshape(n, k)
            columns.append(self._small[ii])
            if k < self._small.size:
                kth = dd[:, -1]
        candidates = np.concatenate(columns, axis=1)
        dist, closest, face, interior = self._candidates_exact(pts, candidates)

        unresolved = np.flatnonzero(kth - self._rmax < dist)
        for row in unresolved:
            hits = self._tree.query_ball_point(pts[row], dist[row] + self._rmax)
            extra = self._small[np.asarray(hits, dtype=np.int64)]
            pool = np.unique(np.concatenate([candidates[row], extra]))
            d, c, f, i = self._candidates_exact(pts[row : row + 1], pool[None, :])
            dist[row], closest[row], face[row], interior[row] = d[0], c[0], f[0], i[0]
        return dist, closest, face, interior


def exhaustive_distance(points, mesh: BoundaryMesh) -> np.ndarray:
    """Per-simplex scan; the oracle the index is checked against."""
    pts = as_points(points, mesh.dimension)
    best = np.full(pts.shape[0], np.inf)
    for simplex in mesh.simplices:
        stacked = np.broadcast_to(simplex, (pts.shape[0],) + simplex.shape)
        closest, _ = closest_points_on_simplices(pts, stacked)
        best = np.minimum(best, norm(pts - closest))
    return best


def _nearest_in_sample(sample: np.ndarray) -> DistanceFn:
    tree = cKDTree(sample)

    def distance(points: np.ndarray) -> np.ndarray:
        d, _ = tree.query(points)
        return d

    return distance


def local_hausdorff(
    A,
    B,
    ball: Ball,
    dist_to_a: DistanceFn | None = None,
    dist_to_b: DistanceFn | None = None,
) -> float:
    """
    Two-sided ball-restricted deviation of the samples A and B.

    Returns max(sup over A∩ball of dist(a, B), sup over B∩ball of dist(b, A)). When
    an exact distance function to one of the underlying sets is known it replaces
    the nearest-sample distance for that side.
    """
    a = as_points(A)
    b = as_points(B)
    a_in = a[ball.contains(a)]
    b_in = b[ball.contains(b)]
    if a_in.shape[0] == 0:
        raise EmptyIntersectionError("A", ball.center, ball.radius)
    if b_in.shape[0] == 0:
        raise EmptyIntersectionError("B", ball.center, ball.radius)

    to_b = dist_to_b or _nearest_in_sample(b)
    to_a = dist_to_a or _nearest_in_sample(a)
    return float(max(np.max(to_b(a_in)), np.max(to_a(b_in))))


@dataclass(frozen=True, eq=False)
class PlaneFit:
    plane: Hyperplane
    residual: float
    degenerate: bool = False


def _canonical_normal(normal: np.ndarray) -> np.ndarray:
    for value in normal[::-1]:
        if abs(value) > 1e-12:
            return normal if value > 0 else -normal
    return normal


def _objective(points: np.ndarray, normals: np.ndarray, anchor: np.ndarray | None):
    heights = points @ normals.T
    if anchor is not None:
        offset = anchor @ normals.T
        return np.max(np.abs(heights - offset), axis=0), offset
    high = heights.max(axis=0)
    low = heights.min(axis=0)
    return 0.5 * (high - low), 0.5 * (high + low)


def _candidate_normals(center: np.ndarray, span: float, steps: int) -> np.ndarray:
    frame = frame_from_normal(center)
    angles = np.linspace(-span, span, steps)
    if center.shape[0] == 2:
        u = frame[0]
        return np.cos(angles)[:, None] * center + np.sin(angles)[:, None] * u
    a, b = np.meshgrid(angles, angles, indexing="ij")
    a = a.ravel()
    b = b.ravel()
    return (
        np.cos(a)[:, None] * (np.cos(b)[:, None] * center + np.sin(b)[:, None] * frame[1])
        + np.sin(a)[:, None] * frame[0]
    )


def fit_hyperplane(
    points,
    anchor=None,
    steps: int | None = None,
    levels: int | None = None,
) -> PlaneFit:
    """
    Minimax hyperplane fit.

    A least-squares plane seeds a coarse-to-fine rotation search over normals that
    minimises the largest orthogonal deviation. With an anchor the plane is forced
    through it; otherwise its offset is the midpoint of the extreme heights.
    """
    pts = as_points(points)
    dimension = pts.shape[1]
    steps = steps or (33 if dimension == 2 else 17)
    levels = levels or (7 if dimension == 2 else 9)
    if pts.shape[0] < dimension:
        raise DegenerateFitError(
            f"At least {dimension} points are required to fit a hyperplane, got {pts.shape[0]}.",
        )
    anchor_array = None if anchor is None else np.asarray(anchor, dtype=float)
    centroid = pts.mean(axis=0)
    scale = float(np.max(norm(pts - centroid)))
    if scale == 0.0:
        raise DegenerateFitError("All points coincide; no hyperplane is determined.")

    center = centroid if anchor_array is None else anchor_array
    _, singular, vt = np.linalg.svd(pts - center, full_matrices=True)
    seed = vt[-1]
    rank = int(np.sum(singular > 1e-12 * max(scale, 1.0)))
    degenerate = rank < dimension - 1

    best_normal = seed / np.linalg.norm(seed)
    values, _ = _objective(pts, best_normal[None, :], anchor_array)
    best_value = float(values[0])
    if not degenerate:
        span = math.pi / 2
        for _ in range(levels):
            normals = _candidate_normals(best_normal, span, steps)
            values, _ = _objective(pts, normals, anchor_array)
            k = int(np.argmin(values))
            if values[k] < best_value:
                best_value = float(values[k])
                best_normal = normals[k] / np.linalg.norm(normals[k])
            span = 2.0 * span / (steps - 1)

    best_normal = _canonical_normal(best_normal)
    _, offset = _objective(pts, best_normal[None, :], anchor_array)
    plane_anchor = anchor_array if anchor_array is not None else float(offset[0]) * best_normal + (
        centroid - float(np.dot(centroid, best_normal)) * best_normal
    )
    if degenerate:
        logger.debug("Degenerate hyperplane fit: points span %d dimensions", rank)
    return PlaneFit(Hyperplane(plane_anchor, best_normal), best_value, degenerate)


def simplex_eta(X) -> float:
    """Smallest vertex-to-opposite-face distance of a simplex, relative to its diameter."""
    pts = as_points(X)
    count = pts.shape[0]
    diam = float(max(np.linalg.norm(p - q) for p in pts for q in pts))
    if diam == 0:
        return 0.0
    best = np.inf
    for i in range(count):
        others = np.delete(pts, i, axis=0)
        base = others[0]
        directions = (others[1:] - base).T
        offset = pts[i] - base
        if directions.shape[1] == 0:
            residual = offset
        else:
            coeffs, *_ = np.linalg.lstsq(directions, offset, rcond=None)
            residual = offset - directions @ coeffs
        best = min(best, float(np.linalg.norm(residual)))
    return best / diam


@dataclass(frozen=True, eq=False)
class ProximityVerdict:
    passed: bool
    worst_ratio: float
    eta: float
    diam: float
    samples: int

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "worst_ratio": self.worst_ratio,
            "eta": self.eta,
            "diam": self.diam,
            "samples": self.samples,
        }


def plane_proximity_bound(
    P1: Hyperplane,
    P2: Hyperplane,
    X,
    theta: float,
    samples: int = 1000,
    spread: float = 10.0,
    seed: int = 0,
) -> ProximityVerdict:
    """
    Check that two planes passing near the vertices of a nondegenerate simplex stay
    close: dist(y, P1) <= theta * ((2d / eta) dist(y, X) + diam X) for y on P2.
    """
    pts = as_points(X)
    dimension = pts.shape[1]
    d = dimension - 1
    if pts.shape[0] != d + 1:
        raise HypothesisViolationError("a", f"X must have {d + 1} points, got {pts.shape[0]}")
    eta = simplex_eta(pts)
    diam = float(max(np.linalg.norm(p - q) for p in pts for q in pts))
    if not 0 < eta <= 1:
        raise HypothesisViolationError("a", f"eta(X) = {eta:.6g} is not in (0, 1]")
    if not theta < eta / (2 * (d + 1)):
        raise HypothesisViolationError(
            "a",
            f"theta = {theta:.6g} is not below eta/(2(d+1)) = {eta / (2 * (d + 1)):.6g}",
        )
    tolerance = 1e-12 * max(diam, 1.0)
    for j, plane in enumerate((P1, P2), start=1):
        worst = float(np.max(plane.distance(pts)))
        if worst > theta * diam + tolerance:
            raise HypothesisViolationError(
                "b",
                f"max dist(x_i, P{j}) = {worst:.6g} exceeds theta * diam X = {theta * diam:.6g}",
            )

    rng = random_stream(seed, 0)
    center = P2.project(pts.mean(axis=0))[0]
    radius = spread * diam
    directions = rng.standard_normal((samples, d))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    lengths = radius * rng.random(samples) ** (1.0 / d)
    y = center + (directions * lengths[:, None]) @ P2.frame[:d]

    lhs = P1.distance(y)
    dist_to_x = np.min(np.linalg.norm(y[:, None, :] - pts[None, :, :], axis=-1), axis=1)
    rhs = theta * ((2 * d / eta) * dist_to_x + diam)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(rhs > 0, lhs / rhs, np.where(lhs > 0, np.inf, 0.0))
    worst_ratio = float(np.max(ratios))
    return ProximityVerdict(worst_ratio <= 1.0 + 1e-12, worst_ratio, eta, diam, samples)


def box_distance(points: np.ndarray, half_width: float) -> np.ndarray:
    """Euclidean distance from points to the cube [-h, h]^k (zero inside)."""
    excess = np.maximum(np.abs(points) - half_width, 0.0)
    return norm(excess)


__all__ = [
    "Ball",
    "BoundaryMesh",
    "DyadicCube",
    "Hyperplane",
    "PlaneFit",
    "ProximityVerdict",
    "SimplexIndex",
    "as_points",
    "exhaustive_distance",
    "fit_hyperplane",
    "frame_from_normal",
    "local_hausdorff",
    "plane_proximity_bound",
    "simplex_eta",
]
