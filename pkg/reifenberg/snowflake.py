from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from dataclasses import replace
from functools import cached_property
from typing import Sequence

import numpy as np

from reifenberg.config import Configuration
from reifenberg.config import SnowflakeSettings
from reifenberg.domains import DomainRep
from reifenberg.domains import MeshDomain
from reifenberg.domains import SnowflakeDomain
from reifenberg.errors import BudgetError
from reifenberg.errors import PlacementError
from reifenberg.errors import SlopeViolationError
from reifenberg.executors import Executor
from reifenberg.geometry import Ball
from reifenberg.geometry import BoundaryMesh
from reifenberg.geometry import as_points
from reifenberg.geometry import dot
from reifenberg.geometry import frame_from_normal
from reifenberg.geometry import local_hausdorff
from reifenberg.geometry import norm
from reifenberg.utils import random_stream

logger = logging.getLogger(__name__)

WORKING_HALF_WIDTH = 4.0
BOUNDED_R0 = 0.25
PLACEMENT_CHUNK = 4096


def _apply(rotation: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """rotation @ vector over the trailing axes, summed in coordinate order."""
    result = rotation[..., :, 0] * vectors[..., None, 0]
    for j in range(1, rotation.shape[-1]):
        result = result + rotation[..., :, j] * vectors[..., None, j]
    return result


def _cross(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.stack(
        [
            u[..., 1] * v[..., 2] - u[..., 2] * v[..., 1],
            u[..., 2] * v[..., 0] - u[..., 0] * v[..., 2],
            u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0],
        ],
        axis=-1,
    )


def _polygon_area_2d(poly: np.ndarray) -> float:
    x = poly[:, 0]
    y = poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _newell_normal(polygon: np.ndarray) -> np.ndarray:
    if polygon.shape[1] == 2:
        edge = polygon[1] - polygon[0]
        n = np.array([edge[1], -edge[0]])
    else:
        n = np.sum(_cross(polygon, np.roll(polygon, -1, axis=0)), axis=0)
    length = np.linalg.norm(n)
    return n / length if length > 0 else n


def orient_simplices(simplices: np.ndarray, outward: np.ndarray) -> np.ndarray:
    """Flip simplices whose normal disagrees with the given outward direction."""
    s = np.array(simplices, dtype=float)
    outward = np.broadcast_to(outward, (s.shape[0], s.shape[-1]))
    if s.shape[-1] == 2:
        edge = s[:, 1] - s[:, 0]
        normal = np.stack([edge[:, 1], -edge[:, 0]], axis=-1)
        flip = dot(normal, outward) < 0
        s[flip] = s[flip][:, ::-1]
    else:
        normal = _cross(s[:, 1] - s[:, 0], s[:, 2] - s[:, 0])
        flip = dot(normal, outward) < 0
        s[flip] = s[flip][:, [0, 2, 1]]
    return s


def triangulate(polygon: np.ndarray, outward: np.ndarray) -> np.ndarray:
    """Oriented simplices of a convex polygon (a segment in the plane)."""
    polygon = np.asarray(polygon, dtype=float)
    if polygon.shape[1] == 2:
        return orient_simplices(polygon[None, :2], outward)
    fan = np.stack(
        [
            np.broadcast_to(polygon[0], (polygon.shape[0] - 2, 3)),
            polygon[1:-1],
            polygon[2:],
        ],
        axis=1,
    )
    return orient_simplices(fan, outward)


@dataclass(frozen=True, eq=False)
class Facet:
    """Planar piece of a piecewise-linear function: a convex polygon and its values."""

    vertices: np.ndarray
    heights: np.ndarray

    def __post_init__(self):
        vertices = np.asarray(self.vertices, dtype=float)
        if vertices.ndim == 1:
            vertices = vertices[:, None]
        heights = np.asarray(self.heights, dtype=float)
        if vertices.shape[1] == 2 and vertices.shape[0] >= 3:
            center = vertices.mean(axis=0)
            order = np.argsort(np.arctan2(vertices[:, 1] - center[1], vertices[:, 0] - center[0]))
            vertices = vertices[order]
            heights = heights[order]
        elif vertices.shape[1] == 1:
            order = np.argsort(vertices[:, 0])
            vertices = vertices[order]
            heights = heights[order]
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "heights", heights)

    @property
    def dimension(self) -> int:
        return self.vertices.shape[1]

    @cached_property
    def affine(self) -> tuple[np.ndarray, float, float]:
        design = np.column_stack([self.vertices, np.ones(self.vertices.shape[0])])
        coeffs, *_ = np.linalg.lstsq(design, self.heights, rcond=None)
        residual = float(np.max(np.abs(design @ coeffs - self.heights)))
        return coeffs[:-1], float(coeffs[-1]), residual

    @property
    def gradient(self) -> np.ndarray:
        return self.affine[0]

    @property
    def slope(self) -> float:
        return float(np.linalg.norm(self.gradient))

    @property
    def measure(self) -> float:
        if self.dimension == 1:
            return float(self.vertices[-1, 0] - self.vertices[0, 0])
        return abs(_polygon_area_2d(self.vertices))

    @property
    def flat(self) -> bool:
        return bool(np.all(self.heights == 0))

    def contains(self, points: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        if self.dimension == 1:
            x = points[:, 0]
            return (x >= self.vertices[0, 0] - tol) & (x <= self.vertices[-1, 0] + tol)
        v = self.vertices
        edges = np.roll(v, -1, axis=0) - v
        rel = points[:, None, :] - v[None, :, :]
        cross = edges[None, :, 0] * rel[..., 1] - edges[None, :, 1] * rel[..., 0]
        return np.all(cross >= -tol, axis=1)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        gradient, offset, _ = self.affine
        return points @ gradient + offset

    def scaled(self, factor: float) -> Facet:
        return Facet(self.vertices * factor, self.heights * factor)


def _square(half: float, center=(0.0, 0.0)) -> np.ndarray:
    cx, cy = center
    return np.array(
        [
            [cx - half, cy - half],
            [cx + half, cy - half],
            [cx + half, cy + half],
            [cx - half, cy + half],
        ],
    )


def _rectangle(x0: float, x1: float, y0: float, y1: float) -> np.ndarray:
    return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])


def _frame_pieces(inner: float, outer: float, dimension: int) -> list[np.ndarray]:
    """The region inner <= |x|_inf <= outer split into convex pieces."""
    if inner >= outer:
        return []
    if dimension == 1:
        return [np.array([[-outer], [-inner]]), np.array([[inner], [outer]])]
    return [
        _rectangle(-outer, -inner, -outer, outer),
        _rectangle(inner, outer, -outer, outer),
        _rectangle(-inner, inner, -outer, -inner),
        _rectangle(-inner, inner, inner, outer),
    ]


@dataclass(frozen=True, eq=False)
class Profile:
    """
    Piecewise-linear bump phi on the unit cube and its rescaling
    psi(x') = phi(N x') / N on the cube Q(1).
    """

    facets: tuple[Facet, ...]
    theta: float
    N: int = 1
    kind: str = "tent"

    @property
    def dimension(self) -> int:
        return self.facets[0].dimension

    @property
    def max_slope(self) -> float:
        return max(f.slope for f in self.facets)

    @property
    def flat(self) -> bool:
        return all(f.flat for f in self.facets)

    def with_frequency(self, N: int) -> Profile:
        return replace(self, N=int(N))

    def phi(self, y) -> np.ndarray:
        pts = as_points(y, self.dimension)
        values = np.zeros(pts.shape[0])
        pending = np.ones(pts.shape[0], dtype=bool)
        for facet in self.facets:
            hit = pending & facet.contains(pts)
            values[hit] = facet.evaluate(pts[hit])
            pending &= ~hit
        return values

    def psi(self, x) -> np.ndarray:
        return self.phi(as_points(x, self.dimension) * self.N) / self.N

    def psi_facets(self) -> list[Facet]:
        """Facets of psi covering Q(1); a single face when psi vanishes."""
        if self.flat:
            if self.dimension == 1:
                return [Facet(np.array([[-0.5], [0.5]]), np.zeros(2))]
            return [Facet(_square(0.5), np.zeros(4))]
        pieces = [f.scaled(1.0 / self.N) for f in self.facets]
        for piece in _frame_pieces(0.5 / self.N, 0.5, self.dimension):
            pieces.append(Facet(piece, np.zeros(piece.shape[0])))
        return [f for f in pieces if f.measure > 1e-15]

    def graph(self) -> BoundaryMesh:
        """Oriented mesh of the graph of psi over Q(1), outward pointing downwards."""
        simplices = [triangulate(polygon, normal) for polygon, normal in _lifted(self.psi_facets())]
        stacked = np.concatenate(simplices)
        return BoundaryMesh.from_simplices(stacked)


def _lifted(facets: Sequence[Facet]) -> list[tuple[np.ndarray, np.ndarray]]:
    result = []
    for facet in facets:
        polygon = np.column_stack([facet.vertices, facet.heights])
        normal = np.append(facet.gradient, -1.0)
        result.append((polygon, normal / np.linalg.norm(normal)))
    return result


def _validate_profile(profile: Profile) -> Profile:
    total = sum(f.measure for f in profile.facets)
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"Profile facets cover {total:.12g} of the unit cube instead of 1")
    for facet in profile.facets:
        if facet.affine[2] > 1e-12:
            raise ValueError("Profile facet is not planar")
        if facet.flat:
            continue
        reach = norm(facet.vertices)
        on_sphere = reach >= 0.5 - 1e-12
        if np.any(reach > 0.5 + 1e-12) or np.any(facet.heights[on_sphere] != 0):
            raise ValueError("Profile support must lie inside the open ball of radius 1/2")
    slope = profile.max_slope
    if slope > profile.theta + 1e-12:
        raise SlopeViolationError(slope, profile.theta)
    return profile


def make_profile(
    kind: str = "tent",
    theta: float = 0.1,
    N: int = 1,
    dimension: int = 1,
    facets: Sequence[tuple[Sequence, Sequence]] | None = None,
    radius: float | None = None,
) -> Profile:
    """
    Build the bump profile for a d-dimensional boundary (``dimension`` = d).

    The default tent is theta max(0, 1/2 - |x|) when d = 1 and the sup-norm pyramid
    theta max(0, radius - |x|_inf) when d = 2, its support kept inside the half-unit
    ball. Custom profiles are planar facets covering [-1/2, 1/2]^d.
    """
    if not 0 <= theta < 1:
        raise ValueError(f"theta must lie in [0, 1), got {theta}")
    if N < 1:
        raise ValueError(f"N must be a positive integer, got {N}")

    if kind == "custom":
        if not facets:
            raise ValueError("A custom profile needs facets")
        built = tuple(Facet(np.asarray(v, float), np.asarray(h, float)) for v, h in facets)
        return _validate_profile(Profile(built, theta, int(N), kind))
    if kind != "tent":
        raise ValueError(f"Unknown profile kind '{kind}'")

    if dimension == 1:
        built = (
            Facet(np.array([[-0.5], [0.0]]), np.array([0.0, theta / 2])),
            Facet(np.array([[0.0], [0.5]]), np.array([theta / 2, 0.0])),
        )
    elif dimension == 2:
        if radius is None:
            radius = Configuration.get().settings.snowflake.pyramid_radius
        if not 0 < radius * math.sqrt(2) < 0.5:
            raise ValueError(f"Pyramid radius {radius} does not keep the support inside |x| < 1/2")
        apex = np.zeros(2)
        corners = _square(radius)
        pyramid = [
            Facet(
                np.vstack([apex, corners[i], corners[(i + 1) % 4]]),
                np.array([theta * radius, 0.0, 0.0]),
            )
            for i in range(4)
        ]
        frame = [Facet(p, np.zeros(4)) for p in _frame_pieces(radius, 0.5, 2)]
        built = tuple(pyramid + frame)
    else:
        raise ValueError(f"Profiles are defined for d = 1 or 2, got {dimension}")
    return _validate_profile(Profile(built, theta, int(N), kind))


@dataclass(frozen=True, eq=False)
class BlipConfig:
    profile: Profile
    b: float
    depth: int = 0
    k_max: int = 3

    def __post_init__(self):
        if not self.b > 0:
            raise ValueError(f"b must be positive, got {self.b}")
        if self.k_max < 1:
            raise ValueError(f"k_max must be at least 1, got {self.k_max}")

    @property
    def theta(self) -> float:
        return self.profile.theta

    @property
    def N(self) -> int:
        return self.profile.N

    @property
    def dimension(self) -> int:
        """Ambient dimension d + 1."""
        return self.profile.dimension + 1

    @cached_property
    def template(self) -> BlipTemplate:
        return build_template(self)

    @classmethod
    def create(
        cls,
        theta: float,
        b: float,
        N: int | None = None,
        dimension: int = 2,
        depth: int = 0,
        k_max: int = 3,
        radius: float | None = None,
    ) -> BlipConfig:
        profile = make_profile("tent", theta, 1, dimension - 1, radius=radius)
        if N is None:
            N = choose_frequency(profile, b)
        return cls(profile.with_frequency(N), b, depth, k_max)

    @classmethod
    def from_settings(cls, settings: SnowflakeSettings, dimension: int) -> BlipConfig:
        return cls.create(
            settings.theta,
            settings.b,
            settings.N,
            dimension,
            settings.depth,
            settings.k_max,
            settings.pyramid_radius,
        )

    def to_dict(self) -> dict:
        return {
            "theta": self.theta,
            "b": self.b,
            "N": self.N,
            "depth": self.depth,
            "k_max": self.k_max,
            "profile": self.profile.kind,
        }


def _tent_boundary(b: float, dimension: int) -> BoundaryMesh:
    """Boundary of the double pyramid over Q(1) with apexes at heights +-b."""
    if dimension == 2:
        left, right = np.array([-0.5, 0.0]), np.array([0.5, 0.0])
        top, bottom = np.array([0.0, b]), np.array([0.0, -b])
        segments = np.array([[left, bottom], [bottom, right], [right, top], [top, left]])
        return BoundaryMesh(segments.reshape(-1, 2), np.arange(8).reshape(4, 2))
    corners = np.column_stack([_square(0.5), np.zeros(4)])
    triangles = []
    for apex in (np.array([0.0, 0.0, b]), np.array([0.0, 0.0, -b])):
        for i in range(4):
            triangles.append([corners[i], corners[(i + 1) % 4], apex])
    stacked = np.asarray(triangles)
    return BoundaryMesh(stacked.reshape(-1, 3), np.arange(24).reshape(8, 3))


def _edge_samples(simplices: np.ndarray, spacing: float) -> np.ndarray:
    """Points along every edge of the simplices."""
    if simplices.shape[1] == 2:
        pairs = [(0, 1)]
    else:
        pairs = [(0, 1), (1, 2), (2, 0)]
    chunks = []
    for i, j in pairs:
        a = simplices[:, i]
        b = simplices[:, j]
        count = max(int(math.ceil(float(np.max(norm(b - a))) / spacing)), 1)
        t = np.linspace(0.0, 1.0, count + 1)
        points = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
        chunks.append(points.reshape(-1, a.shape[1]))
    return np.vstack(chunks)


def separation(profile: Profile, b: float, spacing: float | None = None) -> float:
    """
    Distance from the non-flat part of the graph of psi to the boundary of the
    double tent over Q(1); negative when the graph leaves the tent.

    Both sets are unions of convex simplices, so the distance is attained on an
    edge of one of them; edges are sampled and measured exactly against the other.
    """
    dimension = profile.dimension + 1
    graph = profile.graph()
    moving = np.flatnonzero(np.any(np.abs(graph.simplices[..., -1]) > 0, axis=1))
    if moving.size == 0:
        return math.inf
    spacing = spacing or b / 1000
    pieces = graph.simplices[moving]
    vertices = pieces.reshape(-1, dimension)
    sup = np.max(np.abs(vertices[:, :-1]), axis=1)
    inside = np.abs(vertices[:, -1]) <= b * (1 - 2 * sup) + 1e-15
    tent = _tent_boundary(b, dimension)
    if not np.all(inside):
        return -float(np.max(tent.index.distance(vertices[~inside])))
    moving_mesh = BoundaryMesh.from_simplices(pieces)
    forward = tent.index.distance(_edge_samples(pieces, spacing))
    backward = moving_mesh.index.distance(_edge_samples(tent.simplices, spacing))
    return float(min(forward.min(), backward.min()))


def choose_frequency(profile: Profile, b: float, limit: int = 4096) -> int:
    """Smallest N whose blip keeps a distance b/100 from the tent boundary."""
    for N in range(1, limit + 1):
        if separation(profile.with_frequency(N), b) >= b / 100:
            logger.info("Chose frequency N = %d for theta = %g, b = %g", N, profile.theta, b)
            return N
    raise ValueError(f"No frequency up to {limit} separates the blip from the tent boundary")


@dataclass(frozen=True, eq=False)
class BlipCube:
    """A d-cube in a hyperplane with an in-plane frame, a distinguished side and a normal."""

    center: np.ndarray
    side: float
    frame: np.ndarray
    outward: np.ndarray
    distinguished: int = 0

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        object.__setattr__(self, "frame", np.atleast_2d(np.asarray(self.frame, dtype=float)))
        object.__setattr__(self, "outward", np.asarray(self.outward, dtype=float))
        axes = np.vstack([self.frame, self.outward])
        if np.max(np.abs(axes @ axes.T - np.eye(axes.shape[0]))) > 1e-12:
            raise ValueError("Cube frame and outward normal must be orthonormal")
        if not 0 <= self.distinguished < 2 * self.frame.shape[0]:
            raise ValueError(f"Invalid distinguished side {self.distinguished}")

    @property
    def dimension(self) -> int:
        return self.center.shape[0]

    @property
    def u_gamma(self) -> np.ndarray:
        """Unit direction from the center towards the distinguished side."""
        sign = 1.0 - 2.0 * (self.distinguished % 2)
        return sign * self.frame[self.distinguished // 2]

    def corners(self) -> np.ndarray:
        half = 0.5 * self.side
        if self.frame.shape[0] == 1:
            u = self.frame[0]
            return np.vstack([self.center - half * u, self.center + half * u])
        u, v = self.frame
        return np.vstack(
            [
                self.center - half * u - half * v,
                self.center + half * u - half * v,
                self.center + half * u + half * v,
                self.center - half * u + half * v,
            ],
        )

    def placement(self) -> AffinePlacement:
        return AffinePlacement.for_cube(self)

    def tents(self, b: float) -> Tents:
        return Tents(self, b)


def _rotations(u_gamma: np.ndarray, outward: np.ndarray) -> np.ndarray:
    """Columns u_gamma, (-e) x u_gamma, -e in space; u_gamma, -e in the plane."""
    inward = -outward
    if np.any(np.abs(dot(u_gamma, outward)) > 1e-9):
        raise PlacementError("The distinguished side direction is not tangent to the cube")
    if outward.shape[-1] == 2:
        rotation = np.stack([u_gamma, inward], axis=-1)
        det = rotation[..., 0, 0] * rotation[..., 1, 1] - rotation[..., 0, 1] * rotation[..., 1, 0]
        if np.any(det < 0):
            raise PlacementError(
                "No rotation maps the side {x_1 = 1/2} to the distinguished side "
                "while sending -e_n to the outward normal",
            )
        return rotation
    return np.stack([u_gamma, _cross(inward, u_gamma), inward], axis=-1)


@dataclass(frozen=True, eq=False)
class AffinePlacement:
    """x -> translation + scale * rotation @ x, mapping Q(1) onto a blip cube."""

    scale: float
    rotation: np.ndarray
    translation: np.ndarray

    @classmethod
    def for_cube(cls, cube: BlipCube) -> AffinePlacement:
        rotation = _rotations(cube.u_gamma[None, :], cube.outward[None, :])[0]
        return cls(cube.side, rotation, cube.center.copy())

    def __call__(self, points) -> np.ndarray:
        pts = as_points(points, self.translation.shape[0])
        return self.translation + self.scale * _apply(self.rotation, pts)

    def direction(self, vectors) -> np.ndarray:
        return _apply(self.rotation, as_points(vectors, self.translation.shape[0]))


@dataclass(frozen=True, eq=False)
class Tents:
    """P_Q (outside) and the open P~_Q (inside) pyramids over a blip cube."""

    cube: BlipCube
    b: float

    @property
    def height(self) -> float:
        return self.b * self.cube.side

    @property
    def outer_apex(self) -> np.ndarray:
        return self.cube.center + self.height * self.cube.outward

    @property
    def inner_apex(self) -> np.ndarray:
        return self.cube.center - self.height * self.cube.outward

    def outer_vertices(self) -> np.ndarray:
        return np.vstack([self.cube.corners(), self.outer_apex])

    def inner_vertices(self) -> np.ndarray:
        return np.vstack([self.cube.corners(), self.inner_apex])

    def _local(self, points) -> tuple[np.ndarray, np.ndarray]:
        rel = as_points(points, self.cube.dimension) - self.cube.center
        sup = np.max(np.abs(rel @ self.cube.frame.T), axis=1)
        return sup, dot(rel, np.broadcast_to(self.cube.outward, rel.shape))

    def _allowed(self, sup: np.ndarray) -> np.ndarray:
        return self.height * (1 - 2 * sup / self.cube.side)

    def in_outer(self, points) -> np.ndarray:
        sup, h = self._local(points)
        return (sup <= 0.5 * self.cube.side) & (h >= 0) & (h <= self._allowed(sup))

    def in_inner(self, points) -> np.ndarray:
        sup, h = self._local(points)
        return (sup < 0.5 * self.cube.side) & (h < 0) & (-h < self._allowed(sup))

    def sample(self, count: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
        """Points strictly inside each tent."""
        rng = random_stream(seed, 0)
        d = self.cube.frame.shape[0]
        u = (rng.random((count, d)) - 0.5) * self.cube.side * 0.96
        sup = np.max(np.abs(u), axis=1)
        fraction = 0.02 + 0.96 * rng.random(count)
        h = fraction * self._allowed(sup)
        base = self.cube.center + u @ self.cube.frame
        return base + h[:, None] * self.cube.outward, base - h[:, None] * self.cube.outward


def check_tents(domain: DomainRep, cube: BlipCube, b: float, samples: int = 64, seed: int = 0):
    """Sampled P_Q outside the domain and P~_Q inside it."""
    outer, inner = cube.tents(b).sample(samples, seed)
    outer_hits = int(np.count_nonzero(domain.inside(outer)))
    inner_misses = int(np.count_nonzero(~domain.inside(inner)))
    return outer_hits, inner_misses


@dataclass(frozen=True, eq=False)
class FaceSubdivision:
    cubes: list[BlipCube]
    collar: list[np.ndarray]
    edges: np.ndarray
    outward: np.ndarray
    ratio_low: float
    ratio_high: float

    @property
    def cube_measure(self) -> float:
        d = self.outward.shape[0] - 1
        return float(sum(q.side**d for q in self.cubes))


def _clip(polygon: np.ndarray, normals: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    for normal, offset in zip(normals, offsets):
        if polygon.shape[0] == 0:
            break
        s = polygon @ normal - offset
        out = []
        count = polygon.shape[0]
        for i in range(count):
            j = (i + 1) % count
            if s[i] >= 0:
                out.append(polygon[i])
            if (s[i] >= 0) != (s[j] >= 0):
                t = s[i] / (s[i] - s[j])
                out.append(polygon[i] + t * (polygon[j] - polygon[i]))
        polygon = np.asarray(out).reshape(-1, 2)
    return polygon


def _face_axes(polygon: np.ndarray, outward: np.ndarray, hint: np.ndarray) -> np.ndarray:
    projected = hint - dot(hint, outward) * outward
    if np.linalg.norm(projected) < 1e-9:
        projected = polygon[1] - polygon[0]
        projected = projected - dot(projected, outward) * outward
    u = projected / np.linalg.norm(projected)
    if polygon.shape[1] == 2:
        return u[None, :]
    return np.vstack([u, _cross(-outward, u)])


def face_subdivision(
    face,
    outward=None,
    axis_hint=None,
    k_max: int | None = None,
) -> FaceSubdivision:
    """
    Whitney subdivision of a convex planar face into d-cubes of sides s 8^-k.

    A cell of level k is kept when its distance to the face edges is at least its
    side; cells still meeting the face at level k_max form the collar, clipped to
    the face. Every cube's distinguished side is the one closest in angle to
    ``axis_hint``.
    """
    polygon = np.asarray(face, dtype=float)
    ambient = polygon.shape[1]
    d = ambient - 1
    if k_max is None:
        k_max = Configuration.get().settings.snowflake.k_max
    outward = _newell_normal(polygon) if outward is None else np.asarray(outward, dtype=float)
    empty = FaceSubdivision([], [], np.empty((0, d, ambient)), outward, math.nan, math.nan)
    if not np.any(outward):
        return empty
    outward = outward / np.linalg.norm(outward)
    hint = np.eye(ambient)[0] if axis_hint is None else np.asarray(axis_hint, dtype=float)
    axes = _face_axes(polygon, outward, hint)
    origin = polygon[0]
    local = (polygon - origin) @ axes.T

    if d == 1:
        lo = np.array([local.min()])
        hi = np.array([local.max()])
        normals = np.array([[1.0], [-1.0]])
        offsets = np.array([lo[0], -hi[0]])
        measure = float(hi[0] - lo[0])
        edges = np.vstack([origin + lo @ axes, origin + hi @ axes])[:, None, :]
    else:
        area = _polygon_area_2d(local)
        if area < 0:
            local = local[::-1]
            polygon = polygon[::-1]
        measure = abs(area)
        edge_vectors = np.roll(local, -1, axis=0) - local
        lengths = np.linalg.norm(edge_vectors, axis=1)
        keep = lengths > 0
        local_ring, edge_vectors, lengths = local[keep], edge_vectors[keep], lengths[keep]
        normals = np.column_stack([-edge_vectors[:, 1], edge_vectors[:, 0]]) / lengths[:, None]
        offsets = np.sum(normals * local_ring, axis=1)
        lo = local.min(axis=0)
        hi = local.max(axis=0)
        edges = np.stack([polygon, np.roll(polygon, -1, axis=0)], axis=1)[keep]
    if measure <= 1e-15:
        return empty

    s = float(np.max(hi - lo))
    offsets_grid = np.stack(
        np.meshgrid(*([np.arange(2)] * d), indexing="ij"),
        axis=-1,
    ).reshape(-1, d)
    child_offsets = np.stack(
        np.meshgrid(*([np.arange(8)] * d), indexing="ij"),
        axis=-1,
    ).reshape(-1, d)

    h = s / 8
    counts = np.maximum(np.ceil((hi - lo) / h - 1e-9).astype(np.int64), 1)
    grid = np.meshgrid(*[np.arange(c) for c in counts], indexing="ij")
    cells = np.stack(grid, axis=-1).reshape(-1, d)
    accepted: list[tuple[np.ndarray, float, np.ndarray]] = []
    collar_cells = np.empty((0, d), dtype=np.int64)
    for k in range(1, k_max + 1):
        h = s * 8.0**-k
        corners = lo + (cells[:, None, :] + offsets_grid[None, :, :]) * h
        signed = corners @ normals.T - offsets
        margin = signed.min(axis=(1, 2))
        accept = margin >= h * (1 - 1e-12)
        outside = np.any(np.all(signed <= 0, axis=1), axis=1)
        if np.any(accept):
            accepted.append((cells[accept], h, margin[accept]))
        rest = cells[~accept & ~outside]
        if k < k_max:
            cells = (8 * rest[:, None, :] + child_offsets[None, :, :]).reshape(-1, d)
        else:
            collar_cells = rest

    hint_candidates = np.vstack([axes[i // 2] * (1 - 2 * (i % 2)) for i in range(2 * d)])
    distinguished = int(np.argmax(hint_candidates @ hint))
    cubes: list[BlipCube] = []
    ratios: list[np.ndarray] = []
    for level_cells, side, margin in accepted:
        centers = origin + (lo + (level_cells + 0.5) * side) @ axes
        for center in centers:
            cubes.append(BlipCube(center, side, axes, outward, distinguished))
        ratios.append(side / margin)

    collar: list[np.ndarray] = []
    for cell in collar_cells:
        low = lo + cell * h
        if d == 1:
            a = max(low[0], lo[0])
            b = min(low[0] + h, hi[0])
            if b - a > 1e-15 * s:
                collar.append(origin + np.array([[a], [b]]) @ axes)
        else:
            piece = _clip(_rectangle(low[0], low[0] + h, low[1], low[1] + h), normals, offsets)
            if piece.shape[0] >= 3 and abs(_polygon_area_2d(piece)) > 1e-14 * s * s:
                collar.append(origin + piece @ axes)

    joined = np.concatenate(ratios) if ratios else np.array([math.nan])
    low, high = float(np.min(joined)), float(np.max(joined))
    return FaceSubdivision(cubes, collar, edges, outward, low, high)


@dataclass(frozen=True, eq=False)
class CubeSet:
    """Struct-of-arrays storage for blip cubes."""

    centers: np.ndarray
    sides: np.ndarray
    frames: np.ndarray
    outward: np.ndarray
    distinguished: np.ndarray

    def __len__(self) -> int:
        return self.sides.shape[0]

    @classmethod
    def from_cubes(cls, cubes: Sequence[BlipCube], dimension: int) -> CubeSet:
        if not cubes:
            return cls(
                np.empty((0, dimension)),
                np.empty(0),
                np.empty((0, dimension - 1, dimension)),
                np.empty((0, dimension)),
                np.empty(0, dtype=np.int64),
            )
        return cls(
            np.asarray([q.center for q in cubes]),
            np.asarray([q.side for q in cubes]),
            np.asarray([q.frame for q in cubes]),
            np.asarray([q.outward for q in cubes]),
            np.asarray([q.distinguished for q in cubes], dtype=np.int64),
        )

    @classmethod
    def concat(cls, parts: Sequence[CubeSet]) -> CubeSet:
        return cls(
            np.concatenate([p.centers for p in parts]),
            np.concatenate([p.sides for p in parts]),
            np.concatenate([p.frames for p in parts]),
            np.concatenate([p.outward for p in parts]),
            np.concatenate([p.distinguished for p in parts]),
        )

    def take(self, index) -> CubeSet:
        return CubeSet(
            self.centers[index],
            self.sides[index],
            self.frames[index],
            self.outward[index],
            self.distinguished[index],
        )

    def cube(self, i: int) -> BlipCube:
        return BlipCube(
            self.centers[i],
            float(self.sides[i]),
            self.frames[i],
            self.outward[i],
            int(self.distinguished[i]),
        )

    def to_list(self) -> list[BlipCube]:
        return [self.cube(i) for i in range(len(self))]

    def u_gamma(self) -> np.ndarray:
        rows = np.arange(len(self))
        sign = 1.0 - 2.0 * (self.distinguished % 2)
        return sign[:, None] * self.frames[rows, self.distinguished // 2]

    def rotations(self) -> np.ndarray:
        return _rotations(self.u_gamma(), self.outward)

    def simplices(self) -> np.ndarray:
        half = 0.5 * self.sides[:, None]
        c = self.centers
        if self.frames.shape[1] == 1:
            u = self.frames[:, 0]
            segments = np.stack([c - half * u, c + half * u], axis=1)
            return orient_simplices(segments, self.outward)
        u = self.frames[:, 0]
        v = self.frames[:, 1]
        p0 = c - half * u - half * v
        p1 = c + half * u - half * v
        p2 = c + half * u + half * v
        p3 = c - half * u + half * v
        triangles = np.concatenate([np.stack([p0, p1, p2], axis=1), np.stack([p0, p2, p3], axis=1)])
        return orient_simplices(triangles, np.concatenate([self.outward, self.outward]))

    def to_rows(self) -> list[list[float]]:
        return [
            [
                *self.centers[i].tolist(),
                float(self.sides[i]),
                *self.frames[i].ravel().tolist(),
                *self.outward[i].tolist(),
                int(self.distinguished[i]),
            ]
            for i in range(len(self))
        ]


@dataclass(frozen=True, eq=False)
class BlipTemplate:
    """The blip along Q(1): child cubes, collar and edges in reference coordinates."""

    children: CubeSet
    collar: np.ndarray
    edges: np.ndarray
    graph: BoundaryMesh
    hausdorff: float
    ratio_low: float
    ratio_high: float

    @property
    def simplices_per_blip(self) -> int:
        per_cube = 1 if self.children.frames.shape[1] == 1 else 2
        return per_cube * len(self.children) + self.collar.shape[0]


def _unit_cube_mesh(dimension: int) -> BoundaryMesh:
    if dimension == 2:
        polygon = np.array([[-0.5, 0.0], [0.5, 0.0]])
    else:
        polygon = np.column_stack([_square(0.5), np.zeros(4)])
    outward = -np.eye(dimension)[-1]
    simplices = triangulate(polygon, outward)
    return BoundaryMesh.from_simplices(simplices)


def build_template(cfg: BlipConfig) -> BlipTemplate:
    dimension = cfg.dimension
    hint = np.eye(dimension)[0]
    cubes: list[BlipCube] = []
    collar: list[np.ndarray] = []
    edges: list[np.ndarray] = []
    low, high = math.inf, 0.0
    for polygon, normal in _lifted(cfg.profile.psi_facets()):
        sub = face_subdivision(polygon, normal, hint, cfg.k_max)
        cubes.extend(sub.cubes)
        collar.extend(triangulate(piece, normal) for piece in sub.collar)
        edges.append(sub.edges)
        if sub.cubes:
            low = min(low, sub.ratio_low)
            high = max(high, sub.ratio_high)

    children = CubeSet.from_cubes(cubes, dimension)
    if len(children):
        children.rotations()
    graph = cfg.profile.graph()
    base = _unit_cube_mesh(dimension)
    spacing = 1e-4 if dimension == 2 else 1 / 256
    ball = Ball(np.zeros(dimension), 0.5 * math.sqrt(dimension))
    hausdorff = local_hausdorff(
        graph.sample(spacing),
        base.sample(spacing),
        ball,
        dist_to_a=graph.index.distance,
        dist_to_b=base.index.distance,
    )
    stacked_collar = np.concatenate(collar) if collar else np.empty((0, dimension, dimension))
    return BlipTemplate(
        children,
        stacked_collar,
        np.concatenate(edges),
        graph,
        hausdorff,
        low,
        high,
    )


@dataclass(frozen=True, eq=False)
class Placed:
    children: CubeSet
    collar: np.ndarray
    edges: np.ndarray


def _place_chunk(template: BlipTemplate, parents: CubeSet) -> Placed:
    rotation = parents.rotations()
    scale = parents.sides
    t = template.children
    centers = parents.centers[:, None, :] + scale[:, None, None] * _apply(
        rotation[:, None], t.centers[None]
    )
    frames = _apply(rotation[:, None, None], t.frames[None])
    outward = _apply(rotation[:, None], t.outward[None])
    collar = parents.centers[:, None, None, :] + scale[:, None, None, None] * _apply(
        rotation[:, None, None], template.collar[None]
    )
    edges = parents.centers[:, None, None, :] + scale[:, None, None, None] * _apply(
        rotation[:, None, None], template.edges[None]
    )
    n, k = len(parents), len(t)
    D = parents.centers.shape[1]
    children = CubeSet(
        centers.reshape(n * k, D),
        (scale[:, None] * t.sides[None]).reshape(n * k),
        frames.reshape(n * k, D - 1, D),
        outward.reshape(n * k, D),
        np.tile(t.distinguished, n),
    )
    return Placed(children, collar.reshape(-1, D, D), edges.reshape(-1, D - 1, D))


def place_blips(
    template: BlipTemplate,
    parents: CubeSet,
    executor: Executor | None = None,
) -> Placed:
    """Place the template on every parent cube; blips of one generation are independent."""
    if len(parents) == 0:
        D = parents.centers.shape[1]
        return Placed(parents, np.empty((0, D, D)), np.empty((0, D - 1, D)))
    executor = executor or Executor.get()
    chunks = [
        parents.take(slice(start, start + PLACEMENT_CHUNK))
        for start in range(0, len(parents), PLACEMENT_CHUNK)
    ]
    parts = executor.map(lambda chunk: _place_chunk(template, chunk), chunks)
    return Placed(
        CubeSet.concat([p.children for p in parts]),
        np.concatenate([p.collar for p in parts]),
        np.concatenate([p.edges for p in parts]),
    )


@dataclass(frozen=True, eq=False)
class SnowflakeGeneration:
    """
    One approximant: the blip cubes G_m, the static simplices (seed frame outside
    Q(1) and the collars of earlier generations) and the edge skeleton E_m.
    """

    index: int
    config: BlipConfig
    bounded: bool
    cubes: CubeSet
    frame: np.ndarray
    collar: np.ndarray
    edges: np.ndarray
    increment: float | None = None

    @property
    def dimension(self) -> int:
        return self.config.dimension

    @cached_property
    def G(self) -> list[BlipCube]:
        return self.cubes.to_list()

    @cached_property
    def simplices(self) -> np.ndarray:
        return np.concatenate([self.frame, self.collar, self.cubes.simplices()])

    @property
    def face_count(self) -> int:
        return self.simplices.shape[0]

    @cached_property
    def mesh(self) -> BoundaryMesh:
        return BoundaryMesh.from_simplices(self.simplices)

    @property
    def measure(self) -> float:
        return self.mesh.measure

    @cached_property
    def cube_measure(self) -> float:
        return float(np.sum(self.cubes.sides ** (self.dimension - 1)))

    @cached_property
    def collar_measure(self) -> float:
        if self.collar.shape[0] == 0:
            return 0.0
        return BoundaryMesh.from_simplices(self.collar).measure

    @cached_property
    def domain(self) -> DomainRep:
        if self.bounded:
            pole = np.zeros(self.dimension)
            pole[-1] = 0.5
            return MeshDomain(self.mesh, r0=BOUNDED_R0, pole=pole)
        closure = np.concatenate(
            [self.collar, self.cubes.simplices(), _tent_cap(self.config.b, self.dimension)],
        )
        return SnowflakeDomain(
            self.mesh,
            BoundaryMesh.from_simplices(closure),
            self.config.b,
            WORKING_HALF_WIDTH,
        )

    def within_tent(self, points) -> np.ndarray:
        """Membership in the closed double tent over Q(1)."""
        pts = as_points(points, self.dimension)
        sup = np.max(np.abs(pts[:, :-1]), axis=1)
        return np.abs(pts[:, -1]) <= self.config.b * (1 - 2 * sup) + 1e-12

    def summary(self) -> dict:
        return {
            "generation": self.index,
            "bounded": self.bounded,
            "cubes": len(self.cubes),
            "simplices": self.face_count,
            "edges": int(self.edges.shape[0]),
            "measure": self.measure,
            "hausdorff_increment": self.increment,
        }


def _tent_cap(b: float, dimension: int) -> np.ndarray:
    """Upper faces of the tent over Q(1), oriented upwards."""
    up = np.eye(dimension)[-1]
    if dimension == 2:
        segments = np.array([[[0.5, 0.0], [0.0, b]], [[0.0, b], [-0.5, 0.0]]])
        return orient_simplices(segments, up)
    corners = np.column_stack([_square(0.5), np.zeros(4)])
    apex = np.array([0.0, 0.0, b])
    triangles = np.asarray([[corners[i], corners[(i + 1) % 4], apex] for i in range(4)])
    return orient_simplices(triangles, up)


def seed_cube(center, outward) -> BlipCube:
    outward = np.asarray(outward, dtype=float)
    d = outward.shape[0] - 1
    frame = frame_from_normal(-outward)[:d]
    return BlipCube(np.asarray(center, dtype=float), 1.0, frame, outward, 0)


def seed_generation(cfg: BlipConfig, bounded: bool) -> SnowflakeGeneration:
    """Omega_0: the half-space over the working box with G_0 = {Q(1)}, or the unit cube on Q(1)."""
    D = cfg.dimension
    d = D - 1
    down = -np.eye(D)[-1]
    empty_edges = np.empty((0, d, D))
    empty = np.empty((0, D, D))
    if not bounded:
        pieces = []
        for piece in _frame_pieces(0.5, WORKING_HALF_WIDTH, d):
            polygon = np.column_stack([piece, np.zeros(piece.shape[0])])
            pieces.append(triangulate(polygon, down))
        cubes = CubeSet.from_cubes([seed_cube(np.zeros(D), down)], D)
        return SnowflakeGeneration(0, cfg, False, cubes, np.concatenate(pieces), empty, empty_edges)

    faces = [seed_cube(np.zeros(D), down)]
    top = np.zeros(D)
    top[-1] = 1.0
    faces.append(seed_cube(top, np.eye(D)[-1]))
    for axis in range(d):
        for sign in (1.0, -1.0):
            center = np.zeros(D)
            center[axis] = 0.5 * sign
            center[-1] = 0.5
            faces.append(seed_cube(center, sign * np.eye(D)[axis]))
    cubes = CubeSet.from_cubes(faces, D)
    return SnowflakeGeneration(0, cfg, True, cubes, empty, empty, empty_edges)


def advance(
    generation: SnowflakeGeneration,
    executor: Executor | None = None,
) -> SnowflakeGeneration:
    """Add a blip along every cube of G_m."""
    cfg = generation.config
    template = cfg.template
    limit = Configuration.get().settings.snowflake.max_faces
    count = (
        generation.frame.shape[0]
        + generation.collar.shape[0]
        + len(generation.cubes) * template.simplices_per_blip
    )
    if count > limit:
        raise BudgetError("Mesh simplex", count, limit)
    placed = place_blips(template, generation.cubes, executor)
    increment = 0.0
    if len(generation.cubes):
        increment = template.hausdorff * float(generation.cubes.sides.max())
    return SnowflakeGeneration(
        generation.index + 1,
        cfg,
        generation.bounded,
        placed.children,
        generation.frame,
        np.concatenate([generation.collar, placed.collar]),
        np.concatenate([generation.edges, placed.edges]),
        increment,
    )


def _find_cube(cubes: CubeSet, cube: BlipCube) -> int:
    gap = norm(cubes.centers - cube.center)
    same = (gap <= 1e-12 * max(cube.side, 1.0)) & (np.abs(cubes.sides - cube.side) <= 1e-12)
    match = np.flatnonzero(same)
    if match.size == 0:
        raise ValueError("The cube is not part of this generation")
    return int(match[0])


def add_blip(
    generation: SnowflakeGeneration,
    cube: BlipCube,
    check: bool = True,
) -> tuple[SnowflakeGeneration, list[BlipCube]]:
    """Replace one flat cube of the boundary by the placed blip."""
    cfg = generation.config
    position = _find_cube(generation.cubes, cube)
    if check:
        outer_hits, inner_misses = check_tents(generation.domain, cube, cfg.b)
        if outer_hits or inner_misses:
            raise PlacementError(
                f"Tents are not free: {outer_hits} outer samples inside the domain, "
                f"{inner_misses} inner samples outside",
            )
    placed = place_blips(cfg.template, generation.cubes.take([position]))
    keep = np.ones(len(generation.cubes), dtype=bool)
    keep[position] = False
    updated = SnowflakeGeneration(
        generation.index,
        cfg,
        generation.bounded,
        CubeSet.concat([generation.cubes.take(keep), placed.children]),
        generation.frame,
        np.concatenate([generation.collar, placed.collar]),
        np.concatenate([generation.edges, placed.edges]),
        generation.increment,
    )
    return updated, placed.children.to_list()


def build_snowflake(
    cfg: BlipConfig,
    bounded: bool | None = None,
    depth: int | None = None,
    executor: Executor | None = None,
) -> list[SnowflakeGeneration]:
    """Omega_0 ... Omega_m."""
    settings = Configuration.get().settings.snowflake
    bounded = settings.bounded if bounded is None else bounded
    depth = cfg.depth if depth is None else depth
    if depth > settings.max_depth:
        raise ValueError(f"depth {depth} exceeds max_depth {settings.max_depth}")
    template = cfg.template
    logger.info(
        "Blip template: %d child cubes, side/edge-distance ratio in [%.4g, %.4g], "
        "reference Hausdorff %.6g",
        len(template.children),
        template.ratio_low,
        template.ratio_high,
        template.hausdorff,
    )
    generations = [seed_generation(cfg, bounded)]
    for _ in range(depth):
        generations.append(advance(generations[-1], executor))
        logger.info("Generation %s", generations[-1].summary())
    return generations


def increment_ratios(generations: Sequence[SnowflakeGeneration]) -> list[float]:
    increments = [g.increment for g in generations[1:]]
    return [b / a for a, b in zip(increments, increments[1:]) if a]


def sampled_distance(
    a: SnowflakeGeneration,
    b: SnowflakeGeneration,
    spacing: float,
    ball: Ball | None = None,
) -> float:
    """Two-sided Hausdorff distance of two generations measured on samples."""
    if ball is None:
        ball = Ball(np.zeros(a.dimension), 0.5 * math.sqrt(a.dimension) + 0.5)
    return local_hausdorff(
        a.mesh.sample_in_ball(spacing, ball),
        b.mesh.sample_in_ball(spacing, ball),
        ball,
        dist_to_a=a.mesh.index.distance,
        dist_to_b=b.mesh.index.distance,
    )


def _canonical(simplices: np.ndarray) -> np.ndarray:
    flat = simplices.reshape(simplices.shape[0], int(np.prod(simplices.shape[1:])))
    order = np.lexsort(tuple(flat[:, j] for j in reversed(range(flat.shape[1]))))
    return flat[order]


def shared_region_agreement(bounded: SnowflakeGeneration, unbounded: SnowflakeGeneration) -> float:
    """
    Largest vertex deviation between the two boundaries below the plane x_D = 0,
    or infinity when they carry different numbers of simplices there.
    """
    def below(generation: SnowflakeGeneration) -> np.ndarray:
        s = generation.simplices
        return _canonical(s[s.mean(axis=1)[:, -1] < -1e-12])

    lower_bounded = below(bounded)
    lower_unbounded = below(unbounded)
    if lower_bounded.shape != lower_unbounded.shape:
        logger.warning(
            "Shared region mismatch: %d vs %d simplices",
            lower_bounded.shape[0],
            lower_unbounded.shape[0],
        )
        return math.inf
    if lower_bounded.size == 0:
        return 0.0
    return float(np.max(np.abs(lower_bounded - lower_unbounded)))
