from __future__ import annotations

import math
from abc import ABC
from abc import abstractmethod

import numpy as np

from reifenberg.geometry import Ball
from reifenberg.geometry import BoundaryMesh
from reifenberg.geometry import Hyperplane
from reifenberg.geometry import as_points
from reifenberg.geometry import dot
from reifenberg.geometry import norm


class DomainRep(ABC):
    """An open set given by an inside predicate, boundary distances and a boundary sampler."""

    mesh: BoundaryMesh | None = None

    def __init__(self, dimension: int, r0: float = math.inf):
        self._dimension = dimension
        self._r0 = r0

    @property
    def dimension(self) -> int:
        return self._dimension

    @property
    def r0(self) -> float:
        return self._r0

    @property
    def diameter(self) -> float:
        return math.inf

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.diameter)

    @property
    def covering_radius(self) -> float:
        """Slack of boundary_distance against the true boundary; zero when exact."""
        return 0.0

    @abstractmethod
    def inside(self, points) -> np.ndarray:  # pragma: no cover
        raise NotImplementedError()

    @abstractmethod
    def boundary_distance(self, points) -> tuple[np.ndarray, np.ndarray]:  # pragma: no cover
        """Exact distance to the boundary and the nearest boundary point."""
        raise NotImplementedError()

    @abstractmethod
    def sample_boundary(
        self,
        spacing: float,
        ball: Ball | None = None,
    ) -> np.ndarray:  # pragma: no cover
        raise NotImplementedError()

    @abstractmethod
    def default_pole(self) -> np.ndarray:  # pragma: no cover
        raise NotImplementedError()

    def dist_lower(self, points) -> np.ndarray:
        """Lower bound on the distance to the complement; zero outside."""
        pts = as_points(points, self.dimension)
        d, _ = self.boundary_distance(pts)
        return np.where(self.inside(pts), d, 0.0)


def distance_to_boundary(p, rep: DomainRep):
    pts = np.asarray(p, dtype=float)
    d, _ = rep.boundary_distance(as_points(pts, rep.dimension))
    return float(d[0]) if pts.ndim == 1 else d


class HalfSpace(DomainRep):
    """{x : x_D > 0}."""

    def __init__(self, dimension: int):
        super().__init__(dimension)
        normal = np.zeros(dimension)
        normal[-1] = 1.0
        self.plane = Hyperplane(np.zeros(dimension), normal)

    def inside(self, points) -> np.ndarray:
        return as_points(points, self.dimension)[:, -1] > 0

    def boundary_distance(self, points) -> tuple[np.ndarray, np.ndarray]:
        pts = as_points(points, self.dimension)
        nearest = pts.copy()
        nearest[:, -1] = 0.0
        return np.abs(pts[:, -1]), nearest

    def dist_lower(self, points) -> np.ndarray:
        return np.maximum(as_points(points, self.dimension)[:, -1], 0.0)

    def sample_boundary(self, spacing: float, ball: Ball | None = None) -> np.ndarray:
        if ball is None:
            raise ValueError("The boundary of a half-space can only be sampled inside a ball")
        return self.plane.sample_in_ball(ball, spacing)

    def default_pole(self) -> np.ndarray:
        return self.plane.normal.copy()


class BallDomain(DomainRep):
    def __init__(self, center, radius: float):
        center = np.asarray(center, dtype=float)
        super().__init__(center.shape[0], r0=radius)
        self.center = center
        self.radius = float(radius)

    @property
    def diameter(self) -> float:
        return 2 * self.radius

    def inside(self, points) -> np.ndarray:
        return norm(as_points(points, self.dimension) - self.center) < self.radius

    def boundary_distance(self, points) -> tuple[np.ndarray, np.ndarray]:
        offset = as_points(points, self.dimension) - self.center
        length = norm(offset)
        direction = np.zeros_like(offset)
        direction[:, 0] = 1.0
        np.divide(offset, length[:, None], out=direction, where=length[:, None] > 0)
        return np.abs(length - self.radius), self.center + self.radius * direction

    def dist_lower(self, points) -> np.ndarray:
        return np.maximum(self.radius - norm(as_points(points, self.dimension) - self.center), 0.0)

    def sample_boundary(self, spacing: float, ball: Ball | None = None) -> np.ndarray:
        if self.dimension == 2:
            count = max(int(math.ceil(2 * math.pi * self.radius / spacing)), 8)
            angles = 2 * math.pi * (np.arange(count) + 0.5) / count
            points = self.center + self.radius * np.column_stack([np.cos(angles), np.sin(angles)])
        else:
            count = max(int(math.ceil(4 * math.pi * self.radius**2 / spacing**2)), 32)
            k = np.arange(count) + 0.5
            z = 1 - 2 * k / count
            phi = math.pi * (1 + math.sqrt(5)) * k
            rho = np.sqrt(1 - z * z)
            points = self.center + self.radius * np.column_stack(
                [rho * np.cos(phi), rho * np.sin(phi), z],
            )
        return points if ball is None else points[ball.contains(points)]

    def default_pole(self) -> np.ndarray:
        return self.center.copy()


def winding_numbers(points: np.ndarray, mesh: BoundaryMesh, budget: int = 4_000_000) -> np.ndarray:
    """Generalised winding number of a closed oriented mesh around each point."""
    pts = as_points(points, mesh.dimension)
    result = np.empty(pts.shape[0])
    step = max(budget // max(mesh.face_count, 1), 1)
    s = mesh.simplices
    for start in range(0, pts.shape[0], step):
        chunk = pts[start : start + step, None, :]
        if mesh.dimension == 2:
            a = s[None, :, 0, :] - chunk
            b = s[None, :, 1, :] - chunk
            cross = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
            angles = np.arctan2(cross, dot(a, b))
            result[start : start + step] = angles.sum(axis=1) / (2 * math.pi)
        else:
            a = s[None, :, 0, :] - chunk
            b = s[None, :, 1, :] - chunk
            c = s[None, :, 2, :] - chunk
            la, lb, lc = norm(a), norm(b), norm(c)
            numerator = dot(a, np.cross(b, c))
            denominator = la * lb * lc + dot(a, b) * lc + dot(a, c) * lb + dot(b, c) * la
            solid = 2 * np.arctan2(numerator, denominator)
            result[start : start + step] = solid.sum(axis=1) / (4 * math.pi)
    return result


class MeshDomain(DomainRep):
    """Interior of a closed, outward-oriented boundary mesh."""

    def __init__(self, mesh: BoundaryMesh, r0: float = math.inf, pole=None):
        super().__init__(mesh.dimension, r0)
        self.mesh = mesh
        lower = mesh.vertices.min(axis=0)
        upper = mesh.vertices.max(axis=0)
        self._diameter = float(np.linalg.norm(upper - lower))
        self._scale = max(self._diameter, 1e-300)
        self._pole = None if pole is None else np.asarray(pole, dtype=float)

    @property
    def diameter(self) -> float:
        return self._diameter

    def inside(self, points) -> np.ndarray:
        pts = as_points(points, self.dimension)
        nearest = self.mesh.index.query(pts)
        side = dot(pts - nearest.point, self.mesh.normals[nearest.face])
        decided = nearest.interior & (np.abs(side) > 1e-12 * self._scale)
        result = decided & (side < 0)
        pending = np.flatnonzero(~decided & (nearest.distance > 0))
        if pending.size:
            result[pending] = winding_numbers(pts[pending], self.mesh) > 0.5
        return result

    def boundary_distance(self, points) -> tuple[np.ndarray, np.ndarray]:
        nearest = self.mesh.index.query(as_points(points, self.dimension))
        return nearest.distance, nearest.point

    def sample_boundary(self, spacing: float, ball: Ball | None = None) -> np.ndarray:
        if ball is None:
            return self.mesh.sample(spacing)
        return self.mesh.sample_in_ball(spacing, ball)

    def default_pole(self) -> np.ndarray:
        if self._pole is not None:
            return self._pole.copy()
        return self.mesh.vertices.mean(axis=0)


class SnowflakeDomain(DomainRep):
    """
    Upper half-space whose boundary is replaced by a mesh inside a working box.

    ``closure`` is a closed mesh bounding the part of the domain inside the region
    {|x_D| <= height (1 - 2 |x'|_inf)} over the unit face; everywhere else the
    domain is x_D > 0. The boundary mesh covers [-h, h]^d and the flat plane
    continues outside.
    """

    def __init__(
        self,
        mesh: BoundaryMesh,
        closure: BoundaryMesh,
        height: float,
        half_width: float = 4.0,
    ):
        super().__init__(mesh.dimension)
        self.mesh = mesh
        self.height = float(height)
        self.half_width = float(half_width)
        self._closure = MeshDomain(closure)

    def in_region(self, points) -> np.ndarray:
        pts = as_points(points, self.dimension)
        sup = np.max(np.abs(pts[:, :-1]), axis=1)
        return np.abs(pts[:, -1]) <= self.height * (1 - 2 * sup) + 1e-12

    def inside(self, points) -> np.ndarray:
        pts = as_points(points, self.dimension)
        result = pts[:, -1] > 0
        region = np.flatnonzero(self.in_region(pts))
        if region.size:
            result[region] = self._closure.inside(pts[region])
        return result

    def _outer_plane(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        horizontal = pts[:, :-1]
        gap = self.half_width - np.abs(horizontal)
        nearest = pts.copy()
        nearest[:, -1] = 0.0
        inner = np.all(gap > 0, axis=1)
        axis = np.argmin(gap, axis=1)
        rows = np.flatnonzero(inner)
        nearest[rows, axis[rows]] = np.copysign(self.half_width, horizontal[rows, axis[rows]])
        return norm(pts - nearest), nearest

    def boundary_distance(self, points) -> tuple[np.ndarray, np.ndarray]:
        pts = as_points(points, self.dimension)
        nearest = self.mesh.index.query(pts)
        plane_distance, plane_point = self._outer_plane(pts)
        use_plane = plane_distance < nearest.distance
        distance = np.where(use_plane, plane_distance, nearest.distance)
        point = np.where(use_plane[:, None], plane_point, nearest.point)
        return distance, point

    def sample_boundary(self, spacing: float, ball: Ball | None = None) -> np.ndarray:
        if ball is None:
            return self.mesh.sample(spacing)
        points = self.mesh.sample_in_ball(spacing, ball)
        normal = np.zeros(self.dimension)
        normal[-1] = 1.0
        flat = Hyperplane(np.zeros(self.dimension), normal).sample_in_ball(ball, spacing)
        outside = np.any(np.abs(flat[:, :-1]) > self.half_width, axis=1)
        return np.vstack([points, flat[outside]])

    def default_pole(self) -> np.ndarray:
        pole = np.zeros(self.dimension)
        pole[-1] = 1.0
        return pole
