from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Protocol

import numpy as np
from scipy import stats

from reifenberg.config import Configuration
from reifenberg.domains import DomainRep
from reifenberg.domains import SnowflakeDomain
from reifenberg.enlargement import EnlargedDomain
from reifenberg.errors import MonotonicityFailure
from reifenberg.errors import StepBudgetError
from reifenberg.errors import ZeroMassError
from reifenberg.executors import Executor
from reifenberg.geometry import as_points
from reifenberg.geometry import norm
from reifenberg.utils import dyadic_radii
from reifenberg.utils import random_stream

logger = logging.getLogger(__name__)


def _unit_directions(rng: np.random.Generator, count: int, dimension: int) -> np.ndarray:
    v = rng.standard_normal((count, dimension))
    return v / norm(v)[:, None]


def walk_batch(
    domain: DomainRep,
    starts: np.ndarray,
    tol: float,
    rng: np.random.Generator,
    max_steps: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Walk on spheres from every start until the walk is within ``tol`` of the boundary.

    Each step jumps to a uniform point on the sphere of radius dist_lower(x) around x.
    Returns the nearest boundary points, the step counts and a mask of walks that
    ran out of steps.
    """
    x = as_points(starts, domain.dimension).copy()
    count = x.shape[0]
    exits = np.empty_like(x)
    steps = np.zeros(count, dtype=np.int64)
    active = np.arange(count)
    approximate = domain.covering_radius > 0
    for step in range(max_steps + 1):
        pts = x[active]
        radius = domain.dist_lower(pts)
        done = radius < tol
        if approximate:
            distance, _ = domain.boundary_distance(pts)
            done |= distance < tol
        finished = active[done]
        if finished.size:
            _, nearest = domain.boundary_distance(pts[done])
            exits[finished] = nearest
        steps[finished] = step
        active = active[~done]
        if active.size == 0 or step == max_steps:
            break
        jump = radius[~done][:, None] * _unit_directions(rng, active.size, domain.dimension)
        x[active] = x[active] + jump
    failed = np.zeros(count, dtype=bool)
    failed[active] = True
    steps[active] = max_steps
    exits[active] = np.nan
    return exits, steps, failed


def wos_hit(
    domain: DomainRep,
    start,
    tol: float,
    rng: np.random.Generator,
    max_steps: int | None = None,
) -> np.ndarray:
    max_steps = max_steps or Configuration.get().settings.harmonic.max_steps
    starts = as_points(start, domain.dimension)
    exits, steps, failed = walk_batch(domain, starts, tol, rng, max_steps)
    if failed[0]:
        raise StepBudgetError(1, 1, max_steps)
    logger.debug("Walk from %s exited after %d steps", start, steps[0])
    return exits[0]


def default_tol(domain: DomainRep) -> float:
    settings = Configuration.get().settings.harmonic
    if settings.tol is not None:
        return settings.tol
    scale = domain.diameter if domain.bounded else 1.0
    return settings.tol_fraction * scale


def default_pole(domain: DomainRep) -> np.ndarray:
    pole = Configuration.get().settings.harmonic.pole
    return domain.default_pole() if pole is None else np.asarray(pole, dtype=float)


@dataclass(frozen=True, eq=False)
class ExitSample:
    """Exit points of n walks from a pole; failed walks are dropped."""

    points: np.ndarray
    steps: np.ndarray
    failures: int
    pole: np.ndarray
    seed: int
    tol: float

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def hits(self, center, radius: float) -> np.ndarray:
        return norm(self.points - np.asarray(center, dtype=float)) < radius


def sample_exits(
    domain: DomainRep,
    pole=None,
    n: int | None = None,
    seed: int | None = None,
    tol: float | None = None,
    executor: Executor | None = None,
) -> ExitSample:
    """Run n walks from the pole in fixed-size batches, one random stream per batch."""
    settings = Configuration.get().settings
    config = settings.harmonic
    if isinstance(domain, SnowflakeDomain):
        raise ValueError("Harmonic measure is estimated on the bounded snowflake only")
    pole = default_pole(domain) if pole is None else np.asarray(pole, dtype=float)
    n = n or config.n
    seed = settings.seed if seed is None else seed
    tol = tol or default_tol(domain)
    if not domain.inside(pole)[0]:
        raise ValueError(f"Pole {pole.tolist()} is not inside the domain")
    if not domain.dist_lower(pole)[0] > 0:
        raise ValueError(f"Pole {pole.tolist()} has no positive distance to the boundary")

    batch = config.batch_size
    sizes = [min(batch, n - start) for start in range(0, n, batch)]

    def run(index: int):
        starts = np.broadcast_to(pole, (sizes[index], pole.shape[0]))
        return walk_batch(domain, starts, tol, random_stream(seed, index), config.max_steps)

    executor = executor or Executor.get()
    results = executor.map(run, range(len(sizes)))
    exits = np.concatenate([r[0] for r in results])
    steps = np.concatenate([r[1] for r in results])
    failed = np.concatenate([r[2] for r in results])
    failures = int(failed.sum())
    if failures > config.max_failure_rate * n:
        raise StepBudgetError(failures, n, config.max_steps)
    if failures:
        logger.warning(
            "%d of %d walks exceeded %d steps and were dropped",
            failures,
            n,
            config.max_steps,
        )
    logger.info(
        "%d walks from %s: mean %.1f steps, max %d; bias budget tol %.3g + covering %.3g",
        n,
        pole.tolist(),
        float(steps.mean()),
        int(steps.max()),
        tol,
        domain.covering_radius,
    )
    return ExitSample(exits[~failed], steps[~failed], failures, pole, seed, tol)


@dataclass(frozen=True, eq=False)
class MeasureEstimate:
    xi: np.ndarray
    r: float
    omega_hat: float
    stderr: float
    n: int
    pole: np.ndarray | None = None
    seed: int | None = None

    def to_row(self) -> list:
        return [*self.xi.tolist(), self.r, self.omega_hat, self.stderr, self.n, self.seed]


def estimate_header(dimension: int) -> list[str]:
    return [*(f"xi{i}" for i in range(dimension)), "r", "omega_hat", "stderr", "n", "seed"]


def _estimate(sample: ExitSample, xi, r: float) -> MeasureEstimate:
    xi = np.asarray(xi, dtype=float)
    n = sample.n
    omega = float(np.count_nonzero(sample.hits(xi, r))) / n if n else 0.0
    stderr = math.sqrt(omega * (1 - omega) / n) if n else 0.0
    return MeasureEstimate(xi, float(r), omega, stderr, n, sample.pole, sample.seed)


def estimate_omega(
    domain: DomainRep,
    pole,
    targets: list[tuple],
    n: int | None = None,
    seed: int | None = None,
    tol: float | None = None,
    executor: Executor | None = None,
) -> list[MeasureEstimate]:
    """Score one set of walks against every target ball (xi, r)."""
    sample = sample_exits(domain, pole, n, seed, tol, executor)
    return [_estimate(sample, xi, r) for xi, r in targets]


class MeasureProvider(Protocol):
    def measure(self, center, radius: float) -> tuple[float, float]:  # pragma: no cover
        ...


class HarmonicMeasure:
    """Harmonic measure of balls read off a shared exit sample."""

    def __init__(self, sample: ExitSample):
        self.sample = sample

    @property
    def n(self) -> int:
        return self.sample.n

    def measure(self, center, radius: float) -> tuple[float, float]:
        estimate = _estimate(self.sample, center, radius)
        return estimate.omega_hat, estimate.stderr

    def estimate(self, center, radius: float) -> MeasureEstimate:
        return _estimate(self.sample, center, radius)


class PointMass:
    def __init__(self, point, mass: float = 1.0):
        self.point = np.asarray(point, dtype=float)
        self.mass = mass

    def measure(self, center, radius: float) -> tuple[float, float]:
        gap = float(np.linalg.norm(np.asarray(center, dtype=float) - self.point))
        return (self.mass if gap < radius else 0.0), 0.0


class PowerLaw:
    """Tabulated law mu(B(x, r)) = scale * r^exponent, independent of x."""

    def __init__(self, exponent: float, scale: float = 1.0):
        self.exponent = exponent
        self.scale = scale

    def measure(self, center, radius: float) -> tuple[float, float]:
        return self.scale * radius**self.exponent, 0.0


def profile(provider: MeasureProvider, xi, radii) -> list[MeasureEstimate]:
    xi = np.asarray(xi, dtype=float)
    n = getattr(provider, "n", 0)
    result = []
    for r in radii:
        value, stderr = provider.measure(xi, float(r))
        result.append(MeasureEstimate(xi, float(r), value, stderr, n))
    return result


@dataclass(frozen=True, eq=False)
class DimensionFit:
    xi: np.ndarray
    radii: np.ndarray
    slopes: np.ndarray
    lower_dim: float
    upper_dim: float
    slope_fit: float
    ci: float

    def to_dict(self) -> dict:
        return {
            "xi": self.xi.tolist(),
            "radii": self.radii.tolist(),
            "slopes": self.slopes.tolist(),
            "lower_dim": self.lower_dim,
            "upper_dim": self.upper_dim,
            "slope_fit": self.slope_fit,
            "ci": self.ci,
        }


def dimension_fit(estimates: list[MeasureEstimate]) -> DimensionFit:
    """
    Log-log slopes of the measure of shrinking balls around one point.

    Radii with zero mass are dropped. The lower and upper dimensions are the extreme
    slopes between consecutive radii; slope_fit is the least-squares slope over all
    of them, weighted by the propagated standard errors when these are available.
    """
    settings = Configuration.get().settings.harmonic
    positive = [e for e in estimates if e.omega_hat > 0]
    dropped = len(estimates) - len(positive)
    if dropped:
        logger.info("Excluded %d radii with zero mass", dropped)
    if len(positive) < 4:
        raise ZeroMassError(len(positive))
    positive.sort(key=lambda e: e.r)
    radii = np.asarray([e.r for e in positive])
    values = np.asarray([e.omega_hat for e in positive])
    errors = np.asarray([e.stderr for e in positive])
    x = np.log(radii)
    y = np.log(values)

    slopes = np.diff(y) / np.diff(x)
    if np.any(slopes < 0):
        logger.debug("Negative two-point slopes clipped at zero: %s", slopes[slopes < 0])
    lower = float(max(slopes.min(), 0.0))
    upper = float(max(slopes.max(), 0.0))

    sigma = errors / values
    if np.all(sigma > 0):
        coefficients, covariance = np.polyfit(x, y, 1, w=1 / sigma, cov="unscaled")
        slope, slope_error = float(coefficients[0]), math.sqrt(float(covariance[0, 0]))
    else:
        fit = stats.linregress(x, y)
        slope, slope_error = float(fit.slope), float(fit.stderr)
    fit = DimensionFit(
        positive[0].xi,
        radii,
        slopes,
        lower,
        upper,
        slope,
        settings.confidence_z * slope_error,
    )
    logger.info(
        "Dimension at %s: slope %.4g +- %.2g, range [%.4g, %.4g]",
        fit.xi.tolist(),
        fit.slope_fit,
        fit.ci,
        lower,
        upper,
    )
    return fit


@dataclass(frozen=True, eq=False)
class SingularCandidateSet:
    points: np.ndarray
    alpha: float
    r0: float
    r_min: float
    certificate: np.ndarray
    probes: int

    def __len__(self) -> int:
        return self.points.shape[0]

    def to_dict(self) -> dict:
        return {
            "points": self.points.tolist(),
            "alpha": self.alpha,
            "r0": self.r0,
            "r_min": self.r_min,
            "certificate": self.certificate.tolist(),
            "probes": self.probes,
        }


def smallest_radius(n: int, exponent: float, min_hits: int) -> float:
    """Smallest dyadic r at which n r^exponent still reaches ``min_hits``."""
    r = (min_hits / n) ** (1.0 / exponent)
    return 2.0 ** math.ceil(math.log2(r) - 1e-12)


def select_candidates(
    provider: MeasureProvider,
    probes,
    alpha: float,
    r0: float,
    r_min: float,
    d: int,
    confidence_z: float | None = None,
) -> SingularCandidateSet:
    """Probes whose lower-confidence measure exceeds r^(d - alpha) at every dyadic r."""
    z = confidence_z
    if z is None:
        z = Configuration.get().settings.harmonic.confidence_z
    pts = as_points(probes)
    kept: list[np.ndarray] = []
    certificate: list[float] = []
    radii = dyadic_radii(r0, r_min) if r_min <= r0 else np.empty(0)
    for xi in pts:
        if radii.size == 0:
            break
        ratios = []
        for r in radii:
            value, stderr = provider.measure(xi, float(r))
            ratios.append((value - z * stderr) / r ** (d - alpha))
        worst = float(min(ratios))
        if worst > 1:
            kept.append(xi)
            certificate.append(worst)
    result = SingularCandidateSet(
        np.asarray(kept).reshape(-1, pts.shape[1]),
        alpha,
        r0,
        r_min,
        np.asarray(certificate),
        pts.shape[0],
    )
    if len(result) == 0:
        logger.info("No singular candidates among %d probes (alpha=%g)", pts.shape[0], alpha)
    else:
        logger.info("%d of %d probes are singular candidates", len(result), pts.shape[0])
    return result


def extract_singular_candidates(
    domain: DomainRep,
    pole,
    alpha: float | None = None,
    r0: float | None = None,
    probes=None,
    n: int | None = None,
    seed: int | None = None,
    executor: Executor | None = None,
) -> SingularCandidateSet:
    settings = Configuration.get().settings
    config = settings.harmonic
    d = domain.dimension - 1
    alpha = alpha or config.alpha
    r0 = r0 or config.r0
    n = n or config.n
    if not 0 < alpha < d:
        raise ValueError(f"alpha must lie in (0, {d}), got {alpha}")
    if r0 > min(domain.diameter, 1.0):
        raise ValueError(f"r0 = {r0} exceeds min(diam, 1)")
    sample = sample_exits(domain, pole, n, seed, executor=executor)
    return candidates_from_sample(sample, d, alpha, r0, probes)


def candidates_from_sample(
    sample: ExitSample,
    d: int,
    alpha: float,
    r0: float,
    probes=None,
) -> SingularCandidateSet:
    """Singular set test on an existing exit sample; probes default to a subset of its exits."""
    config = Configuration.get().settings.harmonic
    if probes is None:
        rng = random_stream(sample.seed, 1 << 32)
        picks = rng.choice(sample.n, size=min(config.n_probes, sample.n), replace=False)
        probes = sample.points[np.sort(picks)]
    r_min = smallest_radius(sample.n, d - alpha, config.min_hits)
    return select_candidates(HarmonicMeasure(sample), probes, alpha, r0, r_min, d)


@dataclass(frozen=True, eq=False)
class MonotonicityReport:
    rows: list[dict]

    @property
    def passed(self) -> bool:
        return all(row["ok"] for row in self.rows)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "sets": self.rows}


def monotonicity_check(
    domain: DomainRep,
    enlarged: EnlargedDomain | DomainRep,
    pole,
    sets: list[list[tuple]],
    n: int | None = None,
    seed: int | None = None,
    executor: Executor | None = None,
) -> MonotonicityReport:
    """
    Compare the measure of shared boundary sets (unions of balls) in a domain and in
    an enlargement of it, from independent walks: the enlargement must not lose mass
    beyond the combined confidence band.
    """
    settings = Configuration.get().settings
    seed = settings.seed if seed is None else seed
    z = settings.harmonic.confidence_z
    larger = enlarged.rep if isinstance(enlarged, EnlargedDomain) else enlarged
    base = sample_exits(domain, pole, n, seed, executor=executor)
    plus = sample_exits(larger, pole, n, seed + 1, executor=executor)

    rows = []
    offending = []
    for index, balls in enumerate(sets):
        values = []
        for sample in (base, plus):
            hit = np.zeros(sample.n, dtype=bool)
            for center, radius in balls:
                hit |= sample.hits(center, radius)
            omega = float(hit.mean()) if sample.n else 0.0
            values.append((omega, math.sqrt(omega * (1 - omega) / max(sample.n, 1))))
        (omega, s), (omega_plus, s_plus) = values
        band = z * math.hypot(s, s_plus)
        ok = omega_plus >= omega - band
        rows.append(
            {"set": index, "omega": omega, "omega_plus": omega_plus, "band": band, "ok": ok},
        )
        if not ok:
            offending.append(index)
    if offending:
        raise MonotonicityFailure(offending)
    logger.info("Monotonicity holds on %d sets", len(rows))
    return MonotonicityReport(rows)


def harmonic_disk_arc(pole, a: float, b: float) -> float:
    """Harmonic measure at ``pole`` of the arc of the unit circle between angles a < b."""
    z = complex(*np.asarray(pole, dtype=float))
    subtended = np.angle((np.exp(1j * b) - z) / (np.exp(1j * a) - z)) % (2 * math.pi)
    return float(subtended / math.pi - (b - a) / (2 * math.pi))


def arc_half_angle(r: float, radius: float = 1.0) -> float:
    """Half-angle of the arc a ball of radius r centred on the circle cuts out."""
    return 2 * math.asin(min(r / (2 * radius), 1.0))


def poisson_halfplane_cdf(x, height: float = 1.0):
    """Exit-coordinate distribution of the upper half-plane from the pole (0, height)."""
    return 0.5 + np.arctan(np.asarray(x, dtype=float) / height) / math.pi
