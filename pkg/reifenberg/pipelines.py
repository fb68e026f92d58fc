from __future__ import annotations

import logging
import math
from pathlib import Path

import numpy as np

from reifenberg.config import Configuration
from reifenberg.context import RunContext
from reifenberg.decorators import pipeline
from reifenberg.decorators import stage
from reifenberg.domains import BallDomain
from reifenberg.domains import DomainRep
from reifenberg.domains import HalfSpace
from reifenberg.domains import MeshDomain
from reifenberg.encoders import read_points
from reifenberg.encoders import write_csv
from reifenberg.encoders import write_json
from reifenberg.encoders import write_lines
from reifenberg.encoders import write_off
from reifenberg.encoders import write_plot_data
from reifenberg.encoders import write_points
from reifenberg.enlargement import EnlargedDomain
from reifenberg.enlargement import PatchReport
from reifenberg.enlargement import build_patch
from reifenberg.enlargement import enlarge
from reifenberg.enlargement import verify_lemma23
from reifenberg.flatness import Certification
from reifenberg.flatness import certify_domain
from reifenberg.flatness import report_header
from reifenberg.geometry import Ball
from reifenberg.geometry import as_points
from reifenberg.harmonic import ExitSample
from reifenberg.harmonic import HarmonicMeasure
from reifenberg.harmonic import MeasureProvider
from reifenberg.harmonic import PowerLaw
from reifenberg.harmonic import SingularCandidateSet
from reifenberg.harmonic import candidates_from_sample
from reifenberg.harmonic import default_pole
from reifenberg.harmonic import dimension_fit
from reifenberg.harmonic import estimate_header
from reifenberg.harmonic import estimate_omega
from reifenberg.harmonic import monotonicity_check
from reifenberg.harmonic import profile
from reifenberg.harmonic import sample_exits
from reifenberg.measure import box_count
from reifenberg.measure import koch_curve
from reifenberg.measure import polyline_samples
from reifenberg.measure import theorem31_verify
from reifenberg.measure import verify_lower_bound
from reifenberg.output_storage import OutputStorage
from reifenberg.snowflake import BlipConfig
from reifenberg.snowflake import SnowflakeGeneration
from reifenberg.snowflake import build_snowflake
from reifenberg.snowflake import increment_ratios
from reifenberg.whitney import DyadicBox
from reifenberg.whitney import WhitneyConfig
from reifenberg.whitney import WhitneyDecomposition
from reifenberg.whitney import decompose
from reifenberg.whitney import enclosing_box
from reifenberg.whitney import verify_properties

logger = logging.getLogger(__name__)

GRAPH_PATCHES = 8


def emit(ctx: RunContext, storage: OutputStorage, kind: str, name: str, writer) -> None:
    ctx.record(storage.write(kind, name, writer))


def radii_from_levels(levels) -> np.ndarray:
    return 2.0 ** -np.asarray(sorted(levels), dtype=float)


def domain_box(domain: DomainRep) -> DyadicBox:
    """Dyadic cubes around the bounded domain, or around the unit window of an unbounded one."""
    D = domain.dimension
    if domain.bounded:
        points = domain.sample_boundary(domain.diameter / 64)
        return enclosing_box(points.min(axis=0), points.max(axis=0))
    lower = -np.ones(D)
    lower[-1] = 0.0
    upper = np.ones(D)
    upper[-1] = 2.0
    return enclosing_box(lower, upper)


def nearest_boundary_point(domain: DomainRep, pole: np.ndarray) -> np.ndarray:
    _, nearest = domain.boundary_distance(pole)
    return nearest[0]


@stage.with_options(name="build_snowflake", cache=True)
def snowflake_stage() -> list[SnowflakeGeneration]:
    settings = Configuration.get().settings
    cfg = BlipConfig.from_settings(settings.snowflake, settings.dimension)
    return build_snowflake(cfg, settings.snowflake.bounded, settings.snowflake.depth)


@stage.with_options(name="base_domain")
def domain_stage() -> DomainRep:
    settings = Configuration.get().settings
    kind = settings.domain.kind
    if kind == "half_space":
        return HalfSpace(settings.dimension)
    if kind == "ball":
        return BallDomain(np.zeros(settings.dimension), settings.domain.radius)
    return snowflake_stage()[-1].domain


@stage.with_options(name="whitney")
def whitney_stage(domain: DomainRep, K: float, max_level: int | None) -> WhitneyDecomposition:
    return decompose(domain, WhitneyConfig(K, domain.r0, domain_box(domain), max_level))


@stage.with_options(name="harmonic_sample")
def exits_stage(domain: DomainRep, pole: np.ndarray) -> ExitSample:
    return sample_exits(domain, pole)


@stage.with_options(name="singular_candidates")
def candidates_stage(sample: ExitSample, d: int) -> SingularCandidateSet:
    settings = Configuration.get().settings.harmonic
    return candidates_from_sample(sample, d, settings.alpha, settings.r0)


@stage.with_options(name="enlarge")
def enlarge_stage(domain: DomainRep, E: np.ndarray, strict: bool) -> EnlargedDomain:
    return enlarge(domain, E, strict=strict)


@stage.with_options(name="certify_flatness")
def certify_stage(domain: DomainRep, r0: float | None = None) -> Certification:
    return certify_domain(domain, r0=r0)


@stage.with_options(name="graph_patches")
def patches_stage(enlarged: EnlargedDomain, count: int = GRAPH_PATCHES) -> list[PatchReport]:
    order = np.argsort(-enlarged.balls.radii, kind="stable")[:count]
    return [verify_lemma23(enlarged, build_patch(enlarged, int(q))) for q in order]


@stage.with_options(name="counting_bound")
def counting_stage(enlarged: EnlargedDomain, mu: MeasureProvider, xi: np.ndarray, radii):
    settings = Configuration.get().settings.measure
    return theorem31_verify(enlarged, mu, xi, radii, settings.alpha, settings.c_mu)


@stage.with_options(name="monotonicity")
def monotonicity_stage(domain: DomainRep, enlarged: EnlargedDomain, pole: np.ndarray, sets):
    return monotonicity_check(domain, enlarged, pole, sets)


def _strict_enlargement() -> bool:
    settings = Configuration.get().settings
    return settings.enlargement.strict and settings.domain.kind != "snowflake"


def _e_points(settings) -> np.ndarray | None:
    if settings.enlargement.e_points:
        return as_points(settings.enlargement.e_points, settings.dimension)
    return None


def _write_generation(ctx: RunContext, storage: OutputStorage, g: SnowflakeGeneration) -> None:
    D = g.dimension
    cube_header = [
        *(f"c{i}" for i in range(D)),
        "side",
        *(f"f{j}_{i}" for j in range(D - 1) for i in range(D)),
        *(f"n{i}" for i in range(D)),
        "distinguished",
    ]
    edge_header = [f"p{j}_{i}" for j in range(D - 1) for i in range(D)]
    edges = g.edges.reshape(g.edges.shape[0], len(edge_header))
    mesh_name = f"snowflake/generation_{g.index}.off"
    emit(ctx, storage, "mesh", mesh_name, lambda p: write_off(g.mesh, p))
    emit(
        ctx,
        storage,
        "cubes",
        f"snowflake/G_{g.index}.csv",
        lambda p: write_csv(p, cube_header, g.cubes.to_rows()),
    )
    emit(
        ctx,
        storage,
        "edges",
        f"snowflake/E_{g.index}.csv",
        lambda p: write_csv(p, edge_header, edges.tolist()),
    )


@pipeline.with_options(name="snowflake")
def snowflake_run(ctx: RunContext, storage: OutputStorage) -> list[SnowflakeGeneration]:
    settings = Configuration.get().settings
    generations = snowflake_stage()
    for g in generations:
        _write_generation(ctx, storage, g)

    cfg = generations[0].config
    config = {**cfg.to_dict(), "bounded": settings.snowflake.bounded, "seed": settings.seed}
    emit(ctx, storage, "config", "snowflake/config.json", lambda p: write_json(p, config))
    index = [g.index for g in generations]
    measures = [g.measure for g in generations]
    emit(
        ctx,
        storage,
        "plot",
        "snowflake/area.dat",
        lambda p: write_plot_data(p, np.asarray(index) + 1, measures, "generation+1 area"),
    )
    ctx.measured("N", cfg.N)
    ctx.measured("measures", measures)
    ctx.measured("increment_ratios", increment_ratios(generations))
    return generations


@pipeline.with_options(name="whitney")
def whitney_run(
    ctx: RunContext,
    storage: OutputStorage,
    max_level: int | None = None,
    samples: int = 1000,
) -> WhitneyDecomposition:
    settings = Configuration.get().settings
    domain = domain_stage()
    W = whitney_stage(domain, settings.whitney.K, max_level)
    report = verify_properties(W, samples, settings.seed)
    levels, counts = np.unique([q.level for q in W.cubes], return_counts=True)

    emit(ctx, storage, "cubes", "whitney/cubes.txt", lambda p: write_lines(p, W.to_lines()))
    emit(ctx, storage, "report", "whitney/report.json", lambda p: write_json(p, report))
    emit(
        ctx,
        storage,
        "plot",
        "whitney/levels.dat",
        lambda p: write_plot_data(p, 2.0**levels, counts, "1/side count"),
    )
    ctx.measured("cubes", len(W))
    ctx.measured("truncated", W.truncated)
    ctx.measured("whitney", report.to_dict())
    return W


def _write_enlarged(ctx: RunContext, storage: OutputStorage, enlarged: EnlargedDomain) -> None:
    D = enlarged.rep.dimension
    ball_header = ["level", *(f"k{i}" for i in range(D)), *(f"z{i}" for i in range(D)), "r"]
    e_header = [f"x{i}" for i in range(D)]
    if isinstance(enlarged.base, MeshDomain):
        mesh = enlarged.base.mesh
        emit(ctx, storage, "mesh", "enlarge/base.off", lambda p: write_off(mesh, p))
    emit(
        ctx,
        storage,
        "balls",
        "enlarge/balls.csv",
        lambda p: write_csv(p, ball_header, enlarged.ball_rows()),
    )
    emit(
        ctx,
        storage,
        "points",
        "enlarge/E.csv",
        lambda p: write_csv(p, e_header, enlarged.e_rows()),
    )
    emit(ctx, storage, "report", "enlarge/summary.json", lambda p: write_json(p, enlarged))
    ctx.measured("balls", len(enlarged.balls))
    ctx.measured("c_low", enlarged.balls.c_low)
    ctx.measured("c_high", enlarged.balls.c_high)


def _write_patches(ctx: RunContext, storage: OutputStorage, reports: list[PatchReport]) -> bool:
    emit(ctx, storage, "report", "enlarge/patches.json", lambda p: write_json(p, reports))
    if reports:
        ctx.measured("c2", max(r.c2_measured for r in reports))
        ctx.measured("c3", max(r.c3_measured for r in reports))
        ctx.measured("lip_ratio", max(r.lip_ratio for r in reports))
    return all(r.passed for r in reports)


def _write_certification(
    ctx: RunContext,
    storage: OutputStorage,
    cert: Certification,
    prefix: str,
) -> bool:
    D = cert.worst.dimension
    rows = [r.to_row() for r in cert.reports]
    emit(
        ctx,
        storage,
        "flatness",
        f"{prefix}/reports.csv",
        lambda p: write_csv(p, report_header(D), rows),
    )
    emit(ctx, storage, "report", f"{prefix}/certification.json", lambda p: write_json(p, cert))
    ctx.measured("delta_sup", cert.delta_sup)
    return all(r.separation_ok for r in cert.reports)


@pipeline.with_options(name="enlarge")
def enlarge_run(ctx: RunContext, storage: OutputStorage) -> EnlargedDomain:
    settings = Configuration.get().settings
    domain = domain_stage()
    E = _e_points(settings)
    if E is None:
        sample = exits_stage(domain, default_pole(domain))
        E = candidates_stage(sample, domain.dimension - 1).points
    enlarged = enlarge_stage(domain, E, _strict_enlargement())
    _write_enlarged(ctx, storage, enlarged)
    passed = _write_patches(ctx, storage, patches_stage(enlarged))
    ctx.measured("certificates", {"graph_patches": passed})
    return enlarged


@pipeline.with_options(name="flatness")
def flatness_run(
    ctx: RunContext,
    storage: OutputStorage,
    enlarged: bool = False,
    r0: float | None = None,
) -> Certification:
    settings = Configuration.get().settings
    domain = domain_stage()
    target = domain
    if enlarged:
        E = _e_points(settings)
        if E is None:
            raise ValueError("Certifying the enlarged domain needs enlargement.e_points")
        target = enlarge_stage(domain, E, _strict_enlargement()).rep
        ctx.measured("epsilon", settings.enlargement.epsilon)
    cert = certify_stage(target, r0)
    separated = _write_certification(ctx, storage, cert, "flatness")
    ctx.measured("certificates", {"separation": separated})
    return cert


@pipeline.with_options(name="wos")
def wos_run(
    ctx: RunContext,
    storage: OutputStorage,
    targets: list[tuple] | None = None,
) -> list:
    settings = Configuration.get().settings
    domain = domain_stage()
    pole = default_pole(domain)
    if not targets:
        targets = [(nearest_boundary_point(domain, pole), settings.harmonic.r0)]
    estimates = estimate_omega(domain, pole, targets)
    rows = [e.to_row() for e in estimates]
    emit(
        ctx,
        storage,
        "estimates",
        "wos/estimates.csv",
        lambda p: write_csv(p, estimate_header(domain.dimension), rows),
    )
    ctx.measured("walks", estimates[0].n if estimates else 0)
    return estimates


@pipeline.with_options(name="dimension")
def dimension_run(
    ctx: RunContext,
    storage: OutputStorage,
    xi=None,
    law: float | None = None,
):
    settings = Configuration.get().settings
    radii = radii_from_levels(settings.measure.radius_levels)
    if law is not None:
        provider: MeasureProvider = PowerLaw(law)
        xi = np.zeros(settings.dimension) if xi is None else np.asarray(xi, dtype=float)
        D = settings.dimension
    else:
        domain = domain_stage()
        pole = default_pole(domain)
        provider = HarmonicMeasure(exits_stage(domain, pole))
        xi = nearest_boundary_point(domain, pole) if xi is None else np.asarray(xi, dtype=float)
        D = domain.dimension
    estimates = profile(provider, xi, radii)
    fit = dimension_fit(estimates)
    rows = [e.to_row() for e in estimates]
    emit(
        ctx,
        storage,
        "estimates",
        "dimension/estimates.csv",
        lambda p: write_csv(p, estimate_header(D), rows),
    )
    emit(ctx, storage, "report", "dimension/fit.json", lambda p: write_json(p, fit))
    emit(
        ctx,
        storage,
        "plot",
        "dimension/loglog.dat",
        lambda p: write_plot_data(p, radii, [e.omega_hat for e in estimates], "r omega"),
    )
    ctx.measured("slope_fit", fit.slope_fit)
    return fit


@pipeline.with_options(name="boxcount")
def boxcount_run(
    ctx: RunContext,
    storage: OutputStorage,
    points: str | None = None,
    koch: int | None = None,
):
    settings = Configuration.get().settings
    scales = radii_from_levels(settings.measure.radius_levels)
    if koch is not None:
        # triadic sides follow the curve's own self-similarity
        scales = 3.0 ** -np.arange(2, max(koch - 1, 4))
    spacing = float(scales.min()) / 8
    covering = None
    if koch is not None:
        sample = polyline_samples(koch_curve(koch), spacing)
        covering = spacing / 2
    elif points is not None:
        sample = read_points(Path(points))
    else:
        domain = domain_stage()
        if domain.bounded:
            sample = domain.sample_boundary(spacing)
        else:
            sample = domain.sample_boundary(spacing, Ball(np.zeros(domain.dimension), 1.0))
        covering = spacing
    result = box_count(sample, scales, covering_radius=covering)
    emit(
        ctx,
        storage,
        "counts",
        "boxcount/counts.csv",
        lambda p: write_csv(p, ["scale", "count", "hd_estimate"], result.to_rows()),
    )
    emit(ctx, storage, "report", "boxcount/fit.json", lambda p: write_json(p, result))
    emit(
        ctx,
        storage,
        "plot",
        "boxcount/loglog.dat",
        lambda p: write_plot_data(p, 1 / result.scales, result.counts, "1/s N(s)"),
    )
    ctx.measured("dim_fit", result.dim_fit)
    return result


def _counting_bound(
    ctx: RunContext,
    storage: OutputStorage,
    enlarged: EnlargedDomain,
    mu: MeasureProvider,
    xi: np.ndarray,
) -> bool | None:
    """Verify the counting bound when mu satisfies the mass lower bound on E; None otherwise."""
    settings = Configuration.get().settings.measure
    radii = radii_from_levels(settings.radius_levels)
    d = enlarged.rep.dimension - 1
    r0 = 2 * float(radii.max())
    cert = verify_lower_bound(mu, enlarged.E, settings.alpha, settings.c_mu, r0, radii, d)
    ctx.measured("mass_lower_bound", cert.to_dict())
    if not cert.passed:
        logger.warning(
            "Mass lower bound fails on E (worst ratio %.4g); counting bound not verified",
            cert.worst_ratio,
        )
        return None
    reports = counting_stage(enlarged, mu, xi, radii)
    emit(ctx, storage, "report", "thm31/reports.json", lambda p: write_json(p, reports))
    emit(
        ctx,
        storage,
        "plot",
        "thm31/ratio.dat",
        lambda p: write_plot_data(p, [r.r for r in reports], [r.ratio for r in reports], "r ratio"),
    )
    ctx.measured("C", max(r.C for r in reports))
    ctx.measured("N1", max(r.overlap for r in reports))
    return all(math.isfinite(r.ratio) for r in reports)


@pipeline.with_options(name="thm31")
def theorem31_run(ctx: RunContext, storage: OutputStorage, xi=None, law: float | None = None):
    settings = Configuration.get().settings
    domain = domain_stage()
    E = _e_points(settings)
    sample = None
    if E is None or law is None:
        sample = exits_stage(domain, default_pole(domain))
    if E is None:
        E = candidates_stage(sample, domain.dimension - 1).points
    enlarged = enlarge_stage(domain, E, _strict_enlargement())
    mu = PowerLaw(law) if law is not None else HarmonicMeasure(sample)
    xi = enlarged.E[0] if xi is None else np.asarray(xi, dtype=float)
    verified = _counting_bound(ctx, storage, enlarged, mu, xi)
    if verified is None:
        raise ValueError("mu does not satisfy the mass lower bound on E")
    ctx.measured("certificates", {"counting_bound": verified})
    return enlarged


@pipeline.with_options(name="pipeline")
def full_run(ctx: RunContext, storage: OutputStorage):
    """Base domain, harmonic measure, candidates, enlargement, flatness, counting bound."""
    settings = Configuration.get().settings
    certificates: dict[str, bool] = {}
    ctx.measured("certificates", certificates)

    domain = domain_stage()
    if isinstance(domain, MeshDomain):
        mesh = domain.mesh
        emit(ctx, storage, "mesh", "pipeline/base.off", lambda p: write_off(mesh, p))
    pole = default_pole(domain)
    sample = exits_stage(domain, pole)
    candidates = candidates_stage(sample, domain.dimension - 1)
    emit(ctx, storage, "report", "pipeline/candidates.json", lambda p: write_json(p, candidates))
    ctx.measured("candidates", len(candidates))

    E = _e_points(settings)
    if E is None:
        E = candidates.points
    if E.shape[0] == 0:
        logger.info("No singular candidates and no configured E; stopping after the estimate")
        return candidates
    emit(ctx, storage, "points", "pipeline/E.txt", lambda p: write_points(p, E))

    enlarged = enlarge_stage(domain, E, _strict_enlargement())
    _write_enlarged(ctx, storage, enlarged)

    cert = certify_stage(enlarged.rep)
    certificates["separation"] = _write_certification(ctx, storage, cert, "pipeline/flatness")
    ctx.measured("delta_over_sqrt_eps", cert.delta_sup / math.sqrt(enlarged.epsilon))

    certificates["graph_patches"] = _write_patches(ctx, storage, patches_stage(enlarged))

    verified = _counting_bound(ctx, storage, enlarged, HarmonicMeasure(sample), enlarged.E[0])
    if verified is not None:
        certificates["counting_bound"] = verified

    reach = settings.harmonic.r0 / 4
    sets = [[(e, reach)] for e in enlarged.E[:4]]
    sets.append([(e, reach) for e in enlarged.E])
    report = monotonicity_stage(domain, enlarged, pole, sets)
    emit(ctx, storage, "report", "pipeline/monotonicity.json", lambda p: write_json(p, report))
    certificates["monotonicity"] = report.passed
    return enlarged
