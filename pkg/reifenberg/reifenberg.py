from __future__ import annotations

import logging
from typing import Any

import click

import reifenberg.pipelines as pipelines
from reifenberg.config import Configuration
from reifenberg.config import merge_nested
from reifenberg.context import RunContext
from reifenberg.decorators import pipeline
from reifenberg.errors import LaboratoryError
from reifenberg.executors import Executor
from reifenberg.utils import parse_assignment
from reifenberg.utils import to_json


def parse_point(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError as ex:
        raise click.BadParameter(f"'{text}' is not a comma separated point") from ex


def parse_target(text: str) -> tuple[list[float], float]:
    """``x,y:r`` -> ([x, y], r)."""
    if ":" not in text:
        raise click.BadParameter(f"Expected 'x,y:r', got '{text}'")
    point, radius = text.rsplit(":", 1)
    try:
        return parse_point(point), float(radius)
    except ValueError as ex:
        raise click.BadParameter(f"'{radius}' is not a radius") from ex


def configure(
    config_file: str | None,
    overrides: dict[str, Any],
    assignments: tuple[str, ...],
) -> None:
    configuration = Configuration.get()
    if config_file:
        configuration.load_file(config_file)
    else:
        configuration.reload()
    values: dict[str, Any] = {k: v for k, v in overrides.items() if v is not None}
    for assignment in assignments:
        merge_nested(values, parse_assignment(assignment))
    if values:
        configuration.override(**values)

    settings = configuration.settings
    level = logging.DEBUG if settings.debug else getattr(logging, settings.log_level)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    Executor.reset()


def certificates_passed(ctx: RunContext) -> bool:
    certificates = ctx.constants.get("certificates", {})
    return all(certificates.values())


def execute(doing: str, runner: pipeline, **kwargs) -> None:
    try:
        ctx = runner.run(**kwargs)
    except LaboratoryError as ex:
        click.echo(f"Error {doing}: {ex.message or ex}", err=True)
        raise SystemExit(1)

    for reference in ctx.outputs:
        click.echo(f"{reference.kind}: {reference.path}")
    click.echo(to_json({k: v for k, v in ctx.constants.items() if k != "config_hash"}))

    if ctx.failed:
        failure = ctx.constants.get("failure", {})
        click.echo(f"Error {doing}: {failure.get('message')}", err=True)
        raise SystemExit(1)
    if not certificates_passed(ctx):
        click.echo(f"Error {doing}: certificates failed", err=True)
        raise SystemExit(1)


@click.group()
@click.option("--config", "config_file", type=click.Path(dir_okay=False), help="Run config TOML")
@click.option("--output", "output_dir", type=str, help="Report bundle directory")
@click.option("--threads", type=int, help="Worker threads")
@click.option("--seed", type=int, help="Root seed")
@click.option("--dimension", type=click.Choice(["2", "3"]), help="Ambient dimension d+1")
@click.option(
    "--domain",
    "domain_kind",
    type=click.Choice(["half_space", "ball", "snowflake"]),
    help="Base domain",
)
@click.option("--set", "assignments", multiple=True, help="Override, e.g. snowflake.theta=0.1")
def cli(
    config_file: str | None,
    output_dir: str | None,
    threads: int | None,
    seed: int | None,
    dimension: str | None,
    domain_kind: str | None,
    assignments: tuple[str, ...],
):
    overrides: dict[str, Any] = {
        "output_dir": output_dir,
        "threads": threads,
        "seed": seed,
        "dimension": int(dimension) if dimension else None,
    }
    if domain_kind:
        overrides["domain"] = {"kind": domain_kind}
    try:
        configure(config_file, overrides, assignments)
    except (LaboratoryError, ValueError) as ex:
        message = ex.message if isinstance(ex, LaboratoryError) else str(ex)
        click.echo(f"Error loading configuration: {message}", err=True)
        raise SystemExit(2)


@cli.command()
@click.option("--theta", type=float, help="Maximal slope of the profile")
@click.option("--depth", type=int, help="Number of generations")
@click.option("--bounded/--unbounded", default=None, help="Cube seed or half-space seed")
def snowflake(theta: float | None, depth: int | None, bounded: bool | None):
    """Build the snowflake generations and export their meshes."""
    values = {"theta": theta, "depth": depth, "bounded": bounded}
    values = {k: v for k, v in values.items() if v is not None}
    if values:
        try:
            Configuration.get().override(snowflake=values)
        except LaboratoryError as ex:
            click.echo(f"Error loading configuration: {ex.message}", err=True)
            raise SystemExit(2)
    execute("building snowflake", pipelines.snowflake_run)


@cli.command()
@click.option("--max-level", type=int, default=8, show_default=True)
@click.option("--samples", type=int, default=1000, show_default=True)
def whitney(max_level: int, samples: int):
    """Whitney decomposition of the base domain with its measured constants."""
    execute("decomposing", pipelines.whitney_run, max_level=max_level, samples=samples)


@cli.command()
def enlarge():
    """Join the base domain with the Whitney balls along E."""
    execute("enlarging", pipelines.enlarge_run)


@cli.command()
@click.option("--enlarged", is_flag=True, help="Certify the enlarged domain")
@click.option("--r0", type=float, help="Largest probed radius")
def flatness(enlarged: bool, r0: float | None):
    """Sampled flatness certificate of the base (or enlarged) domain."""
    execute("certifying flatness", pipelines.flatness_run, enlarged=enlarged, r0=r0)


@cli.command()
@click.option("--target", "targets", multiple=True, help="Target ball as x,y:r")
def wos(targets: tuple[str, ...]):
    """Walk-on-spheres estimates of the harmonic measure of boundary balls."""
    parsed = [parse_target(t) for t in targets]
    execute("estimating harmonic measure", pipelines.wos_run, targets=parsed)


@cli.command()
@click.option("--xi", type=str, help="Boundary point x,y")
@click.option("--law", type=float, help="Use the synthetic law r^law instead of walks")
def dimension(xi: str | None, law: float | None):
    """Log-log slopes of the measure of shrinking balls."""
    point = parse_point(xi) if xi else None
    execute("fitting dimension", pipelines.dimension_run, xi=point, law=law)


@cli.command()
@click.option("--points", type=click.Path(exists=True, dir_okay=False), help="Point file")
@click.option("--koch", type=int, help="Use the Koch curve of this depth")
def boxcount(points: str | None, koch: int | None):
    """Box-counting dimension of a point set, the Koch curve or the base boundary."""
    execute("counting boxes", pipelines.boxcount_run, points=points, koch=koch)


@cli.command()
@click.option("--xi", type=str, help="Centre of the swept balls")
@click.option("--law", type=float, help="Use the synthetic law r^law as mu")
def thm31(xi: str | None, law: float | None):
    """Counting bound for the enlarged boundary against mu."""
    point = parse_point(xi) if xi else None
    execute("verifying counting bound", pipelines.theorem31_run, xi=point, law=law)


@cli.command("pipeline")
def run_pipeline():
    """Snowflake, harmonic measure, candidates, enlargement, certificates."""
    execute("running pipeline", pipelines.full_run)


if __name__ == "__main__":  # pragma: no cover
    cli()
