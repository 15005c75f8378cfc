import click

from cartan_kill.commands.common import build_config, geometry_options, handle_errors, parse_grid, run_options
from cartan_kill.config import settings
from cartan_kill.services import analysis_service
from cartan_kill.utils import report_writer


@click.command("strata")
@geometry_options
@click.option("--grid", "axes", multiple=True, required=True, help="lo:hi:steps, one per base axis")
@click.option("--m", "m", type=int, default=2, show_default=True, help="Jet order of the classification")
@click.option("--workers", type=int, default=lambda: settings.WORKERS, show_default="CARTAN_WORKERS")
@click.option(
    "--format",
    "fmt",
    type=click.Choice(["json", "csv"]),
    default="json",
    show_default=True,
    help="Standard output format; --out always writes both",
)
@run_options
@handle_errors
def strata(geometry, metric_file, axes, m, workers, fmt, tol_ode, tol_rank, seed, out):
    """k-level sets of the base over a grid"""
    config = build_config(
        "strata",
        geometry=geometry,
        metric_file=metric_file,
        grid=parse_grid(axes),
        m=m,
        workers=workers,
        format=fmt,
        tol_ode=tol_ode,
        tol_rank=tol_rank,
        seed=seed,
        out=out,
    )
    analysis_service.apply_overrides(config)
    report = analysis_service.strata_report(config)
    passed = all(s.error is None for s in report.samples)
    if out:
        for path in analysis_service.write_strata(report, config, out):
            click.echo(f"Report written to {path}", err=True)
    elif fmt == "csv":
        click.echo(analysis_service.strata_csv(report), nl=False)
    else:
        payload = analysis_service.envelope(config, report.model_dump(mode="json"), passed)
        click.echo(report_writer.dumps(payload), nl=False)
