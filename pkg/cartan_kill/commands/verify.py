import click

from cartan_kill.commands.common import build_config, emit, geometry_options, handle_errors, parse_point, run_options
from cartan_kill.services import analysis_service


@click.command("verify")
@geometry_options
@click.option("--list", "list_checks", is_flag=True, help="List the available checks and exit")
@click.option("--check", "-c", "names", multiple=True, help="Run only these checks (repeatable)")
@click.option("--point", "-p", help="Base point x1,...,xn")
@click.option("--tol-verify", type=float, default=1e-4, show_default=True)
@run_options
@handle_errors
def verify(geometry, metric_file, list_checks, names, point, tol_verify, tol_ode, tol_rank, seed, out):
    """Run the invariant battery on a geometry"""
    if list_checks:
        for check in analysis_service.list_checks():
            suffix = " (metric)" if check["metric_only"] else ""
            click.echo(f"{check['name']:<34} {check['description']}{suffix}")
        return

    coords = parse_point(point) if point else None
    config = build_config(
        "verify",
        geometry=geometry,
        metric_file=metric_file,
        points=[coords] if coords else [],
        tol_verify=tol_verify,
        tol_ode=tol_ode,
        tol_rank=tol_rank,
        seed=seed,
        out=out,
    )
    analysis_service.apply_overrides(config)
    chart = analysis_service.load_chart(config)
    report = analysis_service.run_suite(chart, config, coords, names)
    emit(analysis_service.envelope(config, report.model_dump(mode="json"), report.passed), out)
