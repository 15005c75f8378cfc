import click

from cartan_kill.commands.common import build_config, emit, geometry_options, handle_errors, parse_point, run_options
from cartan_kill.services import analysis_service


@click.command("killing")
@geometry_options
@click.option("--point", "-p", "points", multiple=True, help="Base point x1,...,xn (repeatable)")
@click.option("--m", "m", type=int, default=3, show_default=True, help="Highest jet order reported")
@click.option("--radius", type=float, help="Radius of the exponential ball the fields are sampled on")
@click.option("--samples", type=int, default=5, show_default=True, help="Samples per integrated field")
@click.option("--tol-verify", type=float, default=1e-4, show_default=True)
@click.option("--no-verify", is_flag=True, help="Skip integrating and checking the generators")
@run_options
@handle_errors
def killing(geometry, metric_file, points, m, radius, samples, tol_verify, no_verify, tol_ode, tol_rank, seed, out):
    """Killing generators, their stabilization order and integrated fields at points"""
    coords = [parse_point(p) for p in points]
    config = build_config(
        "killing",
        geometry=geometry,
        metric_file=metric_file,
        points=coords,
        m=m,
        radius=radius,
        samples=samples,
        tol_verify=tol_verify,
        tol_ode=tol_ode,
        tol_rank=tol_rank,
        seed=seed,
        out=out,
    )
    analysis_service.apply_overrides(config)
    chart = analysis_service.load_chart(config)

    reports = [
        analysis_service.killing_report(chart, config, point, verify=not no_verify) for point in (coords or [None])
    ]
    result = {"geometry": chart.name, "points": [r.model_dump(mode="json") for r in reports]}
    emit(analysis_service.envelope(config, result, all(r.passed for r in reports)), out)
