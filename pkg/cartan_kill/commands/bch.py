import click

from cartan_kill.commands.common import build_config, emit, geometry_options, handle_errors, parse_point, run_options
from cartan_kill.services import analysis_service


@click.command("bch")
@geometry_options
@click.option("--order", type=click.IntRange(1, 8), help="Print a_1..a_order over the Lyndon basis")
@click.option("--verify", is_flag=True, help="Compare Taylor coefficients of zeta with a_k")
@click.option("--kmax", "k_max", type=click.IntRange(1, 8), default=3, show_default=True)
@click.option("--point", "-p", help="Base point x1,...,xn")
@click.option("--tol-verify", type=float, default=1e-5, show_default=True)
@run_options
@handle_errors
def bch(geometry, metric_file, order, verify, k_max, point, tol_verify, tol_ode, tol_rank, seed, out):
    """Bracket polynomials a_k and their check against zeta"""
    if order is None and not verify:
        raise click.UsageError("Give --order or --verify")
    coords = parse_point(point) if point else None
    config = build_config(
        "bch",
        geometry=geometry,
        metric_file=metric_file,
        points=[coords] if coords else [],
        order=order,
        k_max=k_max,
        tol_verify=tol_verify,
        tol_ode=tol_ode,
        tol_rank=tol_rank,
        seed=seed,
        out=out,
    )
    analysis_service.apply_overrides(config)

    if not verify:
        for term in analysis_service.bch_expansions(order):
            click.echo(f"a_{term['order']} = {term['expansion']}")
        return

    chart = analysis_service.load_chart(config)
    report = analysis_service.bch_report(chart, config, coords)
    result = {"geometry": chart.name, **report.model_dump(mode="json")}
    emit(analysis_service.envelope(config, result, report.passed), out)
