import functools
import logging
import sys
from typing import Callable, List, Optional, Sequence

import click
from pydantic import ValidationError

from cartan_kill.config import settings
from cartan_kill.exceptions import CartanError, NumericalError
from cartan_kill.schemas import ErrorResponse, GridAxis, RunConfig
from cartan_kill.utils import report_writer

logger = logging.getLogger(__name__)

EXIT_INPUT = 2
EXIT_NUMERICAL = 3


def parse_point(text: str) -> List[float]:
    """'0.1,0.2' -> [0.1, 0.2]"""
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise click.BadParameter(f"'{text}' is not a comma separated list of numbers", param_hint="--point")


def parse_grid(axes: Sequence[str]) -> List[GridAxis]:
    try:
        return [GridAxis.parse(text) for text in axes]
    except (ValueError, ValidationError) as e:
        raise click.BadParameter(str(e), param_hint="--grid")


def geometry_options(func: Callable) -> Callable:
    func = click.option("--metric-file", type=click.Path(dir_okay=False), help="Metric JSON file")(func)
    func = click.option("--geometry", "-g", help="Built-in geometry, e.g. sphere2, bump(0.1), klein:so3")(func)
    return func


def run_options(func: Callable) -> Callable:
    options = [
        click.option("--out", "-o", type=click.Path(dir_okay=False), help="Write the report here instead of stdout"),
        click.option("--seed", type=int, default=lambda: settings.SEED, show_default="CARTAN_SEED"),
        click.option("--tol-rank", type=float, default=lambda: settings.TOL_RANK, show_default="CARTAN_TOL_RANK"),
        click.option("--tol-ode", type=float, default=lambda: settings.TOL_ODE, show_default="CARTAN_TOL_ODE"),
    ]
    for option in options:
        func = option(func)
    return func


def build_config(command: str, **values) -> RunConfig:
    try:
        return RunConfig(command=command, **{k: v for k, v in values.items() if v is not None})
    except ValidationError as e:
        raise click.UsageError(e.errors()[0]["msg"])


def emit(payload: dict, out: Optional[str] = None) -> None:
    if out:
        path = report_writer.write_json(out, payload)
        click.echo(f"Report written to {path}", err=True)
    else:
        click.echo(report_writer.dumps(payload), nl=False)


def handle_errors(func: Callable) -> Callable:
    """Report CartanError as JSON on stderr and exit 2 (input) or 3 (numerical)"""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except CartanError as e:
            code = EXIT_NUMERICAL if isinstance(e, NumericalError) else EXIT_INPUT
            logger.error(f"{type(e).__name__}: {e}")
            error = ErrorResponse(error=str(e), details={"type": type(e).__name__, **e.details})
            click.echo(report_writer.dumps(error.model_dump()), err=True, nl=False)
            sys.exit(code)

    return wrapper
