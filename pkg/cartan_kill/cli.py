import logging

import click

from cartan_kill import __version__
from cartan_kill.commands.bch import bch
from cartan_kill.commands.killing import killing
from cartan_kill.commands.strata import strata
from cartan_kill.commands.verify import verify
from cartan_kill.config import settings

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__, prog_name="cartan-kill")
@click.option(
    "--log-level",
    type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
    default=lambda: settings.LOG_LEVEL,
    show_default="CARTAN_LOG_LEVEL",
)
def cli(log_level):
    """Killing generators, local automorphisms and the bundle BCH formula of Cartan geometries"""
    logging.basicConfig(level=log_level.upper(), format=LOG_FORMAT)


cli.add_command(killing)
cli.add_command(strata)
cli.add_command(bch)
cli.add_command(verify)


def main():
    cli(prog_name="cartan-kill")
