'''
File: cli.py
Project: nucpoint
File Created: Sunday, 8th March 2026 9:14:50 am
Author: koko (koko231125@gmail.com)
License: GPL-3.0
-----
Last Modified: Tuesday, 17th March 2026 11:02:13 am
Modified By: koko (koko231125@gmail.com>)
'''


import logging
import sys

import click

import nucpoint
import nucpoint.api as api
from nucpoint.config import parse_config
from nucpoint.errors import NucPointError
from nucpoint.rtypes import Command, ErrorCategory


LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'


def fail(category: ErrorCategory, message: str) -> None:
    click.echo(f"error[{category.label}]: {message}", err=True)
    sys.exit(category.exit_code)


def make_command(command: Command) -> click.Command:
    @click.pass_context
    def callback(ctx: click.Context, output: str | None, data: str | None) -> None:
        overrides = list(ctx.obj['overrides'])
        # Shortcuts go after --set so that they win
        if output is not None:
            overrides.append(f'output={output}')
        if data is not None:
            overrides.append(f'data_path={data}')

        try:
            config = parse_config(ctx.obj['config'], overrides)
            out = api.run(command, config)
        except NucPointError as exc:
            fail(exc.category, str(exc))
        except Exception as exc:
            logging.getLogger(__name__).debug("unexpected failure", exc_info=True)
            fail(ErrorCategory.INTERNAL, f"{type(exc).__name__}: {exc}")
        click.echo(str(out))

    callback.__doc__ = f"Run {command.value} and write its artifacts to the output directory."
    return click.Command(
        command.value,
        callback=callback,
        params=[
            click.Option(['--output', '-o'], type=click.Path(), default=None,
                         help='The output directory. Overrides `output`.'),
            click.Option(['--data', '-d'], type=click.Path(), default=None,
                         help='A dataset directory. Overrides `data_path`.'),
        ],
        help=callback.__doc__,
    )


@click.group()
@click.version_option(nucpoint.__version__, prog_name='nucpoint')
@click.option('--config', '-c', type=click.Path(), default=None, help='A TOML configuration file.')
@click.option('--set', 'overrides', multiple=True, help='A dotted key=value override, e.g. detector.epochs=5.')
@click.option('--verbose', '-v', is_flag=True, help='Log debug messages.')
@click.option('--quiet', '-q', is_flag=True, help='Log warnings and errors only.')
@click.pass_context
def nucpoint_cli(
    ctx: click.Context,
    config: str | None = None,
    overrides: tuple[str, ...] = (),
    verbose: bool = False,
    quiet: bool = False,
) -> None:
    """Entry point for the command-line interface. Every subcommand reads one configuration, runs one
    experiment step and writes its artifacts together with a run manifest into the output directory.

    \b
    Args:
        config (str, optional):
            A TOML file with sections synth, detector, encoder, classifier, joint, eval and ablate.
        overrides (tuple[str, ...]):
            Dotted key=value pairs applied after the file.
        verbose (bool, optional):
            Log debug messages. Defaults to False.
        quiet (bool, optional):
            Log warnings and errors only. Defaults to False.

    \b
    Exit codes:
        0 success, 2 configuration, 3 missing input, 4 data format, 5 anything else.
    """
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)
    ctx.ensure_object(dict)
    ctx.obj['config'] = config
    ctx.obj['overrides'] = overrides


for _command in Command:
    nucpoint_cli.add_command(make_command(_command))


if __name__ == '__main__':
    nucpoint_cli()
