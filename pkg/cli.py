"""
Command-Line Interface
Subcommands for every experiment kind, shared flags and machine-readable
failure reporting
"""

import os
import json
import logging
from typing import Any, Dict, Optional, Tuple

import click
from dotenv import load_dotenv

from models import GiantAtomError
from settings import ExperimentConfigError, load_config, parse_override, resolve_output_dir
from experiments import ExperimentRunner
from analysis import SampleFailure

logger = logging.getLogger(__name__)

LOG_LEVEL_ENV = "GIANTATOM_LOG_LEVEL"
LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'

EXIT_NUMERIC = 1
EXIT_CONFIG = 2


def _error_line(error: Exception) -> str:
    payload = {
        'error': type(error).__name__,
        'message': str(error),
        'field': getattr(error, 'field', None),
        'line': getattr(error, 'line', None),
        'sample': getattr(error, 'sample', None),
    }
    return json.dumps(payload, sort_keys=True)


COMMON_OPTIONS = [
    click.option('--config', 'config_path', type=click.Path(dir_okay=False), default=None,
                 help="YAML experiment file"),
    click.option('--seed', type=click.IntRange(0, 2 ** 64 - 1), default=None, help="Disorder seed"),
    click.option('--out', 'out_dir', type=click.Path(file_okay=False), default=None,
                 help="Output directory"),
    click.option('--samples', type=click.IntRange(min=1), default=None, help="Disorder samples per point"),
    click.option('--threads', type=click.IntRange(min=1), default=None, help="Worker threads"),
    click.option('--set', 'assignments', multiple=True, metavar='KEY=VALUE',
                 help="Override any config key, e.g. --set emitter.gamma_tau_2pi=0.13"),
]


def common_options(func):
    """Flags shared by every experiment subcommand"""
    for option in reversed(COMMON_OPTIONS):
        func = option(func)
    return func


def execute(kind: str, config_path: Optional[str], seed: Optional[int], out_dir: Optional[str],
            samples: Optional[int], threads: Optional[int], assignments: Tuple[str, ...],
            extra: Optional[Dict[str, Any]] = None):
    """Load, override, run; failures become one JSON line on stderr and a nonzero exit"""
    try:
        overrides: Dict[str, Any] = {}
        for item in assignments:
            key, value = parse_override(item)
            overrides[key] = value
        for key, value in (('seed', seed), ('samples', samples), ('threads', threads)):
            if value is not None:
                overrides[key] = value
        overrides.update({k: v for k, v in (extra or {}).items() if v is not None})

        config = load_config(config_path, kind=kind, overrides=overrides)
        written = ExperimentRunner(config, resolve_output_dir(out_dir, config)).run()
    except ExperimentConfigError as e:
        click.echo(_error_line(e), err=True)
        raise SystemExit(EXIT_CONFIG)
    except SampleFailure as e:
        logger.error(f"sample {e.sample} failed: {e}")
        click.echo(_error_line(e), err=True)
        raise SystemExit(EXIT_NUMERIC)
    except GiantAtomError as e:
        click.echo(_error_line(e), err=True)
        raise SystemExit(EXIT_NUMERIC)

    for path in written:
        click.echo(str(path))


@click.group()
@click.option('--log-level', type=click.Choice(['DEBUG', 'INFO', 'WARNING', 'ERROR'], case_sensitive=False),
              default=None, help=f'Logging level (default from {LOG_LEVEL_ENV} or INFO)')
def cli(log_level):
    """Giant atoms in a waveguide with Gaussian coupling disorder"""
    load_dotenv()
    level = (log_level or os.environ.get(LOG_LEVEL_ENV) or 'INFO').upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO), format=LOG_FORMAT)


@cli.command()
@common_options
def emit(**options):
    """|beta(t)|^2 of the ideal atom against the disordered comparison curve"""
    execute('emit', **options)


@cli.command()
@common_options
def field(**options):
    """Emitted field snapshots with the probability ledger"""
    execute('field', **options)


@cli.command()
@common_options
def poles(**options):
    """Poles and residues of the Laplace-domain amplitude"""
    execute('poles', **options)


@cli.command('sweep-dark')
@common_options
def sweep_dark(**options):
    """Mean minimum decay rate over the (sigma_g, sigma_x) grid"""
    execute('sweep-dark', **options)


@cli.command('sweep-dfi')
@common_options
def sweep_dfi(**options):
    """Mean total decay rate of braided atoms over the (sigma_g, sigma_x) grid"""
    execute('sweep-dfi', **options)


@cli.command('phi-sweep')
@common_options
def phi_sweep(**options):
    """Liouvillian eigenvalues of ideal braided atoms against the phase phi0"""
    execute('phi-sweep', **options)


@cli.command()
@common_options
@click.option('--data', type=click.Path(dir_okay=False), default=None,
              help='Sweep CSV to fit')
@click.option('--model', type=click.Choice(['power_law', 'debye2', 'both']), default=None)
def fit(data, model, **options):
    """Power-law and extended-Debye fits of a one-dimensional sweep"""
    execute('fit', extra={'analysis.data': data, 'analysis.fit': model}, **options)
