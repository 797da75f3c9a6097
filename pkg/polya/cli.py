"""
Command-line front end: scenario config parsing, simulation, analytics,
verification and Kolmogorov tables
"""
import csv
import io
import json
import logging
import re

import click
import numpy as np
from rich.console import Console
from rich.logging import RichHandler
from rich.markup import escape
from rich.table import Table

from config import Config
from polya import analytic
from polya.errors import DomainError, ParseError, PolyaError, UnsupportedScheme, ValidationError
from polya.model import (
    ExponentialRV,
    General,
    InitialState,
    NavigationMatrix,
    ScenarioConfig,
    TenabilityStatus,
    check_tenability,
    classify,
    row_mean_matrix,
)
from polya.simulate import run_ensemble
from polya.suite import canonical_battery, scenario_cases
from polya.verify import run_full_suite

logger = logging.getLogger(__name__)

console = Console(stderr=True)

CONFIG_KEYS = ('dimension', 'matrix', 'init', 'horizon', 'checkpoints', 'ensemble_size', 'seed')
REQUIRED_KEYS = ('dimension', 'matrix', 'init', 'horizon')
LIST_KEYS = ('matrix', 'init', 'checkpoints')

STATS_FIELDS = ('checkpoint_time', 'coordinate', 'mean', 'variance',
                'covariance_partner', 'covariance', 'n')

_NUMBER = r'[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?'
_NUMBER_RE = re.compile(rf'^{_NUMBER}$')
_EXP_RE = re.compile(rf'^exp\(\s*({_NUMBER})\s*\)$')
_INT_RE = re.compile(r'^\d+$')
_LINE_RE = re.compile(r'^(\s*)([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.*?)\s*$')


class ConfigurationError(click.ClickException):
    """Usage or configuration problem reported with exit code 2"""
    exit_code = 2


# Config parsing

def _parse_token(token, line, column, allow_exp):
    if _NUMBER_RE.match(token):
        return float(token)
    if allow_exp:
        m = _EXP_RE.match(token)
        if m:
            return ExponentialRV(float(m.group(1)))
    expected = "a decimal number or exp(rate)" if allow_exp else "a decimal number"
    raise ParseError(f"expected {expected}, got '{token}'", line, column)


def _parse_list(value, line, column, allow_exp=False):
    if not (value.startswith('[') and value.endswith(']')):
        raise ParseError("expected a list in brackets", line, column)
    inner = value[1:-1]
    if not inner.strip():
        return []
    items = []
    offset = column + 1
    for raw in inner.split(','):
        token = raw.strip()
        col = offset + (len(raw) - len(raw.lstrip()))
        if not token:
            raise ParseError("empty list item", line, col)
        items.append(_parse_token(token, line, col, allow_exp))
        offset += len(raw) + 1
    return items


def _parse_scalar(key, value, line, column):
    if key in ('dimension', 'ensemble_size', 'seed'):
        if not _INT_RE.match(value):
            raise ParseError(f"'{key}' must be a nonnegative integer, got '{value}'", line, column)
        return int(value)
    return _parse_token(value, line, column, allow_exp=False)


def parse_config(text):
    """
    Parse a scenario config document

    One `key = value` per line; `#` starts a comment; lists are written on one
    line in brackets. Matrix entries are decimal numbers or `exp(rate)`.

    Raises:
        ParseError: malformed line, unknown or repeated key, bad token
        ValidationError: well-formed document violating model invariants
    """
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0]
        if not line.strip():
            continue
        m = _LINE_RE.match(line)
        if not m:
            raise ParseError("expected 'key = value'", lineno, len(line) - len(line.lstrip()) + 1)
        key, value = m.group(2), m.group(3)
        key_col = m.start(2) + 1
        value_col = m.start(3) + 1
        if key not in CONFIG_KEYS:
            raise ParseError(f"unknown key '{key}'", lineno, key_col)
        if key in values:
            raise ParseError(f"duplicate key '{key}'", lineno, key_col)
        if not value:
            raise ParseError(f"missing value for '{key}'", lineno, value_col)
        if key in LIST_KEYS:
            values[key] = _parse_list(value, lineno, value_col, allow_exp=(key == 'matrix'))
        else:
            values[key] = _parse_scalar(key, value, lineno, value_col)
    return _build_config(values)


def _build_config(values):
    problems = [f"missing required key '{k}'" for k in REQUIRED_KEYS if k not in values]
    if problems:
        raise ValidationError(problems)

    matrix = init = None
    dimension = values['dimension']
    if dimension < 1:
        problems.append("dimension must be at least 1")
    else:
        try:
            matrix = NavigationMatrix.from_flat(dimension, values['matrix'])
        except ValidationError as e:
            problems.extend(e.problems)
    try:
        init = InitialState(tuple(values['init']))
    except ValidationError as e:
        problems.extend(e.problems)
    if init is not None and init.dimension != dimension:
        problems.append(f"init has {init.dimension} coordinates, expected {dimension}")
    if problems:
        raise ValidationError(problems)

    horizon = values['horizon']
    return ScenarioConfig(
        matrix=matrix,
        init=init,
        horizon=horizon,
        checkpoints=tuple(values.get('checkpoints', (horizon,))),
        ensemble_size=values.get('ensemble_size', Config.DEFAULT_ENSEMBLE_SIZE),
        master_seed=values.get('seed', Config.DEFAULT_SEED),
    )


def format_config(config):
    """Render a ScenarioConfig in the config file format"""
    def items(xs):
        return '[' + ', '.join(xs) + ']'
    return '\n'.join([
        f"dimension = {config.matrix.dimension}",
        f"matrix = {items(str(e) for e in config.matrix.flat())}",
        f"init = {items(repr(x) for x in config.init.coordinates)}",
        f"horizon = {config.horizon!r}",
        f"checkpoints = {items(repr(t) for t in config.checkpoints)}",
        f"ensemble_size = {config.ensemble_size}",
        f"seed = {config.master_seed}",
    ]) + '\n'


def load_config(path):
    try:
        with open(path, encoding='utf-8') as f:
            return parse_config(f.read())
    except OSError as e:
        raise ConfigurationError(f"cannot read {path}: {e}") from e


# Serialization

def _fmt(x):
    return '%.17g' % x


def stats_rows(stats):
    """(time, j, partner, mean, variance, covariance) rows, 1-based coordinates"""
    if stats.n == 0:
        raise DomainError("cannot emit empty statistics")
    var = stats.variance()
    cov = stats.covariance()
    for k, t in enumerate(stats.times):
        for j in range(stats.dimension):
            for l in range(j, stats.dimension):
                yield t, j + 1, l + 1, stats.mean[k, j], var[k, j], cov[k, j, l]


def emit_stats_csv(stats, path=None):
    """
    Write ensemble statistics as CSV with 17 significant digits

    Returns the CSV text; it is also written to `path` when given.
    """
    out = io.StringIO()
    writer = csv.writer(out, lineterminator='\n')
    writer.writerow(STATS_FIELDS)
    for t, j, l, mean, var, cov in stats_rows(stats):
        writer.writerow([_fmt(t), j, _fmt(mean), _fmt(var), l, _fmt(cov), stats.n])
    text = out.getvalue()
    if path is not None:
        with open(path, 'w', encoding='utf-8', newline='') as f:
            f.write(text)
    return text


def emit_stats_json(stats):
    records = [
        {'checkpoint_time': t, 'coordinate': j, 'mean': mean, 'variance': var,
         'covariance_partner': l, 'covariance': cov, 'n': stats.n}
        for t, j, l, mean, var, cov in stats_rows(stats)
    ]
    return json.dumps(records, sort_keys=True, indent=2) + '\n'


def read_stats_csv(text):
    """Parse emitted stats CSV back into {(time, j, partner): (mean, variance, covariance, n)}"""
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != STATS_FIELDS:
        raise ParseError(f"unexpected header {reader.fieldnames}", 1, 1)
    table = {}
    for row in reader:
        key = (float(row['checkpoint_time']), int(row['coordinate']), int(row['covariance_partner']))
        table[key] = (float(row['mean']), float(row['variance']),
                      float(row['covariance']), int(row['n']))
    return table


def _records_csv(records, fields):
    out = io.StringIO()
    writer = csv.writer(out, lineterminator='\n')
    writer.writerow(fields)
    for r in records:
        writer.writerow([_fmt(r[f]) if isinstance(r[f], float) else r[f] for f in fields])
    return out.getvalue()


def _write(text, output):
    if output:
        with open(output, 'w', encoding='utf-8', newline='') as f:
            f.write(text)
    else:
        click.echo(text, nl=False)


def _parse_float_list(text, option):
    try:
        return [float(x) for x in text.split(',') if x.strip()]
    except ValueError as e:
        raise ConfigurationError(f"{option}: {e}") from e


def _parse_u_grid(text, dimension):
    grid = []
    for point in text.split(';'):
        u = _parse_float_list(point, '--u-grid')
        if len(u) != dimension:
            raise ConfigurationError(f"--u-grid point {point!r} needs {dimension} components")
        grid.append(np.array(u))
    return grid


# Commands

def _configure_logging(level):
    logging.basicConfig(
        level=level.upper(),
        format="%(message)s",
        handlers=[RichHandler(console=console, show_path=False, show_time=False)],
        force=True,
    )


def _apply_overrides(config, settings):
    changes = {}
    if settings['seed'] is not None:
        changes['master_seed'] = settings['seed']
    if settings['ensemble_size'] is not None:
        changes['ensemble_size'] = settings['ensemble_size']
    return config.replace(**changes) if changes else config


@click.group(context_settings={'help_option_names': ['-h', '--help']})
@click.option('--seed', type=click.IntRange(0, 2 ** 64 - 1), default=None,
              help='Master seed, overrides the config.')
@click.option('--workers', type=click.IntRange(min=1), default=None,
              help='Process-pool width (results do not depend on it).')
@click.option('--output', type=click.Path(dir_okay=False, writable=True), default=None,
              help='Write data here instead of stdout.')
@click.option('--format', 'fmt', type=click.Choice(['csv', 'json']), default='csv',
              show_default=True, help='Data format.')
@click.option('--ensemble-size', type=click.IntRange(min=1), default=None,
              help='Trajectories per ensemble, overrides the config.')
@click.option('--log-level', default=None,
              type=click.Choice(['DEBUG', 'INFO', 'WARNING', 'ERROR'], case_sensitive=False),
              help='Log level, LOG_LEVEL by default.')
@click.pass_context
def cli(ctx, seed, workers, output, fmt, ensemble_size, log_level):
    """Continuum Pólya walk simulator, closed-form analytics and verification."""
    _configure_logging(log_level or Config.LOG_LEVEL)
    ctx.obj = {'seed': seed, 'workers': workers or Config.WORKERS, 'output': output,
               'format': fmt, 'ensemble_size': ensemble_size}


def _require_tenable(config):
    report = check_tenability(config.matrix, config.init)
    if report.status is TenabilityStatus.VIOLATED:
        raise ConfigurationError('not tenable: ' + '; '.join(report.violations))


@cli.command()
@click.argument('config_path', type=click.Path(exists=True, dir_okay=False))
@click.pass_obj
def simulate(settings, config_path):
    """Run an ensemble and emit per-checkpoint statistics."""
    config = _apply_overrides(load_config(config_path), settings)
    logger.info("scheme %r, seed %d", classify(config.matrix), config.master_seed)
    _require_tenable(config)
    stats = run_ensemble(config, settings['workers'])
    text = emit_stats_csv(stats) if settings['format'] == 'csv' else emit_stats_json(stats)
    _write(text, settings['output'])
    console.print(f"✓ {stats.n} trajectories, {len(stats.times)} checkpoints")
    return 0


@cli.command()
@click.argument('config_path', type=click.Path(exists=True, dir_okay=False))
@click.option('--times', default=None, help='Comma-separated times, the checkpoints by default.')
@click.option('--u-grid', default=None, help="MGF arguments, e.g. '0.1,0.05;0,0'.")
@click.pass_obj
def analyze(settings, config_path, times, u_grid):
    """Evaluate closed-form moments and MGFs of a scenario."""
    config = load_config(config_path)
    scheme = classify(config.matrix)
    ts = _parse_float_list(times, '--times') if times else list(config.checkpoints)
    grid = _parse_u_grid(u_grid, config.matrix.dimension) if u_grid else []
    console.print(f"scheme: {escape(repr(scheme))}")

    records = []
    for t in ts:
        try:
            moments = analytic.moments_for(scheme, config.init, t)
        except UnsupportedScheme:
            means = analytic.mean_vector(row_mean_matrix(config.matrix), config.init, t)
            moments = None
        else:
            means = moments.means
        for j, m in enumerate(means):
            records.append({'time': t, 'quantity': 'mean', 'argument': str(j + 1), 'value': float(m)})
        if moments is not None:
            c = len(means)
            for j in range(c):
                for l in range(j, c):
                    name = 'variance' if j == l else 'covariance'
                    records.append({'time': t, 'quantity': name, 'argument': f"{j + 1},{l + 1}",
                                    'value': float(moments.covariance[j, l])})
        if grid:
            if isinstance(scheme, General):
                raise ConfigurationError("no closed-form MGF for a general matrix")
            phi = analytic.joint_mgf(scheme, config.init)
            for u in grid:
                records.append({'time': t, 'quantity': 'mgf',
                                'argument': ';'.join(_fmt(x) for x in u), 'value': phi(t, u)})

    fields = ('time', 'quantity', 'argument', 'value')
    if settings['format'] == 'csv':
        text = _records_csv(records, fields)
    else:
        text = json.dumps(records, sort_keys=True, indent=2) + '\n'
    _write(text, settings['output'])
    return 0


@cli.command()
@click.argument('target')
@click.pass_obj
def verify(settings, target):
    """Run the canonical battery ('canonical') or the battery for a config file."""
    if target == 'canonical':
        seed = settings['seed'] if settings['seed'] is not None else Config.DEFAULT_SEED
        cases = canonical_battery(settings['ensemble_size'], seed)
    else:
        config = _apply_overrides(load_config(target), settings)
        _require_tenable(config)
        seed = config.master_seed
        cases = scenario_cases(config)

    console.print("=" * 60)
    console.print(f"Verifying {escape(target)} ({len(cases)} cases)")
    console.print("=" * 60)
    report = run_full_suite(cases, settings['workers'], master_seed=seed)
    text = report.to_csv() if settings['format'] == 'csv' else report.to_json()
    _write(text, settings['output'])
    _print_summary(report)
    return 0 if report.overall_pass else 1


def _print_summary(report):
    failed = report.failed()
    if failed:
        table = Table(title="Failed checks")
        for column in ('name', 'kind', 'observed', 'expected', 'score', 'threshold'):
            table.add_column(column)
        for check in failed:
            table.add_row(escape(check.name), check.kind.value, f"{check.observed:.6g}",
                          f"{check.expected:.6g}", f"{check.score:.3g}", f"{check.threshold:.3g}")
        console.print(table)
    mark = "✓" if report.overall_pass else "✗"
    console.print(f"{mark} {len(report.checks) - len(failed)}/{len(report.checks)} checks passed")


@cli.command()
@click.option('--i', 'i', type=float, required=True, help='Initial total size.')
@click.option('--delta', type=float, required=True, help='Balanced increment.')
@click.option('--ell-max', type=click.IntRange(min=0), required=True, help='Largest event count.')
@click.option('--t', 't', type=click.FloatRange(min=0.0), required=True, help='Time.')
@click.pass_obj
def kolmogorov(settings, i, delta, ell_max, t):
    """Closed-form total-size probabilities of the balanced scheme."""
    if i <= 0 or delta <= 0:
        raise ConfigurationError("--i and --delta must be positive")
    records = [{'ell': ell, 'size': i + ell * delta,
                'probability': analytic.kolmogorov_prob(i, delta, ell, t)}
               for ell in range(ell_max + 1)]
    if settings['format'] == 'csv':
        text = _records_csv(records, ('ell', 'size', 'probability'))
    else:
        text = json.dumps(records, sort_keys=True, indent=2) + '\n'
    _write(text, settings['output'])
    return 0


def main(argv=None):
    """
    Run the CLI and return its exit code

    0 success or all checks passed, 1 a verification check failed,
    2 usage, configuration or I/O error.
    """
    try:
        rv = cli.main(args=argv, prog_name='polya', standalone_mode=False)
    except click.ClickException as e:
        e.show()
        return e.exit_code
    except click.Abort:
        console.print("Aborted!")
        return 2
    except (PolyaError, OSError) as e:
        console.print(f"[red]Error:[/red] {escape(str(e))}")
        return 2
    return rv or 0
