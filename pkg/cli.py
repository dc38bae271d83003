#!/usr/bin/env python3
"""
rscrub CLI
Command-line interface for robust volume scrubbing, FPR simulations, MAC
evaluation and plot-data export
"""

import logging
import os
import sys

import click
import numpy as np

# Allow running as a script from any directory
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from config import Config
from matio import load_matrix, load_report, save_report, save_table
from models import (
    ComponentMatrix,
    ConfigError,
    MacConfig,
    RunConfig,
    ScrubError,
    SimConfig,
    THRESHOLD_TAGS,
)
from scrub import Scrubber
from simlab import (
    cutoff_labels,
    fpr_experiment,
    fpr_table,
    gen_fc_subjects,
    mac_table,
    random_equal_count,
    scrub_flag_sets,
)
from utils import format_fraction, setup_logging

logger = logging.getLogger(__name__)

PROG_NAME = 'rscrub'
MODELS = {'iid': 'iid_gaussian', 'iid_gaussian': 'iid_gaussian', 'ar1': 'ar1'}
MAC_METHODS = ('theoretical', 'empirical', 'bootstrap_lb')


@click.group()
@click.option('--verbose', '-v', is_flag=True, help='Log progress (INFO) to stderr')
@click.option('--log-dir', type=click.Path(file_okay=False), default=None,
              help='Also write rotating log files here (default: $RSCRUB_LOG_DIR)')
@click.pass_context
def cli(ctx, verbose, log_dir):
    """rscrub robust multivariate volume scrubbing"""
    ctx.ensure_object(dict)
    ctx.obj['log_level'] = 'INFO' if verbose else Config.LOG_LEVEL
    ctx.obj['log_dir'] = log_dir or Config.LOG_DIR or None


def _start(ctx):
    """Configure logging once the subcommand actually runs (never on --help)"""
    setup_logging(ctx.obj['log_level'], ctx.obj['log_dir'])


def _run_config(**fields):
    try:
        return RunConfig(**fields).validate()
    except ConfigError as e:
        raise click.UsageError(str(e)) from e


# ============================================
# SCRUB
# ============================================
@cli.command('scrub')
@click.option('--input', 'input_path', required=True, type=click.Path(dir_okay=False),
              help='T x Q component time courses (or T x V data with --kind raw)')
@click.option('--format', 'fmt', type=click.Choice(['delimited', 'binary']), default='delimited')
@click.option('--row-labels', is_flag=True, help='First column holds observation ids')
@click.option('--kind', type=click.Choice(['components', 'raw', 'lowdim']), default='components',
              help='components: external ICA time courses; raw: reduce by PCA; lowdim: use columns as-is')
@click.option('--spatial', 'spatial_path', type=click.Path(dir_okay=False), default=None,
              help='Q x V spatial maps for the artifact intensity map')
@click.option('--alpha', type=float, default=Config.ALPHA, show_default=True)
@click.option('--method', type=click.Choice(Config.THRESHOLD_METHODS), default=Config.THRESHOLD_METHOD,
              show_default=True)
@click.option('--seed', type=click.IntRange(min=0), default=Config.SEED, show_default=True)
@click.option('--reps', type=int, default=Config.BOOTSTRAP_REPS, show_default=True, help='Bootstrap replicates B')
@click.option('--ci-level', 'ci_levels', type=float, multiple=True, default=Config.CI_LEVELS,
              help='Bootstrap CI levels to report (repeatable)')
@click.option('--lb-level', type=float, default=Config.LB_LEVEL, show_default=True,
              help='CI level whose lower bound flags with --method bootstrap_lb')
@click.option('--kurtosis-quantile', type=float, default=Config.KURTOSIS_QUANTILE, show_default=True)
@click.option('--mad-cut', type=float, default=Config.MAD_CUT, show_default=True)
@click.option('--n-starts', type=int, default=Config.MCD_N_STARTS, show_default=True)
@click.option('--n-components', type=int, default=None, help='PCA components (--kind raw; default: cumulative variance rule)')
@click.option('--detrend/--no-detrend', default=True)
@click.option('--select/--no-select', default=True, help='Kurtosis-based component selection')
@click.option('--consistency/--no-consistency', default=True, help='MCD consistency correction')
@click.option('--out', 'out_path', required=True, type=click.Path(dir_okay=False), help='Report file')
@click.option('--artifact-out', type=click.Path(dir_okay=False), default=None,
              help='Write the artifact intensity map as a one-column table')
@click.pass_context
def scrub_cmd(ctx, input_path, fmt, row_labels, kind, spatial_path, alpha, method, seed, reps,
              ci_levels, lb_level, kurtosis_quantile, mad_cut, n_starts, n_components,
              detrend, select, consistency, out_path, artifact_out):
    """Flag outlying volumes and write a scrub report"""
    config = _run_config(
        alpha=alpha, bootstrap_reps=reps, ci_levels=tuple(ci_levels), seed=seed,
        kurtosis_quantile=kurtosis_quantile, mad_cut=mad_cut, threshold_method=method,
        lb_level=lb_level, n_starts=n_starts, consistency_correction=consistency,
        detrend=detrend, select_components=select, raw_lowdim=(kind == 'lowdim'),
        n_components=n_components,
    )
    if spatial_path and kind == 'raw':
        raise click.UsageError("--spatial cannot be combined with --kind raw (PCA supplies the maps)")
    if artifact_out and not spatial_path and kind != 'raw':
        raise click.UsageError("--artifact-out needs --spatial (or --kind raw)")
    _start(ctx)

    matrix = load_matrix(input_path, format=fmt, row_labels=row_labels)
    spatial = load_matrix(spatial_path, format=fmt) if spatial_path else None
    data = ComponentMatrix(matrix, source='external_ica', spatial=spatial) if kind == 'components' else matrix

    report = Scrubber(config).run(data, spatial=spatial if kind == 'lowdim' else None)
    save_report(report, out_path)

    if artifact_out:
        intensity = report.artifact_map if report.artifact_map is not None else np.empty(0)
        save_table(artifact_out, {'intensity': list(intensity)})

    click.echo(
        f"✓ Flagged {len(report.flagged_indices)}/{report.n_observations} volumes "
        f"({format_fraction(report.flag_fraction)}) with {report.active_label} "
        f"cutoff {report.threshold().cutoff:.4f}"
    )
    click.echo(f"✓ Report written to {out_path}")


# ============================================
# SIMULATIONS
# ============================================
@cli.command('simulate-fpr')
@click.option('--model', type=click.Choice(sorted(MODELS)), default='iid', show_default=True)
@click.option('--phi', type=float, default=0.0, show_default=True)
@click.option('--n', 'n_obs', type=int, default=1000, show_default=True)
@click.option('--p', 'n_vars', type=int, default=5, show_default=True)
@click.option('--reps', type=int, default=100, show_default=True, help='Dataset replicates')
@click.option('--method', type=click.Choice(THRESHOLD_TAGS), default='empirical', show_default=True)
@click.option('--alpha', type=float, default=Config.ALPHA, show_default=True)
@click.option('--seed', type=click.IntRange(min=0), default=Config.SEED, show_default=True)
@click.option('--bootstrap-reps', type=int, default=Config.BOOTSTRAP_REPS, show_default=True)
@click.option('--lb-level', type=float, default=Config.LB_LEVEL, show_default=True)
@click.option('--n-starts', type=int, default=Config.MCD_N_STARTS, show_default=True)
@click.option('--detrend/--no-detrend', default=False)
@click.option('--out', 'out_path', required=True, type=click.Path(dir_okay=False))
@click.pass_context
def simulate_fpr(ctx, model, phi, n_obs, n_vars, reps, method, alpha, seed, bootstrap_reps,
                 lb_level, n_starts, detrend, out_path):
    """False positive rate of a threshold method on outlier-free data"""
    try:
        sim = SimConfig(n=n_obs, p=n_vars, model=MODELS[model], phi=phi,
                        replicates=reps, alpha=alpha, seed=seed)
    except ConfigError as e:
        raise click.UsageError(str(e)) from e
    base = _run_config(alpha=alpha, bootstrap_reps=bootstrap_reps, lb_level=lb_level,
                       n_starts=n_starts, seed=seed)
    _start(ctx)

    result = fpr_experiment(sim, method, run_config=base, detrend=detrend)
    columns = fpr_table(result)
    columns['mean_fpr'] = [result.mean_fpr] * len(columns['fpr'])
    save_table(out_path, columns)

    click.echo(f"✓ Mean FPR ({method}, {sim.model}, phi={sim.phi}): {format_fraction(result.mean_fpr)}")
    click.echo(f"✓ Max replicate FPR: {format_fraction(float(np.max(result.per_replicate_fpr)))}")
    click.echo(f"✓ Table written to {out_path}")


@cli.command('mac')
@click.option('--nodes', type=int, default=20, show_default=True)
@click.option('--subjects', type=int, default=10, show_default=True)
@click.option('--perms', type=int, default=100, show_default=True, help='Random removals R per subject')
@click.option('--volumes', type=int, default=200, show_default=True, help='Volumes T per subject')
@click.option('--bursts', type=int, default=10, show_default=True, help='Burst artifacts per subject')
@click.option('--method', 'methods', type=click.Choice(THRESHOLD_TAGS), multiple=True,
              default=MAC_METHODS, show_default=True, help='Cutoffs to compare (repeatable)')
@click.option('--lb-level', 'lb_levels', type=float, multiple=True, default=Config.CI_LEVELS,
              show_default=True, help='CI levels for bootstrap_lb rows (repeatable)')
@click.option('--alpha', type=float, default=Config.ALPHA, show_default=True)
@click.option('--seed', type=click.IntRange(min=0), default=Config.SEED, show_default=True)
@click.option('--reps', type=int, default=Config.BOOTSTRAP_REPS, show_default=True, help='Bootstrap replicates B')
@click.option('--n-starts', type=int, default=Config.MCD_N_STARTS, show_default=True)
@click.option('--out', 'out_path', required=True, type=click.Path(dir_okay=False))
@click.pass_context
def mac_cmd(ctx, nodes, subjects, perms, volumes, bursts, methods, lb_levels, alpha, seed, reps,
            n_starts, out_path):
    """
    Mean absolute change of connectivity versus random removal

    One row per cutoff (bootstrap_lb gives one per --lb-level), a row for
    the true bursts and a random_<label> row removing as many volumes as
    the first cutoff.
    """
    try:
        cfg = MacConfig(n_subjects=subjects, n_nodes=nodes, n_permutations=perms,
                        scrub_method=methods[0]).validate()
    except ConfigError as e:
        raise click.UsageError(str(e)) from e
    base = _run_config(alpha=alpha, seed=seed, n_starts=n_starts, bootstrap_reps=reps,
                       ci_levels=tuple(lb_levels))
    _start(ctx)

    fc_data, true_bursts = gen_fc_subjects(subjects, volumes, nodes, bursts, seed=seed)
    true_flags = []
    for ts, volumes_hit in zip(fc_data, true_bursts):
        mask = np.zeros(ts.rows, dtype=bool)
        mask[volumes_hit] = True
        true_flags.append(mask)

    method_flags = {'true_bursts': true_flags}
    method_flags.update(scrub_flag_sets(fc_data, methods, lb_levels, run_config=base))
    reference = cutoff_labels(methods, lb_levels)[0]
    method_flags[f"random_{reference}"] = random_equal_count(method_flags[reference], seed=seed)
    columns = mac_table(fc_data, method_flags, cfg, seed=seed)
    save_table(out_path, columns)

    for name, rate, value in zip(columns['method'], columns['censoring_rate'], columns['mac']):
        click.echo(f"  {name:20} censored {format_fraction(rate):>8}  MAC {value:.4f}")
    click.echo(f"✓ Table written to {out_path}")


# ============================================
# PLOT DATA
# ============================================
@cli.command('emit-plotdata')
@click.option('--report', 'report_path', required=True, type=click.Path(dir_okay=False))
@click.option('--out', 'out_path', required=True, type=click.Path(dir_okay=False))
@click.pass_context
def emit_plotdata(ctx, report_path, out_path):
    """RD values, flags and every cutoff as plot-ready columns"""
    _start(ctx)
    report = load_report(report_path)

    n = report.n_observations
    columns = {
        'index': list(range(n)),
        'rd': [float(d) for d in report.rds.distances],
        'flagged': [bool(f) for f in report.flags],
        'included': list(np.isin(np.arange(n), report.rds.fit.included)),
    }
    for t in report.thresholds:
        columns[f"cutoff_{t.label}"] = [t.cutoff] * n
    save_table(out_path, columns)
    click.echo(f"✓ Plot data for {n} volumes written to {out_path}")


@cli.command()
def version():
    """Show version information"""
    click.echo(f"{Config.APP_NAME} v{Config.VERSION}")


# ============================================
# ENTRY POINT
# ============================================
def run(argv=None):
    """
    Run the CLI and return its exit code

    0 on success (including --help), 1 on usage errors, 2 on runtime
    errors.
    """
    try:
        result = cli.main(args=argv, prog_name=PROG_NAME, standalone_mode=False)
    except click.UsageError as e:
        e.show()
        return 1
    except click.ClickException as e:
        e.show()
        return 2
    except click.Abort:
        click.echo("Aborted!", err=True)
        return 2
    except (ScrubError, OSError, ValueError) as e:
        logger.debug(f"{PROG_NAME} failed: {e}", exc_info=True)
        click.echo(f"Error: {e}", err=True)
        return 2
    return result if isinstance(result, int) else 0


if __name__ == '__main__':
    sys.exit(run(sys.argv[1:]))
