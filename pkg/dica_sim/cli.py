"""
Command-line interface for the intersection coordination simulator
"""
import logging
import os

import click
from tabulate import tabulate

from .bench import ablation_cells, ablation_matrix, write_bench_csv
from .config import MODES, VOLUME_TABLE, ConfigError, default_log_level, load_config
from .coordinator import validate_techniques
from .database import Database, get_default_db
from .layout import LayoutError, route_compatible
from .metrics import MetricsError, format_report, write_metrics_csv, write_report
from .sim_engine import (
    LivenessError, SafetyViolationError, build_environment, run_scenario, run_scenarios,
    signal_plan_for,
)
from .traffic_light import OversaturationError, uniform_delay


# Failures reported to the user instead of a traceback
RUN_ERRORS = (ConfigError, LayoutError, OversaturationError, SafetyViolationError,
              LivenessError, MetricsError)


def parse_volumes(text: str):
    """'100..500' (every tabulated volume in range) or '100,300'"""
    if '..' in text:
        lo, hi = (int(v) for v in text.split('..', 1))
        volumes = [v for v in sorted(VOLUME_TABLE) if lo <= v <= hi]
    else:
        volumes = [int(v) for v in text.split(',') if v.strip()]
    unknown = [v for v in volumes if v not in VOLUME_TABLE]
    if unknown or not volumes:
        raise click.BadParameter(f"Volumes must be among {sorted(VOLUME_TABLE)}, got '{text}'")
    return volumes


def parse_schedule(text: str):
    """'0:100,600:500' -> [(0.0, 100), (600.0, 500)]"""
    try:
        steps = []
        for part in text.split(','):
            t, v = part.split(':')
            steps.append((float(t), int(v)))
        return steps
    except ValueError:
        raise click.BadParameter(f"Invalid volume schedule '{text}'. Use start:volume,...") from None


def parse_list(text: str):
    return [item.strip() for item in text.split(',') if item.strip()]


def _db(ctx) -> Database:
    if ctx.obj.get('db') is None:
        path = ctx.obj.get('db_path')
        if path:
            ctx.obj['db'] = Database(path)
            ctx.obj['db'].initialize_schema()
        else:
            ctx.obj['db'] = get_default_db()
    return ctx.obj['db']


def _scenario(config_path, **overrides):
    config = load_config(config_path)
    return config.replace(**overrides).validate()


@click.group()
@click.option('--db-path', default=None, help='Path to results database file')
@click.option('-v', '--verbose', count=True, help='Log INFO (-v) or DEBUG (-vv) messages')
@click.pass_context
def cli(ctx, db_path, verbose):
    """Intersection coordination simulator - DICA and traffic light baselines"""
    ctx.ensure_object(dict)
    ctx.obj['db_path'] = db_path
    ctx.obj['db'] = None
    level = {0: default_log_level(), 1: 'INFO'}.get(verbose, 'DEBUG')
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')


@cli.command()
@click.option('--config', 'config_path', type=click.Path(exists=True), help='Scenario YAML file')
@click.option('--mode', type=click.Choice(MODES), help='Intersection control mode')
@click.option('--volume', type=int, help='Traffic volume (vehicles per 10 minutes)')
@click.option('--seed', 'seeds', type=int, multiple=True, help='Random seed (repeatable)')
@click.option('--unbalanced', is_flag=True, default=None, help='Minor roads at a reduced volume')
@click.option('--duration', type=float, help='Simulated seconds')
@click.option('--vehicles', type=int, help='Spawn this many vehicles and run until all exit')
@click.option('--volume-schedule', help='Volume steps, e.g. 0:100,600:500')
@click.option('--trace', is_flag=True, default=None, help='Write the message trace')
@click.option('--verify', is_flag=True, help='Check every confirmed trajectory pair for conflicts')
@click.option('--out', 'out_dir', type=click.Path(file_okay=False), help='Output directory')
@click.option('--no-store', is_flag=True, help='Do not record the run in the results database')
@click.pass_context
def run(ctx, config_path, mode, volume, seeds, unbalanced, duration, vehicles, volume_schedule,
        trace, verify, out_dir, no_store):
    """Run one scenario, averaged over its seeds"""
    try:
        overrides = dict(mode=mode, volume=volume, seeds=list(seeds) or None,
                         unbalanced=unbalanced, duration=duration, trace=trace)
        if volume_schedule:
            overrides['volume_schedule'] = parse_schedule(volume_schedule)
        config = _scenario(config_path, **overrides)
        if vehicles is not None:
            config = config.replace(vehicle_target=vehicles)
            config.duration = None
            config.validate()
        if config.trace and not out_dir:
            raise ConfigError("Message traces are written to the output directory; pass --out")
        report = run_scenario(config, verify=verify, trace_dir=out_dir)
    except RUN_ERRORS as e:
        click.echo(f"Error: {e}", err=True)
        ctx.exit(1)

    click.echo(format_report(report))
    if out_dir:
        written = write_report(report, out_dir)
        click.echo(f"\nWrote {len(written)} files to {out_dir}")
    if not no_store:
        _db(ctx).record_run(report.summary(), config.to_dict())
    if verify and report.conflicts:
        click.echo(f"Error: {report.conflicts} space-time conflicts found", err=True)
        ctx.exit(1)


@cli.command()
@click.option('--config', 'config_path', type=click.Path(exists=True), help='Scenario YAML file')
@click.option('--volume', type=int, help='Traffic volume (vehicles per 10 minutes)')
@click.option('--seed', type=int, help='Random seed (default: first configured seed)')
@click.option('--duration', type=float, help='Simulated seconds')
@click.option('--ablate', default='IV-A,IV-B,IV-C,IV-D', show_default=True,
              help='Techniques to benchmark individually and combined')
@click.option('--cell', 'cells', multiple=True,
              help='Exact technique subset to benchmark, e.g. B+D (repeatable, overrides --ablate)')
@click.option('--out', 'out_dir', type=click.Path(file_okay=False), help='Directory for bench.csv')
@click.option('--no-store', is_flag=True, help='Do not record the cells in the results database')
@click.pass_context
def bench(ctx, config_path, volume, seed, duration, ablate, cells, out_dir, no_store):
    """Compare coordinator cost across technique selections on identical traffic"""
    try:
        config = _scenario(config_path, volume=volume, duration=duration, trace=False)
        if cells:
            subsets = [validate_techniques(c.replace('+', ',').split(',')) for c in cells]
        else:
            subsets = ablation_cells(parse_list(ablate))
        results = ablation_matrix(config, subsets, seed=seed)
    except RUN_ERRORS + (ValueError,) as e:
        click.echo(f"Error: {e}", err=True)
        ctx.exit(1)

    rows = [r.row() for r in results]
    table = [[r['label'], r['requests'], f"{r['wall_time']:.4f}", r['comparisons'],
              r['oti_evaluations'], f"{r['speedup']:.2f}" if r['speedup'] else '-',
              f"{r['ops_ratio']:.4f}" if r['ops_ratio'] else '-',
              f"{r['max_entry_deviation']:.2f}" if r['max_entry_deviation'] is not None else '-']
             for r in rows]
    click.echo(tabulate(table, headers=['Techniques', 'Requests', 'Wall time (s)', 'Comparisons',
                                        'OTI evals', 'Speedup', 'Ops ratio', 'Max entry dev (s)'],
                        tablefmt='simple'))
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        write_bench_csv(os.path.join(out_dir, 'bench.csv'), results)
    if not no_store:
        db = _db(ctx)
        for row in rows:
            db.record_bench(row)


@cli.command()
@click.option('--config', 'config_path', type=click.Path(exists=True), help='Scenario YAML file')
@click.option('--volumes', default='100..500', show_default=True, help='Volumes, e.g. 100..500 or 100,300')
@click.option('--modes', default='enhanced,tlight', show_default=True, help='Comma separated modes')
@click.option('--seed', 'seeds', type=int, multiple=True, help='Random seed (repeatable)')
@click.option('--unbalanced', is_flag=True, default=None, help='Minor roads at a reduced volume')
@click.option('--duration', type=float, help='Simulated seconds')
@click.option('--jobs', default=1, show_default=True, help='Worker processes')
@click.option('--out', 'out_dir', type=click.Path(file_okay=False), help='Output directory')
@click.option('--no-store', is_flag=True, help='Do not record the runs in the results database')
@click.pass_context
def sweep(ctx, config_path, volumes, modes, seeds, unbalanced, duration, jobs, out_dir, no_store):
    """Run every mode at every volume and compare trip times"""
    try:
        volume_list = parse_volumes(volumes)
        mode_list = parse_list(modes)
        bad = [m for m in mode_list if m not in MODES]
        if bad:
            raise ConfigError(f"Invalid modes {bad}. Must be among {MODES}")
        base = _scenario(config_path, seeds=list(seeds) or None, unbalanced=unbalanced,
                         duration=duration, trace=False)
        configs = []
        for mode in mode_list:
            for volume in volume_list:
                cfg = base.replace(mode=mode, volume=volume).validate()
                if mode == 'tlight':
                    try:
                        signal_plan_for(cfg)
                    except OversaturationError as e:
                        click.echo(f"Skipping tlight at volume {volume}: {e}", err=True)
                        continue
                configs.append(cfg)
        reports = run_scenarios(configs, jobs=jobs)
    except RUN_ERRORS as e:
        click.echo(f"Error: {e}", err=True)
        ctx.exit(1)

    table = [[r.mode, r.volume, r.generated, r.crossed, f"{r.avg_trip_time:.2f}",
              f"{r.pooled_sd:.2f}", f"{r.throughput:.4f}", f"{r.effective_avg_trip_time:.2f}"]
             for r in reports]
    click.echo(tabulate(table, headers=['Mode', 'Volume', 'Generated', 'Crossed', 'Avg trip (s)',
                                        'SD (s)', 'Throughput', 'Effective avg (s)'],
                        tablefmt='simple'))
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        write_metrics_csv(os.path.join(out_dir, 'metrics.csv'), reports)
        for r in reports:
            write_report(r, os.path.join(out_dir, f"{r.mode}_{r.volume}"))
    if not no_store:
        db = _db(ctx)
        for cfg, r in zip(configs, reports):
            db.record_run(r.summary(), cfg.to_dict())


@cli.command()
@click.option('--config', 'config_path', type=click.Path(exists=True), help='Scenario YAML file')
@click.option('--volumes', default='100..500', show_default=True, help='Volumes, e.g. 100..500')
@click.option('--unbalanced', is_flag=True, default=None, help='Minor roads at a reduced volume')
@click.option('--scheme', type=click.Choice(['split', 'protected_left']), help='Phase scheme')
@click.pass_context
def plan(ctx, config_path, volumes, unbalanced, scheme):
    """Show the optimized signal plan per volume"""
    try:
        config = _scenario(config_path, unbalanced=unbalanced)
        if scheme:
            config.signal.phase_scheme = scheme
        _, zones = build_environment(config)
        rows = []
        for volume in parse_volumes(volumes):
            try:
                p = signal_plan_for(config, zones, volume=volume)
            except OversaturationError as e:
                rows.append([volume, '-', '-', 'oversaturated', '-'])
                click.echo(f"Volume {volume}: {e}", err=True)
                continue
            greens = ' / '.join(f"{ph.green:.1f}" for ph in p.phases)
            delays = ' / '.join(f"{uniform_delay(p, ph):.1f}" for ph in p.phases)
            rows.append([volume, f"{p.flow_ratio_sum:.4f}", f"{p.cycle_length:.2f}", greens, delays])
    except (RUN_ERRORS + (ValueError,)) as e:
        click.echo(f"Error: {e}", err=True)
        ctx.exit(1)
    click.echo(tabulate(rows, headers=['Volume', 'Y', 'C0 (s)', 'Greens (s)', 'Uniform delay (s)'],
                        tablefmt='simple'))


@cli.command()
@click.option('--config', 'config_path', type=click.Path(exists=True), help='Scenario YAML file')
@click.pass_context
def routes(ctx, config_path):
    """List the crossing routes and their conflicts"""
    try:
        config = _scenario(config_path)
        layout, zones = build_environment(config)
    except RUN_ERRORS as e:
        click.echo(f"Error: {e}", err=True)
        ctx.exit(1)
    rows = []
    for rid in sorted(layout.routes):
        r = layout.route(rid)
        cap = r.turn_speed(layout.lateral_accel)
        conflicts = sum(1 for other in layout.routes if not route_compatible(zones, rid, other))
        rows.append([rid, r.entry_lane, r.exit_lane, f"{r.total_length:.2f}",
                     f"{r.radius:.2f}" if r.radius else '-',
                     f"{cap:.2f}" if cap != float('inf') else '-', conflicts])
    click.echo(tabulate(rows, headers=['Route', 'Entry lane', 'Exit lane', 'Length (m)',
                                       'Radius (m)', 'Speed cap (m/s)', 'Conflicts'],
                        tablefmt='simple'))
    click.echo(f"\nLongest route: {layout.max_route_length:.2f} m")


@cli.command()
@click.option('--mode', type=click.Choice(MODES), help='Filter by mode')
@click.option('--volume', type=int, help='Filter by volume')
@click.option('--limit', default=20, show_default=True, help='Number of runs to show')
@click.pass_context
def history(ctx, mode, volume, limit):
    """List recorded runs"""
    runs = _db(ctx).list_runs(mode=mode, volume=volume, limit=limit)
    if not runs:
        click.echo("No runs found")
        return
    table = [[r['id'], r['created_at'], r['mode'], r['volume'], r['seeds'],
              'yes' if r['unbalanced'] else 'no', f"{r['avg_trip_time']:.2f}",
              f"{r['throughput']:.4f}", f"{r['effective_avg_trip_time']:.2f}"] for r in runs]
    click.echo(tabulate(table, headers=['ID', 'Date', 'Mode', 'Volume', 'Seeds', 'Unbalanced',
                                        'Avg trip (s)', 'Throughput', 'Effective avg (s)'],
                        tablefmt='simple'))
    click.echo(f"\nTotal: {len(runs)} runs")


if __name__ == '__main__':
    cli()
