"""
Tests for the command-line interface
"""
import os
import tempfile

import click
import pytest
from click.testing import CliRunner

from dica_sim.cli import cli, parse_schedule, parse_volumes


@pytest.fixture
def invoke():
    runner = CliRunner()
    with tempfile.TemporaryDirectory() as tmpdir:
        db_path = os.path.join(tmpdir, 'results.db')

        def _invoke(*args):
            return runner.invoke(cli, ['--db-path', db_path, *args])
        _invoke.tmpdir = tmpdir
        yield _invoke


def test_parse_volumes():
    assert parse_volumes('100..500') == [100, 200, 300, 400, 500]
    assert parse_volumes('200..300') == [200, 300]
    assert parse_volumes('100,300') == [100, 300]
    with pytest.raises(click.BadParameter):
        parse_volumes('150')
    with pytest.raises(click.BadParameter):
        parse_volumes('600..900')


def test_parse_schedule():
    assert parse_schedule('0:100,600:500') == [(0.0, 100), (600.0, 500)]
    with pytest.raises(click.BadParameter):
        parse_schedule('0-100')


def test_routes(invoke):
    result = invoke('routes')
    assert result.exit_code == 0
    assert 'S-left' in result.output
    assert 'NORTH-out1' in result.output
    assert 'Longest route' in result.output


def test_plan(invoke):
    result = invoke('plan', '--volumes', '100,300')
    assert result.exit_code == 0
    assert '0.1371' in result.output
    assert 'C0' in result.output


def test_plan_split_scheme(invoke):
    result = invoke('plan', '--volumes', '100', '--scheme', 'split')
    assert result.exit_code == 0
    assert '0.2057' in result.output


def test_plan_rejects_conflicting_phases(invoke):
    config_path = os.path.join(invoke.tmpdir, 'tight.yaml')
    with open(config_path, 'w') as f:
        f.write('layout:\n  left_turn_radius: 3.5\n')
    result = invoke('plan', '--volumes', '100', '--config', config_path)
    assert result.exit_code == 1
    assert 'Error' in result.output


def test_history_empty(invoke):
    result = invoke('history')
    assert result.exit_code == 0
    assert 'No runs found' in result.output


def test_run_and_history(invoke):
    out_dir = os.path.join(invoke.tmpdir, 'out')
    result = invoke('run', '--mode', 'baseline', '--duration', '20', '--seed', '12',
                    '--verify', '--out', out_dir)
    assert result.exit_code == 0, result.output
    assert 'Simulation report' in result.output
    assert os.path.exists(os.path.join(out_dir, 'report.txt'))

    result = invoke('history', '--mode', 'baseline')
    assert result.exit_code == 0
    assert 'Total: 1 runs' in result.output


def test_run_no_store(invoke):
    result = invoke('run', '--duration', '10', '--seed', '12', '--no-store')
    assert result.exit_code == 0, result.output
    assert 'No runs found' in invoke('history').output


def test_run_invalid_volume(invoke):
    result = invoke('run', '--volume', '150', '--no-store')
    assert result.exit_code == 1
    assert 'Invalid volume' in result.output


def test_run_trace_needs_out(invoke):
    result = invoke('run', '--duration', '10', '--seed', '12', '--trace', '--no-store')
    assert result.exit_code == 1
    assert '--out' in result.output


def test_run_trace_written_to_out(invoke):
    out_dir = os.path.join(invoke.tmpdir, 'traced')
    result = invoke('run', '--mode', 'enhanced', '--duration', '10', '--seed', '12', '--trace',
                    '--out', out_dir, '--no-store')
    assert result.exit_code == 0, result.output
    assert os.path.exists(os.path.join(out_dir, 'trace_enhanced_12.jsonl'))


def test_run_invalid_mode(invoke):
    result = invoke('run', '--mode', 'roundabout')
    assert result.exit_code == 2


def test_bench_rejects_bisection_alone(invoke):
    result = invoke('bench', '--cell', 'D', '--duration', '10', '--no-store')
    assert result.exit_code == 1
    assert 'requires technique B' in result.output


def test_sweep_rejects_unknown_mode(invoke):
    result = invoke('sweep', '--modes', 'enhanced,roundabout', '--volumes', '100')
    assert result.exit_code == 1
    assert 'Invalid modes' in result.output
