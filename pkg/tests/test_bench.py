"""
Tests for the coordinator ablation benchmarks
"""
import csv
import os
import tempfile

import pytest

from dica_sim.bench import (
    BENCH_FIELDS, ablation_cells, ablation_matrix, run_bench_cell, write_bench_csv,
)
from dica_sim.coordinator import Technique

from conftest import H


def test_ablation_cells():
    cells = ablation_cells(['IV-A', 'IV-B', 'IV-C', 'IV-D'])
    assert cells[0] == frozenset()
    assert frozenset({Technique.A}) in cells
    assert frozenset({Technique.B, Technique.D}) in cells
    assert frozenset({Technique.D}) not in cells
    assert cells[-1] == frozenset(Technique)
    assert len(cells) == 6


def test_ablation_cells_from_members():
    assert ablation_cells(tuple(Technique)) == ablation_cells(['A', 'B', 'C', 'D'])
    assert ablation_cells([Technique.C]) == [frozenset(), frozenset({Technique.C})]


def test_ablation_cells_single_technique():
    assert ablation_cells(['D']) == [frozenset(), frozenset({Technique.B, Technique.D})]
    assert ablation_cells([]) == [frozenset()]


def test_bisection_alone_rejected(small_config):
    with pytest.raises(ValueError):
        run_bench_cell(small_config, ['D'])
    with pytest.raises(ValueError):
        ablation_matrix(small_config, [['D']])


def test_bench_cell(small_config, layout, zones):
    result = run_bench_cell(small_config.replace(duration=30.0), ['B', 'D'],
                            environment=(layout, zones))
    assert result.label == 'B+D'
    assert result.techniques == ('B', 'D')
    assert result.seed == 12
    assert result.wall_time == pytest.approx(sum(result.request_times))
    row = result.row()
    assert set(row) == set(BENCH_FIELDS)
    assert row['requests'] == len(result.request_times)


def test_ablation_matrix_same_traffic(small_config):
    results = ablation_matrix(small_config, [['A'], ['A', 'B', 'D']])
    assert [r.label for r in results] == ['baseline', 'A', 'A+B+D']
    baseline = results[0]
    for r in results:
        assert set(r.entry_times) == set(baseline.entry_times) or r.max_entry_deviation is not None
        assert r.counters['requests'] == len(r.request_times)
    # both cells search with exact intervals, so confirmations match the baseline
    assert results[1].max_entry_deviation == pytest.approx(0.0, abs=H / 2)
    if baseline.counters['comparisons']:
        assert results[2].ops_ratio is None or results[2].ops_ratio < 1.0

    with tempfile.TemporaryDirectory() as tmpdir:
        path = os.path.join(tmpdir, 'bench.csv')
        write_bench_csv(path, results)
        with open(path) as f:
            rows = list(csv.DictReader(f))
    assert [r['label'] for r in rows] == ['baseline', 'A', 'A+B+D']
