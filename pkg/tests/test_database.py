"""
Tests for the results database

Run with: python -m pytest tests/
"""
import pytest

from dica_sim.config import ScenarioConfig
from dica_sim.metrics import MetricsCollector


def make_summary(mode='enhanced', volume=100, durations=(6.0, 8.0)):
    m = MetricsCollector()
    for vin, d in enumerate(durations):
        m.record_trip(vin, 0.0, d)
    return m.finalize(len(durations), mode=mode, volume=volume, seed=12).summary()


def test_record_run(temp_db):
    """Test storing and reading back a run"""
    run_id = temp_db.record_run(make_summary(), ScenarioConfig().to_dict())
    runs = temp_db.list_runs()
    assert len(runs) == 1
    assert runs[0]['id'] == run_id
    assert runs[0]['mode'] == 'enhanced'
    assert runs[0]['seeds'] == '12'
    assert runs[0]['avg_trip_time'] == pytest.approx(7.0)
    assert runs[0]['unbalanced'] == 0
    assert '"mode": "enhanced"' in runs[0]['config_json']


def test_list_runs_filters(temp_db):
    """Test filtering runs by mode and volume"""
    temp_db.record_run(make_summary('enhanced', 100))
    temp_db.record_run(make_summary('tlight', 100))
    temp_db.record_run(make_summary('tlight', 300))

    assert len(temp_db.list_runs()) == 3
    assert len(temp_db.list_runs(mode='tlight')) == 2
    assert len(temp_db.list_runs(mode='tlight', volume=300)) == 1
    assert len(temp_db.list_runs(volume=500)) == 0
    assert len(temp_db.list_runs(limit=1)) == 1
    # newest first
    assert temp_db.list_runs()[0]['volume'] == 300


def test_invalid_mode_rejected(temp_db):
    """Test the schema constraint on mode"""
    import sqlite3
    with pytest.raises(sqlite3.IntegrityError):
        temp_db.record_run(make_summary(mode='roundabout'))


def test_record_bench(temp_db):
    """Test storing benchmark cells"""
    temp_db.record_bench({'label': 'baseline', 'techniques': '', 'volume': 100, 'seed': 12,
                          'requests': 10, 'wall_time': 0.5, 'comparisons': 1000})
    temp_db.record_bench({'label': 'A+B+C+D', 'techniques': 'ABCD', 'volume': 100, 'seed': 12,
                          'requests': 10, 'wall_time': 0.05, 'comparisons': 50, 'speedup': 10.0})
    rows = temp_db.list_bench()
    assert [r['label'] for r in rows] == ['A+B+C+D', 'baseline']
    assert rows[0]['speedup'] == pytest.approx(10.0)
    assert rows[1]['speedup'] is None
