"""
Results database

Keeps a history of simulation runs and benchmark cells in sqlite so that
sweeps can be compared across invocations.
"""
import json
import os
import sqlite3
from datetime import datetime
from typing import Any, Dict, List, Optional


# Default database location
DEFAULT_DB_PATH = os.path.expanduser("~/.dica_sim/results.db")


def default_db_path() -> str:
    return os.environ.get('DICA_DB_PATH', DEFAULT_DB_PATH)


class Database:
    """Database connection and schema management"""

    def __init__(self, db_path: Optional[str] = None):
        self.db_path = db_path or default_db_path()
        directory = os.path.dirname(self.db_path)
        if directory:
            os.makedirs(directory, exist_ok=True)

    def get_connection(self) -> sqlite3.Connection:
        conn = sqlite3.connect(self.db_path)
        conn.row_factory = sqlite3.Row
        return conn

    def initialize_schema(self):
        """Create the tables if they do not exist"""
        with self.get_connection() as conn:
            conn.execute("""
                CREATE TABLE IF NOT EXISTS runs (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    mode TEXT NOT NULL,
                    volume INTEGER NOT NULL,
                    seeds TEXT NOT NULL,
                    unbalanced INTEGER NOT NULL DEFAULT 0,
                    generated INTEGER NOT NULL,
                    crossed INTEGER NOT NULL,
                    avg_trip_time REAL,
                    trip_time_sd REAL,
                    pooled_sd REAL,
                    throughput REAL,
                    effective_avg_trip_time REAL,
                    min_distance REAL,
                    coordinator_wall_time REAL,
                    config_json TEXT,
                    created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP,

                    CHECK (mode IN ('baseline', 'enhanced', 'tlight'))
                )
            """)
            conn.execute("""
                CREATE TABLE IF NOT EXISTS bench (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    label TEXT NOT NULL,
                    techniques TEXT,
                    volume INTEGER NOT NULL,
                    seed INTEGER NOT NULL,
                    requests INTEGER,
                    wall_time REAL,
                    comparisons INTEGER,
                    oti_evaluations INTEGER,
                    loop_iterations INTEGER,
                    speedup REAL,
                    created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP
                )
            """)
            conn.execute("CREATE INDEX IF NOT EXISTS idx_runs_mode_volume ON runs(mode, volume)")
            conn.execute("CREATE INDEX IF NOT EXISTS idx_bench_label ON bench(label)")
            conn.commit()

    def record_run(self, summary: Dict[str, Any], config: Optional[Dict[str, Any]] = None) -> int:
        """Store the scalar summary of a report; returns the row id"""
        with self.get_connection() as conn:
            cur = conn.execute("""
                INSERT INTO runs (mode, volume, seeds, unbalanced, generated, crossed,
                                  avg_trip_time, trip_time_sd, pooled_sd, throughput,
                                  effective_avg_trip_time, min_distance,
                                  coordinator_wall_time, config_json, created_at)
                VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)
            """, (
                summary['mode'], summary['volume'], summary['seeds'],
                1 if summary.get('unbalanced') else 0,
                summary['generated'], summary['crossed'],
                summary.get('avg_trip_time'), summary.get('trip_time_sd'),
                summary.get('pooled_sd'), summary.get('throughput'),
                summary.get('effective_avg_trip_time'), summary.get('min_distance'),
                summary.get('coordinator_wall_time'),
                json.dumps(config) if config is not None else None,
                datetime.now().isoformat(timespec='seconds'),
            ))
            conn.commit()
            return cur.lastrowid

    def record_bench(self, row: Dict[str, Any]) -> int:
        with self.get_connection() as conn:
            cur = conn.execute("""
                INSERT INTO bench (label, techniques, volume, seed, requests, wall_time,
                                   comparisons, oti_evaluations, loop_iterations, speedup,
                                   created_at)
                VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)
            """, (
                row['label'], row.get('techniques'), row['volume'], row['seed'],
                row.get('requests'), row.get('wall_time'), row.get('comparisons'),
                row.get('oti_evaluations'), row.get('loop_iterations'), row.get('speedup'),
                datetime.now().isoformat(timespec='seconds'),
            ))
            conn.commit()
            return cur.lastrowid

    def list_runs(self, mode: Optional[str] = None, volume: Optional[int] = None,
                  limit: int = 50) -> List[Dict[str, Any]]:
        query = "SELECT * FROM runs WHERE 1=1"
        params: List[Any] = []
        if mode:
            query += " AND mode = ?"
            params.append(mode)
        if volume is not None:
            query += " AND volume = ?"
            params.append(volume)
        query += " ORDER BY id DESC LIMIT ?"
        params.append(limit)
        with self.get_connection() as conn:
            return [dict(row) for row in conn.execute(query, params).fetchall()]

    def list_bench(self, limit: int = 50) -> List[Dict[str, Any]]:
        with self.get_connection() as conn:
            rows = conn.execute("SELECT * FROM bench ORDER BY id DESC LIMIT ?", (limit,))
            return [dict(row) for row in rows.fetchall()]


def get_default_db() -> Database:
    """Default database instance, schema created on first use"""
    db = Database()
    if not os.path.exists(db.db_path):
        db.initialize_schema()
    return db
