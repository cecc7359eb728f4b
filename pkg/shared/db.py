"""Run ledger: every executed experiment and its per-iterate norms."""
import json
import sqlite3
import time
from pathlib import Path
from typing import Dict, List, Optional

DEFAULT_LEDGER = Path(__file__).parent.parent / "eplab_runs.db"


def ledger_path(path=None) -> Path:
    return Path(path) if path else DEFAULT_LEDGER


def get_conn(path: Optional[Path] = None):
    return sqlite3.connect(str(ledger_path(path)))


def init_db(path: Optional[Path] = None):
    conn = get_conn(path)
    c = conn.cursor()
    c.execute('''CREATE TABLE IF NOT EXISTS runs (
        id INTEGER PRIMARY KEY AUTOINCREMENT,
        timestamp REAL,
        experiment TEXT,
        output_dir TEXT,
        exit_code INTEGER,
        verdict TEXT,
        config TEXT,
        meta TEXT
    )''')
    c.execute('''CREATE TABLE IF NOT EXISTS iterations (
        run_id INTEGER,
        m INTEGER,
        uniform_bound REAL,
        delta REAL,
        ratio REAL,
        constraint_residual REAL,
        PRIMARY KEY (run_id, m)
    )''')
    c.execute('CREATE INDEX IF NOT EXISTS idx_runs_ts ON runs(timestamp)')
    c.execute('CREATE INDEX IF NOT EXISTS idx_runs_experiment ON runs(experiment)')
    conn.commit()
    conn.close()


def log_run(experiment, output_dir, exit_code, verdict="", config=None, meta=None, path=None) -> int:
    init_db(path)
    conn = get_conn(path)
    c = conn.cursor()
    c.execute('''INSERT INTO runs (timestamp, experiment, output_dir, exit_code, verdict, config, meta)
                 VALUES (?, ?, ?, ?, ?, ?, ?)''',
              (time.time(), experiment, str(output_dir), exit_code, verdict[:200],
               json.dumps(config or {}, sort_keys=True), json.dumps(meta or {}, sort_keys=True)))
    run_id = c.lastrowid
    conn.commit()
    conn.close()
    return run_id


def log_iterations(run_id, rows: List[Dict], path=None):
    """rows: dicts with m, uniform_bound, delta, ratio, constraint_residual."""
    conn = get_conn(path)
    c = conn.cursor()
    c.executemany('''INSERT OR REPLACE INTO iterations (run_id, m, uniform_bound, delta, ratio, constraint_residual)
                     VALUES (?, ?, ?, ?, ?, ?)''',
                  [(run_id, r["m"], r["uniform_bound"], r["delta"], r.get("ratio"), r["constraint_residual"])
                   for r in rows])
    conn.commit()
    conn.close()


def get_recent_runs(limit=20, experiment=None, path=None):
    init_db(path)
    conn = get_conn(path)
    c = conn.cursor()
    if experiment:
        c.execute('SELECT * FROM runs WHERE experiment=? ORDER BY timestamp DESC LIMIT ?', (experiment, limit))
    else:
        c.execute('SELECT * FROM runs ORDER BY timestamp DESC LIMIT ?', (limit,))
    rows = c.fetchall()
    conn.close()
    cols = ['id', 'timestamp', 'experiment', 'output_dir', 'exit_code', 'verdict', 'config', 'meta']
    return [dict(zip(cols, r)) for r in rows]


def get_iterations(run_id, path=None):
    conn = get_conn(path)
    c = conn.cursor()
    c.execute('SELECT m, uniform_bound, delta, ratio, constraint_residual FROM iterations WHERE run_id=? ORDER BY m',
              (run_id,))
    rows = c.fetchall()
    conn.close()
    cols = ['m', 'uniform_bound', 'delta', 'ratio', 'constraint_residual']
    return [dict(zip(cols, r)) for r in rows]
