#!/usr/bin/env python3
"""
ConeWalk - Run Registry
SQLite record of completed verification runs.

Features:
- One row per CLI run: config hash, seed, output directory, exit code
- Per-verifier verdicts and ratios
- Lookup of earlier runs of the same config
"""
import json
import logging
import sqlite3
import sys
from datetime import datetime
from pathlib import Path
from typing import Dict, List

# Add project root to path
sys.path.append(str(Path(__file__).parent.parent.parent))

from scripts.verification.theorem_verifiers import VerifierReport

REGISTRY_FILE = "run_registry.db"


class RunRegistry:
    """Registry stored next to (not inside) the per-run result directories"""

    def __init__(self, output_root: Path):
        self.db_path = Path(output_root) / REGISTRY_FILE
        self.logger = logging.getLogger('RunRegistry')
        self.setup_database()

    def setup_database(self):
        self.db_path.parent.mkdir(parents=True, exist_ok=True)
        with sqlite3.connect(self.db_path) as conn:
            cursor = conn.cursor()
            cursor.execute('''
                CREATE TABLE IF NOT EXISTS runs (
                    run_id INTEGER PRIMARY KEY AUTOINCREMENT,
                    timestamp TEXT NOT NULL,
                    command TEXT NOT NULL,
                    config_path TEXT,
                    config_hash TEXT,
                    master_seed INTEGER,
                    output_dir TEXT NOT NULL,
                    exit_code INTEGER NOT NULL,
                    tool_version TEXT
                )
            ''')
            cursor.execute('''
                CREATE TABLE IF NOT EXISTS verdicts (
                    run_id INTEGER NOT NULL,
                    verifier TEXT NOT NULL,
                    verdict TEXT NOT NULL,
                    ratio REAL,
                    ratio_stderr REAL,
                    checks TEXT,
                    FOREIGN KEY (run_id) REFERENCES runs (run_id)
                )
            ''')
            cursor.execute('CREATE INDEX IF NOT EXISTS idx_runs_hash ON runs (config_hash)')
            conn.commit()

    def record_run(self, command: str, config_path: str, config_hash: str, master_seed: int, output_dir: Path,
                   exit_code: int, reports: List[VerifierReport], tool_version: str = "") -> int:
        with sqlite3.connect(self.db_path) as conn:
            cursor = conn.cursor()
            cursor.execute('''
                INSERT INTO runs (timestamp, command, config_path, config_hash, master_seed, output_dir,
                                  exit_code, tool_version)
                VALUES (?, ?, ?, ?, ?, ?, ?, ?)
            ''', (datetime.now().isoformat(timespec='seconds'), command, config_path, config_hash,
                  master_seed, str(output_dir), exit_code, tool_version))
            run_id = cursor.lastrowid
            cursor.executemany('''
                INSERT INTO verdicts (run_id, verifier, verdict, ratio, ratio_stderr, checks)
                VALUES (?, ?, ?, ?, ?, ?)
            ''', [(run_id, r.name, r.verdict, _finite(r.ratio), _finite(r.ratio_stderr),
                   json.dumps(r.checks, sort_keys=True)) for r in reports])
            conn.commit()
        self.logger.info(f"registered run {run_id} ({command}, exit {exit_code})")
        return run_id

    def recent_runs(self, limit: int = 20) -> List[Dict]:
        with sqlite3.connect(self.db_path) as conn:
            conn.row_factory = sqlite3.Row
            rows = conn.execute('SELECT * FROM runs ORDER BY run_id DESC LIMIT ?', (limit,)).fetchall()
        return [dict(row) for row in rows]

    def runs_for_config(self, config_hash: str) -> List[Dict]:
        with sqlite3.connect(self.db_path) as conn:
            conn.row_factory = sqlite3.Row
            rows = conn.execute('SELECT * FROM runs WHERE config_hash = ? ORDER BY run_id',
                                (config_hash,)).fetchall()
        return [dict(row) for row in rows]

    def verdicts(self, run_id: int) -> Dict[str, str]:
        with sqlite3.connect(self.db_path) as conn:
            rows = conn.execute('SELECT verifier, verdict FROM verdicts WHERE run_id = ?', (run_id,)).fetchall()
        return {verifier: verdict for verifier, verdict in rows}


def _finite(value):
    try:
        value = float(value)
    except (TypeError, ValueError):
        return None
    return value if value == value and abs(value) != float("inf") else None
