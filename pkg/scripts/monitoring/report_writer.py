#!/usr/bin/env python3
"""
ConeWalk - Report Writer
Result files for a verification run.

Features:
- manifest.json with config hash, seed, tool version and per-verifier verdicts
- One report.json and one rows.csv per verifier report
- Tidy plot-data CSV per report (header-only for empty reports)
- Deterministic bytes: sorted keys, fixed float format, no timestamps outside the manifest
"""
import json
import logging
import math
import sys
from dataclasses import dataclass, field, asdict
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

# Add project root to path
sys.path.append(str(Path(__file__).parent.parent.parent))

from scripts.verification.theorem_verifiers import VerifierReport

logger = logging.getLogger(__name__)

TOOL_VERSION = "1.0.0"
REPORT_SCHEMA_VERSION = 1
FLOAT_FORMAT = "%.12g"

DEFAULT_PLOT_COLUMNS = ['n', 'quantity', 'value', 'low', 'high', 'predicted']
PLOT_COLUMNS = {
    'tail': ['n', 'phat', 'lo', 'hi', 'predicted'],
    'weak-limit': ['center_0', 'observed', 'predicted'],
    'weak-limit-trend': ['n', 'tv', 'lo', 'hi'],
    'llt': ['n', 'box', 'phat', 'lo', 'hi', 'predicted'],
    'llt-uniformity': ['point', 'deviation'],
    'return': ['n', 'phat', 'lo', 'hi', 'predicted'],
    'duality': ['pair', 'key', 'p_left', 'p_right'],
    'bounds': ['n', 'free_constant', 'killed_constant', 'tail_constant'],
    'harmonic': ['n', 'V', 'lo', 'hi', 'u'],
}


@dataclass
class RunManifest:
    config_hash: str
    master_seed: int
    tool_version: str = TOOL_VERSION
    timestamp: str = ""
    schema_version: int = REPORT_SCHEMA_VERSION
    config_path: str = ""
    problem: Dict = field(default_factory=dict)
    constants: Dict = field(default_factory=dict)
    verdicts: Dict[str, str] = field(default_factory=dict)
    exit_code: Optional[int] = None

    def to_dict(self) -> Dict:
        return asdict(self)


def json_serializer(obj):
    """Fallback for numpy values and non-finite floats inside report payloads"""
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return _clean(float(obj))
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if hasattr(obj, 'to_dict'):
        return obj.to_dict()
    return str(obj)


def _clean(value):
    """Non-finite floats become strings so the JSON stays strict"""
    if isinstance(value, float):
        return value if math.isfinite(value) else str(value)
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.generic):
        return _clean(value.item())
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    return value


def dump_json(payload: Dict, path: Path):
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        json.dump(_clean(payload), f, indent=2, sort_keys=True, default=json_serializer, allow_nan=False)
        f.write('\n')


def _flatten_cell(value):
    if isinstance(value, (list, tuple, dict, np.ndarray)):
        return json.dumps(_clean(value), sort_keys=True, default=json_serializer)
    return value


def rows_frame(rows: List[Dict], columns: List[str] = None) -> pd.DataFrame:
    """DataFrame with nested cells encoded as JSON strings, column order fixed by first appearance"""
    if not rows:
        return pd.DataFrame(columns=columns or [])
    order = []
    for row in rows:
        for key in row:
            if key not in order:
                order.append(key)
    data = [{key: _flatten_cell(row.get(key)) for key in order} for row in rows]
    return pd.DataFrame(data, columns=order)


def write_csv(frame: pd.DataFrame, path: Path):
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')


def emit_plot_data(report: VerifierReport, path: Path) -> Path:
    """Tidy plot data, one observation per row; no plotting is done here"""
    path = Path(path)
    columns = PLOT_COLUMNS.get(report.name, DEFAULT_PLOT_COLUMNS)
    write_csv(rows_frame(report.plot_rows, columns), path)
    return path


class ReportWriter:
    """Writes the result directory of one run"""

    def __init__(self, output_dir: Path):
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.logger = logging.getLogger('ReportWriter')
        self._used: Dict[str, int] = {}

    def _report_dir(self, name: str) -> Path:
        count = self._used.get(name, 0) + 1
        self._used[name] = count
        folder = name if count == 1 else f"{name}_{count}"
        path = self.output_dir / folder
        path.mkdir(parents=True, exist_ok=True)
        return path

    def write_report(self, report: VerifierReport) -> Path:
        folder = self._report_dir(report.name)
        payload = report.to_dict()
        payload['schema_version'] = REPORT_SCHEMA_VERSION
        dump_json(payload, folder / "report.json")
        write_csv(rows_frame(report.rows), folder / "rows.csv")
        emit_plot_data(report, folder / "plot_data.csv")
        self.logger.info(f"{report.name}: verdict {report.verdict}, results in {folder}")
        return folder

    def write_manifest(self, manifest: RunManifest) -> Path:
        manifest.timestamp = manifest.timestamp or datetime.now().isoformat(timespec='seconds')
        path = self.output_dir / "manifest.json"
        dump_json(manifest.to_dict(), path)
        return path

    def write_all(self, reports: List[VerifierReport], manifest: RunManifest) -> Dict[str, Path]:
        folders = {}
        for report in reports:
            folders[report.name] = self.write_report(report)
            key = report.name
            suffix = 2
            while key in manifest.verdicts:
                key = f"{report.name}_{suffix}"
                suffix += 1
            manifest.verdicts[key] = report.verdict
        self.write_manifest(manifest)
        return folders
