"""
Tests for result files and the run registry
"""
import json
import math

import numpy as np
import pandas as pd

from scripts.monitoring.report_writer import (PLOT_COLUMNS, ReportWriter, RunManifest, dump_json, emit_plot_data,
                                              rows_frame)
from scripts.monitoring.run_registry import RunRegistry
from scripts.verification.theorem_verifiers import VerifierReport


def make_report(name="tail", verdict="pass", ratio=1.02, plot_rows=None):
    rows = [{'n': 16, 'phat': 0.2, 'ci': [0.19, 0.21]}, {'n': 32, 'phat': 0.14, 'ci': [0.13, 0.15]}]
    return VerifierReport(name, 0.5, 0.51, 0.01, ratio, 0.02, 0.15, verdict, {'seed': 3},
                          {'slope': verdict}, {'slope': -0.5, 'empty': math.nan}, rows, plot_rows or [])


def test_json_is_sorted_and_strict(tmp_path):
    path = tmp_path / "out.json"
    dump_json({'b': np.float64(1.5), 'a': [math.inf, np.int64(2)], 'c': np.array([0.5, math.nan])}, path)
    text = path.read_text()
    assert text.index('"a"') < text.index('"b"') < text.index('"c"')
    data = json.loads(text)
    assert data == {'a': ["inf", 2], 'b': 1.5, 'c': [0.5, "nan"]}


def test_rows_frame_flattens_nested_cells():
    frame = rows_frame([{'n': 1, 'ci': [0.1, 0.2]}, {'n': 2, 'extra': 'x'}])
    assert list(frame.columns) == ['n', 'ci', 'extra']
    assert frame.loc[0, 'ci'] == "[0.1, 0.2]"
    assert list(rows_frame([], ['n', 'phat']).columns) == ['n', 'phat']


def test_empty_plot_data_keeps_header(tmp_path):
    path = emit_plot_data(make_report(), tmp_path / "plot_data.csv")
    assert path.read_text().strip() == ",".join(PLOT_COLUMNS['tail'])


def test_plot_data_rows(tmp_path):
    plot_rows = [{'n': 16, 'phat': 0.2, 'lo': 0.19, 'hi': 0.21, 'predicted': 0.199}]
    path = emit_plot_data(make_report(plot_rows=plot_rows), tmp_path / "plot_data.csv")
    frame = pd.read_csv(path)
    assert list(frame.columns) == ['n', 'phat', 'lo', 'hi', 'predicted']
    assert frame.loc[0, 'predicted'] == 0.199


def test_writer_layout_and_manifest(tmp_path):
    writer = ReportWriter(tmp_path / "run")
    manifest = RunManifest("abc123", 3)
    folders = writer.write_all([make_report(), make_report(verdict="fail"), make_report("llt")], manifest)
    assert set(folders) == {'tail', 'llt'}
    assert (tmp_path / "run" / "tail" / "report.json").exists()
    assert (tmp_path / "run" / "tail_2" / "rows.csv").exists()
    assert (tmp_path / "run" / "llt" / "plot_data.csv").exists()

    data = json.loads((tmp_path / "run" / "manifest.json").read_text())
    assert data['verdicts'] == {'tail': "pass", 'tail_2': "fail", 'llt': "pass"}
    assert data['config_hash'] == "abc123"
    assert data['timestamp']

    report = json.loads((tmp_path / "run" / "tail" / "report.json").read_text())
    assert report['details']['empty'] == "nan"
    assert 'rows' not in report and report['schema_version'] == 1


def test_registry_records_and_looks_up(tmp_path):
    registry = RunRegistry(tmp_path)
    first = registry.record_run('tail', 'a.cfg', 'hash-a', 3, tmp_path / "r1", 0,
                                [make_report(ratio=math.nan)], "1.0.0")
    registry.record_run('llt', 'b.cfg', 'hash-b', 4, tmp_path / "r2", 1, [make_report("llt", "fail")])
    registry.record_run('tail', 'a.cfg', 'hash-a', 5, tmp_path / "r3", 0, [])

    assert [r['master_seed'] for r in registry.runs_for_config('hash-a')] == [3, 5]
    assert registry.recent_runs(limit=1)[0]['master_seed'] == 5
    assert registry.verdicts(first) == {'tail': "pass"}
    assert (tmp_path / "run_registry.db").exists()
