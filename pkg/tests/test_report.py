"""Run-report artifacts: trace table and figures."""

from __future__ import annotations

import csv

from scenelayout.optimizer import optimize_scene
from scenelayout.report import write_run_report
from scenelayout.scoring import OracleScorer


def test_report_files_and_trace_rows(five_node_two_component_graph, tmp_path):
    _graph, report = optimize_scene(five_node_two_component_graph, OracleScorer())
    paths = write_run_report(report, tmp_path / "out")
    for path in paths:
        assert path.exists() and path.stat().st_size > 0
    with open(paths[0], newline="") as handle:
        rows = list(csv.DictReader(handle))
    assert len(rows) == report.total_iterations
    assert {"level", "subject", "iteration", "s1", "loss"} <= set(rows[0])
    levels = {row["level"] for row in rows}
    assert "edge" in levels and "place" in levels
