"""
Tests for report, design and metrics export.
"""
import json
import math

import numpy as np
import pandas as pd
import pytest

from surf_select.models.inputs import ReportFormat
from surf_select.models.report import Report, StepRecord, TerminalRecord
from surf_select.models.results import ScenarioMetrics
from surf_select.tools.export import (
    metrics_from_report,
    read_report,
    write_augmented_design,
    write_metrics,
    write_report,
)
from surf_select.utils import InputFileError


def _report(**fields) -> Report:
    base = dict(version="0.3.0", mode="select", family="binomial", seed=1, timing={"rank": 0.5})
    base.update(fields)
    return Report(**base)


def _metrics(method="surf", histogram=None) -> ScenarioMetrics:
    return ScenarioMetrics(
        method=method, n_reps=4, n_failed=0, tp_histogram=histogram or {0: 1, 1: 3},
        fp_mean=0.25, fp_sd=0.5, selected_mean=1.0, p_zero_selected=0.25,
        error_metric="misclassification", train_error_mean=0.2,
    )


class TestReportExport:
    """Tests for write_report and read_report."""

    def test_json_round_trip(self, tmp_path):
        """A written report reads back equal, timing included."""
        report = _report(steps=[StepRecord(variable="k;p2", column=8, llr=12.5, critical_value=6.1, p_value=0.01)])
        path = write_report(report, str(tmp_path / "nested" / "report.json"))
        again = read_report(path)
        assert again == report
        assert again.selected == ["k;p2"]
        assert json.loads(open(path).read())["timing"] == {"rank": 0.5}

    def test_infinite_critical_value(self, tmp_path):
        """Infinite statistics survive JSON."""
        report = _report(terminal=TerminalRecord(candidate="otu1", critical_value=math.inf, p_value=1.0))
        again = read_report(write_report(report, str(tmp_path / "r.json")))
        assert math.isinf(again.terminal.critical_value)

    def test_infinite_step_statistic(self, tmp_path):
        """A perfect gaussian fit's infinite LLR is written as Infinity, not null."""
        step = StepRecord(variable="otu1", column=0, llr=math.inf, critical_value=4.2, p_value=1 / 201)
        path = write_report(_report(steps=[step]), str(tmp_path / "r.json"))
        raw = json.loads(open(path).read())
        assert raw["steps"][0]["llr"] == math.inf
        assert math.isinf(read_report(path).steps[0].llr)

    def test_text_format(self, tmp_path):
        path = write_report(_report(), str(tmp_path / "r.txt"), ReportFormat.TEXT)
        text = open(path).read()
        assert text.startswith("surf-select 0.3.0: mode=select")
        assert "No variable selected." in text

    def test_body_excludes_timing(self):
        assert "timing" not in json.loads(_report().body_json())

    def test_directory_target(self, tmp_path):
        with pytest.raises(InputFileError):
            write_report(_report(), str(tmp_path))


class TestDesignExport:
    """Tests for write_augmented_design."""

    def test_full_precision(self, tmp_path):
        """Values are written with every significant digit."""
        matrix = np.array([[1.0 / 3.0, 2.0], [np.pi, 1e-17]])
        path = write_augmented_design(str(tmp_path / "d.csv"), matrix, ["otu1", "k;p1"], ["a", "b"])
        frame = pd.read_csv(path, index_col=0, float_precision="round_trip")
        assert frame.index.name == "sample_id"
        assert list(frame.columns) == ["otu1", "k;p1"]
        np.testing.assert_array_equal(frame.to_numpy(), matrix)


class TestMetricsExport:
    """Tests for write_metrics and metrics_from_report."""

    def test_histogram_columns(self, tmp_path):
        """Missing histogram cells are zero and tp columns come last."""
        metrics = {"surf": _metrics(), "lasso": _metrics("lasso", {2: 4})}
        frame = pd.read_csv(write_metrics(metrics, str(tmp_path / "m.csv"), scenario="single_high"))
        assert list(frame.columns[-3:]) == ["tp_0", "tp_1", "tp_2"]
        assert frame.columns[0] == "scenario"
        assert frame.loc[frame.method == "lasso", "tp_0"].item() == 0
        assert frame.loc[frame.method == "surf", "tp_1"].item() == 3

    def test_from_report(self):
        report = _report(mode="simulate", simulation={"surf": _metrics().to_row()})
        rebuilt = metrics_from_report(report)
        assert rebuilt["surf"] == _metrics()
