"""
Export tools for reports, augmented designs and simulation metrics.
"""
import logging
from typing import Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from ..models.inputs import ReportFormat
from ..models.report import Report
from ..models.results import ScenarioMetrics
from ..utils import ensure_parent_directory

logger = logging.getLogger(__name__)


def write_report(report: Report, path: str, fmt: ReportFormat = ReportFormat.JSON) -> str:
    """
    Write a report as JSON or as a text summary.

    Args:
        report: Pipeline report
        path: Output file
        fmt: json or text

    Returns:
        Absolute path written

    Raises:
        OSError: I/O failures are passed through unchanged
    """
    full_path = ensure_parent_directory(path)
    content = report.to_json() if ReportFormat(fmt) == ReportFormat.JSON else report.to_text()
    with open(full_path, "w", encoding="utf-8") as f:
        f.write(content)
        if not content.endswith("\n"):
            f.write("\n")
    logger.info(f"Report written to {full_path}")
    return full_path


def read_report(path: str) -> Report:
    """Parse a JSON report written by write_report."""
    with open(path, encoding="utf-8") as f:
        return Report.model_validate_json(f.read())


def write_augmented_design(
    path: str,
    matrix: np.ndarray,
    labels: Sequence[str],
    sample_ids: Optional[Sequence[str]] = None,
) -> str:
    """Write a design matrix as CSV with a sample-id first column."""
    full_path = ensure_parent_directory(path)
    index = list(sample_ids) if sample_ids is not None else [f"s{i}" for i in range(matrix.shape[0])]
    frame = pd.DataFrame(matrix, columns=list(labels), index=pd.Index(index, name="sample_id"))
    frame.to_csv(full_path, float_format="%.17g")
    logger.info(f"Augmented design written to {full_path} ({matrix.shape[1]} columns)")
    return full_path


def write_metrics(metrics: Mapping[str, ScenarioMetrics], path: str, scenario: Optional[str] = None) -> str:
    """Write one CSV row per method."""
    full_path = ensure_parent_directory(path)
    rows = [m.to_row() for m in metrics.values()]
    frame = pd.DataFrame(rows)
    if scenario is not None:
        frame.insert(0, "scenario", scenario)
    tp_columns = sorted((c for c in frame.columns if c.startswith("tp_")), key=lambda c: int(c[3:]))
    frame[tp_columns] = frame[tp_columns].fillna(0).astype(int)
    other = [c for c in frame.columns if c not in tp_columns]
    frame[other + tp_columns].to_csv(full_path, index=False)
    logger.info(f"Metrics written to {full_path}")
    return full_path


def metrics_from_report(report: Report) -> dict[str, ScenarioMetrics]:
    """Rebuild ScenarioMetrics from the simulation section of a report."""
    metrics = {}
    for name, row in (report.simulation or {}).items():
        histogram = {int(k[3:]): int(v) for k, v in row.items() if k.startswith("tp_")}
        fields = {k: v for k, v in row.items() if not k.startswith("tp_")}
        metrics[name] = ScenarioMetrics(tp_histogram=histogram, **fields)
    return metrics
