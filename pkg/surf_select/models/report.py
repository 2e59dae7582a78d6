"""
Run report emitted by the pipeline.

The JSON form is schema-stable. Every key below is always present; sections
that a mode does not produce are null (or an empty list for `steps`):

    version, mode, family, seed, config, dataset,
    ranking, steps, terminal, coefficients, stability,
    simulation, augmented_columns, warnings, timing

`timing` holds wall-clock seconds per stage and is excluded from the report
body, so two runs with the same config and seed have identical bodies.
"""
import math
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field


class ReportModel(BaseModel):
    """Base of the report sections; infinite statistics are written as Infinity."""
    model_config = ConfigDict(ser_json_inf_nan="constants")


class DatasetSummary(ReportModel):
    """Shape and preprocessing of the analysed design."""
    n_samples: int
    n_columns: int
    response: str
    normalization: str
    centered: bool = True
    column_means: dict[str, float] = Field(default_factory=dict)
    taxonomy: bool = False
    dropped_nodes: list[str] = Field(default_factory=list)
    passthrough: list[str] = Field(default_factory=list)


class RankingRecord(ReportModel):
    """Ranking trace: columns in rank order with their selection frequencies."""
    order: list[str]
    frequency: list[float]
    n_completed: int
    n_skipped: int


class StepRecord(ReportModel):
    """One accepted forward-selection step."""
    variable: str
    column: int
    llr: float
    critical_value: float
    p_value: float


class TerminalRecord(ReportModel):
    """The test that stopped forward selection."""
    candidate: Optional[str] = None
    critical_value: Optional[float] = None
    p_value: Optional[float] = None
    hit_max_steps: bool = False
    flagged_candidates: list[str] = Field(default_factory=list)


class CoefficientRecord(ReportModel):
    """Final GLM on the selected columns, on the design and leaf scales."""
    intercept: float
    augmented: dict[str, float] = Field(default_factory=dict)
    leaf: dict[str, float] = Field(default_factory=dict)
    passthrough: dict[str, float] = Field(default_factory=dict)
    constraints: list[str] = Field(default_factory=list)
    deviance: float
    converged: bool


class StabilityRecord(ReportModel):
    """Stability-selection outcome."""
    selected: list[str]
    frequency: dict[str, float]
    cutoff: float
    q: int
    n_completed: int
    n_skipped: int


class Report(ReportModel):
    """Everything needed to interpret and reproduce one pipeline run."""

    version: str
    mode: str
    family: str
    seed: int
    config: dict = Field(default_factory=dict)
    dataset: Optional[DatasetSummary] = None
    ranking: Optional[RankingRecord] = None
    steps: list[StepRecord] = Field(default_factory=list)
    terminal: Optional[TerminalRecord] = None
    coefficients: Optional[CoefficientRecord] = None
    stability: Optional[StabilityRecord] = None
    simulation: Optional[dict[str, dict]] = None
    augmented_columns: Optional[list[str]] = None
    warnings: list[str] = Field(default_factory=list)
    timing: dict[str, float] = Field(default_factory=dict)

    @property
    def selected(self) -> list[str]:
        return [step.variable for step in self.steps]

    def body_json(self) -> str:
        """JSON without the wall-clock section."""
        return self.model_dump_json(exclude={"timing"}, indent=2)

    def to_json(self) -> str:
        return self.model_dump_json(indent=2)

    def to_text(self) -> str:
        """Human-readable summary."""
        lines = [f"surf-select {self.version}: mode={self.mode} family={self.family} seed={self.seed}"]
        if self.dataset is not None:
            d = self.dataset
            lines.append(f"Data: {d.n_samples} samples, {d.n_columns} columns, response '{d.response}'"
                         f" (normalization: {d.normalization})")
            if d.dropped_nodes:
                lines.append(f"Dropped duplicate tree nodes: {', '.join(d.dropped_nodes)}")

        if self.ranking is not None:
            top = list(zip(self.ranking.order, self.ranking.frequency))[:10]
            lines.append("")
            lines.append(f"Ranking ({self.ranking.n_completed} subsamples, {self.ranking.n_skipped} skipped), top {len(top)}:")
            for rank, (name, freq) in enumerate(top, 1):
                lines.append(f"  {rank:>3}. {name:<40} {freq:.3f}")

        if self.mode == "select":
            lines.append("")
            if self.steps:
                lines.append("Selected variables (likelihood ratio test against the permutation null):")
                for step in self.steps:
                    lines.append(f"  {step.variable:<40} LLR={_fmt(step.llr)} "
                                 f"crit={_fmt(step.critical_value)} p={step.p_value:.4f}")
            else:
                lines.append("No variable selected.")
            if self.terminal is not None and self.terminal.candidate is not None:
                lines.append(f"Stopped at {self.terminal.candidate} "
                             f"(crit={_fmt(self.terminal.critical_value)}, p={self.terminal.p_value:.4f})")
            if self.terminal is not None and self.terminal.hit_max_steps:
                lines.append("Stopped at the step cap.")

        if self.coefficients is not None and self.coefficients.constraints:
            lines.append("")
            lines.append("Leaf-level constraints:")
            lines.extend(f"  {c}" for c in self.coefficients.constraints)

        if self.stability is not None:
            s = self.stability
            lines.append("")
            lines.append(f"Stability selection (cutoff {s.cutoff:g}, q={s.q}, {s.n_completed} subsamples):")
            lines.append(f"  selected: {', '.join(s.selected) if s.selected else 'none'}")

        if self.simulation is not None:
            lines.append("")
            lines.append("Simulation:")
            for method, row in self.simulation.items():
                lines.append(f"  {method:<16} reps={row['n_reps']} fp_mean={row['fp_mean']:.3f} "
                             f"P(none)={row['p_zero_selected']:.3f} {row['error_metric']}={row['train_error_mean']:.4f}")

        if self.augmented_columns is not None:
            lines.append("")
            lines.append(f"Augmented design: {len(self.augmented_columns)} columns")

        for warning in self.warnings:
            lines.append(f"Warning: {warning}")
        return "\n".join(lines) + "\n"


def _fmt(value: Optional[float]) -> str:
    if value is None:
        return "-"
    if math.isinf(value):
        return "inf"
    return f"{value:.4g}"
