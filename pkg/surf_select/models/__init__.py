"""Pydantic configs, result containers and the run report."""
from .inputs import (
    Family,
    GlmSpec,
    LambdaRule,
    RankingConfig,
    ForwardConfig,
    StabilityConfig,
    Method,
    SyntheticDesign,
    ScenarioSpec,
    Mode,
    Normalize,
    ReportFormat,
    PipelineConfig,
)
from .results import (
    GlmFit,
    CandidateScores,
    LambdaPath,
    LassoFit,
    CvResult,
    VariableRanking,
    SelectionStep,
    SelectionResult,
    StabilityResult,
    ScenarioMetrics,
)
from .report import Report

__all__ = [
    # Inputs
    "Family",
    "GlmSpec",
    "LambdaRule",
    "RankingConfig",
    "ForwardConfig",
    "StabilityConfig",
    "Method",
    "SyntheticDesign",
    "ScenarioSpec",
    "Mode",
    "Normalize",
    "ReportFormat",
    "PipelineConfig",
    # Results
    "GlmFit",
    "CandidateScores",
    "LambdaPath",
    "LassoFit",
    "CvResult",
    "VariableRanking",
    "SelectionStep",
    "SelectionResult",
    "StabilityResult",
    "ScenarioMetrics",
    # Report
    "Report",
]
