"""
Pipeline orchestration: aggregation, ranking, forward selection, stability and simulation.
"""
import logging
import time
from contextlib import contextmanager
from typing import Optional

import numpy as np

from .. import __version__
from ..models.inputs import Family, GlmSpec, Mode, PipelineConfig, ScenarioSpec
from ..models.report import (
    CoefficientRecord,
    DatasetSummary,
    RankingRecord,
    Report,
    StabilityRecord,
    StepRecord,
    TerminalRecord,
)
from ..services.forward import forward_select
from ..services.ranking import rank_variables
from ..services.sim import run_scenario
from ..services.stability import stability_select
from ..services.tree import AugmentedDesign, build_augmented_design, map_selection_to_leaves
from ..utils import SurfError, ValidationError
from .ingest import Dataset

logger = logging.getLogger(__name__)


@contextmanager
def _stage(name: str, timing: dict[str, float]):
    start = time.perf_counter()
    try:
        yield
    except SurfError as e:
        raise e.with_stage(name)
    finally:
        timing[name] = round(time.perf_counter() - start, 6)


def augment_dataset(dataset: Dataset) -> tuple[np.ndarray, list[str], Optional[AugmentedDesign]]:
    """
    Design used by the selection stages.

    With a taxonomy the OTU block is augmented with one aggregate per
    distinct internal node (from the uncentred values); pass-through
    covariates follow. The result is centred column-wise.

    Returns:
        (centred matrix, column labels, AugmentedDesign or None)
    """
    if dataset.taxonomy is None:
        return dataset.X, list(dataset.column_names), None
    design = build_augmented_design(
        dataset.otu_block,
        dataset.taxonomy,
        passthrough=dataset.passthrough_block,
        passthrough_names=dataset.passthrough,
    )
    matrix = design.matrix - design.matrix.mean(axis=0)
    return matrix, list(design.labels), design


def _summary(dataset: Dataset, labels: list[str], design: Optional[AugmentedDesign]) -> DatasetSummary:
    means = dataset.column_means
    return DatasetSummary(
        n_samples=dataset.n_samples,
        n_columns=len(labels),
        response=dataset.response_name,
        normalization=dataset.normalization.value,
        column_means={name: float(m) for name, m in zip(dataset.column_names, means)},
        taxonomy=design is not None,
        dropped_nodes=[design.tree.nodes[v].label for v in design.dropped] if design is not None else [],
        passthrough=list(dataset.passthrough),
    )


def _coefficients(result, labels: list[str], design: Optional[AugmentedDesign]) -> CoefficientRecord:
    fit = result.final_model
    selected = result.selected
    coefs = [float(c) for c in fit.coefficients]
    record = CoefficientRecord(
        intercept=float(fit.intercept),
        augmented={labels[j]: c for j, c in zip(selected, coefs)},
        deviance=float(fit.deviance),
        converged=bool(fit.converged),
    )
    if design is not None:
        leaves = map_selection_to_leaves(selected, coefs, design)
        record.leaf = {
            otu: float(v) for otu, v in zip(leaves.otu_ids, leaves.leaf_coefficients) if v != 0.0
        }
        record.passthrough = leaves.passthrough_coefficients
        record.constraints = leaves.constraints
    return record


def run_pipeline(
    dataset: Optional[Dataset],
    config: Optional[PipelineConfig] = None,
    scenario: Optional[ScenarioSpec] = None,
) -> Report:
    """
    Run one pipeline mode and collect its report.

    Modes:
        select: aggregate (with a taxonomy) -> rank_variables -> forward_select
        rank: aggregate -> rank_variables
        stability: aggregate -> stability_select
        aggregate: the augmented design only (requires a taxonomy)
        simulate: run_scenario on `scenario` (no dataset needed)

    Args:
        dataset: Loaded data (None for simulate)
        config: Pipeline configuration; its seed and workers reach every stage
        scenario: Scenario for simulate mode

    Returns:
        Report

    Raises:
        SurfError: Stage failures, with details["stage"] naming the stage
    """
    config = (config or PipelineConfig()).with_seed()
    mode = Mode(config.mode)
    timing: dict[str, float] = {}
    report = Report(
        version=__version__,
        mode=mode.value,
        family=Family(config.family).value,
        seed=config.seed,
        config=config.model_dump(mode="json"),
        timing=timing,
    )

    if mode == Mode.SIMULATE:
        if scenario is None:
            raise ValidationError("simulate mode needs a scenario", field="scenario")
        scenario = scenario.model_copy(update={"n_jobs": config.n_jobs})
        report.family = Family(scenario.family).value
        report.seed = scenario.seed
        report.config = {"scenario": scenario.model_dump(mode="json")}
        with _stage("simulate", timing):
            metrics = run_scenario(scenario)
        report.simulation = {name: m.to_row() for name, m in metrics.items()}
        report.timing = timing
        return report

    if dataset is None:
        raise ValidationError(f"{mode.value} mode needs a dataset", field="dataset")
    if Family(dataset.family) != Family(config.family):
        raise ValidationError(
            f"dataset family '{dataset.family.value}' differs from the configured '{config.family.value}'",
            field="family"
        )
    if mode == Mode.AGGREGATE and dataset.taxonomy is None:
        raise ValidationError("aggregate mode needs a taxonomy", field="taxonomy").with_stage("aggregate")

    with _stage("aggregate", timing):
        X, labels, design = augment_dataset(dataset)
    report.dataset = _summary(dataset, labels, design)
    if design is not None:
        report.augmented_columns = labels
    spec = GlmSpec(family=config.family)
    y = dataset.y

    if mode in (Mode.SELECT, Mode.RANK):
        with _stage("rank", timing):
            ranking = rank_variables(X, y, spec, config.ranking)
        report.ranking = RankingRecord(
            order=[labels[j] for j in ranking.order],
            frequency=[float(ranking.frequency[j]) / max(ranking.n_completed, 1) for j in ranking.order],
            n_completed=ranking.n_completed,
            n_skipped=ranking.n_skipped,
        )
        if ranking.n_skipped:
            report.warnings.append(f"{ranking.n_skipped} ranking subsamples were skipped")

        if mode == Mode.SELECT:
            with _stage("forward", timing):
                result = forward_select(X, y, spec, ranking, config.forward)
            report.steps = [
                StepRecord(variable=labels[s.variable], column=s.variable, llr=s.llr,
                           critical_value=s.critical_value, p_value=s.p_value)
                for s in result.steps
            ]
            report.terminal = TerminalRecord(
                candidate=labels[result.terminal_candidate] if result.terminal_candidate is not None else None,
                critical_value=result.terminal_critical_value,
                p_value=result.terminal_p_value,
                hit_max_steps=result.hit_max_steps,
                flagged_candidates=[labels[j] for j in result.flagged_candidates],
            )
            report.coefficients = _coefficients(result, labels, design)
            if result.flagged_candidates:
                report.warnings.append(f"{len(result.flagged_candidates)} candidate fits failed and scored 0")

    elif mode == Mode.STABILITY:
        with _stage("stability", timing):
            result = stability_select(X, y, spec, config.stability)
        report.stability = StabilityRecord(
            selected=[labels[j] for j in result.selected],
            frequency={labels[j]: float(f) for j, f in enumerate(result.frequency) if f > 0},
            cutoff=result.cutoff,
            q=result.q,
            n_completed=result.n_completed,
            n_skipped=result.n_skipped,
        )

    report.timing = timing
    logger.info(f"Pipeline {mode.value} finished in {sum(timing.values()):.2f}s")
    return report
