"""
Simulation harness for comparing selection methods.

This module provides:
    - generate_community: Synthetic log-normal OTU community with a taxonomy
    - prepare_scenario: Design, calibrated truth and equivalence classes of a scenario
    - signal_to_noise / calibrate_snr: SNR of a linear predictor and scaling to a target
    - generate_response: Draw a response from a GLM
    - score_selection: True/false positives with surrogate-aware crediting
    - run_scenario: Replicate a scenario over methods and aggregate the metrics
    - scenario_template / load_scenario: Built-in scenarios and key=value scenario files

Example:
    >>> spec = scenario_template("single_surrogate", "high", n_reps=20, seed=3)
    >>> metrics = run_scenario(spec)
    >>> metrics["surf"].tp_histogram
"""
import json
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from dotenv import dotenv_values
from scipy.optimize import brentq
from scipy.special import expit

from ..models.inputs import (
    Family,
    ForwardConfig,
    GlmSpec,
    Method,
    RankingConfig,
    ScenarioSpec,
    StabilityConfig,
    SyntheticDesign,
)
from ..models.results import ScenarioMetrics
from ..utils.errors import ErrorCategory, InputFileError, NumericalError, ScenarioError, SurfError, ValidationError
from .forward import forward_select
from .glm import explained_variance, fit_glm, predict_mean, prediction_error
from .lasso import active_set, cross_validate
from .parallel import run_tasks, task_rng
from .ranking import rank_variables
from .stability import stability_select_cutoffs
from .tree import AugmentedDesign, TaxonomyTree, build_augmented_design, parse_taxonomy

logger = logging.getLogger(__name__)

SNR_LEVELS = {
    Family.BINOMIAL: {"low": 0.7, "fair": 1.0, "high": 3.0},
    Family.GAUSSIAN: {"low": 1.0, "fair": 3.0, "high": 5.0},
    Family.POISSON: {"low": 0.7, "fair": 1.0, "high": 3.0},
}
MAX_FAILED_SHARE = 0.10
PROB_FLOOR = 1e-12


def community_lineages(design: SyntheticDesign) -> tuple[list[str], list[str]]:
    """OTU ids and lineages of the synthetic community."""
    otu_ids, lineages = [], []
    for i in range(design.n_phyla):
        for j in range(design.classes_per_phylum):
            for k in range(design.otus_per_class):
                otu_ids.append(f"otu_{i}_{j}_{k}")
                lineages.append(f"Bacteria;P{i};C{i}_{j}")
    return otu_ids, lineages


def generate_community(design: SyntheticDesign, n_rows: int, rng: np.random.Generator) -> tuple[np.ndarray, TaxonomyTree]:
    """
    Draw OTU abundances with phylum, class and OTU log-normal effects.

    The first class of the first phylum carries `dominant_share` of that
    phylum's expected abundance, making the phylum and the class a
    near-perfect surrogate pair.
    """
    otu_ids, lineages = community_lineages(design)
    K, M = design.classes_per_phylum, design.otus_per_class
    p = len(otu_ids)
    phylum_of = np.repeat(np.arange(design.n_phyla), K * M)
    class_of = np.repeat(np.arange(design.n_phyla * K), M)

    sd = design.log_sd
    log_abundance = (
        rng.normal(0.0, sd, (n_rows, design.n_phyla))[:, phylum_of]
        + rng.normal(0.0, sd, (n_rows, design.n_phyla * K))[:, class_of]
        + rng.normal(0.0, sd, (n_rows, p))
    )
    abundance = np.exp(log_abundance)
    if K > 1:
        minor = (phylum_of == 0) & (class_of % K != 0)
        abundance[:, minor] *= (1.0 - design.dominant_share) / design.dominant_share / (K - 1)
    if design.proportions:
        abundance /= abundance.sum(axis=1, keepdims=True)
    return abundance, parse_taxonomy(lineages, otu_ids=otu_ids)


def signal_to_noise(eta: np.ndarray, family: Family) -> float:
    """
    SNR of a linear predictor.

    Binomial: Var(P) / E(P(1 - P)); poisson: Var(mu) / E(mu);
    gaussian: Var(eta) with unit noise variance.
    """
    family = Family(family)
    eta = np.asarray(eta, dtype=float)
    if family == Family.BINOMIAL:
        prob = np.clip(expit(eta), PROB_FLOOR, 1.0 - PROB_FLOOR)
        return float(np.var(prob) / np.mean(prob * (1.0 - prob)))
    if family == Family.POISSON:
        mu = np.exp(np.clip(eta, -50.0, 50.0))
        return float(np.var(mu) / np.mean(mu))
    return float(np.var(eta))


def calibrate_snr(X, beta_direction, intercept: float, family: Family, target_snr: float) -> np.ndarray:
    """
    Scale a coefficient direction so the model reaches a target SNR.

    Gaussian uses the closed form c = sqrt(target / Var(X d)); the other
    families search c by bracketing and root finding.

    Raises:
        ValidationError: If the direction is zero or the target is not positive
        NumericalError: If the target cannot be reached (reports the maximum attainable)
    """
    family = Family(family)
    direction = np.asarray(beta_direction, dtype=float)
    if not np.any(direction):
        raise ValidationError("beta_direction must be nonzero", field="beta_direction")
    if target_snr <= 0.0:
        raise ValidationError("target_snr must be positive", field="target_snr")
    lin = np.asarray(X, dtype=float) @ direction
    if family == Family.GAUSSIAN:
        v = float(np.var(lin))
        if v <= 0.0:
            raise NumericalError("target SNR unattainable", max_attainable=0.0)
        return direction * math.sqrt(target_snr / v)

    def snr(c: float) -> float:
        return signal_to_noise(intercept + c * lin, family)

    hi, best = 1.0, 0.0
    for _ in range(48):
        value = snr(hi)
        best = max(best, value)
        if value >= target_snr:
            break
        hi *= 2.0
    else:
        raise NumericalError(f"target SNR {target_snr} unattainable", max_attainable=round(best, 6))
    lo = 0.0 if hi == 1.0 else hi / 2.0
    c = brentq(lambda t: snr(t) - target_snr, lo, hi, xtol=1e-12, rtol=1e-10)
    return direction * c


def generate_response(X, beta, intercept: float, family: Family, rng: np.random.Generator) -> np.ndarray:
    """Draw y from the GLM with linear predictor intercept + X beta (unit noise for gaussian)."""
    family = Family(family)
    eta = intercept + np.asarray(X, dtype=float) @ np.asarray(beta, dtype=float)
    if family == Family.BINOMIAL:
        return rng.binomial(1, expit(eta)).astype(float)
    if family == Family.POISSON:
        return rng.poisson(np.exp(np.clip(eta, -50.0, 50.0))).astype(float)
    return eta + rng.standard_normal(eta.shape[0])


def score_selection(selected: Sequence[int], classes: Sequence[Sequence[int]]) -> tuple[int, int]:
    """
    Count true and false positives.

    Each truth class is credited once; further members of a credited class
    and columns outside every class are false positives.
    """
    membership = {}
    for c, members in enumerate(classes):
        for j in members:
            membership[int(j)] = c
    credited: set[int] = set()
    tp = fp = 0
    for j in sorted({int(s) for s in selected}):
        c = membership.get(j)
        if c is None or c in credited:
            fp += 1
        else:
            credited.add(c)
            tp += 1
    return tp, fp


@dataclass
class ScenarioData:
    """Fixed design and truth shared by every rep of a scenario."""
    X: np.ndarray
    X_test: Optional[np.ndarray]
    labels: list[str]
    beta: np.ndarray
    intercept: float
    classes: list[list[int]]
    design: Optional[AugmentedDesign] = None

    @property
    def true_columns(self) -> list[int]:
        return [int(j) for j in np.flatnonzero(self.beta)]


def _resolve(ref, labels: list[str]) -> int:
    if isinstance(ref, int):
        if not 0 <= ref < len(labels):
            raise ValidationError(f"column index {ref} out of range", field="true_vars")
        return ref
    try:
        return labels.index(ref)
    except ValueError:
        raise ValidationError(f"unknown column label {ref!r}", field="true_vars")


def _read_design(path: str) -> tuple[np.ndarray, list[str]]:
    try:
        frame = pd.read_csv(path, index_col=0)
    except (OSError, pd.errors.ParserError) as e:
        raise InputFileError(f"cannot read design: {e}", path=path)
    numeric = frame.apply(pd.to_numeric, errors="coerce")
    if numeric.isna().any().any():
        row, col = np.argwhere(numeric.isna().to_numpy())[0]
        raise InputFileError(f"non-numeric cell at row {frame.index[row]!r}, column {frame.columns[col]!r}", path=path)
    return numeric.to_numpy(dtype=float), [str(c) for c in frame.columns]


def prepare_scenario(spec: ScenarioSpec) -> ScenarioData:
    """Build the design, the calibrated coefficients and the truth classes."""
    design = None
    if spec.design_path:
        full, labels = _read_design(spec.design_path)
        if spec.n_test >= full.shape[0]:
            raise ValidationError("n_test leaves no training rows", field="n_test")
        split = full.shape[0] - spec.n_test
        X, X_test = full[:split], (full[split:] if spec.n_test else None)
    else:
        rng = task_rng(spec.seed)
        leaf, tree = generate_community(spec.design, spec.design.n_samples + spec.n_test, rng)
        design = build_augmented_design(leaf[:spec.design.n_samples], tree)
        X = design.matrix
        X_test = design.transform(leaf[spec.design.n_samples:]) if spec.n_test else None
        labels = design.labels

    intercept = spec.resolved_intercept()
    beta = np.zeros(X.shape[1])
    classes: list[list[int]] = []
    if not spec.is_null:
        direction = np.zeros(X.shape[1])
        for ref, sign in spec.true_vars:
            j = _resolve(ref, labels)
            direction[j] = sign
            if spec.standardize_directions:
                sd = float(np.std(X[:, j]))
                if sd <= 0.0:
                    raise ValidationError(f"true column {ref!r} is constant", field="true_vars")
                direction[j] /= sd
        beta = calibrate_snr(X, direction, intercept, spec.family, spec.target_snr)
        groups = [[_resolve(r, labels) for r in group] for group in spec.equivalence_classes]
        for ref, _ in spec.true_vars:
            j = _resolve(ref, labels)
            group = next((g for g in groups if j in g), [j])
            if sorted(group) not in classes:
                classes.append(sorted(group))
    return ScenarioData(X=X, X_test=X_test, labels=labels, beta=beta,
                        intercept=intercept, classes=classes, design=design)


def method_names(spec: ScenarioSpec) -> list[str]:
    """Metric labels, one per method (stability expands to one label per cutoff)."""
    names = []
    for method in spec.methods:
        if method == Method.STABILITY:
            names.extend(f"stability@{c:g}" for c in spec.stability_cutoffs)
        else:
            names.append(method.value)
    return names


def _outcome(selected, data: ScenarioData, y, y_test, family: Family) -> dict:
    selected = sorted(int(j) for j in selected)
    tp, fp = score_selection(selected, data.classes)
    fit = fit_glm(data.X[:, selected], y, GlmSpec(family=family))
    outcome = {
        "tp": tp,
        "fp": fp,
        "n_selected": len(selected),
        "train_error": prediction_error(y, fit.fitted, family),
        "test_error": None,
        "r2_train": explained_variance(y, fit.fitted) if family == Family.GAUSSIAN else None,
        "r2_test": None,
    }
    if data.X_test is not None:
        mu = predict_mean(fit, data.X_test[:, selected])
        outcome["test_error"] = prediction_error(y_test, mu, family)
        if family == Family.GAUSSIAN:
            outcome["r2_test"] = explained_variance(y_test, mu)
    return outcome


def _run_rep(data: ScenarioData, spec: ScenarioSpec, rep: int) -> dict[str, Optional[dict]]:
    family = Family(spec.family)
    glm_spec = GlmSpec(family=family)
    rng = task_rng(spec.seed, rep)
    y = generate_response(data.X, data.beta, data.intercept, family, rng)
    y_test = None
    if data.X_test is not None:
        y_test = generate_response(data.X_test, data.beta, data.intercept, family, rng)
    method_seed = int(rng.integers(2 ** 31 - 1))

    outcomes: dict[str, Optional[dict]] = {}
    for method in spec.methods:
        try:
            if method == Method.SURF:
                ranking = rank_variables(data.X, y, glm_spec, RankingConfig(
                    B=spec.B, fraction=spec.fraction, lambda_rule=spec.lambda_rule, seed=method_seed, n_jobs=1))
                result = forward_select(data.X, y, glm_spec, ranking, ForwardConfig(
                    alpha=spec.alpha, n_perm=spec.n_perm, seed=method_seed, n_jobs=1))
                outcomes["surf"] = _outcome(result.selected, data, y, y_test, family)
            elif method == Method.LASSO:
                cv = cross_validate(data.X, y, glm_spec, seed=method_seed)
                lam = cv.lambda_1se if spec.lambda_rule.value == "one_se" else cv.lambda_min
                outcomes["lasso"] = _outcome(active_set(cv.fit, lam), data, y, y_test, family)
            else:
                results = stability_select_cutoffs(data.X, y, glm_spec, spec.stability_cutoffs, StabilityConfig(
                    B=spec.stability_B, seed=method_seed, n_jobs=1))
                for cutoff in spec.stability_cutoffs:
                    outcomes[f"stability@{cutoff:g}"] = _outcome(
                        results[float(cutoff)].selected, data, y, y_test, family)
        except (SurfError, np.linalg.LinAlgError) as e:
            if isinstance(e, SurfError) and e.category != ErrorCategory.NUMERICAL:
                raise
            logger.warning(f"Rep {rep}: method {method.value} failed: {e}")
            names = method_names(spec.model_copy(update={"methods": [method]}))
            outcomes.update({name: None for name in names})
    return outcomes


def _summarize(name: str, outcomes: list[Optional[dict]], family: Family) -> ScenarioMetrics:
    done = [o for o in outcomes if o is not None]
    failed = len(outcomes) - len(done)
    if failed > MAX_FAILED_SHARE * len(outcomes):
        raise ScenarioError(name, failed, len(outcomes))

    def mean(key: str) -> Optional[float]:
        values = [o[key] for o in done if o[key] is not None]
        return float(np.mean(values)) if values else None

    fp = np.array([o["fp"] for o in done], dtype=float)
    n_selected = np.array([o["n_selected"] for o in done], dtype=float)
    histogram: dict[int, int] = {}
    for o in done:
        histogram[o["tp"]] = histogram.get(o["tp"], 0) + 1
    return ScenarioMetrics(
        method=name,
        n_reps=len(done),
        n_failed=failed,
        tp_histogram=dict(sorted(histogram.items())),
        fp_mean=float(fp.mean()) if fp.size else 0.0,
        fp_sd=float(fp.std(ddof=1)) if fp.size > 1 else 0.0,
        selected_mean=float(n_selected.mean()) if n_selected.size else 0.0,
        p_zero_selected=float(np.mean(n_selected == 0)) if n_selected.size else 0.0,
        error_metric="misclassification" if family == Family.BINOMIAL else "mse",
        train_error_mean=mean("train_error") or 0.0,
        test_error_mean=mean("test_error"),
        r2_train_mean=mean("r2_train"),
        r2_test_mean=mean("r2_test"),
    )


def run_scenario(spec: ScenarioSpec, methods: Optional[Sequence[Method]] = None) -> dict[str, ScenarioMetrics]:
    """
    Replicate a scenario and aggregate each method's selections.

    Every rep draws a fresh response from the fixed design with its own
    generator (seed, rep), runs every method, scores the selection and
    records the in-sample (and, with held-out rows, test) error of the GLM
    on the selected columns.

    Args:
        spec: Scenario specification
        methods: Methods to run (default: spec.methods)

    Returns:
        Metrics keyed by method label; empty when spec.n_reps is 0

    Raises:
        ScenarioError: If a method failed on more than 10% of the reps
    """
    if methods is not None:
        spec = spec.model_copy(update={"methods": list(methods)})
    if not spec.methods:
        raise ValidationError("at least one method is required", field="methods")
    if spec.n_reps == 0:
        return {}

    data = prepare_scenario(spec)
    logger.info(f"Scenario {spec.name}: {spec.n_reps} reps, {data.X.shape[1]} columns, methods {method_names(spec)}")
    results = run_tasks(lambda rep: _run_rep(data, spec, rep), range(spec.n_reps), n_jobs=spec.n_jobs)
    return {
        name: _summarize(name, [r[name] for r in results], Family(spec.family))
        for name in method_names(spec)
    }


TEMPLATES: dict[str, dict] = {
    "null": {"true_vars": []},
    "single_surrogate": {
        "true_vars": [("Bacteria;P0", -1.0)],
        "equivalence_classes": [["Bacteria;P0", "Bacteria;P0;C0_0"]],
    },
    "single": {"true_vars": [("Bacteria;P1", 1.0)]},
    "two_equal": {
        "true_vars": [("Bacteria;P0", -1.0), ("Bacteria;P1", 1.0)],
        "equivalence_classes": [["Bacteria;P0", "Bacteria;P0;C0_0"]],
        "standardize_directions": True,
    },
    "two_within_group": {
        "true_vars": [("Bacteria;P1;C1_0", 1.0), ("Bacteria;P1;C1_1", 1.0)],
    },
    "gaussian_three": {
        "family": Family.GAUSSIAN,
        "true_vars": [("Bacteria;P0", 1.0), ("Bacteria;P1;C1_0", 1.0), ("Bacteria;P2;C2_1", -1.0)],
        "equivalence_classes": [["Bacteria;P0", "Bacteria;P0;C0_0"]],
        "standardize_directions": True,
    },
    "eight_true": {
        "true_vars": [
            ("Bacteria;P0", -1.0), ("Bacteria;P1", 1.0),
            ("Bacteria;P2;C2_0", 1.0), ("Bacteria;P2;C2_1", -1.0),
            ("Bacteria;P3;C3_0", 1.0), ("otu_1_2_0", 1.0),
            ("otu_3_1_0", -1.0), ("otu_2_2_1", 1.0),
        ],
        "equivalence_classes": [["Bacteria;P0", "Bacteria;P0;C0_0"]],
        "standardize_directions": True,
    },
}


def scenario_template(name: str, level: str = "high", **overrides) -> ScenarioSpec:
    """
    Built-in scenario at a named SNR level.

    Args:
        name: One of TEMPLATES
        level: "low", "fair" or "high"
        **overrides: ScenarioSpec fields to replace

    Returns:
        ScenarioSpec
    """
    if name not in TEMPLATES:
        raise ValidationError(f"unknown scenario template '{name}' (known: {sorted(TEMPLATES)})", field="template")
    fields = dict(TEMPLATES[name])
    family = Family(overrides.get("family", fields.get("family", Family.BINOMIAL)))
    if level not in SNR_LEVELS[family]:
        raise ValidationError(f"unknown SNR level '{level}'", field="level")
    fields["family"] = family
    fields["target_snr"] = SNR_LEVELS[family][level]
    fields["name"] = name if name == "null" else f"{name}_{level}"
    fields.update(overrides)
    return ScenarioSpec(**fields)


def _parse_value(raw: Optional[str]):
    if raw is None:
        return None
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def load_scenario(path: str) -> ScenarioSpec:
    """
    Read a scenario from a KEY=VALUE file.

    Keys are ScenarioSpec fields (case-insensitive); list and object values
    are JSON. `design.<field>` keys set generator parameters, and the
    optional keys `template` and `level` start from a built-in scenario.
    """
    try:
        values = dotenv_values(path)
    except OSError as e:
        raise InputFileError(f"cannot read scenario: {e}", path=path)
    if not values:
        raise InputFileError("scenario file is empty", path=path)

    fields: dict = {}
    design: dict = {}
    for key, raw in values.items():
        key = key.strip().lower()
        value = _parse_value(raw)
        if key.startswith("design."):
            design[key.split(".", 1)[1]] = value
        elif key == "design" and isinstance(value, dict):
            design.update(value)
        else:
            fields[key] = value
    if design:
        fields["design"] = design

    template = fields.pop("template", None)
    level = str(fields.pop("level", "high"))
    if template:
        return scenario_template(str(template), level, **fields)
    return ScenarioSpec(**fields)
