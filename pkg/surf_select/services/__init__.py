"""Numerical engines for surf-select."""
from .glm import fit_glm, log_likelihood_ratio, candidate_deviances, predict_mean
from .lasso import lasso_path, cross_validate, active_set, make_lambda_path
from .tree import (
    TaxonomyTree,
    parse_taxonomy,
    read_taxonomy,
    clustering_matrix,
    build_augmented_design,
    parsimonious_representation,
    penalty,
    map_selection_to_leaves,
)
from .ranking import rank_variables, subsample_indices
from .forward import forward_select, null_max_llr
from .stability import stability_select, stability_select_cutoffs
from .sim import run_scenario, scenario_template, load_scenario, calibrate_snr, generate_response
from .parallel import run_tasks, task_rng

__all__ = [
    # GLM
    "fit_glm",
    "log_likelihood_ratio",
    "candidate_deviances",
    "predict_mean",
    # LASSO
    "lasso_path",
    "cross_validate",
    "active_set",
    "make_lambda_path",
    # Tree
    "TaxonomyTree",
    "parse_taxonomy",
    "read_taxonomy",
    "clustering_matrix",
    "build_augmented_design",
    "parsimonious_representation",
    "penalty",
    "map_selection_to_leaves",
    # Selection
    "rank_variables",
    "subsample_indices",
    "forward_select",
    "null_max_llr",
    "stability_select",
    "stability_select_cutoffs",
    # Simulation
    "run_scenario",
    "scenario_template",
    "load_scenario",
    "calibrate_snr",
    "generate_response",
    # Parallel
    "run_tasks",
    "task_rng",
]
