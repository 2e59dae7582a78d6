"""
Pydantic input models for surf-select.

These models validate and document the parameters of every selection stage.
"""
import math
from enum import Enum
from typing import Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..config import get_settings

settings = get_settings()


class Family(str, Enum):
    """Exponential families with their canonical links."""
    GAUSSIAN = "gaussian"
    BINOMIAL = "binomial"
    POISSON = "poisson"


CANONICAL_LINKS = {
    Family.GAUSSIAN: "identity",
    Family.BINOMIAL: "logit",
    Family.POISSON: "log",
}


class GlmSpec(BaseModel):
    """Family of a GLM; the link is always the family's canonical link."""
    model_config = ConfigDict(frozen=True)
    family: Family = Field(default=Family.GAUSSIAN, description="Response distribution")

    @property
    def link(self) -> str:
        return CANONICAL_LINKS[self.family]


class LambdaRule(str, Enum):
    """Which cross-validated penalty a subsample's active set is read at."""
    ONE_SE = "one_se"
    MIN = "min"


class RankingConfig(BaseModel):
    """Configuration of the subsampled LASSO frequency ranking."""
    B: int = Field(default=settings.n_subsamples, ge=1, description="Number of subsamples")
    fraction: float = Field(
        default=settings.subsample_fraction, gt=0.0, lt=1.0,
        description="Proportion of observations drawn per subsample"
    )
    stratified: Optional[bool] = Field(
        default=None,
        description="Stratify subsamples by class (None: only for the binomial family)"
    )
    lambda_rule: LambdaRule = Field(default=LambdaRule.ONE_SE, description="Penalty read from each CV curve")
    cv_folds: int = Field(default=settings.cv_folds, ge=2, description="Folds of the per-subsample CV")
    n_lambda: int = Field(default=settings.n_lambda, ge=2, description="Length of the penalty grid")
    seed: int = Field(default=0, ge=0, description="Root seed of the per-subsample streams")
    n_jobs: int = Field(default=settings.n_jobs, ge=1, exclude=True, description="Workers for subsample fits")

    def is_stratified(self, family: Family) -> bool:
        """Resolve the stratification switch for a family."""
        if self.stratified is None:
            return Family(family) == Family.BINOMIAL
        return self.stratified


class ForwardConfig(BaseModel):
    """Configuration of permutation-calibrated forward selection."""
    alpha: float = Field(default=settings.alpha, gt=0.0, lt=1.0, description="Significance level per step")
    n_perm: int = Field(default=settings.n_perm, ge=1, description="Permutations per step")
    max_steps: Optional[int] = Field(
        default=None, ge=1,
        description="Cap on the number of steps (None: min(n/2, 50))"
    )
    seed: int = Field(default=0, ge=0, description="Root seed of the per-draw streams")
    n_jobs: int = Field(default=settings.n_jobs, ge=1, exclude=True, description="Workers for permutation draws")

    @model_validator(mode="after")
    def check_quantile_defined(self) -> "ForwardConfig":
        if self.n_perm * self.alpha < 1.0 - 1e-9:
            raise ValueError(
                f"n_perm={self.n_perm} is too small for alpha={self.alpha}: "
                f"need at least {math.ceil(1.0 / self.alpha - 1e-9)} permutations"
            )
        return self

    def resolve_max_steps(self, n: int, p: int) -> int:
        """Step cap for a design with n rows and p candidate columns."""
        cap = self.max_steps if self.max_steps is not None else min(max(n // 2, 1), 50)
        return max(0, min(cap, p))


class StabilityConfig(BaseModel):
    """Configuration of the stability-selection baseline."""
    cutoff: float = Field(
        default=settings.stability_cutoff, gt=0.5, le=1.0,
        description="Selection-frequency threshold"
    )
    ewv_bound: float = Field(
        default=settings.stability_ewv_bound, gt=0.0,
        description="Bound on the expected number of falsely selected variables"
    )
    B: int = Field(default=settings.stability_subsamples, ge=1, description="Number of subsamples")
    fraction: float = Field(default=0.5, gt=0.0, lt=1.0, description="Subsample proportion")
    n_lambda: int = Field(default=settings.n_lambda, ge=2, description="Length of the penalty grid")
    seed: int = Field(default=0, ge=0, description="Root seed of the per-subsample streams")
    n_jobs: int = Field(default=settings.n_jobs, ge=1, exclude=True, description="Workers for subsample fits")

    def max_selected(self, p: int) -> int:
        """Per-subsample selection budget q for p variables."""
        return int(math.floor(math.sqrt(self.ewv_bound * (2.0 * self.cutoff - 1.0) * p) + 1e-12))


class Method(str, Enum):
    """Selection methods compared by the simulation harness."""
    SURF = "surf"
    STABILITY = "stability"
    LASSO = "lasso"


class SyntheticDesign(BaseModel):
    """Parameters of the synthetic taxonomic community."""
    n_samples: int = Field(default=100, ge=4, description="Training rows")
    n_phyla: int = Field(default=4, ge=1, description="Phyla under the kingdom")
    classes_per_phylum: int = Field(default=3, ge=1, description="Classes per phylum")
    otus_per_class: int = Field(default=8, ge=1, description="OTUs per class")
    log_sd: float = Field(default=1.0, gt=0.0, description="SD of the log-abundances")
    dominant_share: float = Field(
        default=0.97, gt=0.0, lt=1.0,
        description="Share of the first phylum's abundance carried by its first class"
    )
    proportions: bool = Field(default=True, description="Convert abundances to per-sample proportions")


VariableRef = Union[int, str]


class ScenarioSpec(BaseModel):
    """A simulation scenario: design, truth, SNR and the methods compared."""
    model_config = ConfigDict(str_strip_whitespace=True)

    name: str = Field(default="scenario", min_length=1, description="Label used in the metrics")
    family: Family = Field(default=Family.BINOMIAL, description="Response family")
    design: SyntheticDesign = Field(default_factory=SyntheticDesign, description="Synthetic generator")
    design_path: Optional[str] = Field(
        default=None,
        description="CSV design (first column sample id) used instead of the generator"
    )
    true_vars: list[tuple[VariableRef, float]] = Field(
        default_factory=list,
        description="True variables as (column label or index, coefficient direction); empty for a null scenario"
    )
    intercept: Optional[float] = Field(
        default=None,
        description="Intercept (None: logit(0.3) for binomial, 0 otherwise)"
    )
    standardize_directions: bool = Field(
        default=False,
        description="Divide each direction by its column's SD so true variables have equal strength"
    )
    target_snr: float = Field(default=1.0, gt=0.0, description="Target signal-to-noise ratio")
    equivalence_classes: list[list[VariableRef]] = Field(
        default_factory=list,
        description="Sets of mutually surrogate columns credited once"
    )
    n_reps: int = Field(default=100, ge=0, description="Replications")
    n_test: int = Field(default=0, ge=0, description="Held-out rows for test error")
    seed: int = Field(default=0, ge=0, description="Root seed of the per-rep streams")
    methods: list[Method] = Field(default_factory=lambda: [Method.SURF], min_length=1)
    B: int = Field(default=50, ge=1, description="Ranking subsamples per rep")
    fraction: float = Field(default=0.9, gt=0.0, lt=1.0, description="Ranking subsample proportion")
    n_perm: int = Field(default=100, ge=1, description="Permutations per forward step")
    alpha: float = Field(default=0.05, gt=0.0, lt=1.0, description="Forward-selection level")
    lambda_rule: LambdaRule = Field(default=LambdaRule.ONE_SE)
    stability_cutoffs: list[float] = Field(default_factory=lambda: [0.6, 0.9], min_length=1)
    stability_B: int = Field(default=100, ge=1, description="Stability-selection subsamples per rep")
    n_jobs: int = Field(default=settings.n_jobs, ge=1, exclude=True, description="Workers for reps")

    @field_validator("stability_cutoffs")
    @classmethod
    def check_cutoffs(cls, v: list[float]) -> list[float]:
        for c in v:
            if not 0.5 < c <= 1.0:
                raise ValueError(f"stability cutoff {c} must lie in (0.5, 1]")
        return v

    @model_validator(mode="after")
    def check_classes(self) -> "ScenarioSpec":
        seen: set = set()
        for group in self.equivalence_classes:
            for ref in group:
                if ref in seen:
                    raise ValueError(f"equivalence classes overlap on {ref!r}")
                seen.add(ref)
        if self.n_perm * self.alpha < 1.0 - 1e-9:
            raise ValueError(f"n_perm={self.n_perm} is too small for alpha={self.alpha}")
        return self

    @property
    def is_null(self) -> bool:
        return not self.true_vars

    def resolved_intercept(self) -> float:
        if self.intercept is not None:
            return self.intercept
        if self.family == Family.BINOMIAL:
            return math.log(0.3 / 0.7)
        return 0.0


class Mode(str, Enum):
    """Pipeline modes."""
    SELECT = "select"
    RANK = "rank"
    STABILITY = "stability"
    SIMULATE = "simulate"
    AGGREGATE = "aggregate"


class Normalize(str, Enum):
    """Per-row normalization applied on ingestion."""
    NONE = "none"
    PROPORTIONS = "proportions"


class ReportFormat(str, Enum):
    """Report output formats."""
    JSON = "json"
    TEXT = "text"


class PipelineConfig(BaseModel):
    """Configuration bundle for one pipeline run."""
    mode: Mode = Field(default=Mode.SELECT, description="Pipeline mode")
    family: Family = Field(default=Family.BINOMIAL, description="Response family")
    seed: int = Field(default=0, ge=0, description="Root seed for every stage")
    n_jobs: int = Field(default=settings.n_jobs, ge=1, exclude=True, description="Worker count")
    ranking: RankingConfig = Field(default_factory=RankingConfig)
    forward: ForwardConfig = Field(default_factory=ForwardConfig)
    stability: StabilityConfig = Field(default_factory=StabilityConfig)

    def with_seed(self) -> "PipelineConfig":
        """Propagate the root seed and worker count into every stage."""
        return self.model_copy(update={
            "ranking": self.ranking.model_copy(update={"seed": self.seed, "n_jobs": self.n_jobs}),
            "forward": self.forward.model_copy(update={"seed": self.seed, "n_jobs": self.n_jobs}),
            "stability": self.stability.model_copy(update={"seed": self.seed, "n_jobs": self.n_jobs}),
        })
