"""Pydantic models for bpire-lab."""

import math
from typing import Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing_extensions import Annotated

from core.config import DEFAULT_EXACT_THRESHOLD

_WEIGHT_TOLERANCE = 1e-9


def _check_weights(values: list, weights: list) -> None:
    if not values:
        raise ValueError("support must not be empty")
    if len(values) != len(weights):
        raise ValueError("values and weights must have the same length")
    if any(w < 0 for w in weights):
        raise ValueError("weights must be non-negative")
    if abs(math.fsum(weights) - 1.0) > _WEIGHT_TOLERANCE:
        raise ValueError("weights must sum to 1")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)


# ---------------------------------------------------------------------------
# Laws of the transition probability p_x
# ---------------------------------------------------------------------------

class TwoPointPLaw(_Strict):
    """p takes the value a with probability ``weight`` and 1 - a otherwise."""
    family: Literal["two_point"] = "two_point"
    a: float = Field(..., gt=0.0, lt=1.0, description="First support point")
    weight: float = Field(0.5, ge=0.0, le=1.0, description="P[p = a]")


class FinitePLaw(_Strict):
    """Finitely supported law on (0, 1)."""
    family: Literal["finite"] = "finite"
    values: List[float] = Field(..., description="Support points in (0, 1)")
    weights: List[float] = Field(..., description="Probabilities of the support points")

    @model_validator(mode="after")
    def _valid_support(self) -> "FinitePLaw":
        _check_weights(self.values, self.weights)
        if any(not 0.0 < v < 1.0 for v in self.values):
            raise ValueError("support points must lie strictly inside (0, 1)")
        return self


class LogitUniformPLaw(_Strict):
    """log(p / (1 - p)) uniform on [-half_width, half_width]."""
    family: Literal["logit_uniform"] = "logit_uniform"
    half_width: float = Field(..., ge=0.0, le=700.0)


PLaw = Annotated[Union[TwoPointPLaw, FinitePLaw, LogitUniformPLaw], Field(discriminator="family")]


# ---------------------------------------------------------------------------
# Laws of the cookie / immigrant count M_x
# ---------------------------------------------------------------------------

class ConstantMLaw(_Strict):
    family: Literal["constant"] = "constant"
    value: int = Field(..., ge=0)


class FiniteMLaw(_Strict):
    family: Literal["finite"] = "finite"
    values: List[int] = Field(..., description="Support points in N_0")
    weights: List[float] = Field(..., description="Probabilities of the support points")

    @model_validator(mode="after")
    def _valid_support(self) -> "FiniteMLaw":
        _check_weights(self.values, self.weights)
        if any(v < 0 for v in self.values):
            raise ValueError("counts must be non-negative")
        return self


class PoissonMLaw(_Strict):
    family: Literal["poisson"] = "poisson"
    rate: float = Field(..., gt=0.0)


class HeavyTailMLaw(_Strict):
    """P[M >= k] = (1 + log k)^(-lambda) for k >= 2, P[M = 1] = 0."""
    family: Literal["heavy_tail"] = "heavy_tail"
    lam: float = Field(..., gt=0.0, alias="lambda", description="Tail exponent")


MLaw = Annotated[
    Union[ConstantMLaw, FiniteMLaw, PoissonMLaw, HeavyTailMLaw],
    Field(discriminator="family"),
]


class EnvironmentSpec(_Strict):
    """Law of the i.i.d. pairs (p_x, M_x), equivalently (offspring law, immigrants).

    Attributes:
        p_law: Law of the transition probability to the right
        m_law: Law of the number of cookies / immigrants
        coupling_mode: ``product`` draws p and M independently; ``independent_pair``
            draws them from one shared uniform, pairs stay i.i.d. across sites
        exact_threshold: Largest count kept as an exact integer
        classical_mode: Allow p = 1/2 almost surely (classical excited walk)
    """
    p_law: PLaw
    m_law: MLaw
    coupling_mode: Literal["product", "independent_pair"] = "product"
    exact_threshold: int = Field(DEFAULT_EXACT_THRESHOLD, ge=2, le=2 ** 62)
    classical_mode: bool = False


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

class AssumptionCheck(BaseModel):
    """One itemized assumption check."""
    name: str = Field(..., description="Assumption identifier, e.g. A.1")
    description: str
    passed: bool
    value: Optional[float] = None
    detail: str = ""


class ValidationReport(BaseModel):
    """Analytic assessment of an environment spec."""
    checks: List[AssumptionCheck] = Field(default_factory=list)
    violations: List[str] = Field(default_factory=list)
    log_rho_mean: float
    log_rho_moments: Dict[str, Optional[float]] = Field(default_factory=dict)
    prob_half: float
    prob_m_zero: float
    log_m_moments_finite: Dict[str, bool] = Field(default_factory=dict)
    tail_exponent: Optional[float] = None
    classical_mode: bool = False

    @property
    def ok(self) -> bool:
        return not self.violations


class ConditionCheck(BaseModel):
    """One condition of a recurrence / transience criterion."""
    criterion: Literal["recurrence", "transience", "positive-recurrence", "regime"]
    condition: str
    passed: bool
    quantity: Optional[float] = None
    detail: str = ""


Regime = Literal["critical", "subcritical", "supercritical", "invalid"]
Verdict = Literal[
    "recurrent-by-Thm3",
    "transient-by-Thm4",
    "positive-recurrent-by-Lemma1",
    "inconclusive",
]


class CriterionVerdict(BaseModel):
    regime: Regime
    verdict: Verdict
    checked_conditions: List[ConditionCheck] = Field(default_factory=list)
    parameters: Dict[str, Union[float, List[float], None]] = Field(default_factory=dict)
    notes: List[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def _verdict_backed_by_conditions(self) -> "CriterionVerdict":
        needed = {
            "recurrent-by-Thm3": "recurrence",
            "transient-by-Thm4": "transience",
            "positive-recurrent-by-Lemma1": "positive-recurrence",
        }.get(self.verdict)
        if needed is not None:
            relevant = [c for c in self.checked_conditions if c.criterion == needed]
            if not relevant or not all(c.passed for c in relevant):
                raise ValueError(f"verdict {self.verdict} requires every {needed} condition to pass")
        return self


class HorizonStatistic(BaseModel):
    """A proportion measured at one horizon with its Wilson interval."""
    horizon: int
    replicas: int
    hits: int
    fraction: float
    ci_low: float
    ci_high: float
    standard_error: float


class EmpiricalReport(BaseModel):
    kind: Literal["branching", "walk"]
    return_fractions: List[HorizonStatistic] = Field(default_factory=list)
    growth_exceedance: List[HorizonStatistic] = Field(default_factory=list)
    trend_slope: float = 0.0
    trend_z: float = 0.0
    verdict: Literal["recurrent", "transient", "abstain"] = "abstain"
    degenerate: bool = False
    replicas: int = 0
    seeds: List[int] = Field(default_factory=list)


class LadderTailRow(BaseModel):
    n: int
    survival: float
    standard_error: float
    scaled: float
    exact: Optional[float] = None


class LadderTailReport(BaseModel):
    rows: List[LadderTailRow] = Field(default_factory=list)
    replicas: int
    degenerate: bool = False
    warnings: List[str] = Field(default_factory=list)


class SeriesProbeReport(BaseModel):
    stages: List[int]
    replicas: int
    median_log_partial_sums: List[float]
    median_tail_increments: List[float]
    diverging_fraction: float
    partial_sums: Optional[List[float]] = Field(None, description="Linear partial sums when every replica agrees")


class RightRecurrenceReport(BaseModel):
    excursions: int
    horizons: List[int]
    returned: List[HorizonStatistic]
    branching_hit_zero: Optional[List[HorizonStatistic]] = None
    coupled_excursions: int = 0
    exact_agreements: int = 0
    left_first_steps: int = 0


# ---------------------------------------------------------------------------
# Experiment configuration
# ---------------------------------------------------------------------------

ExperimentKind = Literal[
    "validate", "bpire", "walk", "couple", "ladder", "ar", "classify", "reproduce-example",
]


class RunSection(_Strict):
    kind: ExperimentKind
    seed: int = Field(0, ge=0)
    replicas: int = Field(100, ge=1)
    horizon: int = Field(1000, ge=1)
    horizons: List[int] = Field(default_factory=list)
    workers: Optional[int] = Field(None, ge=1)
    chunk_size: Optional[int] = Field(None, ge=1)
    out_dir: Optional[str] = None
    format: Literal["csv", "json"] = "csv"
    mode: Literal["zero_start", "one_ancestor"] = "zero_start"
    exact_threshold: Optional[int] = Field(None, ge=2, le=2 ** 62)
    streaming: bool = False
    record_every: int = Field(1, ge=1)

    @field_validator("horizons")
    @classmethod
    def _positive_horizons(cls, value: List[int]) -> List[int]:
        if any(h < 1 for h in value):
            raise ValueError("horizons must be positive")
        return sorted(set(value))


class ClassifySection(_Strict):
    epsilon: float = Field(0.1, gt=0.0)
    delta_grid: List[float] = Field(default_factory=lambda: [1.0, 2.0, 3.0, 4.0, 5.0, 5.9])
    lambda_probe: Optional[float] = Field(None, gt=0.0)
    decision_band: Optional[Tuple[float, float]] = None
    significance: Optional[float] = Field(None, gt=0.0, lt=1.0)


class LadderSection(_Strict):
    n_max: int = Field(60, ge=1)


class RecursionSection(_Strict):
    checkpoints: List[int] = Field(default_factory=lambda: [100, 1000, 10000])
    process: Literal["ar", "bpire"] = "ar"


class WalkSection(_Strict):
    excursions: int = Field(1000, ge=1)
    record_steps: bool = False


class ExampleSection(_Strict):
    lam: float = Field(3.0, gt=0.0, alias="lambda")
    a: float = Field(1.0 / 3.0, gt=0.0, lt=1.0, description="Two-point p-law support point")
    simulate: bool = False


class ExperimentConfig(_Strict):
    """Complete description of one experiment run."""
    experiment: RunSection
    environment: Optional[EnvironmentSpec] = None
    classify: ClassifySection = Field(default_factory=ClassifySection)
    ladder: LadderSection = Field(default_factory=LadderSection)
    recursion: RecursionSection = Field(default_factory=RecursionSection)
    walk: WalkSection = Field(default_factory=WalkSection)
    example: ExampleSection = Field(default_factory=ExampleSection)

    @model_validator(mode="after")
    def _environment_when_needed(self) -> "ExperimentConfig":
        if self.experiment.kind != "reproduce-example" and self.environment is None:
            raise ValueError(f"experiment kind {self.experiment.kind!r} needs an environment section")
        return self


class ConfigIssue(BaseModel):
    """A field-precise configuration problem."""
    location: str
    line: Optional[int] = None
    message: str
