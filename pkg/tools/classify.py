"""Recurrence and transience: analytic criteria and empirical statistics.

The analytic side evaluates the moment and tail conditions of the
recurrence, transience and positive-recurrence criteria exactly for the
shipped families. The empirical side turns simulated paths into return
fractions with Wilson intervals and refuses a verdict inside the decision
band.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Literal, Optional, Sequence, Tuple

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from core.errors import InsufficientReplicasError
from schemas.models import (
    ConditionCheck,
    CriterionVerdict,
    EmpiricalReport,
    EnvironmentSpec,
    HorizonStatistic,
    SeriesProbeReport,
)
from tools.env import (
    heavy_tail_example_spec,
    log_moment_finite,
    log_mu_positive_mean,
    log_p_square_mean,
    log_rho_abs_moment,
    log_rho_mean,
    m_mean,
    prob_half,
    tail_exponent,
    validate_spec,
)
from utils.logging import get_logger

logger = get_logger("classify")

MIN_PATHS = 30


# ---------------------------------------------------------------------------
# Statistics helpers
# ---------------------------------------------------------------------------

def wilson_interval(hits: int, trials: int, confidence: float = 0.99) -> Tuple[float, float]:
    """Wilson score interval of a binomial proportion."""
    if trials <= 0:
        raise InsufficientReplicasError("a proportion needs at least one trial")
    z = stats.norm.ppf(0.5 + confidence / 2.0)
    phat = hits / trials
    denominator = 1.0 + z * z / trials
    center = (phat + z * z / (2 * trials)) / denominator
    half = z * math.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials)) / denominator
    return max(0.0, center - half), min(1.0, center + half)


def proportion_statistic(horizon: int, hits: int, replicas: int, confidence: float = 0.99) -> HorizonStatistic:
    low, high = wilson_interval(hits, replicas, confidence)
    fraction = hits / replicas
    return HorizonStatistic(
        horizon=horizon,
        replicas=replicas,
        hits=hits,
        fraction=fraction,
        ci_low=low,
        ci_high=high,
        standard_error=math.sqrt(fraction * (1.0 - fraction) / replicas),
    )


def compare_proportions(hits_a: int, n_a: int, hits_b: int, n_b: int) -> Tuple[float, float]:
    """One-sided two-proportion z-test of H1: p_a > p_b.

    Returns:
        Tuple of (z statistic, p-value)
    """
    pooled = (hits_a + hits_b) / (n_a + n_b)
    se = math.sqrt(pooled * (1.0 - pooled) * (1.0 / n_a + 1.0 / n_b))
    diff = hits_a / n_a - hits_b / n_b
    if se == 0.0:
        return 0.0, 1.0 if diff <= 0 else 0.0
    z = diff / se
    return z, float(stats.norm.sf(z))


def ks_two_sample(a: Sequence[float], b: Sequence[float]) -> Tuple[float, float]:
    """Two-sample Kolmogorov-Smirnov statistic and p-value.

    -inf (log of an empty population) is mapped below every finite value.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    finite = np.concatenate((a[np.isfinite(a)], b[np.isfinite(b)]))
    floor = (finite.min() - 1.0) if len(finite) else 0.0
    a = np.where(np.isneginf(a), floor, a)
    b = np.where(np.isneginf(b), floor, b)
    result = stats.ks_2samp(a, b)
    return float(result.statistic), float(result.pvalue)


def total_variation(a: Sequence[int], b: Sequence[int], states: int = 50) -> float:
    """Total-variation distance of two samples on 0..states plus an overflow bin."""
    from tools.branching import empirical_profile, total_variation as profile_distance

    return profile_distance(
        empirical_profile(np.asarray(a, dtype=np.int64), states),
        empirical_profile(np.asarray(b, dtype=np.int64), states),
    )


# ---------------------------------------------------------------------------
# Analytic criteria
# ---------------------------------------------------------------------------

def classical_erw_oracle(mean_m: float) -> Literal["recurrent", "transient"]:
    """Classical excited walk (p = 1/2): recurrent iff E[M] <= 1."""
    if mean_m < 0:
        raise ValueError("mean number of cookies cannot be negative")
    return "recurrent" if mean_m <= 1.0 else "transient"


def _structural_issues(spec: EnvironmentSpec, tolerance: float) -> List[str]:
    report = validate_spec(spec, tolerance=tolerance)
    # A.3 only fails on a nonzero mean here, which is a regime question
    return [v for v in report.violations if not v.startswith("A.3")]


def evaluate_criteria(
    spec: EnvironmentSpec,
    epsilon: float = 0.1,
    delta_grid: Iterable[float] = (1.0, 2.0, 3.0, 4.0, 5.0, 5.9),
    lambda_probe: Optional[float] = None,
    tolerance: float = 1e-12,
) -> CriterionVerdict:
    """Evaluate every criterion condition analytically and assemble a verdict.

    Args:
        spec: Environment spec
        epsilon: Excess exponent of the (log_+ M)^(2 + epsilon) moment
        delta_grid: Orders delta < 6 of the E[|log mu|^delta] checks
        lambda_probe: Tail exponent to test; searched over (0, 2) when None
        tolerance: Absolute tolerance for E[log mu] = 0

    Returns:
        CriterionVerdict with every checked condition
    """
    delta_grid = [float(d) for d in delta_grid]
    mean_log_mu = 0.0 - log_rho_mean(spec.p_law, tolerance)
    lam = tail_exponent(spec.m_law)
    parameters: Dict[str, object] = {
        "epsilon": epsilon,
        "delta_grid": delta_grid,
        "lambda_probe": lambda_probe,
        "tail_exponent": lam,
    }
    notes: List[str] = []

    issues = _structural_issues(spec, tolerance)
    if spec.classical_mode and prob_half(spec.p_law) == 1.0:
        notes.append(f"classical mode: the walk is {classical_erw_oracle(m_mean(spec.m_law))} by the E[M] <= 1 rule")
        return CriterionVerdict(regime="critical", verdict="inconclusive", parameters=parameters, notes=notes)
    if issues:
        checks = [ConditionCheck(criterion="regime", condition=issue, passed=False) for issue in issues]
        return CriterionVerdict(
            regime="invalid", verdict="inconclusive", checked_conditions=checks,
            parameters=parameters, notes=[f"violated assumption {issue}" for issue in issues],
        )

    if mean_log_mu == 0.0:
        regime = "critical"
    else:
        regime = "subcritical" if mean_log_mu < 0 else "supercritical"
    checks: List[ConditionCheck] = [
        ConditionCheck(criterion="regime", condition="E[log mu] = 0", passed=regime == "critical", quantity=mean_log_mu),
    ]

    if regime == "subcritical":
        checks.extend(_positive_recurrence_conditions(spec, mean_log_mu))
        passed = all(c.passed for c in checks if c.criterion == "positive-recurrence")
        verdict = "positive-recurrent-by-Lemma1" if passed else "inconclusive"
        return CriterionVerdict(regime=regime, verdict=verdict, checked_conditions=checks, parameters=parameters, notes=notes)

    if regime == "supercritical":
        notes.append("no criterion covers a supercritical environment")
        return CriterionVerdict(regime=regime, verdict="inconclusive", checked_conditions=checks, parameters=parameters, notes=notes)

    recurrence = _recurrence_conditions(spec, mean_log_mu, epsilon)
    transience = _transience_conditions(spec, mean_log_mu, delta_grid, lambda_probe)
    checks.extend(recurrence)
    checks.extend(transience)

    if all(c.passed for c in recurrence):
        verdict = "recurrent-by-Thm3"
    elif all(c.passed for c in transience):
        verdict = "transient-by-Thm4"
    else:
        verdict = "inconclusive"
        if lam == 2.0:
            notes.append("tail exponent 2 lies between both criteria")
    return CriterionVerdict(regime=regime, verdict=verdict, checked_conditions=checks, parameters=parameters, notes=notes)


def _recurrence_conditions(spec: EnvironmentSpec, mean_log_mu: float, epsilon: float) -> List[ConditionCheck]:
    square = log_rho_abs_moment(spec.p_law, 2.0)
    half = prob_half(spec.p_law)
    order = 2.0 + epsilon
    moment_finite = log_moment_finite(spec.m_law, order)
    detail = f"epsilon = {epsilon:g}"
    lam = tail_exponent(spec.m_law)
    if not moment_finite and lam is not None and lam > 2.0:
        # some epsilon > 0 suffices: any order strictly between 2 and lambda
        order = (2.0 + lam) / 2.0
        moment_finite = order > 2.0 and log_moment_finite(spec.m_law, order)
        detail = f"epsilon = {order - 2.0:g} (configured {epsilon:g} exceeds lambda - 2)"
    return [
        ConditionCheck(criterion="recurrence", condition="(phi_n, M_n) i.i.d.", passed=True, detail=spec.coupling_mode),
        ConditionCheck(criterion="recurrence", condition="E[|log mu|^2] < inf", passed=math.isfinite(square), quantity=square),
        ConditionCheck(criterion="recurrence", condition="E[log mu] = 0", passed=mean_log_mu == 0.0, quantity=mean_log_mu),
        ConditionCheck(criterion="recurrence", condition="Q[mu = 1] < 1", passed=half < 1.0, quantity=half),
        ConditionCheck(
            criterion="recurrence",
            condition=f"E[(log_+ M)^{order:g}] < inf",
            passed=moment_finite,
            quantity=order,
            detail=detail,
        ),
    ]


def _transience_conditions(
    spec: EnvironmentSpec,
    mean_log_mu: float,
    delta_grid: Sequence[float],
    lambda_probe: Optional[float],
) -> List[ConditionCheck]:
    checks = [ConditionCheck(criterion="transience", condition="(phi_n, M_n) i.i.d.", passed=True, detail=spec.coupling_mode)]
    for delta in delta_grid:
        value = log_rho_abs_moment(spec.p_law, delta)
        checks.append(ConditionCheck(
            criterion="transience",
            condition=f"E[|log mu|^{delta:g}] < inf",
            passed=math.isfinite(value) and delta < 6.0,
            quantity=value,
        ))
    checks.append(ConditionCheck(criterion="transience", condition="E[log mu] = 0", passed=mean_log_mu == 0.0, quantity=mean_log_mu))

    # geometric offspring: Var / mu^2 = 1 / p
    ratio = log_p_square_mean(spec.p_law)
    checks.append(ConditionCheck(
        criterion="transience",
        condition="E[(log_+(Var / mu^2))^2] < inf",
        passed=math.isfinite(ratio),
        quantity=ratio,
    ))

    lam = tail_exponent(spec.m_law)
    if lambda_probe is not None:
        passed = lam is not None and lam <= lambda_probe < 2.0
        detail = f"probe lambda = {lambda_probe:g}"
    else:
        passed = lam is not None and lam < 2.0
        detail = "searched over 0 < lambda < 2"
    checks.append(ConditionCheck(
        criterion="transience",
        condition="liminf t^lambda Q[log M > t] > 0 for some 0 < lambda < 2",
        passed=passed,
        quantity=lam,
        detail=detail,
    ))
    return checks


def _positive_recurrence_conditions(spec: EnvironmentSpec, mean_log_mu: float) -> List[ConditionCheck]:
    log_mu_plus = log_mu_positive_mean(spec.p_law)
    return [
        ConditionCheck(criterion="positive-recurrence", condition="(phi_n, M_n) i.i.d.", passed=True, detail=spec.coupling_mode),
        ConditionCheck(
            criterion="positive-recurrence",
            condition="E[log_+ M] < inf",
            passed=log_moment_finite(spec.m_law, 1.0),
            quantity=tail_exponent(spec.m_law),
        ),
        ConditionCheck(criterion="positive-recurrence", condition="E[log_+ mu] < inf", passed=math.isfinite(log_mu_plus), quantity=log_mu_plus),
        ConditionCheck(criterion="positive-recurrence", condition="E[log mu] < 0", passed=mean_log_mu < 0, quantity=mean_log_mu),
    ]


# ---------------------------------------------------------------------------
# Empirical classification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PathOutcome:
    """Reduction of one path to what empirical classification needs.

    Attributes:
        first_zero: First n >= 1 at which the path hit 0 (BPIRE) or
            returned to its start (walk), None if not within the path
        log_sizes: log Z_n at recorded horizons (BPIRE only)
    """

    first_zero: Optional[int]
    log_sizes: Dict[int, float] = field(default_factory=dict)

    @classmethod
    def from_branching(cls, path, horizons: Sequence[int]) -> "PathOutcome":
        sizes = {int(h): path.population(h).log_value for h in horizons if h <= path.horizon}
        return cls(path.hit_zero_at, sizes)

    @classmethod
    def from_walk(cls, path) -> "PathOutcome":
        positions = np.asarray(path.positions)
        returns = np.nonzero(positions[1:] == positions[0])[0]
        return cls(int(returns[0]) + 1 if len(returns) else None)


def outcomes_from_batch(batch, horizons: Sequence[int]) -> List[PathOutcome]:
    """PathOutcomes of every replica of a branching BatchResult."""
    recorded = [int(h) for h in horizons if h in set(batch.generations.tolist())]
    columns = {h: batch.at(h)[1] for h in recorded}
    return [
        PathOutcome(
            int(batch.hit_zero_at[i]) if batch.hit_zero_at[i] > 0 else None,
            {h: float(columns[h][i]) for h in recorded},
        )
        for i in range(batch.size)
    ]


def empirical_classify(
    paths: Sequence,
    horizons: Sequence[int],
    kind: Literal["branching", "walk"] = "branching",
    decision_band: Tuple[float, float] = (0.2, 0.8),
    confidence: float = 0.99,
    seeds: Sequence[int] = (),
) -> EmpiricalReport:
    """Return fractions, growth exceedance and a guarded verdict.

    A verdict is given only when the Wilson interval at the largest
    horizon lies entirely above (recurrent) or below (transient) the band.

    Raises:
        InsufficientReplicasError: With fewer than 30 paths
    """
    if len(paths) < MIN_PATHS:
        raise InsufficientReplicasError(f"need at least {MIN_PATHS} paths, got {len(paths)}")
    horizons = sorted(set(int(h) for h in horizons))
    outcomes = [p if isinstance(p, PathOutcome) else _outcome(p, horizons, kind) for p in paths]
    n = len(outcomes)

    returns = [
        proportion_statistic(h, sum(o.first_zero is not None and o.first_zero <= h for o in outcomes), n, confidence)
        for h in horizons
    ]
    growth = []
    if kind == "branching":
        for h in horizons:
            if all(h in o.log_sizes for o in outcomes):
                hits = sum(o.log_sizes[h] > math.sqrt(h) for o in outcomes)
                growth.append(proportion_statistic(h, hits, n, confidence))

    slope, z = _trend(returns)
    last = returns[-1]
    low, high = decision_band
    if last.ci_low > high:
        verdict = "recurrent"
    elif last.ci_high < low:
        verdict = "transient"
    else:
        verdict = "abstain"

    degenerate = kind == "branching" and all(
        all(v == -math.inf for v in o.log_sizes.values()) for o in outcomes
    ) and all(o.log_sizes for o in outcomes)

    return EmpiricalReport(
        kind=kind,
        return_fractions=returns,
        growth_exceedance=growth,
        trend_slope=slope,
        trend_z=z,
        verdict=verdict,
        degenerate=degenerate,
        replicas=n,
        seeds=list(seeds),
    )


def _outcome(path, horizons: Sequence[int], kind: str) -> PathOutcome:
    if kind == "walk":
        return PathOutcome.from_walk(path)
    return PathOutcome.from_branching(path, horizons)


def _trend(returns: List[HorizonStatistic]) -> Tuple[float, float]:
    """Least-squares slope of the fraction in log10(horizon) and a z-score
    of the change between the smallest and largest horizon."""
    if len(returns) < 2:
        return 0.0, 0.0
    x = np.log10([r.horizon for r in returns])
    y = np.array([r.fraction for r in returns])
    slope = float(np.polyfit(x, y, 1)[0])
    first, last = returns[0], returns[-1]
    se = math.sqrt(first.standard_error ** 2 + last.standard_error ** 2)
    diff = last.fraction - first.fraction
    if se == 0.0:
        return slope, 0.0
    return slope, diff / se


# ---------------------------------------------------------------------------
# Series / log-moment probe
# ---------------------------------------------------------------------------

LogLaw = Callable[[np.random.Generator, Tuple[int, int]], np.ndarray]


def constant_log_law(log_value: float = 0.0) -> LogLaw:
    """V identically exp(log_value)."""
    def draw(rng: np.random.Generator, size: Tuple[int, int]) -> np.ndarray:
        return np.full(size, log_value)
    return draw


def log_pareto_law(index: float = 1.0) -> LogLaw:
    """log V with P[log V > t] = (1 + t)^(-index); E[(log_+ V)^d] < inf iff d < index."""
    def draw(rng: np.random.Generator, size: Tuple[int, int]) -> np.ndarray:
        u = 1.0 - rng.random(size)
        return np.expm1(-np.log(u) / index)
    return draw


def series_moment_probe(
    d: int,
    a: float,
    c: float,
    v_law: LogLaw,
    partial_terms: int,
    replicas: int,
    rng: np.random.Generator,
) -> SeriesProbeReport:
    """Partial sums of sum_n a^n sum_{i=0}^{floor(c n^(d-1))} V_{i,n} per replica.

    Sums are evaluated at N, 2N and 4N terms in log domain. A replica
    counts as diverging when the last stage adds at least 1 to the sum or
    adds more than the previous stage did.

    Args:
        d: Moment order
        a: Geometric weight in (0, 1)
        c: Count multiplier
        v_law: Sampler of log V values for a (replicas, count) shape
        partial_terms: N
        replicas: Independent replicas
        rng: Random generator
    """
    if d < 1 or not 0.0 < a < 1.0 or c <= 0:
        raise ValueError("need d >= 1, 0 < a < 1 and c > 0")
    stages = [partial_terms, 2 * partial_terms, 4 * partial_terms]
    log_a = math.log(a)
    log_terms = np.empty((stages[-1], replicas))
    for n in range(stages[-1]):
        count = int(math.floor(c * n ** (d - 1))) + 1
        with np.errstate(divide="ignore"):
            log_terms[n] = n * log_a + logsumexp(v_law(rng, (replicas, count)), axis=1)

    with np.errstate(divide="ignore"):
        partial = np.stack([logsumexp(log_terms[:s], axis=0) for s in stages])
        tails = np.stack([
            logsumexp(log_terms[stages[0]:stages[1]], axis=0),
            logsumexp(log_terms[stages[1]:stages[2]], axis=0),
        ])
    diverging = (tails[1] >= 0.0) | (tails[1] >= tails[0])
    medians = np.median(partial, axis=1)
    linear = [float(math.exp(m)) for m in medians] if np.all(medians < 700) else None
    return SeriesProbeReport(
        stages=stages,
        replicas=replicas,
        median_log_partial_sums=[float(m) for m in medians],
        median_tail_increments=[float(t) for t in np.median(tails, axis=1)],
        diverging_fraction=float(diverging.mean()),
        partial_sums=linear,
    )


def heavy_tail_specs(lams: Iterable[float], a: float = 1.0 / 3.0) -> List[EnvironmentSpec]:
    """Heavy-tail sweep used for the exclusivity and concordance checks."""
    return [heavy_tail_example_spec(lam, a) for lam in lams]

