"""Random environment: i.i.d. pairs (p_x, M_x) and their analytic moments.

The same pair doubles as one generation of the branching process: the
offspring law is geometric on N_0 with parameter 1 - p (mean p / (1 - p)),
and M is the number of immigrants.
"""

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, special, stats

from core.config import DEFAULT_EXACT_THRESHOLD
from core.errors import DomainError
from schemas.models import (
    AssumptionCheck,
    ConstantMLaw,
    EnvironmentSpec,
    FiniteMLaw,
    FinitePLaw,
    HeavyTailMLaw,
    LogitUniformPLaw,
    PoissonMLaw,
    TwoPointPLaw,
    ValidationReport,
)
from tools.population import LOG_EQUIVALENCE, Population
from utils.logging import get_logger

logger = get_logger("env")

# Upper clip for log(1 + M); tiny uniforms with small lambda overflow exp().
_LOG_M_CAP = 1e300


def rho(p: float) -> float:
    """Return (1 - p) / p.

    Raises:
        DomainError: If p is not strictly inside (0, 1)
    """
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie in (0, 1), got {p!r}")
    return (1.0 - p) / p


@dataclass(frozen=True, slots=True)
class SiteEnv:
    """One realized environment entry.

    Attributes:
        p: Probability of a step to the right once cookies are gone
        log_m: log(1 + M)
        m_exact: M itself when it does not exceed the exact threshold
    """

    p: float
    log_m: float
    m_exact: Optional[int]

    def __post_init__(self) -> None:
        if not 0.0 < self.p < 1.0:
            raise DomainError(f"p must lie in (0, 1), got {self.p!r}")

    @property
    def rho(self) -> float:
        return rho(self.p)

    @property
    def mu(self) -> float:
        return self.p / (1.0 - self.p)

    @property
    def cookies(self) -> float:
        """Number of cookies; infinite for counts only known in log domain."""
        return self.m_exact if self.m_exact is not None else math.inf

    def immigrants(self, threshold: int = DEFAULT_EXACT_THRESHOLD) -> Population:
        return Population.from_log1p(self.log_m, self.m_exact, threshold)

    @classmethod
    def of(cls, p: float, m: int) -> "SiteEnv":
        return cls(p, math.log1p(m), int(m))


@dataclass(frozen=True)
class EnvironmentDraw:
    """A vectorized draw of environment entries.

    ``m_exact`` holds -1 where M exceeds the exact threshold.
    """

    p: np.ndarray
    log_m: np.ndarray
    m_exact: np.ndarray

    @property
    def mu(self) -> np.ndarray:
        return self.p / (1.0 - self.p)

    @property
    def log_count(self) -> np.ndarray:
        """log(M) with -inf where M = 0."""
        return log_count_from_log1p(self.log_m)

    def site(self, index) -> SiteEnv:
        exact = int(self.m_exact[index])
        return SiteEnv(float(self.p[index]), float(self.log_m[index]), exact if exact >= 0 else None)


def log_count_from_log1p(log1p_values: np.ndarray) -> np.ndarray:
    """Convert log(1 + M) into log(M), -inf for M = 0."""
    values = np.asarray(log1p_values, dtype=float)
    with np.errstate(divide="ignore"):
        small = np.log(np.expm1(np.minimum(values, LOG_EQUIVALENCE)))
    return np.where(values > LOG_EQUIVALENCE, values, small)


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def _open_uniforms(rng: np.random.Generator, size) -> np.ndarray:
    u = rng.random(size)
    return np.where(u == 0.0, np.nextafter(0.0, 1.0), u)


def _p_from_uniform(p_law, u: np.ndarray) -> np.ndarray:
    if isinstance(p_law, TwoPointPLaw):
        return np.where(u < p_law.weight, p_law.a, 1.0 - p_law.a)
    if isinstance(p_law, FinitePLaw):
        index = np.searchsorted(np.cumsum(p_law.weights), u, side="right")
        return np.asarray(p_law.values, dtype=float)[np.minimum(index, len(p_law.values) - 1)]
    if isinstance(p_law, LogitUniformPLaw):
        return special.expit(p_law.half_width * (2.0 * u - 1.0))
    raise TypeError(f"unsupported p-law {type(p_law).__name__}")


def heavy_tail_inverse(u: np.ndarray, lam: float, threshold: int = DEFAULT_EXACT_THRESHOLD) -> Tuple[np.ndarray, np.ndarray]:
    """Invert the survival function k -> (1 + log k)^(-lam), k >= 2.

    M is the largest k with P[M >= k] > u, i.e. the largest integer below
    exp(u^(-1/lam) - 1); uniforms at or above (1 + log 2)^(-lam) give 0.

    Args:
        u: Uniforms in (0, 1)
        lam: Tail exponent
        threshold: Largest count returned as an exact integer

    Returns:
        Tuple of log(1 + M) and exact M (-1 where M exceeds ``threshold``)
    """
    u = np.asarray(u, dtype=float)
    atom = (1.0 + math.log(2.0)) ** (-lam)
    positive = u < atom
    with np.errstate(over="ignore", divide="ignore"):
        t = np.expm1(-np.log(u) / lam)
    t = np.minimum(t, _LOG_M_CAP)
    in_exact_range = positive & (t < math.log(threshold))

    k = np.zeros(u.shape, dtype=np.int64)
    t_exact = np.where(in_exact_range, t, 0.0)
    k_guess = np.ceil(np.exp(t_exact)) - 1.0
    k_int = k_guess.astype(np.int64)
    # one-step corrections for rounding of exp() near integers
    with np.errstate(divide="ignore"):
        k_int = np.where(np.log1p(k_int.astype(float)) < t_exact, k_int + 1, k_int)
        k_int = np.where((k_int > 2) & (np.log(k_int.astype(float)) >= t_exact), k_int - 1, k_int)
    k = np.where(in_exact_range, np.maximum(k_int, 2), k)

    log_m = np.where(in_exact_range, np.log1p(k.astype(float)), np.where(positive, t, 0.0))
    exact = np.where(positive & ~in_exact_range, -1, k)
    return log_m, exact.astype(np.int64)


def heavy_tail_from_uniform(u: float, lam: float, threshold: int = DEFAULT_EXACT_THRESHOLD) -> Population:
    """Single-uniform version of :func:`heavy_tail_inverse`."""
    log_m, exact = heavy_tail_inverse(np.array([u]), lam, threshold)
    return Population.from_log1p(float(log_m[0]), int(exact[0]) if exact[0] >= 0 else None, threshold)


def sample_heavy_tail_m(lam: float, rng: np.random.Generator, threshold: int = DEFAULT_EXACT_THRESHOLD) -> Population:
    """Exact inverse-CDF draw of the heavy-log-tailed immigrant count."""
    if lam <= 0:
        raise DomainError("lambda must be positive")
    return heavy_tail_from_uniform(float(_open_uniforms(rng, 1)[0]), lam, threshold)


def _m_from_uniform(m_law, u: np.ndarray, threshold: int) -> Tuple[np.ndarray, np.ndarray]:
    if isinstance(m_law, HeavyTailMLaw):
        return heavy_tail_inverse(u, m_law.lam, threshold)
    if isinstance(m_law, ConstantMLaw):
        m = np.full(u.shape, m_law.value, dtype=np.int64)
    elif isinstance(m_law, FiniteMLaw):
        index = np.searchsorted(np.cumsum(m_law.weights), u, side="right")
        m = np.asarray(m_law.values, dtype=np.int64)[np.minimum(index, len(m_law.values) - 1)]
    elif isinstance(m_law, PoissonMLaw):
        m = stats.poisson.ppf(u, m_law.rate).astype(np.int64)
    else:
        raise TypeError(f"unsupported m-law {type(m_law).__name__}")
    log_m = np.log1p(m.astype(float))
    return log_m, np.where(m > threshold, -1, m)


def sample_environment(spec: EnvironmentSpec, size, rng: np.random.Generator) -> EnvironmentDraw:
    """Draw ``size`` i.i.d. environment entries.

    In ``product`` mode p and M come from two uniform arrays drawn in that
    order; in ``independent_pair`` mode one uniform array drives both.
    """
    u_p = _open_uniforms(rng, size)
    u_m = u_p if spec.coupling_mode == "independent_pair" else _open_uniforms(rng, size)
    p = _p_from_uniform(spec.p_law, u_p)
    log_m, m_exact = _m_from_uniform(spec.m_law, u_m, spec.exact_threshold)
    return EnvironmentDraw(p=np.asarray(p, dtype=float), log_m=log_m, m_exact=m_exact)


def sample_site(spec: EnvironmentSpec, rng: np.random.Generator) -> SiteEnv:
    """Draw one environment entry."""
    return sample_environment(spec, 1, rng).site(0)


# ---------------------------------------------------------------------------
# Analytic quantities of the p-law (log rho = -log mu)
# ---------------------------------------------------------------------------

def _p_atoms(p_law) -> Optional[Tuple[np.ndarray, np.ndarray]]:
    if isinstance(p_law, TwoPointPLaw):
        return np.array([p_law.a, 1.0 - p_law.a]), np.array([p_law.weight, 1.0 - p_law.weight])
    if isinstance(p_law, FinitePLaw):
        return np.asarray(p_law.values, dtype=float), np.asarray(p_law.weights, dtype=float)
    return None


def p_atoms(p_law) -> Optional[Tuple[np.ndarray, np.ndarray]]:
    """Support points and weights of a finitely supported p-law, else None."""
    return _p_atoms(p_law)


def log_rho_mean(p_law, tolerance: float = 1e-12) -> float:
    """E[log rho]; values within ``tolerance`` of zero are reported as 0.0."""
    if isinstance(p_law, LogitUniformPLaw):
        return 0.0
    if isinstance(p_law, TwoPointPLaw):
        value = (2.0 * p_law.weight - 1.0) * math.log((1.0 - p_law.a) / p_law.a)
    else:
        values, weights = _p_atoms(p_law)
        value = math.fsum(w * math.log((1.0 - v) / v) for v, w in zip(values, weights))
    return 0.0 if abs(value) <= tolerance else value


def log_rho_abs_moment(p_law, delta: float) -> float:
    """E[|log rho|^delta]."""
    if isinstance(p_law, LogitUniformPLaw):
        return p_law.half_width ** delta / (delta + 1.0)
    values, weights = _p_atoms(p_law)
    return math.fsum(w * abs(math.log((1.0 - v) / v)) ** delta for v, w in zip(values, weights))


def log_mu_positive_mean(p_law) -> float:
    """E[log_+ mu] with mu = p / (1 - p)."""
    if isinstance(p_law, LogitUniformPLaw):
        return p_law.half_width / 4.0
    values, weights = _p_atoms(p_law)
    return math.fsum(w * max(math.log(v / (1.0 - v)), 0.0) for v, w in zip(values, weights))


def prob_half(p_law) -> float:
    """P[p = 1/2], equivalently P[mu = 1]."""
    if isinstance(p_law, LogitUniformPLaw):
        return 1.0 if p_law.half_width == 0 else 0.0
    values, weights = _p_atoms(p_law)
    return math.fsum(w for v, w in zip(values, weights) if v == 0.5)


def log_p_square_mean(p_law) -> float:
    """E[(log p)^2], the geometric-offspring value of E[(log_+(Var / mu^2))^2]."""
    if isinstance(p_law, LogitUniformPLaw):
        h = p_law.half_width
        if h == 0:
            return math.log(0.5) ** 2
        value, _ = integrate.quad(lambda u: np.logaddexp(0.0, -u) ** 2, -h, h)
        return value / (2.0 * h)
    values, weights = _p_atoms(p_law)
    return math.fsum(w * math.log(v) ** 2 for v, w in zip(values, weights))


# ---------------------------------------------------------------------------
# Analytic quantities of the m-law
# ---------------------------------------------------------------------------

def prob_m_zero(m_law) -> float:
    if isinstance(m_law, ConstantMLaw):
        return 1.0 if m_law.value == 0 else 0.0
    if isinstance(m_law, FiniteMLaw):
        return math.fsum(w for v, w in zip(m_law.values, m_law.weights) if v == 0)
    if isinstance(m_law, PoissonMLaw):
        return math.exp(-m_law.rate)
    return 1.0 - (1.0 + math.log(2.0)) ** (-m_law.lam)


def m_mean(m_law) -> float:
    """E[M]; infinite for the heavy-log-tailed family."""
    if isinstance(m_law, ConstantMLaw):
        return float(m_law.value)
    if isinstance(m_law, FiniteMLaw):
        return math.fsum(v * w for v, w in zip(m_law.values, m_law.weights))
    if isinstance(m_law, PoissonMLaw):
        return m_law.rate
    return math.inf


def tail_exponent(m_law) -> Optional[float]:
    """lambda with t^lambda P[log M > t] -> 1, when the family has one."""
    return m_law.lam if isinstance(m_law, HeavyTailMLaw) else None


def log_moment_finite(m_law, q: float) -> bool:
    """Whether E[(log_+ M)^q] is finite."""
    if isinstance(m_law, HeavyTailMLaw):
        return q < m_law.lam
    return True


def log_survival(m_law, t: float) -> float:
    """log P[log M > t], exact for every shipped family."""
    if t < 0:
        return math.log1p(-prob_m_zero(m_law)) if prob_m_zero(m_law) < 1.0 else -math.inf
    if isinstance(m_law, HeavyTailMLaw):
        # log M > t  <=>  M >= floor(e^t) + 1
        log_k = t if t > LOG_EQUIVALENCE else math.log(math.floor(math.exp(t)) + 1)
        return -m_law.lam * math.log1p(max(log_k, math.log(2.0)))
    if isinstance(m_law, ConstantMLaw):
        return 0.0 if m_law.value > 0 and math.log(m_law.value) > t else -math.inf
    if isinstance(m_law, FiniteMLaw):
        mass = math.fsum(w for v, w in zip(m_law.values, m_law.weights) if v > 0 and math.log(v) > t)
        return math.log(mass) if mass > 0 else -math.inf
    if t > LOG_EQUIVALENCE:
        return float(stats.poisson.logsf(1e17, m_law.rate))
    return float(stats.poisson.logsf(math.floor(math.exp(t)), m_law.rate))


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def validate_spec(
    spec: EnvironmentSpec,
    deltas: Iterable[float] = (1.0, 2.0),
    log_moment_orders: Iterable[float] = (1.0, 2.0),
    tolerance: float = 1e-12,
) -> ValidationReport:
    """Check the environment assumptions analytically.

    Never raises on a violating spec; violations are listed in the report.

    Args:
        spec: Environment spec to check
        deltas: Orders of the E[|log rho|^delta] diagnostics
        log_moment_orders: Orders q of the E[(log_+ M)^q] finiteness diagnostics
        tolerance: Absolute tolerance for E[log rho] = 0

    Returns:
        ValidationReport with itemized checks
    """
    checks = []
    half = prob_half(spec.p_law)
    a1 = half < 1.0
    checks.append(AssumptionCheck(
        name="A.1",
        description="P[p_x = 1/2] < 1",
        passed=a1 or spec.classical_mode,
        value=half,
        detail="suppressed in classical mode" if spec.classical_mode and not a1 else "",
    ))
    checks.append(AssumptionCheck(
        name="A.2",
        description="(p_x, M_x) i.i.d. across sites",
        passed=True,
        detail=f"coupling mode {spec.coupling_mode}",
    ))
    mean = log_rho_mean(spec.p_law, tolerance)
    first = log_rho_abs_moment(spec.p_law, 1.0)
    checks.append(AssumptionCheck(
        name="A.3",
        description="E[|log rho|] < inf and E[log rho] = 0",
        passed=math.isfinite(first) and mean == 0.0,
        value=mean,
    ))
    zero_mass = prob_m_zero(spec.m_law)
    checks.append(AssumptionCheck(
        name="A.4",
        description="P[M = inf] = 0 and P[M = 0] > 0",
        passed=zero_mass > 0.0,
        value=zero_mass,
    ))

    violations = [f"{c.name}: {c.description} fails" for c in checks if not c.passed]
    if violations:
        logger.info(f"Spec violations: {violations}")

    return ValidationReport(
        checks=checks,
        violations=violations,
        log_rho_mean=mean,
        log_rho_moments={f"{d:g}": log_rho_abs_moment(spec.p_law, d) for d in deltas},
        prob_half=half,
        prob_m_zero=zero_mass,
        log_m_moments_finite={f"{q:g}": log_moment_finite(spec.m_law, q) for q in log_moment_orders},
        tail_exponent=tail_exponent(spec.m_law),
        classical_mode=spec.classical_mode,
    )


# ---------------------------------------------------------------------------
# Spec constructors used across the lab
# ---------------------------------------------------------------------------

def heavy_tail_example_spec(lam: float, a: float = 1.0 / 3.0, **kwargs) -> EnvironmentSpec:
    """Heavy-log-tailed immigration with a symmetric two-point rho-law."""
    return EnvironmentSpec(p_law=TwoPointPLaw(a=a, weight=0.5), m_law=HeavyTailMLaw(lam=lam), **kwargs)


def coin_spec(m_law=None, **kwargs) -> EnvironmentSpec:
    """mu in {1/2, 2} with equal probability."""
    return EnvironmentSpec(
        p_law=TwoPointPLaw(a=1.0 / 3.0, weight=0.5),
        m_law=m_law if m_law is not None else ConstantMLaw(value=0),
        **kwargs,
    )


def fixed_p_spec(p: float, m_law, **kwargs) -> EnvironmentSpec:
    """Deterministic p (e.g. 1/2 for classical mode, 1/3 for a subcritical chain)."""
    return EnvironmentSpec(p_law=FinitePLaw(values=[p], weights=[1.0]), m_law=m_law, **kwargs)


def describe_atoms(values: Sequence[float]) -> str:
    return ", ".join(f"{v:g}" for v in values)
