"""Branching process in random environment with immigration.

Offspring in generation n are geometric on N_0 with parameter 1 - p_n,
M_n immigrants join generation n. Two equivalent constructions are
provided: the recursion Z_n = xi_1 + ... + xi_{Z_{n-1}} + M_n and the sum
of immigrant lines Z_n = sum_j Z_{n-j}(j).

Large batches run through :func:`simulate_batch`, which keeps exact int64
counts per replica and continues in log domain above the exact threshold.
"""

import math
from dataclasses import dataclass
from typing import List, Literal, Mapping, Optional, Sequence, Tuple

import numpy as np

from core.config import DEFAULT_EXACT_THRESHOLD
from core.errors import DomainError, ResourceLimitError
from schemas.models import EnvironmentSpec
from tools.env import SiteEnv, log_count_from_log1p, log_rho_mean, sample_environment
from tools.population import ZERO, Population
from tools.streams import Lane, StreamFactory
from utils.logging import get_logger

logger = get_logger("branching")

Mode = Literal["zero_start", "one_ancestor"]
Regime = Literal["critical", "subcritical", "supercritical"]

# Poisson draws above this rate switch to a gaussian approximation.
POISSON_LIMIT = 1e12


# ---------------------------------------------------------------------------
# Offspring laws
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OffspringLaw:
    """Reproduction law of a single particle.

    ``geometric`` has P[xi = n] = p^n (1 - p), ``bernoulli`` has
    P[xi = 1] = p, ``table`` carries explicit (count, probability) pairs.
    """

    family: Literal["geometric", "bernoulli", "table"]
    p: float = 0.5
    table: Tuple[Tuple[int, float], ...] = ()

    def __post_init__(self) -> None:
        if self.family == "geometric" and not 0.0 < self.p < 1.0:
            raise DomainError(f"geometric parameter must lie in (0, 1), got {self.p!r}")
        if self.family == "bernoulli" and not 0.0 <= self.p <= 1.0:
            raise DomainError(f"bernoulli parameter must lie in [0, 1], got {self.p!r}")
        if self.family == "table":
            if not self.table or any(k < 0 or w < 0 for k, w in self.table):
                raise DomainError("table needs non-negative counts and weights")
            if abs(math.fsum(w for _, w in self.table) - 1.0) > 1e-9:
                raise DomainError("table weights must sum to 1")

    @classmethod
    def geometric(cls, p: float) -> "OffspringLaw":
        return cls("geometric", p=float(p))

    @classmethod
    def bernoulli(cls, q: float) -> "OffspringLaw":
        return cls("bernoulli", p=float(q))

    @classmethod
    def from_table(cls, weights: Mapping[int, float]) -> "OffspringLaw":
        return cls("table", table=tuple(sorted((int(k), float(w)) for k, w in weights.items())))

    @property
    def mean(self) -> float:
        if self.family == "geometric":
            return self.p / (1.0 - self.p)
        if self.family == "bernoulli":
            return self.p
        return math.fsum(k * w for k, w in self.table)

    @property
    def variance(self) -> float:
        if self.family == "geometric":
            return self.p / (1.0 - self.p) ** 2
        if self.family == "bernoulli":
            return self.p * (1.0 - self.p)
        mean = self.mean
        return math.fsum(w * (k - mean) ** 2 for k, w in self.table)

    def pgf(self, s: float) -> float:
        if not 0.0 <= s <= 1.0:
            raise DomainError(f"pgf argument must lie in [0, 1], got {s!r}")
        if self.family == "geometric":
            return (1.0 - self.p) / (1.0 - self.p * s)
        if self.family == "bernoulli":
            return 1.0 - self.p + self.p * s
        return math.fsum(w * s ** k for k, w in self.table)

    def pmf(self, n: int) -> float:
        if n < 0:
            return 0.0
        if self.family == "geometric":
            return self.p ** n * (1.0 - self.p)
        if self.family == "bernoulli":
            return {0: 1.0 - self.p, 1: self.p}.get(n, 0.0)
        return math.fsum(w for k, w in self.table if k == n)


def law_mean(law: OffspringLaw) -> float:
    return law.mean


def law_variance(law: OffspringLaw) -> float:
    return law.variance


def pgf_eval(law: OffspringLaw, s: float) -> float:
    """phi(s) = E[s^xi] for s in [0, 1]."""
    return law.pgf(s)


@dataclass(frozen=True)
class GenEnv:
    """Environment of one generation: offspring law and immigrant count."""

    law: OffspringLaw
    immigrants: Population

    @classmethod
    def of(cls, law: OffspringLaw, m: int = 0) -> "GenEnv":
        return cls(law, Population.of(m))

    @classmethod
    def from_site(cls, site: SiteEnv, threshold: int = DEFAULT_EXACT_THRESHOLD) -> "GenEnv":
        return cls(OffspringLaw.geometric(site.p), site.immigrants(threshold))


# ---------------------------------------------------------------------------
# Offspring sums
# ---------------------------------------------------------------------------

def _log_domain_sum(law: OffspringLaw, k: Population, rng: np.random.Generator, threshold: int) -> Population:
    # log K + log(mu + sqrt(Var / K) Z)
    z = rng.standard_normal()
    spread = math.exp(0.5 * (math.log(law.variance) - k.log_value)) if law.variance > 0 else 0.0
    term = law.mean + spread * z
    if term <= 0.0:
        return Population(0, -math.inf, approximate=True)
    return Population.from_log(k.log_value + math.log(term), threshold, approximate=True)


def offspring_sum(
    law: OffspringLaw,
    k: Population,
    rng: np.random.Generator,
    threshold: int = DEFAULT_EXACT_THRESHOLD,
) -> Population:
    """Sum of k i.i.d. offspring counts.

    Geometric sums are negative binomial and drawn as a gamma-poisson
    mixture. A log-domain k uses mu k with gaussian noise of variance
    k Var(law); such results are flagged approximate.

    Args:
        law: Offspring law
        k: Number of parents
        rng: Random generator
        threshold: Largest count kept exact

    Returns:
        Population of offspring
    """
    if k.is_zero:
        return Population(0, -math.inf, k.approximate)
    if k.is_log:
        return _log_domain_sum(law, k, rng, threshold)

    count = k.exact
    if law.family == "bernoulli":
        return Population.of(int(rng.binomial(count, law.p)), threshold, k.approximate)
    if law.family == "table":
        support = [c for c, _ in law.table]
        draws = rng.multinomial(count, [w for _, w in law.table])
        return Population.of(sum(int(n) * c for n, c in zip(draws, support)), threshold, k.approximate)

    rate = rng.gamma(float(count), law.mean)
    if rate <= POISSON_LIMIT:
        return Population.of(int(rng.poisson(rate)), threshold, k.approximate)
    value = rate + math.sqrt(rate) * rng.standard_normal()
    return Population.from_log(math.log(max(value, 1.0)), threshold, approximate=True)


def naive_offspring_sum(law: OffspringLaw, k: int, rng: np.random.Generator) -> int:
    """k-fold summation of single offspring draws."""
    if k == 0:
        return 0
    if law.family == "geometric":
        return int((rng.geometric(1.0 - law.p, size=k) - 1).sum())
    if law.family == "bernoulli":
        return int((rng.random(k) < law.p).sum())
    support = np.array([c for c, _ in law.table])
    return int(rng.choice(support, size=k, p=[w for _, w in law.table]).sum())


def step(
    z: Population,
    gen: GenEnv,
    rng: np.random.Generator,
    threshold: int = DEFAULT_EXACT_THRESHOLD,
) -> Population:
    """One generation: offspring of z parents plus the generation's immigrants."""
    return offspring_sum(gen.law, z, rng, threshold).add(gen.immigrants, threshold)


# ---------------------------------------------------------------------------
# Vectorized kernel
# ---------------------------------------------------------------------------

def _geometric_offspring(
    z_exact: np.ndarray,
    z_log: np.ndarray,
    p: np.ndarray,
    rng: np.random.Generator,
    threshold: int,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized geometric offspring sums for a hybrid exact/log population.

    Returns:
        Tuple of exact counts (-1 where log domain), log counts and the
        per-replica approximation flag
    """
    log_threshold = math.log(threshold)
    mu = p / (1.0 - p)
    exact_in = z_exact > 0
    log_in = z_exact < 0

    rate = rng.gamma(np.where(exact_in, z_exact, 0).astype(float), mu)
    normals = rng.standard_normal(p.shape)
    small = rate <= POISSON_LIMIT
    counts = rng.poisson(np.where(small, rate, 0.0))

    with np.errstate(divide="ignore", invalid="ignore"):
        large_value = np.maximum(rate + np.sqrt(rate) * normals, 1.0)
        spread = np.exp(0.5 * (np.log(p) - 2.0 * np.log1p(-p) - z_log))
        term = mu + spread * normals
        from_log = np.where(term > 0.0, z_log + np.log(np.where(term > 0.0, term, 1.0)), -np.inf)
        out_log = np.where(small, np.log(counts.astype(float)), np.log(large_value))
        out_log = np.where(log_in, from_log, out_log)

    fits = out_log < log_threshold
    out_exact = np.where(small & ~log_in, counts, -1)
    approx_exact = np.rint(np.exp(np.where(fits, out_log, 0.0))).astype(np.int64)
    out_exact = np.where((out_exact < 0) & fits, approx_exact, out_exact)
    out_exact = np.where(z_exact == 0, 0, out_exact)
    out_log = np.where(z_exact == 0, -np.inf, out_log)
    approximate = (log_in | (exact_in & ~small)) & (z_exact != 0)
    return out_exact.astype(np.int64), out_log, approximate


def _add_immigrants(
    a_exact: np.ndarray,
    a_log: np.ndarray,
    log1p_m: np.ndarray,
    m_exact: np.ndarray,
    threshold: int,
) -> Tuple[np.ndarray, np.ndarray]:
    both_exact = (a_exact >= 0) & (m_exact >= 0)
    room = both_exact & (a_exact <= threshold - np.where(m_exact >= 0, m_exact, 0))
    total = np.where(room, a_exact + np.where(room, m_exact, 0), -1)
    with np.errstate(divide="ignore"):
        exact_log = np.log(np.where(room, total, 0).astype(float))
    log_total = np.where(room, exact_log, np.logaddexp(a_log, log_count_from_log1p(log1p_m)))
    return total.astype(np.int64), log_total


def _advance(
    z_exact: np.ndarray,
    z_log: np.ndarray,
    p: np.ndarray,
    log1p_m: np.ndarray,
    m_exact: np.ndarray,
    rng: np.random.Generator,
    threshold: int,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    off_exact, off_log, approximate = _geometric_offspring(z_exact, z_log, p, rng, threshold)
    new_exact, new_log = _add_immigrants(off_exact, off_log, log1p_m, m_exact, threshold)
    return new_exact, new_log, approximate


def _initial(mode: Mode, size: int) -> Tuple[np.ndarray, np.ndarray]:
    if mode == "one_ancestor":
        return np.ones(size, dtype=np.int64), np.zeros(size)
    return np.zeros(size, dtype=np.int64), np.full(size, -np.inf)


@dataclass
class BatchResult:
    """Recorded output of :func:`simulate_batch` for one chunk.

    Attributes:
        generations: Recorded generation indices (rows)
        exact: Exact counts per (row, replica); -1 in log domain
        log_value: log counts per (row, replica); -inf for zero
        hit_zero_at: First n >= 1 with Z_n = 0, -1 when none within the horizon
        approximate: Whether a replica went through a gaussian approximation
        env_p, env_log_m, env_m_exact: Realized environments (generation, replica)
            when recorded
    """

    chunk: int
    mode: Mode
    horizon: int
    generations: np.ndarray
    exact: np.ndarray
    log_value: np.ndarray
    hit_zero_at: np.ndarray
    approximate: np.ndarray
    env_p: Optional[np.ndarray] = None
    env_log_m: Optional[np.ndarray] = None
    env_m_exact: Optional[np.ndarray] = None

    @property
    def size(self) -> int:
        return int(self.hit_zero_at.shape[0])

    def row(self, generation: int) -> int:
        index = np.searchsorted(self.generations, generation)
        if index >= len(self.generations) or self.generations[index] != generation:
            raise KeyError(f"generation {generation} was not recorded")
        return int(index)

    def at(self, generation: int) -> Tuple[np.ndarray, np.ndarray]:
        """Exact and log columns of one recorded generation."""
        r = self.row(generation)
        return self.exact[r], self.log_value[r]

    def hit_zero_by(self, horizon: int) -> np.ndarray:
        return (self.hit_zero_at >= 1) & (self.hit_zero_at <= horizon)


def simulate_batch(
    spec: EnvironmentSpec,
    horizon: int,
    size: int,
    streams: StreamFactory,
    chunk: int = 0,
    mode: Mode = "zero_start",
    record_every: int = 1,
    checkpoints: Sequence[int] = (),
    streaming: bool = False,
    record_envs: bool = False,
    max_path_cells: Optional[int] = None,
) -> BatchResult:
    """Simulate ``size`` independent BPIRE replicas keyed by ``chunk``.

    Generation n draws its environments from the ENVIRONMENT lane and its
    offspring from the OFFSPRING lane, both at substream index n.

    Args:
        spec: Environment spec
        horizon: Number of generations
        size: Replicas in this chunk
        streams: Keyed stream factory
        chunk: Chunk (or replica) id keying the streams
        mode: ``zero_start`` (Z_0 = 0) or ``one_ancestor`` (Z_0 = 1)
        record_every: Record every k-th generation when not streaming
        checkpoints: Generations always recorded
        streaming: Record only checkpoints and the horizon
        record_envs: Keep realized environments
        max_path_cells: Memory budget in recorded cells

    Returns:
        BatchResult

    Raises:
        ResourceLimitError: If the recorded grid exceeds ``max_path_cells``
    """
    if horizon < 1:
        raise DomainError("horizon must be at least 1")
    threshold = spec.exact_threshold

    wanted = {int(c) for c in checkpoints if 0 <= c <= horizon} | {horizon}
    if not streaming:
        wanted |= set(range(0, horizon + 1, record_every))
    generations = np.array(sorted(wanted), dtype=np.int64)

    cells = len(generations) * size + (3 * horizon * size if record_envs else 0)
    if max_path_cells is not None and cells > max_path_cells:
        raise ResourceLimitError(
            f"recording {cells} cells exceeds the budget of {max_path_cells}; enable streaming"
        )

    exact_rows = np.empty((len(generations), size), dtype=np.int64)
    log_rows = np.empty((len(generations), size))
    env_p = np.empty((horizon, size)) if record_envs else None
    env_log_m = np.empty((horizon, size)) if record_envs else None
    env_m = np.empty((horizon, size), dtype=np.int64) if record_envs else None

    z_exact, z_log = _initial(mode, size)
    hit_zero_at = np.full(size, -1, dtype=np.int64)
    approximate = np.zeros(size, dtype=bool)

    row = 0
    if generations[0] == 0:
        exact_rows[0], log_rows[0] = z_exact, z_log
        row = 1

    for n in range(1, horizon + 1):
        draw = sample_environment(spec, size, streams.generator(chunk, Lane.ENVIRONMENT, n))
        offspring_rng = streams.generator(chunk, Lane.OFFSPRING, n)
        z_exact, z_log, approx = _advance(
            z_exact, z_log, draw.p, draw.log_m, draw.m_exact, offspring_rng, threshold
        )
        approximate |= approx
        hit_zero_at = np.where((hit_zero_at < 0) & (z_exact == 0), n, hit_zero_at)
        if record_envs:
            env_p[n - 1], env_log_m[n - 1], env_m[n - 1] = draw.p, draw.log_m, draw.m_exact
        if row < len(generations) and generations[row] == n:
            exact_rows[row], log_rows[row] = z_exact, z_log
            row += 1

    if approximate.any():
        logger.debug(f"Chunk {chunk}: {int(approximate.sum())} replicas used approximate offspring sums")

    return BatchResult(
        chunk=chunk,
        mode=mode,
        horizon=horizon,
        generations=generations,
        exact=exact_rows,
        log_value=log_rows,
        hit_zero_at=hit_zero_at,
        approximate=approximate,
        env_p=env_p,
        env_log_m=env_log_m,
        env_m_exact=env_m,
    )


# ---------------------------------------------------------------------------
# Single paths
# ---------------------------------------------------------------------------

@dataclass
class BranchingPath:
    """One BPIRE trajectory with its realized environment.

    Generation n >= 1 used offspring law geometric(1 - env_p[n - 1]) and
    immigrant count env_m_exact[n - 1] (log(1 + M) in env_log_m).
    """

    replica: int
    mode: Mode
    exact: np.ndarray
    log_value: np.ndarray
    env_p: np.ndarray
    env_log_m: np.ndarray
    env_m_exact: np.ndarray
    hit_zero_at: Optional[int]
    approximate: bool = False
    threshold: int = DEFAULT_EXACT_THRESHOLD

    @property
    def horizon(self) -> int:
        return len(self.exact) - 1

    def population(self, n: int) -> Population:
        exact = int(self.exact[n])
        if exact >= 0:
            return Population.of(exact, self.threshold, self.approximate)
        return Population(None, float(self.log_value[n]), self.approximate)

    @property
    def populations(self) -> List[Population]:
        return [self.population(n) for n in range(len(self.exact))]

    def env(self, n: int) -> GenEnv:
        """Environment of generation n (1-based)."""
        if not 1 <= n <= self.horizon:
            raise IndexError(f"generation {n} outside 1..{self.horizon}")
        exact = int(self.env_m_exact[n - 1])
        site = SiteEnv(float(self.env_p[n - 1]), float(self.env_log_m[n - 1]), exact if exact >= 0 else None)
        return GenEnv.from_site(site, self.threshold)

    @property
    def envs(self) -> List[GenEnv]:
        return [self.env(n) for n in range(1, self.horizon + 1)]


def simulate(
    spec: EnvironmentSpec,
    horizon: int,
    streams: StreamFactory,
    replica: int = 0,
    mode: Mode = "zero_start",
    max_path_cells: Optional[int] = None,
) -> BranchingPath:
    """Simulate one BPIRE path keyed by (seed, replica)."""
    batch = simulate_batch(
        spec, horizon, 1, streams, chunk=replica, mode=mode,
        record_envs=True, max_path_cells=max_path_cells,
    )
    hit = int(batch.hit_zero_at[0])
    return BranchingPath(
        replica=replica,
        mode=mode,
        exact=batch.exact[:, 0].copy(),
        log_value=batch.log_value[:, 0].copy(),
        env_p=batch.env_p[:, 0].copy(),
        env_log_m=batch.env_log_m[:, 0].copy(),
        env_m_exact=batch.env_m_exact[:, 0].copy(),
        hit_zero_at=hit if hit > 0 else None,
        approximate=bool(batch.approximate[0]),
        threshold=spec.exact_threshold,
    )


def regenerate_generation(path: BranchingPath, n: int, streams: StreamFactory) -> Population:
    """Replay generation n of a path from its stored environment and stream."""
    if not 1 <= n <= path.horizon:
        raise IndexError(f"generation {n} outside 1..{path.horizon}")
    z_exact = path.exact[n - 1: n]
    z_log = path.log_value[n - 1: n]
    new_exact, new_log, _ = _advance(
        z_exact, z_log,
        path.env_p[n - 1: n], path.env_log_m[n - 1: n], path.env_m_exact[n - 1: n],
        streams.generator(path.replica, Lane.OFFSPRING, n),
        path.threshold,
    )
    if new_exact[0] >= 0:
        return Population.of(int(new_exact[0]), path.threshold, path.approximate)
    return Population(None, float(new_log[0]), path.approximate)


# ---------------------------------------------------------------------------
# Immigrant lines
# ---------------------------------------------------------------------------

def immigrant_line(
    j: int,
    length: int,
    envs: Mapping[int, GenEnv],
    rng: np.random.Generator,
    threshold: int = DEFAULT_EXACT_THRESHOLD,
) -> List[Population]:
    """Path Z_0(j), ..., Z_length(j) of the line started by the M_j immigrants.

    Args:
        j: Generation of immigration
        length: Number of generations to follow
        envs: Generation environments keyed by generation index
        rng: Random generator
        threshold: Largest count kept exact

    Returns:
        List of length ``length + 1``
    """
    line = [envs[j].immigrants]
    for i in range(1, length + 1):
        line.append(offspring_sum(envs[j + i].law, line[-1], rng, threshold))
    return line


def sum_representation(
    envs: Mapping[int, GenEnv],
    n: int,
    rng: np.random.Generator,
    threshold: int = DEFAULT_EXACT_THRESHOLD,
) -> Population:
    """One draw of sum_{j=1}^{n} Z_{n-j}(j), the line-sum form of Z_n."""
    total = ZERO
    for j in range(1, n + 1):
        total = total.add(immigrant_line(j, n - j, envs, rng, threshold)[-1], threshold)
    return total


def conditional_mean_path(envs: Sequence[GenEnv], mode: Mode = "zero_start") -> np.ndarray:
    """E[Z_n | env] for n = 0..len(envs)."""
    means = np.empty(len(envs) + 1)
    means[0] = 1.0 if mode == "one_ancestor" else 0.0
    for n, gen in enumerate(envs, start=1):
        m = gen.immigrants.exact if gen.immigrants.exact is not None else math.exp(gen.immigrants.log_value)
        means[n] = gen.law.mean * means[n - 1] + m
    return means


# ---------------------------------------------------------------------------
# Regimes and stationarity
# ---------------------------------------------------------------------------

def classify_regime(spec: EnvironmentSpec, tolerance: float = 1e-12) -> Regime:
    """Sign of E[log mu] = -E[log rho]."""
    mean_log_mu = -log_rho_mean(spec.p_law, tolerance)
    if mean_log_mu == 0.0:
        return "critical"
    return "subcritical" if mean_log_mu < 0 else "supercritical"


def backward_batch(
    k: int,
    spec: EnvironmentSpec,
    size: int,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, np.ndarray]:
    """``size`` draws of the k-lookback process sum_{j=1}^{k} Z_j(-j).

    The lines started at times -k..-1 share the environment, so their sum
    evolves as a BPIRE started at time -k that receives no immigrants at
    time 0.

    Returns:
        Tuple of exact counts (-1 in log domain) and log counts
    """
    if k < 1:
        raise DomainError("lookback must be at least 1")
    if classify_regime(spec) != "subcritical":
        logger.warning("Backward process requested for a spec that is not subcritical")
    threshold = spec.exact_threshold
    z_exact, z_log = _initial("zero_start", size)
    for _ in range(k):
        draw = sample_environment(spec, size, rng)
        z_exact, z_log, _ = _advance(z_exact, z_log, draw.p, draw.log_m, draw.m_exact, rng, threshold)
    final = sample_environment(spec, size, rng)
    off_exact, off_log, _ = _geometric_offspring(z_exact, z_log, final.p, rng, threshold)
    return off_exact, off_log


def backward_process(k: int, spec: EnvironmentSpec, rng: np.random.Generator) -> Population:
    """One draw of the k-lookback backward process at time 0."""
    exact, log_value = backward_batch(k, spec, 1, rng)
    if exact[0] >= 0:
        return Population.of(int(exact[0]), spec.exact_threshold)
    return Population(None, float(log_value[0]), approximate=True)


def empirical_profile(exact: np.ndarray, states: int) -> np.ndarray:
    """Empirical law on 0..states with a final bin for everything larger."""
    values = np.where(exact < 0, states + 1, np.minimum(exact, states + 1))
    counts = np.bincount(values.astype(np.int64), minlength=states + 2)
    return counts / max(len(values), 1)


def total_variation(profile_a: np.ndarray, profile_b: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(profile_a) - np.asarray(profile_b)).sum())


def stationary_profile(
    spec: EnvironmentSpec,
    generation: int,
    replicas: int,
    streams: StreamFactory,
    states: int = 50,
    chunk_size: int = 10_000,
    mode: Mode = "zero_start",
) -> np.ndarray:
    """Empirical law of Z_generation over ``replicas`` zero-start paths."""
    counts = np.zeros(states + 2)
    for chunk, start in enumerate(range(0, replicas, chunk_size)):
        size = min(chunk_size, replicas - start)
        batch = simulate_batch(spec, generation, size, streams, chunk, mode, streaming=True)
        counts += empirical_profile(batch.at(generation)[0], states) * size
    return counts / replicas

