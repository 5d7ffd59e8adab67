"""Ladder decomposition of a critical BPIRE.

The log-mean walk Y_n = log(mu_1 ... mu_n) oscillates for a critical
environment. Its strict descending ladder epochs L_n cut the path into
blocks; sampling Z only at the epochs gives a subcritical BPIRE whose
offspring law is the composition of the block's generating functions and
whose immigrants M~_n are the lines started inside the block.

Y is accumulated on a fixed-point lattice so that "strictly below" is an
exact integer comparison.
"""

import math
from dataclasses import dataclass
from functools import partial
from typing import List, Optional, Sequence, Tuple

import numpy as np

from core.config import DEFAULT_EXACT_THRESHOLD
from core.errors import DomainError
from schemas.models import EnvironmentSpec, LadderTailReport, LadderTailRow, TwoPointPLaw
from tools.branching import BranchingPath, GenEnv, OffspringLaw, classify_regime, offspring_sum
from tools.env import prob_half, sample_environment
from tools.parallel import ChunkTask, run_chunks
from tools.population import ZERO, Population
from tools.streams import Lane, StreamFactory
from utils.logging import get_logger

logger = get_logger("ladder")

# Lattice spacing of the fixed-point log-mean walk.
LATTICE = 2.0 ** -32


def quantize(log_values: np.ndarray) -> np.ndarray:
    return np.rint(np.asarray(log_values, dtype=float) / LATTICE).astype(np.int64)


@dataclass(frozen=True)
class LogMeanWalk:
    """Y_0 = 0, Y_n = Y_{n-1} + log mu_n on the lattice ``LATTICE``."""

    ticks: np.ndarray
    mus: Optional[np.ndarray] = None

    @classmethod
    def from_mus(cls, mus: Sequence[float]) -> "LogMeanWalk":
        mus = np.asarray(mus, dtype=float)
        increments = quantize(np.log(mus))
        return cls(np.concatenate(([0], np.cumsum(increments))).astype(np.int64), mus)

    @classmethod
    def from_values(cls, values: Sequence[float]) -> "LogMeanWalk":
        values = np.asarray(values, dtype=float)
        if values[0] != 0.0:
            raise DomainError("a log-mean walk starts at 0")
        return cls(quantize(values))

    @classmethod
    def from_path(cls, path: BranchingPath) -> "LogMeanWalk":
        return cls.from_mus(path.env_p / (1.0 - path.env_p))

    @property
    def values(self) -> np.ndarray:
        return self.ticks * LATTICE

    def __len__(self) -> int:
        return len(self.ticks)


@dataclass
class LadderDecomposition:
    """Epochs L_0 = 0 < L_1 < ... within the horizon.

    ``incomplete`` is True when the walk after the last epoch has not yet
    gone strictly below it at the horizon.
    """

    walk: LogMeanWalk
    epochs: np.ndarray
    horizon: int
    incomplete: bool

    @property
    def count(self) -> int:
        return len(self.epochs) - 1

    @property
    def blocks(self) -> List[Tuple[int, int]]:
        """Complete blocks as (L_{n-1}, L_n) pairs."""
        return list(zip(self.epochs[:-1].tolist(), self.epochs[1:].tolist()))

    def block_log_derivative(self, index: int) -> float:
        """log lambda_n'(1) = Y_{L_n} - Y_{L_{n-1}} for block n >= 1."""
        start, end = self.blocks[index - 1]
        return float(self.walk.ticks[end] - self.walk.ticks[start]) * LATTICE


def descending_ladder_epochs(y: LogMeanWalk, horizon: Optional[int] = None) -> LadderDecomposition:
    """All strict descending ladder epochs of y up to ``horizon``."""
    horizon = len(y) - 1 if horizon is None else horizon
    if horizon > len(y) - 1:
        raise DomainError(f"horizon {horizon} exceeds walk length {len(y) - 1}")
    ticks = y.ticks[: horizon + 1]
    previous_minimum = np.minimum.accumulate(ticks)[:-1]
    new_minima = np.nonzero(ticks[1:] < previous_minimum)[0] + 1
    epochs = np.concatenate(([0], new_minima)).astype(np.int64)
    return LadderDecomposition(walk=y, epochs=epochs, horizon=horizon, incomplete=bool(epochs[-1] < horizon))


# ---------------------------------------------------------------------------
# Block laws
# ---------------------------------------------------------------------------

def composed_pgf(laws: Sequence[OffspringLaw], s: float) -> float:
    """lambda(s) = phi_1(phi_2(...phi_b(s)...)) for the block laws phi_1..phi_b."""
    if not 0.0 <= s <= 1.0:
        raise DomainError(f"pgf argument must lie in [0, 1], got {s!r}")
    value = s
    for law in reversed(laws):
        value = law.pgf(value)
    return value


def composed_mean(laws: Sequence[OffspringLaw]) -> float:
    """lambda'(1), the product of the block means."""
    return math.prod(law.mean for law in laws)


def subprocess_extract(path, epochs: Sequence[int]) -> List[Population]:
    """Populations Z_{L_0}, Z_{L_1}, ... of a path.

    Args:
        path: BranchingPath or a sequence of populations
        epochs: Epoch indices

    Raises:
        IndexError: If an epoch lies beyond the path
    """
    populations = path.populations if isinstance(path, BranchingPath) else list(path)
    out = []
    for epoch in epochs:
        if not 0 <= epoch < len(populations):
            raise IndexError(f"epoch {epoch} outside path of length {len(populations)}")
        out.append(populations[int(epoch)])
    return out


def _immigrant_value(gen: GenEnv) -> float:
    m = gen.immigrants
    return float(m.exact) if m.exact is not None else math.exp(m.log_value)


def block_immigrants(
    block_envs: Sequence[GenEnv],
    rng: np.random.Generator,
    threshold: int = DEFAULT_EXACT_THRESHOLD,
) -> Population:
    """One draw of M~ = sum_j Z_{b-j}(j) over the block generations j = 1..b."""
    total = ZERO
    for j, gen in enumerate(block_envs):
        line = gen.immigrants
        for later in block_envs[j + 1:]:
            line = offspring_sum(later.law, line, rng, threshold)
        total = total.add(line, threshold)
    return total


def block_immigrants_mean(block_envs: Sequence[GenEnv]) -> float:
    """E[M~ | env] = sum_j M_j mu_{j+1} ... mu_b."""
    return math.fsum(
        _immigrant_value(gen) * composed_mean([g.law for g in block_envs[j + 1:]])
        for j, gen in enumerate(block_envs)
    )


def block_step(
    z: Population,
    block_envs: Sequence[GenEnv],
    rng: np.random.Generator,
    threshold: int = DEFAULT_EXACT_THRESHOLD,
) -> Population:
    """One step of the subprocess: z parents through the composed law plus M~."""
    descendants = z
    for gen in block_envs:
        descendants = offspring_sum(gen.law, descendants, rng, threshold)
    return descendants.add(block_immigrants(block_envs, rng, threshold), threshold)


def block_pgf_prediction(block_envs: Sequence[GenEnv], z0: int, s: float) -> float:
    """E[s^{Z_b} | Z_0 = z0] = lambda(s)^z0 prod_j lambda_{j+1..b}(s)^{M_j}."""
    laws = [gen.law for gen in block_envs]
    value = composed_pgf(laws, s) ** z0
    for j, gen in enumerate(block_envs):
        value *= composed_pgf(laws[j + 1:], s) ** _immigrant_value(gen)
    return value


# ---------------------------------------------------------------------------
# Ladder tail
# ---------------------------------------------------------------------------

def coin_ladder_survival(n_max: int, up_probability: float = 0.5) -> np.ndarray:
    """Exact P[L > n], n = 0..n_max, for a +-1 walk.

    Dynamic programming over the height above the starting level; mass
    stepping below it is the first strict descent.
    """
    heights = np.zeros(n_max + 2)
    heights[0] = 1.0
    survival = np.empty(n_max + 1)
    survival[0] = 1.0
    for n in range(1, n_max + 1):
        moved = np.zeros_like(heights)
        moved[1:] += up_probability * heights[:-1]
        moved[:-1] += (1.0 - up_probability) * heights[1:]
        heights = moved
        survival[n] = heights.sum()
    return survival


def coin_ladder_count_mean(n: int, up_probability: float = 0.5) -> float:
    """Exact expected number of strict descending ladder epochs in 1..n."""
    heights = np.zeros(n + 2)
    heights[0] = 1.0
    expected = 0.0
    for _ in range(n):
        descent = (1.0 - up_probability) * heights[0]
        moved = np.zeros_like(heights)
        moved[1:] += up_probability * heights[:-1]
        moved[:-1] += (1.0 - up_probability) * heights[1:]
        moved[0] += descent
        expected += descent
        heights = moved
    return expected


def _coin_up_probability(spec: EnvironmentSpec) -> Optional[float]:
    law = spec.p_law
    if not isinstance(law, TwoPointPLaw) or law.a == 0.5:
        return None
    return law.weight if law.a > 0.5 else 1.0 - law.weight


def _ladder_chunk(spec: EnvironmentSpec, n_max: int, streams: StreamFactory, task: ChunkTask) -> np.ndarray:
    """Per-n counts of walks in the chunk still at or above 0 after n steps."""
    draw = sample_environment(spec, (task.size, n_max), streams.generator(task.chunk, Lane.LADDER))
    ticks = np.cumsum(quantize(np.log(draw.mu)), axis=1)
    return (np.minimum.accumulate(ticks, axis=1) >= 0).sum(axis=0)


def ladder_tail_estimate(
    spec: EnvironmentSpec,
    n_max: int,
    replicas: int,
    streams: StreamFactory,
    chunk_size: int = 10_000,
    tolerance: float = 1e-12,
    workers: int = 1,
) -> LadderTailReport:
    """Empirical P[L_1 > n] for n = 1..n_max with binomial standard errors.

    Each chunk draws ``chunk_size`` independent mu-sequences of length
    n_max from the LADDER lane.
    """
    warnings = []
    if classify_regime(spec, tolerance) != "critical":
        message = "spec is not critical; the sqrt(n) scaling does not apply"
        logger.warning(message)
        warnings.append(message)

    up = _coin_up_probability(spec)
    exact = coin_ladder_survival(n_max, up) if up is not None else None

    if prob_half(spec.p_law) == 1.0:
        logger.warning("mu is identically 1; the log-mean walk never descends")
        rows = [
            LadderTailRow(n=n, survival=1.0, standard_error=0.0, scaled=math.sqrt(n))
            for n in range(1, n_max + 1)
        ]
        return LadderTailReport(rows=rows, replicas=replicas, degenerate=True, warnings=warnings)

    worker = partial(_ladder_chunk, spec, n_max, streams)
    alive = np.zeros(n_max, dtype=np.int64)
    for _, counts in run_chunks(worker, replicas, chunk_size, workers):
        alive += counts

    rows = []
    for n in range(1, n_max + 1):
        survival = alive[n - 1] / replicas
        rows.append(LadderTailRow(
            n=n,
            survival=float(survival),
            standard_error=float(math.sqrt(survival * (1.0 - survival) / replicas)),
            scaled=float(survival * math.sqrt(n)),
            exact=float(exact[n]) if exact is not None else None,
        ))
    return LadderTailReport(rows=rows, replicas=replicas, degenerate=False, warnings=warnings)


def ladder_epochs_table(
    spec: EnvironmentSpec,
    horizon: int,
    replicas: int,
    streams: StreamFactory,
) -> List[Tuple[int, int, int]]:
    """(replica, n, L_n) rows of independent log-mean walks keyed per replica."""
    rows = []
    for replica in range(replicas):
        draw = sample_environment(spec, horizon, streams.generator(replica, Lane.LADDER))
        decomposition = descending_ladder_epochs(LogMeanWalk.from_mus(draw.mu), horizon)
        rows.extend((replica, n, int(epoch)) for n, epoch in enumerate(decomposition.epochs))
    return rows
