"""Critical random difference equation X_n = mu_n X_{n-1} + M_n.

All arrays are carried in log domain: X can reach exp(1e9) in the
transient regime. A zero is represented by -inf.
"""

import math
from dataclasses import dataclass
from functools import partial
from typing import List, Literal, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from core.errors import DomainError
from schemas.models import EnvironmentSpec, HorizonStatistic
from tools.branching import Mode, classify_regime, simulate_batch
from tools.classify import proportion_statistic
from tools.env import sample_environment
from tools.parallel import ChunkTask, run_chunks
from tools.streams import Lane, StreamFactory
from utils.logging import get_logger

logger = get_logger("recursion")


def ar_step(x: float, mu: float, m: float) -> float:
    """mu x + m."""
    if x < 0 or m < 0 or mu <= 0:
        raise DomainError("ar_step needs x >= 0, m >= 0 and mu > 0")
    return mu * x + m


def log_ar_step(log_x: float, log_mu: float, log_m: float) -> float:
    """log(mu x + m) from log x, log mu and log m."""
    return float(np.logaddexp(log_mu + log_x, log_m))


@dataclass
class ARPaths:
    """Vectorized AR paths.

    Attributes:
        log_x: log X_n per (row, replica); rows follow ``steps``
        steps: Recorded step indices
        log_mu: log mu_n per (n - 1, replica) when environments are kept
        log_m: log M_n per (n - 1, replica), -inf for M = 0
    """

    log_x: np.ndarray
    steps: np.ndarray
    log_mu: Optional[np.ndarray] = None
    log_m: Optional[np.ndarray] = None

    def at(self, n: int) -> np.ndarray:
        index = int(np.searchsorted(self.steps, n))
        if index >= len(self.steps) or self.steps[index] != n:
            raise KeyError(f"step {n} was not recorded")
        return self.log_x[index]


def simulate_ar(
    spec: EnvironmentSpec,
    horizon: int,
    size: int,
    rng: np.random.Generator,
    checkpoints: Optional[Sequence[int]] = None,
    keep_envs: bool = False,
) -> ARPaths:
    """Simulate ``size`` AR paths driven by i.i.d. (mu_n, M_n) from ``spec``.

    Args:
        spec: Environment spec; mu = p / (1 - p)
        horizon: Number of steps
        size: Number of paths
        rng: Random generator
        checkpoints: Steps to record; every step when None
        keep_envs: Keep the realized log mu and log M arrays

    Returns:
        ARPaths
    """
    steps = np.arange(horizon + 1) if checkpoints is None else np.array(sorted({0, *checkpoints}))
    log_x = np.full(size, -np.inf)
    recorded = np.empty((len(steps), size))
    recorded[0] = log_x
    log_mu_rows = np.empty((horizon, size)) if keep_envs else None
    log_m_rows = np.empty((horizon, size)) if keep_envs else None

    row = 1
    for n in range(1, horizon + 1):
        draw = sample_environment(spec, size, rng)
        log_mu = np.log(draw.p) - np.log1p(-draw.p)
        log_m = draw.log_count
        log_x = np.logaddexp(log_mu + log_x, log_m)
        if keep_envs:
            log_mu_rows[n - 1], log_m_rows[n - 1] = log_mu, log_m
        if row < len(steps) and steps[row] == n:
            recorded[row] = log_x
            row += 1
    return ARPaths(log_x=recorded, steps=steps, log_mu=log_mu_rows, log_m=log_m_rows)


def _log_sum(values: np.ndarray, axis: int = 0) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return logsumexp(values, axis=axis)


def dual_w(log_mu: np.ndarray, log_m: np.ndarray, n: int) -> np.ndarray:
    """log W_n, W_n = M_1 + mu_1 M_2 + ... + mu_1 ... mu_{n-1} M_n.

    Environment arrays are indexed by n - 1 along axis 0.
    """
    if n > len(log_mu):
        raise DomainError(f"need {n} environments, got {len(log_mu)}")
    prefix = np.concatenate((np.zeros_like(log_mu[:1]), np.cumsum(log_mu[: n - 1], axis=0)))
    return _log_sum(prefix + log_m[:n])


def expanded_x(log_mu: np.ndarray, log_m: np.ndarray, n: int) -> np.ndarray:
    """log X_n from the expansion M_n + mu_n M_{n-1} + ... + mu_2 ... mu_n M_1."""
    if n > len(log_mu):
        raise DomainError(f"need {n} environments, got {len(log_mu)}")
    suffix = np.cumsum(log_mu[1:n][::-1], axis=0)[::-1]
    weights = np.concatenate((suffix, np.zeros_like(log_mu[:1])))
    return _log_sum(weights + log_m[:n])


def _growth_chunk(
    spec: EnvironmentSpec,
    checkpoints: Sequence[int],
    streams: StreamFactory,
    process: str,
    mode: Mode,
    task: ChunkTask,
) -> np.ndarray:
    horizon = checkpoints[-1]
    if process == "ar":
        paths = simulate_ar(spec, horizon, task.size, streams.generator(task.chunk, Lane.RECURSION), checkpoints)
        columns = [paths.at(n) for n in checkpoints]
    else:
        batch = simulate_batch(spec, horizon, task.size, streams, task.chunk, mode, checkpoints=checkpoints, streaming=True)
        columns = [batch.at(n)[1] for n in checkpoints]
    return np.array([int((log_values > math.sqrt(n)).sum()) for n, log_values in zip(checkpoints, columns)])


def growth_event_frequency(
    spec: EnvironmentSpec,
    checkpoints: Sequence[int],
    replicas: int,
    streams: StreamFactory,
    process: Literal["ar", "bpire"] = "ar",
    chunk_size: int = 1000,
    mode: Mode = "zero_start",
    confidence: float = 0.99,
    workers: int = 1,
) -> List[HorizonStatistic]:
    """Empirical P[X_n > e^{sqrt n}] (or Z_n for ``bpire``) per checkpoint."""
    if classify_regime(spec) != "critical":
        logger.warning("Growth events requested for a spec that is not critical")
    checkpoints = sorted(set(int(c) for c in checkpoints))
    worker = partial(_growth_chunk, spec, checkpoints, streams, process, mode)
    hits = np.zeros(len(checkpoints), dtype=np.int64)
    for _, counts in run_chunks(worker, replicas, chunk_size, workers):
        hits += counts

    return [
        proportion_statistic(n, int(h), replicas, confidence) for n, h in zip(checkpoints, hits)
    ]
