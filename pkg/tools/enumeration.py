"""Exact distributions of small BPIRE instances by exhaustive enumeration.

Finite-support offspring laws (bernoulli, table) are enumerated with
``fractions.Fraction`` arithmetic on the binary values of their
parameters, so two constructions of the same law compare exactly.
Geometric laws have infinite support; their distributions are enumerated
in floating point with a per-entry floor and the dropped mass reported.
"""

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Mapping, Sequence, Union

from schemas.models import ConstantMLaw, EnvironmentSpec, FiniteMLaw
from tools.branching import GenEnv, Mode, OffspringLaw
from tools.env import p_atoms
from tools.population import Population

Probability = Union[Fraction, float]

# Entries below this probability are dropped from geometric enumerations.
PROBABILITY_FLOOR = 1e-14


@dataclass
class Distribution:
    """Law on N_0 as a sparse table plus the mass lost to truncation."""

    probs: Dict[int, Probability] = field(default_factory=dict)
    truncated: float = 0.0

    @classmethod
    def point(cls, value: int) -> "Distribution":
        return cls({int(value): Fraction(1)})

    def __getitem__(self, value: int) -> Probability:
        return self.probs.get(value, Fraction(0))

    @property
    def exact(self) -> bool:
        return all(isinstance(p, Fraction) for p in self.probs.values())

    def total(self) -> Probability:
        return sum(self.probs.values(), Fraction(0))

    def mean(self) -> float:
        return float(sum(k * p for k, p in self.probs.items()))

    def max_difference(self, other: "Distribution") -> float:
        keys = set(self.probs) | set(other.probs)
        return max((abs(float(self[k] - other[k])) for k in keys), default=0.0)


def _law_table(law: OffspringLaw) -> Distribution:
    if law.family == "bernoulli":
        q = Fraction(law.p)
        return Distribution({0: 1 - q, 1: q})
    if law.family == "table":
        table: Dict[int, Probability] = {}
        for k, w in law.table:
            table[k] = table.get(k, Fraction(0)) + Fraction(w)
        return Distribution(table)
    probs: Dict[int, Probability] = {}
    n = 0
    while True:
        mass = law.pmf(n)
        if mass < PROBABILITY_FLOOR:
            break
        probs[n] = mass
        n += 1
    return Distribution(probs, truncated=law.p ** n)


def convolve(a: Distribution, b: Distribution) -> Distribution:
    """Law of the sum of independent variables with laws a and b."""
    exact = a.exact and b.exact
    probs: Dict[int, Probability] = {}
    dropped = a.truncated + b.truncated
    for (i, pa), (j, pb) in itertools.product(a.probs.items(), b.probs.items()):
        mass = pa * pb
        if not exact and mass < PROBABILITY_FLOOR:
            dropped += float(mass)
            continue
        probs[i + j] = probs.get(i + j, Fraction(0) if exact else 0.0) + mass
    return Distribution(probs, truncated=dropped)


def _power(law: Distribution, k: int) -> Distribution:
    result = Distribution.point(0)
    base = law
    while k:
        if k & 1:
            result = convolve(result, base)
        k >>= 1
        if k:
            base = convolve(base, base)
    return result


def offspring_distribution(law: OffspringLaw, parents: Distribution) -> Distribution:
    """Law of xi_1 + ... + xi_K with K distributed as ``parents``."""
    single = _law_table(law)
    result: Dict[int, Probability] = {}
    truncated = parents.truncated
    for k, pk in parents.probs.items():
        part = _power(single, k)
        truncated += float(pk) * part.truncated
        for v, pv in part.probs.items():
            result[v] = result.get(v, Fraction(0)) + pk * pv
    return Distribution(result, truncated=truncated)


def _shift(dist: Distribution, m: int) -> Distribution:
    return Distribution({k + m: p for k, p in dist.probs.items()}, dist.truncated)


def _immigrant_count(population: Population) -> int:
    if population.exact is None:
        raise ValueError("enumeration needs exact immigrant counts")
    return population.exact


def step_distribution(dist: Distribution, gen: GenEnv) -> Distribution:
    return _shift(offspring_distribution(gen.law, dist), _immigrant_count(gen.immigrants))


def recursion_distribution(envs: Sequence[GenEnv], n: int, mode: Mode = "zero_start") -> Distribution:
    """Law of Z_n from the recursion form; envs[i] is generation i + 1."""
    dist = Distribution.point(1 if mode == "one_ancestor" else 0)
    for gen in envs[:n]:
        dist = step_distribution(dist, gen)
    return dist


def line_distribution(j: int, length: int, envs: Mapping[int, GenEnv]) -> Distribution:
    """Law of Z_length(j) for the line started by the M_j immigrants."""
    dist = Distribution.point(_immigrant_count(envs[j].immigrants))
    for i in range(1, length + 1):
        dist = offspring_distribution(envs[j + i].law, dist)
    return dist


def sum_form_distribution(envs: Mapping[int, GenEnv], n: int) -> Distribution:
    """Law of sum_{j=1}^{n} Z_{n-j}(j); the lines are independent."""
    dist = Distribution.point(0)
    for j in range(1, n + 1):
        dist = convolve(dist, line_distribution(j, n - j, envs))
    return dist


def block_distribution(block_envs: Sequence[GenEnv], z0: int) -> Distribution:
    """Law of the block-end population by the ladder subprocess step.

    z0 parents reproduce through the composed block law, independently of
    the block immigrants M~ = sum_j Z_{b-j}(j).
    """
    keyed = {j: gen for j, gen in enumerate(block_envs, start=1)}
    composed = Distribution.point(z0)
    for gen in block_envs:
        composed = offspring_distribution(gen.law, composed)
    return convolve(composed, sum_form_distribution(keyed, len(block_envs)))


def direct_block_distribution(block_envs: Sequence[GenEnv], z0: int) -> Distribution:
    """Law of the block-end population by stepping the recursion from z0."""
    dist = Distribution.point(z0)
    for gen in block_envs:
        dist = step_distribution(dist, gen)
    return dist


def _m_atoms(m_law):
    if isinstance(m_law, ConstantMLaw):
        return [m_law.value], [1.0]
    if isinstance(m_law, FiniteMLaw):
        return list(m_law.values), list(m_law.weights)
    raise ValueError(f"annealed enumeration needs a finitely supported m-law, got {m_law.family}")


def annealed_distribution(spec: EnvironmentSpec, n: int, mode: Mode = "zero_start") -> Distribution:
    """Law of Z_n averaged over every environment of a finite-atom spec."""
    atoms = p_atoms(spec.p_law)
    if atoms is None:
        raise ValueError("annealed enumeration needs a finitely supported p-law")
    p_values, p_weights = atoms
    m_values, m_weights = _m_atoms(spec.m_law)

    if spec.coupling_mode == "independent_pair":
        cells = _comonotone_cells(list(p_values), list(p_weights), m_values, m_weights)
    else:
        cells = [
            ((float(p), int(m)), float(wp) * float(wm))
            for (p, wp), (m, wm) in itertools.product(zip(p_values, p_weights), zip(m_values, m_weights))
        ]

    result: Dict[int, float] = {}
    truncated = 0.0
    for path in itertools.product(cells, repeat=n):
        weight = math.prod(w for _, w in path)
        if weight == 0.0:
            continue
        envs = [GenEnv.of(OffspringLaw.geometric(p), m) for (p, m), _ in path]
        dist = recursion_distribution(envs, n, mode)
        truncated += weight * dist.truncated
        for k, pk in dist.probs.items():
            result[k] = result.get(k, 0.0) + weight * float(pk)
    return Distribution(result, truncated=truncated)


def _comonotone_cells(p_values, p_weights, m_values, m_weights):
    # one shared uniform drives both inversions
    p_edges = list(itertools.accumulate(p_weights))
    m_edges = list(itertools.accumulate(m_weights))
    edges = sorted(set([0.0] + p_edges + m_edges))
    cells = []
    for lo, hi in zip(edges, edges[1:]):
        mid = 0.5 * (lo + hi)
        p = p_values[min(sum(mid >= e for e in p_edges), len(p_values) - 1)]
        m = m_values[min(sum(mid >= e for e in m_edges), len(m_values) - 1)]
        cells.append(((float(p), int(m)), hi - lo))
    return cells
