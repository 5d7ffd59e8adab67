"""Excited random walk in random environment and its branching coupling.

Site x carries M_x cookies: the first M_x visits to x step right with
probability one, later visits step right with probability p_x. Every
decision uses the uniform keyed by (site, visit index), so a walk and the
branching recursion read from its ledger consume the same randomness.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Mapping, Optional, Sequence, Tuple

import numpy as np

from core.errors import DomainError, IncompleteLedgerError, NotAnExcursionError
from schemas.models import EnvironmentSpec, RightRecurrenceReport
from tools.classify import proportion_statistic
from tools.env import SiteEnv, sample_site
from tools.streams import Lane, StreamFactory, site_index
from utils.logging import get_logger

logger = get_logger("walk")

WalkStatus = Literal["hit_target", "horizon"]

# Uniforms are drawn per site in blocks of this many visits.
_UNIFORM_BLOCK = 64


class CookieEnvironment:
    """Lazily realized cookie environment of one walk.

    Site environments come from the SITE lane and per-visit uniforms from
    the DECISION lane of ``walk_id``, both at the zig-zag index of the site.
    The caches belong to this instance only.
    """

    def __init__(self, spec: EnvironmentSpec, streams: StreamFactory, walk_id: int = 0):
        self.spec = spec
        self.streams = streams
        self.walk_id = walk_id
        self._sites: Dict[int, SiteEnv] = {}
        self._uniforms: Dict[int, np.ndarray] = {}
        self._generators: Dict[int, np.random.Generator] = {}

    @classmethod
    def frozen(
        cls,
        sites: Mapping[int, SiteEnv],
        uniforms: Optional[Mapping[int, Sequence[float]]] = None,
    ) -> "FrozenCookieEnvironment":
        """Environment with fixed sites and, optionally, fixed per-visit uniforms."""
        return FrozenCookieEnvironment(sites, uniforms)

    def site(self, x: int) -> SiteEnv:
        env = self._sites.get(x)
        if env is None:
            env = sample_site(self.spec, self.streams.generator(self.walk_id, Lane.SITE, site_index(x)))
            self._sites[x] = env
        return env

    def uniform(self, x: int, visit: int) -> float:
        """Uniform used by the ``visit``-th visit (1-based) to site x."""
        cached = self._uniforms.get(x)
        if cached is None or len(cached) < visit:
            generator = self._generators.get(x)
            if generator is None:
                generator = self.streams.generator(self.walk_id, Lane.DECISION, site_index(x))
                self._generators[x] = generator
            needed = visit - (0 if cached is None else len(cached))
            extra = generator.random(_UNIFORM_BLOCK * math.ceil(needed / _UNIFORM_BLOCK))
            cached = extra if cached is None else np.concatenate((cached, extra))
            self._uniforms[x] = cached
        return float(cached[visit - 1])

    def cookies(self, x: int) -> float:
        return self.site(x).cookies

    def transition_prob(self, x: int, visit: int) -> float:
        return transition_prob(self, x, visit)


class FrozenCookieEnvironment(CookieEnvironment):
    """Cookie environment with injected sites and uniforms."""

    def __init__(self, sites: Mapping[int, SiteEnv], uniforms: Optional[Mapping[int, Sequence[float]]] = None):
        self._sites = dict(sites)
        self._frozen_uniforms = {x: list(u) for x, u in (uniforms or {}).items()}
        self._rng: Optional[np.random.Generator] = None
        self.walk_id = -1

    def reseed(self, rng: np.random.Generator) -> None:
        """Draw missing uniforms from ``rng`` instead of failing."""
        self._rng = rng

    def site(self, x: int) -> SiteEnv:
        if x not in self._sites:
            raise KeyError(f"site {x} is not part of the frozen environment")
        return self._sites[x]

    def uniform(self, x: int, visit: int) -> float:
        values = self._frozen_uniforms.setdefault(x, [])
        if len(values) < visit:
            if self._rng is None:
                raise IncompleteLedgerError(f"no uniform for visit {visit} of site {x}")
            values.extend(self._rng.random(visit - len(values)).tolist())
        return values[visit - 1]


def transition_prob(env: CookieEnvironment, x: int, visit: int) -> float:
    """omega(x, i): 1 while cookies remain at x, p_x afterwards."""
    if visit < 1:
        raise DomainError("visit index starts at 1")
    site = env.site(x)
    return 1.0 if visit <= site.cookies else site.p


@dataclass
class CouplingLedger:
    """Per-site decisions in visit order.

    Attributes:
        marks: site -> list of (uniform, stepped right)
        cookies: site -> M_site
    """

    marks: Dict[int, List[Tuple[float, bool]]] = field(default_factory=dict)
    cookies: Dict[int, int] = field(default_factory=dict)
    complete: bool = False

    def record(self, x: int, u: float, success: bool, cookies: int) -> None:
        self.marks.setdefault(x, []).append((u, success))
        self.cookies.setdefault(x, cookies)

    def successes(self, x: int) -> List[bool]:
        return [s for _, s in self.marks.get(x, [])]


@dataclass
class WalkPath:
    positions: np.ndarray
    visit_counts: Dict[int, int]
    status: WalkStatus
    target: Optional[int] = None
    ledger: Optional[CouplingLedger] = None

    @property
    def steps(self) -> int:
        return len(self.positions) - 1

    @property
    def decisions(self) -> np.ndarray:
        return np.diff(self.positions)


def simulate_walk(
    env: CookieEnvironment,
    start: int = 0,
    target: Optional[int] = None,
    horizon: Optional[int] = None,
    coupling: bool = False,
) -> WalkPath:
    """Run the walk from ``start`` until it hits ``target`` (n >= 1) or the horizon.

    The step from x on its i-th visit is +1 iff U(x, i) < omega(x, i).

    Args:
        env: Cookie environment
        start: Starting site
        target: Site whose hitting stops the walk
        horizon: Maximal number of steps
        coupling: Log every decision into a CouplingLedger

    Returns:
        WalkPath with status ``hit_target`` or ``horizon``

    Raises:
        DomainError: Without a stop condition, or in coupling mode on a site
            whose cookie count is only known in log domain
    """
    if target is None and horizon is None:
        raise DomainError("a walk needs a target or a horizon")
    limit = horizon if horizon is not None else math.inf

    positions = [start]
    visits: Dict[int, int] = {}
    ledger = CouplingLedger() if coupling else None
    x = start
    status: WalkStatus = "horizon"
    while len(positions) - 1 < limit:
        visit = visits.get(x, 0) + 1
        visits[x] = visit
        site = env.site(x)
        if coupling and site.m_exact is None:
            raise DomainError(f"site {x} has a log-domain cookie count; coupling needs exact counts")
        u = env.uniform(x, visit)
        right = u < (1.0 if visit <= site.cookies else site.p)
        if ledger is not None:
            ledger.record(x, u, right, site.m_exact)
        x = x + 1 if right else x - 1
        positions.append(x)
        if target is not None and x == target:
            status = "hit_target"
            break

    if ledger is not None:
        ledger.complete = status == "hit_target"
    return WalkPath(
        positions=np.array(positions, dtype=np.int64),
        visit_counts=visits,
        status=status,
        target=target,
        ledger=ledger,
    )


def right_excursion(env: CookieEnvironment, horizon: Optional[int] = None, coupling: bool = True) -> WalkPath:
    """First excursion to the right of 0: the walk from 1 up to its return to 0.

    The returned positions start with the step 0 -> 1.
    """
    inner = simulate_walk(env, start=1, target=0, horizon=None if horizon is None else horizon - 1, coupling=coupling)
    visits = dict(inner.visit_counts)
    visits[0] = visits.get(0, 0) + 1
    return WalkPath(
        positions=np.concatenate(([0], inner.positions)),
        visit_counts=visits,
        status=inner.status,
        target=0,
        ledger=inner.ledger,
    )


def first_passage(path: WalkPath, k: int) -> Optional[int]:
    """T_k = inf{n >= 1 : S_n = k} within the path."""
    hits = np.nonzero(np.asarray(path.positions)[1:] == k)[0]
    return int(hits[0]) + 1 if len(hits) else None


def upcrossing_counts(path: WalkPath, incomplete: bool = False) -> List[int]:
    """U_k = number of steps k -> k+1 within a right excursion, k >= 0.

    Raises:
        NotAnExcursionError: If the path is not a right excursion from 0
    """
    positions = np.asarray(path.positions)
    if len(positions) < 2 or positions[0] != 0 or positions[1] != 1:
        raise NotAnExcursionError("a right excursion starts with the step 0 -> 1")
    returned = positions[-1] == 0
    interior = positions[1:-1] if returned else positions[1:]
    if (interior < 1).any():
        raise NotAnExcursionError("the path visits 0 or the left half-line before its end")
    if not returned and not incomplete:
        raise NotAnExcursionError("the excursion has not returned to 0; pass incomplete=True")
    steps = np.diff(positions)
    levels = positions[:-1][steps == 1]
    return np.bincount(levels, minlength=int(positions.max()) + 1).tolist()


def branching_from_ledger(ledger: CouplingLedger, env: CookieEnvironment) -> List[int]:
    """V_0 = 1, V_k = xi_1^(k) + ... + xi_{V_{k-1}}^(k) + M_k read from the ledger.

    xi_j^(k) counts the successes at site k after its first M_k visits
    between the (j-1)-st and the j-th failure. The sequence ends at the
    first V_k = 0.

    Raises:
        IncompleteLedgerError: If a needed failure was never recorded
    """
    values = [1]
    k = 1
    while values[-1] > 0:
        cookies = int(env.site(k).cookies)
        marks = ledger.successes(k)[cookies:]
        needed = values[-1]
        successes = 0
        failures = 0
        for success in marks:
            if success:
                successes += 1
            else:
                failures += 1
                if failures == needed:
                    break
        if failures < needed:
            raise IncompleteLedgerError(f"site {k} records {failures} of {needed} failures")
        values.append(successes + cookies)
        k += 1
    return values


@dataclass(frozen=True)
class ExcursionSummary:
    """Outcome of one right excursion.

    Attributes:
        walk_id: Stream key of the excursion's environment
        steps: Steps taken, including the first step 0 -> 1
        returned: Whether the walk came back to 0 within the horizon
        left_first: Whether the first decision at 0 actually pointed left
        coupled: Whether the ledger produced a branching sequence
        agrees: Whether that sequence equals the up-crossing counts
        extinct_at: Generation at which the coupled sequence hit 0
        branching_steps: Excursion length implied by the coupled sequence, 2 * sum(V_k)
    """

    walk_id: int
    steps: int
    returned: bool
    left_first: bool
    coupled: bool = False
    agrees: bool = False
    extinct_at: Optional[int] = None
    branching_steps: Optional[int] = None


def run_excursion(
    spec: EnvironmentSpec,
    streams: StreamFactory,
    walk_id: int,
    horizon: int,
    coupling: bool = True,
) -> ExcursionSummary:
    env = CookieEnvironment(spec, streams, walk_id)
    left_first = env.uniform(0, 1) >= transition_prob(env, 0, 1)
    use_ledger = coupling
    try:
        path = right_excursion(env, horizon, coupling=use_ledger)
    except DomainError:
        # astronomic cookie count on the way: statistics only
        use_ledger = False
        path = right_excursion(env, horizon, coupling=False)
    returned = path.status == "hit_target"
    if not (use_ledger and returned):
        return ExcursionSummary(walk_id, path.steps, returned, left_first)
    v = branching_from_ledger(path.ledger, env)
    return ExcursionSummary(
        walk_id, path.steps, returned, left_first,
        coupled=True, agrees=v == upcrossing_counts(path),
        extinct_at=len(v) - 1, branching_steps=2 * sum(v),
    )


def summarize_right_recurrence(
    summaries: Sequence[ExcursionSummary],
    horizons: Sequence[int],
    coupling: bool = True,
    confidence: float = 0.99,
) -> RightRecurrenceReport:
    """Reduce excursion summaries; the result does not depend on their order."""
    horizons = sorted(set(int(h) for h in horizons))
    total = len(summaries)
    returned = [
        proportion_statistic(h, sum(s.returned and s.steps <= h for s in summaries), total, confidence)
        for h in horizons
    ]
    branching = None
    if coupling:
        branching = [
            proportion_statistic(
                h, sum(s.coupled and s.branching_steps <= h for s in summaries), total, confidence
            )
            for h in horizons
        ]
    coupled = sum(s.coupled for s in summaries)
    agreements = sum(s.coupled and s.agrees for s in summaries)
    if agreements != coupled:
        logger.error(f"Coupling mismatch: {coupled - agreements} of {coupled} excursions")
    return RightRecurrenceReport(
        excursions=total,
        horizons=horizons,
        returned=returned,
        branching_hit_zero=branching,
        coupled_excursions=coupled,
        exact_agreements=agreements,
        left_first_steps=sum(s.left_first for s in summaries),
    )


def classify_right_recurrence(
    spec: EnvironmentSpec,
    excursions: int,
    horizons: Sequence[int],
    streams: StreamFactory,
    coupling: bool = True,
    confidence: float = 0.99,
    first_excursion: int = 0,
) -> RightRecurrenceReport:
    """Fraction of right excursions returning to 0 by each horizon.

    With coupling on, each completed excursion also yields the coupled
    branching sequence V; the report counts how often V equals the
    up-crossing counts and the fraction of V-processes that died out.
    """
    horizon = max(int(h) for h in horizons)
    summaries = [
        run_excursion(spec, streams, walk_id, horizon, coupling)
        for walk_id in range(first_excursion, first_excursion + excursions)
    ]
    return summarize_right_recurrence(summaries, horizons, coupling, confidence)


def excursion_rows(walk_id: int, path: WalkPath) -> List[Tuple[int, int, int]]:
    """(replica, step, position) rows of a walk path."""
    return [(walk_id, n, int(x)) for n, x in enumerate(path.positions)]
