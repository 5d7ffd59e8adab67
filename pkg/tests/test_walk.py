"""Tests for the excited walk and its coupling with the branching recursion."""

import numpy as np
import pytest

from core.errors import DomainError, IncompleteLedgerError, NotAnExcursionError
from schemas.models import ConstantMLaw, EnvironmentSpec, FiniteMLaw, TwoPointPLaw
from tools.classify import compare_proportions
from tools.env import SiteEnv, fixed_p_spec
from tools.streams import Lane, StreamFactory
from tools.walk import (
    CookieEnvironment,
    ExcursionSummary,
    WalkPath,
    branching_from_ledger,
    classify_right_recurrence,
    excursion_rows,
    first_passage,
    right_excursion,
    run_excursion,
    simulate_walk,
    summarize_right_recurrence,
    transition_prob,
    upcrossing_counts,
)


def path_of(*positions: int) -> WalkPath:
    return WalkPath(positions=np.array(positions), visit_counts={}, status="hit_target", target=0)


@pytest.fixture
def traced_env():
    """Sites without cookies whose uniforms force 0,1,2,1,2,1,0."""
    sites = {1: SiteEnv.of(0.5, 0), 2: SiteEnv.of(0.5, 0)}
    uniforms = {1: [0.1, 0.1, 0.9], 2: [0.9, 0.9]}
    return CookieEnvironment.frozen(sites, uniforms)


class TestTransitionProb:
    def test_cookie_rule(self):
        env = CookieEnvironment.frozen({0: SiteEnv.of(0.3, 2)})
        assert [transition_prob(env, 0, i) for i in (1, 2, 3, 4)] == [1.0, 1.0, 0.3, 0.3]
        assert env.transition_prob(0, 3) == 0.3

    def test_visit_index_starts_at_one(self):
        env = CookieEnvironment.frozen({0: SiteEnv.of(0.3, 2)})
        with pytest.raises(DomainError):
            transition_prob(env, 0, 0)

    def test_lazy_environment_matches_rule(self, streams, bounded_cookie_spec):
        env = CookieEnvironment(bounded_cookie_spec, streams, walk_id=4)
        for x in range(-5, 6):
            site = env.site(x)
            assert transition_prob(env, x, 1) == (1.0 if site.m_exact == 1 else 1.0 / 3.0)
            assert transition_prob(env, x, 2) == 1.0 / 3.0

    def test_frozen_site_must_exist(self):
        with pytest.raises(KeyError):
            CookieEnvironment.frozen({}).site(3)


class TestSimulateWalk:
    def test_hand_traced_excursion(self, traced_env):
        path = right_excursion(traced_env)
        assert path.positions.tolist() == [0, 1, 2, 1, 2, 1, 0]
        assert path.status == "hit_target"
        assert first_passage(path, 0) == 6
        assert path.steps == 6
        assert path.visit_counts == {0: 1, 1: 3, 2: 2}

    def test_needs_a_stop_condition(self, traced_env):
        with pytest.raises(DomainError):
            simulate_walk(traced_env, start=1)

    def test_missing_uniform(self):
        env = CookieEnvironment.frozen({1: SiteEnv.of(0.5, 0), 2: SiteEnv.of(0.5, 0)}, {1: [0.1]})
        with pytest.raises(IncompleteLedgerError):
            simulate_walk(env, start=1, horizon=5)

    def test_reseed_fills_missing_uniforms(self, streams):
        sites = {x: SiteEnv.of(0.5, 0) for x in range(-20, 21)}
        env = CookieEnvironment.frozen(sites)
        env.reseed(streams.generator(0, Lane.DECISION))
        path = simulate_walk(env, horizon=15)
        assert path.steps == 15

    def test_nearest_neighbor_steps(self, streams, bounded_cookie_spec):
        path = simulate_walk(CookieEnvironment(bounded_cookie_spec, streams, 1), horizon=2000)
        assert set(np.unique(path.decisions).tolist()) <= {-1, 1}
        assert sum(path.visit_counts.values()) == 2000

    def test_same_walk_id_same_path(self, bounded_cookie_spec):
        a = simulate_walk(CookieEnvironment(bounded_cookie_spec, StreamFactory(9), 3), horizon=500)
        b = simulate_walk(CookieEnvironment(bounded_cookie_spec, StreamFactory(9), 3), horizon=500)
        np.testing.assert_array_equal(a.positions, b.positions)

    def test_fresh_cookies_push_right(self, streams):
        spec = fixed_p_spec(0.5, ConstantMLaw(value=2), classical_mode=True)
        path = right_excursion(CookieEnvironment(spec, streams, 0), horizon=200)
        assert path.status == "horizon"
        assert path.positions[-1] > 0

    def test_log_domain_cookies_refuse_coupling(self, streams):
        spec = EnvironmentSpec(p_law=TwoPointPLaw(a=0.4), m_law=ConstantMLaw(value=1000), exact_threshold=100)
        with pytest.raises(DomainError):
            right_excursion(CookieEnvironment(spec, streams, 0), horizon=50, coupling=True)
        summary = run_excursion(spec, streams, 0, 50, coupling=True)
        assert not summary.coupled and not summary.returned


class TestExcursionCounts:
    def test_first_passage(self):
        path = path_of(0, 1, 2, 1, 0)
        assert first_passage(path, 2) == 2
        assert first_passage(path, 0) == 4
        assert first_passage(path, 3) is None

    def test_upcrossings(self):
        assert upcrossing_counts(path_of(0, 1, 2, 1, 2, 1, 0)) == [1, 2, 0]
        assert upcrossing_counts(path_of(0, 1, 0)) == [1, 0]

    @pytest.mark.parametrize("positions", [(0, -1, 0), (0, 1, 0, 1, 0), (0, 1, 2), (1, 2, 1)])
    def test_not_an_excursion(self, positions):
        with pytest.raises(NotAnExcursionError):
            upcrossing_counts(path_of(*positions))

    def test_incomplete_excursion(self):
        assert upcrossing_counts(path_of(0, 1, 2, 1), incomplete=True) == [1, 1, 0]

    def test_rows(self):
        assert excursion_rows(7, path_of(0, 1, 0)) == [(7, 0, 0), (7, 1, 1), (7, 2, 0)]


class TestCoupling:
    def test_hand_traced_ledger(self, traced_env):
        path = right_excursion(traced_env)
        assert path.ledger.complete
        assert path.ledger.successes(1) == [True, True, False]
        assert branching_from_ledger(path.ledger, traced_env) == [1, 2, 0]
        assert upcrossing_counts(path) == [1, 2, 0]

    def test_cookies_enter_as_immigrants(self):
        env = CookieEnvironment.frozen(
            {1: SiteEnv.of(0.5, 1), 2: SiteEnv.of(0.5, 0)}, {1: [0.7, 0.8], 2: [0.9]},
        )
        path = right_excursion(env)
        assert path.positions.tolist() == [0, 1, 2, 1, 0]
        assert branching_from_ledger(path.ledger, env) == upcrossing_counts(path) == [1, 1, 0]

    def test_truncated_ledger(self):
        env = CookieEnvironment.frozen(
            {x: SiteEnv.of(0.5, 0) for x in (1, 2, 3)}, {1: [0.1], 2: [0.1], 3: [0.1]},
        )
        path = right_excursion(env, horizon=3)
        assert path.status == "horizon"
        assert not path.ledger.complete
        with pytest.raises(IncompleteLedgerError):
            branching_from_ledger(path.ledger, env)

    def test_every_returned_excursion_agrees(self, streams, bounded_cookie_spec):
        report = classify_right_recurrence(bounded_cookie_spec, 500, [100, 10_000], streams)
        assert report.coupled_excursions == report.returned[-1].hits
        assert report.exact_agreements == report.coupled_excursions
        assert report.coupled_excursions > 450
        for walk, branching in zip(report.returned, report.branching_hit_zero):
            assert branching.hits == walk.hits

    def test_branching_length_matches_walk_length(self, streams, bounded_cookie_spec):
        summaries = [run_excursion(bounded_cookie_spec, streams, i, 10_000) for i in range(80)]
        coupled = [s for s in summaries if s.coupled]
        assert coupled
        assert all(s.branching_steps == s.steps for s in coupled)
        assert all(s.branching_steps is None for s in summaries if not s.coupled)

    def test_branching_fraction_reads_the_coupled_sequence(self):
        summaries = [
            ExcursionSummary(i, 10, True, False, coupled=True, agrees=True, extinct_at=20, branching_steps=40)
            for i in range(5)
        ]
        report = summarize_right_recurrence(summaries, [10, 40])
        assert [s.hits for s in report.returned] == [5, 5]
        assert [s.hits for s in report.branching_hit_zero] == [0, 5]

    def test_heavy_tail_coupling(self, streams, heavy_spec):
        report = classify_right_recurrence(heavy_spec(3.0), 300, [1000], streams)
        assert report.exact_agreements == report.coupled_excursions

    def test_summary_is_order_independent(self, streams, bounded_cookie_spec):
        summaries = [run_excursion(bounded_cookie_spec, streams, i, 1000) for i in range(60)]
        forward = summarize_right_recurrence(summaries, [10, 1000])
        backward = summarize_right_recurrence(list(reversed(summaries)), [1000, 10])
        assert forward == backward

    def test_uncoupled_report(self, streams, bounded_cookie_spec):
        report = classify_right_recurrence(bounded_cookie_spec, 50, [100], streams, coupling=False)
        assert report.branching_hit_zero is None
        assert report.coupled_excursions == 0


class TestClassicalCookieWalk:
    def test_return_contrast(self):
        streams = StreamFactory(2024)
        few = fixed_p_spec(0.5, FiniteMLaw(values=[0, 1], weights=[0.5, 0.5]), classical_mode=True)
        many = fixed_p_spec(0.5, ConstantMLaw(value=2), classical_mode=True)
        recurrent = classify_right_recurrence(few, 300, [2000], streams)
        transient = classify_right_recurrence(many, 300, [2000], streams)
        assert transient.returned[0].hits == 0
        assert recurrent.returned[0].fraction > 0.4
        _, pvalue = compare_proportions(recurrent.returned[0].hits, 300, transient.returned[0].hits, 300)
        assert pvalue < 1e-6
