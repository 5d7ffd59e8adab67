"""Tests for offspring laws, the BPIRE simulator and the exact enumeration oracle."""

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from core.errors import DomainError, ResourceLimitError
from schemas.models import ConstantMLaw, FiniteMLaw, FinitePLaw, EnvironmentSpec
from tools.branching import (
    GenEnv,
    OffspringLaw,
    backward_batch,
    backward_process,
    classify_regime,
    conditional_mean_path,
    empirical_profile,
    immigrant_line,
    law_mean,
    law_variance,
    naive_offspring_sum,
    offspring_sum,
    pgf_eval,
    regenerate_generation,
    simulate,
    simulate_batch,
    stationary_profile,
    step,
    sum_representation,
    total_variation,
)
from tools.classify import ks_two_sample
from tools.enumeration import annealed_distribution, line_distribution, recursion_distribution, sum_form_distribution
from tools.env import fixed_p_spec
from tools.population import Population
from tools.streams import Lane


def small_envs():
    """Generations 1..3 with bernoulli laws and M in {0, 1}."""
    return [
        GenEnv.of(OffspringLaw.bernoulli(0.5), 1),
        GenEnv.of(OffspringLaw.bernoulli(0.75), 0),
        GenEnv.of(OffspringLaw.bernoulli(0.25), 1),
    ]


class TestOffspringLaw:
    @pytest.mark.parametrize("law,mean", [
        (OffspringLaw.geometric(0.5), 1.0),
        (OffspringLaw.geometric(2.0 / 3.0), 2.0),
        (OffspringLaw.bernoulli(0.3), 0.3),
    ])
    def test_mean(self, law, mean):
        assert law_mean(law) == pytest.approx(mean)

    @pytest.mark.parametrize("law,variance", [
        (OffspringLaw.geometric(0.5), 2.0),
        (OffspringLaw.bernoulli(0.3), 0.21),
        (OffspringLaw.from_table({1: 1.0}), 0.0),
    ])
    def test_variance(self, law, variance):
        assert law_variance(law) == pytest.approx(variance)

    def test_pgf_values(self):
        assert pgf_eval(OffspringLaw.geometric(0.5), 0.0) == pytest.approx(0.5)
        assert pgf_eval(OffspringLaw.bernoulli(0.3), 0.4) == pytest.approx(0.7 + 0.3 * 0.4)
        for law in (OffspringLaw.geometric(0.8), OffspringLaw.bernoulli(0.1), OffspringLaw.from_table({0: 0.2, 3: 0.8})):
            assert pgf_eval(law, 1.0) == pytest.approx(1.0)

    @pytest.mark.parametrize("s", [-0.01, 1.01])
    def test_pgf_domain(self, s):
        with pytest.raises(DomainError):
            pgf_eval(OffspringLaw.geometric(0.5), s)

    def test_invalid_parameters(self):
        with pytest.raises(DomainError):
            OffspringLaw.geometric(1.0)
        with pytest.raises(DomainError):
            OffspringLaw.from_table({0: 0.5, 1: 0.4})

    @given(
        st.floats(min_value=0.01, max_value=0.99),
        st.floats(min_value=0.0, max_value=1.0),
        st.floats(min_value=0.0, max_value=1.0),
    )
    def test_pgf_monotone_and_convex(self, p, s, t):
        law = OffspringLaw.geometric(p)
        lo, hi = min(s, t), max(s, t)
        assert law.pgf(lo) <= law.pgf(hi) + 1e-12
        assert law.pgf(0.5 * (lo + hi)) <= 0.5 * (law.pgf(lo) + law.pgf(hi)) + 1e-12


class TestOffspringSum:
    def test_empty_sum(self, streams):
        rng = streams.generator(0, Lane.OFFSPRING)
        for law in (OffspringLaw.geometric(0.5), OffspringLaw.bernoulli(0.5), OffspringLaw.from_table({2: 1.0})):
            assert offspring_sum(law, Population.of(0), rng).exact == 0

    def test_bernoulli_pair(self, streams, within_sigma):
        rng = streams.generator(0, Lane.OFFSPRING)
        n = 50_000
        draws = np.array([offspring_sum(OffspringLaw.bernoulli(0.5), Population.of(2), rng).exact for _ in range(n)])
        for value, p in ((0, 0.25), (1, 0.5), (2, 0.25)):
            assert within_sigma(int((draws == value).sum()), n, p, k=5.0)

    def test_geometric_large_parent_count(self, streams):
        rng = streams.generator(1, Lane.OFFSPRING)
        k, n = 10_000, 2_000
        draws = np.array([offspring_sum(OffspringLaw.geometric(0.5), Population.of(k), rng).exact for _ in range(n)])
        standard_error = np.sqrt(2.0 * k / n)
        assert abs(draws.mean() - k) <= 4.0 * standard_error

    @pytest.mark.parametrize("p", [0.3, 0.5, 0.7])
    def test_shortcut_matches_naive_summation(self, streams, p):
        law = OffspringLaw.geometric(p)
        rng = streams.generator(int(p * 10), Lane.PROBE)
        shortcut = [offspring_sum(law, Population.of(20), rng).exact for _ in range(20_000)]
        naive = [naive_offspring_sum(law, 20, rng) for _ in range(20_000)]
        _, pvalue = ks_two_sample(shortcut, naive)
        assert pvalue > 0.01

    def test_log_domain_parents_are_flagged(self, streams):
        result = offspring_sum(OffspringLaw.geometric(0.5), Population(None, 500.0), streams.generator(0, Lane.OFFSPRING))
        assert result.is_log and result.approximate
        assert result.log_value == pytest.approx(500.0, abs=1e-6)


class TestStep:
    def test_absorbing_without_immigrants(self, streams):
        gen = GenEnv.of(OffspringLaw.geometric(0.5), 0)
        assert step(Population.of(0), gen, streams.generator(0, Lane.OFFSPRING)).exact == 0

    def test_bernoulli_with_immigrant(self, streams, within_sigma):
        rng = streams.generator(2, Lane.OFFSPRING)
        gen = GenEnv.of(OffspringLaw.bernoulli(0.5), 1)
        n = 50_000
        draws = np.array([step(Population.of(2), gen, rng).exact for _ in range(n)])
        assert set(np.unique(draws)) == {1, 2, 3}
        for value, p in ((1, 0.25), (2, 0.5), (3, 0.25)):
            assert within_sigma(int((draws == value).sum()), n, p, k=5.0)

    def test_conditional_mean(self, streams):
        rng = streams.generator(3, Lane.OFFSPRING)
        gen = GenEnv.of(OffspringLaw.geometric(0.5), 3)
        n = 20_000
        draws = np.array([step(Population.of(5), gen, rng).exact for _ in range(n)])
        assert abs(draws.mean() - 8.0) <= 4.0 * np.sqrt(5 * 2.0 / n)


class TestSimulate:
    def test_no_immigration_stays_at_zero(self, streams, coin):
        path = simulate(coin, 200, streams)
        assert (path.exact == 0).all()
        assert path.hit_zero_at == 1

    def test_deterministic_per_replica(self, streams, heavy_spec):
        spec = heavy_spec(1.0)
        a = simulate(spec, 300, streams, replica=4)
        b = simulate(spec, 300, streams, replica=4)
        np.testing.assert_array_equal(a.exact, b.exact)
        np.testing.assert_array_equal(a.log_value, b.log_value)
        other = simulate(spec, 300, streams, replica=5)
        assert not np.array_equal(a.env_p, other.env_p)

    def test_one_ancestor_mode(self, streams, coin):
        path = simulate(coin, 10, streams, mode="one_ancestor")
        assert path.exact[0] == 1

    def test_regeneration_reproduces_every_generation(self, streams, heavy_spec):
        path = simulate(heavy_spec(3.0), 150, streams, replica=2)
        for n in range(1, path.horizon + 1):
            assert regenerate_generation(path, n, streams) == path.population(n)

    def test_memory_budget(self, streams, coin):
        with pytest.raises(ResourceLimitError):
            simulate_batch(coin, 1000, 100, streams, max_path_cells=10_000)
        batch = simulate_batch(coin, 1000, 100, streams, streaming=True, max_path_cells=10_000)
        assert list(batch.generations) == [1000]

    def test_streaming_keeps_checkpoints_identical(self, streams, heavy_spec):
        spec = heavy_spec(1.0)
        full = simulate_batch(spec, 100, 40, streams, chunk=3)
        light = simulate_batch(spec, 100, 40, streams, chunk=3, checkpoints=[10, 50], streaming=True)
        for n in (10, 50, 100):
            np.testing.assert_array_equal(full.at(n)[0], light.at(n)[0])
        np.testing.assert_array_equal(full.hit_zero_at, light.hit_zero_at)

    def test_subcritical_two_step_law_matches_enumeration(self, streams, subcritical_spec, within_sigma):
        n = 200_000
        batch = simulate_batch(subcritical_spec, 2, n, streams, streaming=True)
        oracle = annealed_distribution(subcritical_spec, 2)
        assert oracle.truncated < 1e-9
        hits = int((batch.at(2)[0] == 1).sum())
        assert within_sigma(hits, n, float(oracle[1]), k=5.0)

    def test_conditional_mean_path(self):
        envs = [GenEnv.of(OffspringLaw.geometric(2.0 / 3.0), 1), GenEnv.of(OffspringLaw.geometric(1.0 / 3.0), 2)]
        np.testing.assert_allclose(conditional_mean_path(envs), [0.0, 1.0, 2.5])
        np.testing.assert_allclose(conditional_mean_path(envs, "one_ancestor"), [1.0, 3.0, 3.5])

    @pytest.mark.slow
    def test_heavy_tail_lambda_one_grows(self, streams, heavy_spec):
        batch = simulate_batch(heavy_spec(1.0), 10_000, 1000, streams, streaming=True)
        assert (batch.at(10_000)[1] > 100).any()


class TestRegimes:
    def test_trichotomy(self, coin):
        assert classify_regime(coin) == "critical"
        assert classify_regime(fixed_p_spec(1.0 / 3.0, ConstantMLaw(value=1))) == "subcritical"
        assert classify_regime(fixed_p_spec(2.0 / 3.0, ConstantMLaw(value=1))) == "supercritical"


class TestImmigrantLines:
    def test_no_immigrants(self, streams):
        envs = {j: GenEnv.of(OffspringLaw.geometric(0.5), 0) for j in range(1, 6)}
        line = immigrant_line(1, 4, envs, streams.generator(0, Lane.LINES))
        assert [p.exact for p in line] == [0] * 5

    def test_deterministic_copy(self, streams):
        envs = {j: GenEnv.of(OffspringLaw.bernoulli(1.0), 1) for j in range(1, 6)}
        line = immigrant_line(1, 4, envs, streams.generator(0, Lane.LINES))
        assert [p.exact for p in line] == [1] * 5

    def test_sum_form_equals_recursion_exactly(self):
        envs = small_envs()
        keyed = {j: gen for j, gen in enumerate(envs, start=1)}
        for n in (1, 2, 3):
            recursion = recursion_distribution(envs, n)
            lines = sum_form_distribution(keyed, n)
            assert recursion.exact and lines.exact
            assert recursion.total() == Fraction(1)
            assert recursion.max_difference(lines) == 0.0

    def test_line_distribution_of_a_single_immigrant(self):
        keyed = {j: gen for j, gen in enumerate(small_envs(), start=1)}
        dist = line_distribution(1, 2, keyed)
        assert dist[1] == Fraction(3, 4) * Fraction(1, 4)

    def test_sampled_sum_form_matches_enumeration(self, streams, within_sigma):
        envs = small_envs()
        keyed = {j: gen for j, gen in enumerate(envs, start=1)}
        oracle = recursion_distribution(envs, 3)
        rng = streams.generator(0, Lane.LINES)
        n = 40_000
        draws = np.array([sum_representation(keyed, 3, rng).exact for _ in range(n)])
        for value, p in oracle.probs.items():
            assert within_sigma(int((draws == value).sum()), n, float(p), k=5.0)

    def test_geometric_enumeration_reports_truncation(self):
        envs = [GenEnv.of(OffspringLaw.geometric(0.5), 1), GenEnv.of(OffspringLaw.geometric(0.5), 1)]
        dist = recursion_distribution(envs, 2)
        assert not dist.exact
        assert abs(float(dist.total()) + dist.truncated - 1.0) < 1e-9


class TestBackwardProcess:
    def test_no_immigration(self, streams):
        spec = fixed_p_spec(1.0 / 3.0, ConstantMLaw(value=0))
        for k in (1, 5, 20):
            assert backward_process(k, spec, streams.generator(k, Lane.PROBE)).exact == 0

    def test_single_lookback_is_one_immigrant_line(self, streams, within_sigma):
        spec = fixed_p_spec(1.0 / 3.0, ConstantMLaw(value=1))
        n = 100_000
        exact, _ = backward_batch(1, spec, n, streams.generator(0, Lane.PROBE))
        # Z_1(-1): one immigrant, one geometric(1/3) generation
        assert within_sigma(int((exact == 0).sum()), n, 2.0 / 3.0, k=5.0)
        assert within_sigma(int((exact == 1).sum()), n, 2.0 / 9.0, k=5.0)

    def test_lookback_self_consistency(self, streams, subcritical_spec):
        n = 200_000
        near, _ = backward_batch(20, subcritical_spec, n, streams.generator(1, Lane.PROBE))
        far, _ = backward_batch(40, subcritical_spec, n, streams.generator(2, Lane.PROBE))
        assert total_variation(empirical_profile(near, 50), empirical_profile(far, 50)) < 0.01

    def test_warns_outside_subcritical(self, streams, coin, caplog):
        backward_batch(2, coin, 10, streams.generator(0, Lane.PROBE))
        assert "not subcritical" in caplog.text

    @pytest.mark.slow
    def test_forward_stationarity(self, streams, subcritical_spec):
        early = stationary_profile(subcritical_spec, 200, 100_000, streams, chunk_size=25_000)
        late = stationary_profile(subcritical_spec, 400, 100_000, streams, chunk_size=25_000)
        assert total_variation(early, late) < 0.01


class TestAnnealedEnumeration:
    def test_zero_cookie_mass_gives_point_mass(self):
        spec = EnvironmentSpec(p_law=FinitePLaw(values=[0.4, 0.6], weights=[0.5, 0.5]), m_law=ConstantMLaw(value=0))
        dist = annealed_distribution(spec, 3)
        assert dist.probs == {0: pytest.approx(1.0)}

    def test_rejects_unbounded_cookie_law(self, heavy_spec):
        with pytest.raises(ValueError):
            annealed_distribution(heavy_spec(1.0), 2)

    def test_mass_is_conserved(self):
        spec = EnvironmentSpec(
            p_law=FinitePLaw(values=[0.25, 0.75], weights=[0.5, 0.5]),
            m_law=FiniteMLaw(values=[0, 1], weights=[0.5, 0.5]),
        )
        dist = annealed_distribution(spec, 2)
        assert abs(sum(dist.probs.values()) + dist.truncated - 1.0) < 1e-9
