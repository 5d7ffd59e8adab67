"""Tests for the random difference equation and its dual."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from core.errors import DomainError
from schemas.models import ConstantMLaw, FiniteMLaw
from tools.branching import GenEnv, OffspringLaw, conditional_mean_path, simulate_batch
from tools.classify import compare_proportions, ks_two_sample
from tools.env import coin_spec
from tools.recursion import ar_step, dual_w, expanded_x, growth_event_frequency, log_ar_step, simulate_ar
from tools.streams import Lane, StreamFactory

finite = st.floats(min_value=0.0, max_value=1e6, allow_nan=False)


class TestArStep:
    def test_values(self):
        assert ar_step(3.0, 2.0, 1.0) == 7.0
        assert ar_step(0.0, 5.0, 2.5) == 2.5

    def test_log_domain(self):
        assert log_ar_step(700.0, math.log(2.0), 0.0) == pytest.approx(700.0 + math.log(2.0), abs=1e-12)
        assert log_ar_step(-math.inf, 0.3, math.log(4.0)) == pytest.approx(math.log(4.0))

    def test_domain(self):
        with pytest.raises(DomainError):
            ar_step(-1.0, 1.0, 0.0)
        with pytest.raises(DomainError):
            ar_step(1.0, 0.0, 0.0)

    @given(finite, finite, st.floats(min_value=1e-3, max_value=1e3), finite)
    def test_monotone_in_x(self, x, y, mu, m):
        lo, hi = min(x, y), max(x, y)
        assert ar_step(lo, mu, m) <= ar_step(hi, mu, m)


class TestDual:
    def test_single_step(self):
        log_mu = np.array([0.7])
        log_m = np.array([math.log(3.0)])
        assert dual_w(log_mu, log_m, 1) == pytest.approx(math.log(3.0))
        assert expanded_x(log_mu, log_m, 1) == pytest.approx(math.log(3.0))

    def test_unit_means_collapse_weights(self):
        log_m = np.log(np.array([1.0, 4.0, 2.0, 5.0]))
        log_mu = np.zeros(4)
        assert dual_w(log_mu, log_m, 4) == pytest.approx(math.log(12.0))
        assert expanded_x(log_mu, log_m, 4) == pytest.approx(math.log(12.0))

    def test_reversed_environment_maps_x_to_w(self, streams):
        rng = streams.generator(0, Lane.RECURSION)
        log_mu = rng.normal(size=(12, 5))
        log_m = np.log(rng.integers(0, 5, size=(12, 5)).astype(float))
        for n in (1, 2, 6, 12):
            np.testing.assert_allclose(
                expanded_x(log_mu[:n][::-1], log_m[:n][::-1], n), dual_w(log_mu, log_m, n), rtol=1e-12
            )

    def test_needs_enough_environments(self):
        with pytest.raises(DomainError):
            dual_w(np.zeros(2), np.zeros(2), 3)

    def test_iteration_equals_expansion(self, streams):
        spec = coin_spec(FiniteMLaw(values=[0, 1, 3], weights=[0.5, 0.25, 0.25]))
        paths = simulate_ar(spec, 40, 200, streams.generator(1, Lane.RECURSION), keep_envs=True)
        for n in (1, 10, 40):
            iterated = paths.at(n)
            expanded = expanded_x(paths.log_mu, paths.log_m, n)
            finite_mask = np.isfinite(iterated)
            np.testing.assert_array_equal(finite_mask, np.isfinite(expanded))
            np.testing.assert_allclose(np.exp(iterated[finite_mask]), np.exp(expanded[finite_mask]), rtol=1e-9)

    def test_monotone_coupling_in_immigrants(self, streams):
        low = simulate_ar(coin_spec(ConstantMLaw(value=1)), 60, 50, streams.generator(2, Lane.RECURSION))
        high = simulate_ar(coin_spec(ConstantMLaw(value=3)), 60, 50, streams.generator(2, Lane.RECURSION))
        assert (high.log_x >= low.log_x - 1e-12).all()

    def test_matches_branching_conditional_mean(self):
        mus = [2.0, 0.5, 0.5, 2.0, 2.0]
        ms = [1, 0, 3, 2, 0]
        envs = [GenEnv.of(OffspringLaw.geometric(mu / (1.0 + mu)), m) for mu, m in zip(mus, ms)]
        means = conditional_mean_path(envs)
        log_x = -math.inf
        for n, (mu, m) in enumerate(zip(mus, ms), start=1):
            log_x = log_ar_step(log_x, math.log(mu), math.log(m) if m else -math.inf)
            assert math.exp(log_x) == pytest.approx(means[n], rel=1e-9)

    @pytest.mark.parametrize("n", [2, 5, 10])
    def test_exchangeability(self, heavy_spec, n):
        spec = heavy_spec(1.0)
        streams = StreamFactory(31)
        paths = simulate_ar(spec, n, 40_000, streams.generator(n, Lane.RECURSION), keep_envs=True)
        other = simulate_ar(spec, n, 40_000, streams.generator(100 + n, Lane.RECURSION), keep_envs=True)
        x_n = paths.at(n)
        w_n = dual_w(other.log_mu, other.log_m, n)
        _, pvalue = ks_two_sample(x_n, w_n)
        assert pvalue > 0.01


class TestGrowthEvents:
    def test_no_immigration_never_grows(self, streams, coin):
        statistics = growth_event_frequency(coin, [10, 100], 200, streams, chunk_size=100)
        assert [s.hits for s in statistics] == [0, 0]

    def test_bpire_process_and_worker_invariance(self, heavy_spec):
        spec = heavy_spec(1.0)
        inline = growth_event_frequency(spec, [20, 50], 400, StreamFactory(3), process="bpire", chunk_size=100)
        pooled = growth_event_frequency(spec, [20, 50], 400, StreamFactory(3), process="bpire", chunk_size=100, workers=2)
        assert inline == pooled

    @pytest.mark.slow
    def test_heavier_tail_grows_more_often(self, heavy_spec):
        streams = StreamFactory(17)
        light = growth_event_frequency(heavy_spec(3.0), [100, 10_000], 1000, streams, chunk_size=250)
        heavy = growth_event_frequency(heavy_spec(1.0), [100, 10_000], 1000, streams, chunk_size=250)
        assert heavy[1].fraction > heavy[0].fraction
        _, pvalue = compare_proportions(heavy[1].hits, 1000, light[1].hits, 1000)
        assert pvalue < 0.01

    @pytest.mark.slow
    def test_lighter_tail_hits_zero_more_often(self, heavy_spec):
        horizon, size = 1000, 1000
        light = simulate_batch(heavy_spec(3.0), horizon, size, StreamFactory(23), streaming=True)
        heavy = simulate_batch(heavy_spec(1.0), horizon, size, StreamFactory(23), streaming=True)
        light_hits = int(light.hit_zero_by(horizon).sum())
        heavy_hits = int(heavy.hit_zero_by(horizon).sum())
        assert light_hits > heavy_hits
        _, pvalue = compare_proportions(light_hits, size, heavy_hits, size)
        assert pvalue < 0.01
