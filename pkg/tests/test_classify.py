"""Tests for analytic criteria, empirical statistics and the series probe."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from core.errors import InsufficientReplicasError
from schemas.models import ConstantMLaw, EnvironmentSpec, FiniteMLaw, TwoPointPLaw
from tools.branching import simulate_batch
from tools.classify import (
    PathOutcome,
    classical_erw_oracle,
    compare_proportions,
    constant_log_law,
    empirical_classify,
    evaluate_criteria,
    heavy_tail_specs,
    log_pareto_law,
    outcomes_from_batch,
    series_moment_probe,
    wilson_interval,
)
from tools.env import fixed_p_spec
from tools.streams import Lane
from tools.walk import CookieEnvironment, simulate_walk


def passed(verdict, criterion):
    return all(c.passed for c in verdict.checked_conditions if c.criterion == criterion)


class TestEvaluateCriteria:
    def test_light_tail_is_recurrent(self, heavy_spec):
        verdict = evaluate_criteria(heavy_spec(3.0))
        assert verdict.regime == "critical"
        assert verdict.verdict == "recurrent-by-Thm3"
        assert passed(verdict, "recurrence")

    def test_heavy_tail_is_transient(self, heavy_spec):
        verdict = evaluate_criteria(heavy_spec(1.0))
        assert verdict.verdict == "transient-by-Thm4"
        assert not passed(verdict, "recurrence")

    def test_boundary_exponent_is_inconclusive(self, heavy_spec):
        verdict = evaluate_criteria(heavy_spec(2.0))
        assert verdict.verdict == "inconclusive"
        assert any("between both criteria" in note for note in verdict.notes)

    def test_epsilon_shrinks_below_tail_gap(self, heavy_spec):
        verdict = evaluate_criteria(heavy_spec(2.05), epsilon=0.1)
        assert verdict.verdict == "recurrent-by-Thm3"
        moment = next(c for c in verdict.checked_conditions if c.condition.startswith("E[(log_+ M)"))
        assert moment.quantity == pytest.approx(2.025)
        assert "configured 0.1" in moment.detail

    def test_configured_epsilon_is_kept_when_it_fits(self, heavy_spec):
        verdict = evaluate_criteria(heavy_spec(3.0), epsilon=0.1)
        moment = next(c for c in verdict.checked_conditions if c.condition.startswith("E[(log_+ M)"))
        assert moment.quantity == pytest.approx(2.1)
        assert moment.detail == "epsilon = 0.1"

    def test_lambda_probe(self, heavy_spec):
        assert evaluate_criteria(heavy_spec(1.0), lambda_probe=1.5).verdict == "transient-by-Thm4"
        assert evaluate_criteria(heavy_spec(1.0), lambda_probe=0.5).verdict == "inconclusive"

    def test_no_immigration_is_recurrent(self, coin):
        verdict = evaluate_criteria(coin)
        assert verdict.verdict == "recurrent-by-Thm3"

    def test_subcritical_is_positive_recurrent(self, bounded_cookie_spec):
        verdict = evaluate_criteria(bounded_cookie_spec)
        assert verdict.regime == "subcritical"
        assert verdict.verdict == "positive-recurrent-by-Lemma1"
        assert passed(verdict, "positive-recurrence")

    def test_supercritical_is_inconclusive(self):
        verdict = evaluate_criteria(fixed_p_spec(2.0 / 3.0, FiniteMLaw(values=[0, 1], weights=[0.5, 0.5])))
        assert verdict.regime == "supercritical"
        assert verdict.verdict == "inconclusive"

    def test_invalid_spec(self):
        spec = EnvironmentSpec(p_law=TwoPointPLaw(a=1.0 / 3.0), m_law=ConstantMLaw(value=2))
        verdict = evaluate_criteria(spec)
        assert verdict.regime == "invalid"
        assert verdict.verdict == "inconclusive"
        assert verdict.notes[0].startswith("violated assumption A.4")

    def test_classical_mode_defers_to_mean_rule(self):
        spec = fixed_p_spec(0.5, FiniteMLaw(values=[0, 1], weights=[0.5, 0.5]), classical_mode=True)
        verdict = evaluate_criteria(spec)
        assert verdict.verdict == "inconclusive"
        assert "recurrent" in verdict.notes[0]

    @settings(max_examples=60, deadline=None)
    @given(st.floats(min_value=0.05, max_value=10.0), st.floats(min_value=0.05, max_value=0.45))
    def test_criteria_are_exclusive(self, lam, a):
        (spec,) = heavy_tail_specs([lam], a)
        verdict = evaluate_criteria(spec)
        assert not (passed(verdict, "recurrence") and passed(verdict, "transience"))
        if lam > 2.001:
            assert verdict.verdict == "recurrent-by-Thm3"
        elif lam < 2.0:
            assert verdict.verdict == "transient-by-Thm4"


class TestClassicalOracle:
    @pytest.mark.parametrize("mean,expected", [(0.5, "recurrent"), (1.0, "recurrent"), (2.0, "transient")])
    def test_threshold(self, mean, expected):
        assert classical_erw_oracle(mean) == expected

    def test_negative_mean(self):
        with pytest.raises(ValueError):
            classical_erw_oracle(-0.1)


class TestStatistics:
    def test_wilson_interval(self):
        low, high = wilson_interval(50, 100)
        assert low < 0.5 < high
        assert low == pytest.approx(1.0 - high)
        assert wilson_interval(0, 10)[0] == 0.0
        assert wilson_interval(10, 10)[1] == 1.0

    def test_wilson_needs_trials(self):
        with pytest.raises(InsufficientReplicasError):
            wilson_interval(0, 0)

    def test_compare_proportions(self):
        z, pvalue = compare_proportions(60, 100, 40, 100)
        assert z > 0 and pvalue < 0.01
        assert compare_proportions(30, 100, 30, 100) == (0.0, 0.5)
        assert compare_proportions(0, 10, 0, 10) == (0.0, 1.0)


class TestEmpiricalClassify:
    def test_needs_thirty_paths(self):
        with pytest.raises(InsufficientReplicasError):
            empirical_classify([PathOutcome(1)] * 29, [10])

    def test_verdicts_outside_the_band(self):
        assert empirical_classify([PathOutcome(1)] * 100, [10, 100]).verdict == "recurrent"
        assert empirical_classify([PathOutcome(None)] * 100, [10, 100]).verdict == "transient"

    def test_abstains_inside_the_band(self):
        outcomes = [PathOutcome(5)] * 50 + [PathOutcome(None)] * 50
        report = empirical_classify(outcomes, [100], seeds=[3])
        assert report.verdict == "abstain"
        assert report.seeds == [3]

    def test_trend_follows_late_returns(self):
        outcomes = [PathOutcome(500)] * 60 + [PathOutcome(5)] * 20 + [PathOutcome(None)] * 20
        report = empirical_classify(outcomes, [10, 1000])
        assert [r.hits for r in report.return_fractions] == [20, 80]
        assert report.trend_slope > 0 and report.trend_z > 0

    def test_growth_exceedance(self):
        outcomes = [PathOutcome(None, {4: 3.0})] * 40 + [PathOutcome(None, {4: 1.0})] * 40
        report = empirical_classify(outcomes, [4])
        assert report.growth_exceedance[0].hits == 40

    def test_no_immigration_is_degenerate(self, streams, coin):
        batch = simulate_batch(coin, 100, 40, streams)
        report = empirical_classify(outcomes_from_batch(batch, [10, 100]), [10, 100])
        assert report.degenerate
        assert report.verdict == "recurrent"

    def test_walk_paths(self, streams, bounded_cookie_spec):
        paths = [simulate_walk(CookieEnvironment(bounded_cookie_spec, streams, i), horizon=200) for i in range(40)]
        report = empirical_classify(paths, [200], kind="walk")
        assert report.kind == "walk"
        assert not report.growth_exceedance


class TestSeriesProbe:
    def test_bounded_terms_converge(self, streams):
        report = series_moment_probe(2, 0.5, 1.0, constant_log_law(), 60, 5, streams.generator(0, Lane.PROBE))
        assert report.stages == [60, 120, 240]
        assert report.partial_sums[0] == pytest.approx(4.0, rel=1e-12)
        assert math.exp(report.median_tail_increments[0]) < 1e-6
        assert report.diverging_fraction == 0.0

    def test_infinite_moment_diverges(self, streams):
        report = series_moment_probe(2, 0.5, 1.0, log_pareto_law(1.0), 200, 50, streams.generator(1, Lane.PROBE))
        assert report.diverging_fraction > 0.9
        assert np.isfinite(report.median_log_partial_sums).all()

    @pytest.mark.parametrize("d,a,c", [(0, 0.5, 1.0), (2, 1.0, 1.0), (2, 0.5, 0.0)])
    def test_rejects_bad_arguments(self, streams, d, a, c):
        with pytest.raises(ValueError):
            series_moment_probe(d, a, c, constant_log_law(), 10, 2, streams.generator(2, Lane.PROBE))
