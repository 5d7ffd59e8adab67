"""Criterion evaluation nodes."""

from typing import Any, Dict, Optional

import pandas as pd

from core.state import ExperimentState
from schemas.models import CriterionVerdict, EmpiricalReport, EnvironmentSpec
from schemas.tables import TableSchemas
from tools.classify import evaluate_criteria
from tools.env import heavy_tail_example_spec

from .base import BaseNode
from .simulation import classify_batches, effective_spec, proportion_table, run_horizons, simulate_bpire


def concordance(verdict: CriterionVerdict, empirical: Optional[EmpiricalReport]) -> Optional[bool]:
    """Whether an analytic verdict and an empirical verdict point the same way.

    None when either side did not commit.
    """
    if empirical is None or empirical.verdict == "abstain":
        return None
    if verdict.verdict in ("recurrent-by-Thm3", "positive-recurrent-by-Lemma1"):
        return empirical.verdict == "recurrent"
    if verdict.verdict == "transient-by-Thm4":
        return empirical.verdict == "transient"
    return None


class ClassificationNode(BaseNode):
    """Analytic verdict plus an empirical BPIRE classification of the same spec."""

    def __init__(self, name: str = "classification"):
        super().__init__(name)

    def criteria(self, state: ExperimentState, spec: EnvironmentSpec) -> CriterionVerdict:
        section = state["config"].classify
        return evaluate_criteria(
            spec,
            epsilon=section.epsilon,
            delta_grid=section.delta_grid,
            lambda_probe=section.lambda_probe,
            tolerance=state["settings"].criticality_tolerance,
        )

    def empirical(self, state: ExperimentState, spec: EnvironmentSpec) -> Dict[str, Any]:
        horizons = run_horizons(state["config"])
        results = simulate_bpire(state, spec, horizons, streaming=True)
        classified = classify_batches(state, results, horizons)
        if "report" in classified:
            report = classified["report"]
            classified["tables"] = {
                "classify": proportion_table(report.return_fractions),
                "growth": proportion_table(report.growth_exceedance, TableSchemas.GROWTH),
            }
        return classified

    def summarize(self, state: ExperimentState, spec: EnvironmentSpec, simulate: bool) -> Dict[str, Any]:
        verdict = self.criteria(state, spec)
        self.logger.info(f"Analytic verdict: {verdict.verdict} ({verdict.regime})")
        summary: Dict[str, Any] = {
            "verdict": verdict.verdict,
            "regime": verdict.regime,
            "criteria": verdict.model_dump(mode="json"),
        }
        update: Dict[str, Any] = {"verdict": verdict, "tables": {}}
        if simulate:
            classified = self.empirical(state, spec)
            report = classified.get("report")
            update["warnings"] = classified.get("warnings", [])
            update["tables"] = classified.get("tables", {})
            if report is not None:
                summary["empirical"] = report.model_dump(mode="json")
                summary["concordant"] = concordance(verdict, report)
        conditions = pd.DataFrame(
            [(c.criterion, c.condition, int(c.passed), c.quantity) for c in verdict.checked_conditions],
            columns=list(TableSchemas.CONDITIONS.columns),
        )
        update["tables"]["conditions"] = conditions
        update["summary"] = summary
        return update

    def execute(self, state: ExperimentState) -> Dict[str, Any]:
        return self.summarize(state, effective_spec(state), simulate=True)


class ExampleNode(ClassificationNode):
    """Heavy-log-tailed immigration example: verdict for the configured lambda."""

    def __init__(self):
        super().__init__("example")

    def execute(self, state: ExperimentState) -> Dict[str, Any]:
        example = state["config"].example
        threshold = state["config"].experiment.exact_threshold or state["settings"].exact_threshold
        spec = heavy_tail_example_spec(example.lam, example.a, exact_threshold=threshold)
        update = self.summarize(state, spec, simulate=example.simulate)
        update["summary"] = {"lambda": example.lam, "a": example.a, **update["summary"]}
        return update
