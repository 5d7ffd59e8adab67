"""Environment validation node."""

from typing import Any, Dict

from core.errors import SpecViolationError
from core.state import ExperimentState
from tools.env import validate_spec

from .base import BaseNode


class ValidationNode(BaseNode):
    """Checks the environment assumptions before anything is simulated.

    ``validate`` runs fail on a violation. Every other kind proceeds and
    carries the violations as warnings, so a classical walk with M = 2
    everywhere can still be simulated.
    """

    def __init__(self):
        super().__init__("validation")

    def execute(self, state: ExperimentState) -> Dict[str, Any]:
        config = state["config"]
        spec = config.environment
        if spec is None:
            return {"summary": {"validation": None}}

        report = validate_spec(
            spec,
            deltas=config.classify.delta_grid,
            tolerance=state["settings"].criticality_tolerance,
        )
        result: Dict[str, Any] = {
            "validation": report,
            "summary": {"validation": report.model_dump(mode="json")},
        }

        if report.ok:
            self.logger.info("Environment satisfies every assumption")
            return result

        if config.experiment.kind == "validate":
            error = SpecViolationError(
                f"environment violates {', '.join(v.split(':')[0] for v in report.violations)}",
                report.violations,
            )
            return {**self.handle_error(error), **result}
        result["warnings"] = list(report.violations)
        self.logger.warning(f"Proceeding despite violations: {report.violations}")
        return result
