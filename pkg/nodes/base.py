"""Shared behaviour of experiment graph nodes."""

from abc import ABC, abstractmethod
from typing import Any, ClassVar, Dict, Tuple

from core.errors import LabError
from core.state import ExperimentState
from utils.decorators import error_update, timed_node
from utils.logging import get_logger


class BaseNode(ABC):
    """One step of an experiment run.

    Subclasses implement ``execute`` and return a partial state update.
    Any exception becomes an ``errors`` entry plus the exit code it maps
    to (``LabError.exit_code`` or 1), so a failing step still lets the
    output node write an incomplete manifest. Every call, failed or not,
    appends the node name to ``execution_metadata.completed_nodes``.
    """

    requires: ClassVar[Tuple[str, ...]] = ("config", "settings")

    def __init__(self, name: str):
        self.name = name
        self.logger = get_logger(f"nodes.{name}")
        self._call = timed_node(name)(self._guarded)

    @abstractmethod
    def execute(self, state: ExperimentState) -> Dict[str, Any]:
        """Run the step and return the state update."""

    def missing_inputs(self, state: ExperimentState) -> Tuple[str, ...]:
        return tuple(key for key in self.requires if state.get(key) is None)

    def handle_error(self, error: Exception) -> Dict[str, Any]:
        return error_update(self.name, error)

    def _guarded(self, state: ExperimentState) -> Dict[str, Any]:
        missing = self.missing_inputs(state)
        if missing:
            result = self.handle_error(LabError(f"state is missing {', '.join(missing)}"))
        else:
            run = state["config"].experiment
            self.logger.info(f"{self.name}: kind={run.kind} seed={run.seed}")
            try:
                result = self.execute(state)
            except Exception as e:
                result = self.handle_error(e)
            if result.get("errors"):
                self.logger.warning(f"{self.name} finished with {len(result['errors'])} error(s)")

        done = state.get("execution_metadata", {}).get("completed_nodes", [])
        result.setdefault("execution_metadata", {})["completed_nodes"] = [*done, self.name]
        return result

    def __call__(self, state: ExperimentState) -> Dict[str, Any]:
        return self._call(state)
