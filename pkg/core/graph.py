"""Experiment orchestration as a LangGraph state machine."""

from typing import Any, Dict, Optional

from langgraph.graph import END, StateGraph

from schemas.models import ExperimentConfig
from utils.logging import get_logger, setup_logging

from .config import LabSettings
from .state import ExperimentState, create_initial_state

# experiment kind -> graph node
KIND_NODES: Dict[str, str] = {
    "validate": "output",
    "bpire": "bpire",
    "walk": "walk",
    "couple": "couple",
    "ladder": "ladder",
    "ar": "ar",
    "classify": "classification",
    "reproduce-example": "example",
}


class ExperimentGraph:
    """Runs one experiment: validation, the kind's node, then the artifact writer.

    A failing node sets a nonzero exit code; the writer still runs and
    marks the manifest incomplete.
    """

    def __init__(self, settings: Optional[LabSettings] = None, configure_logging: bool = True):
        """Initialize the experiment graph.

        Args:
            settings: Process-wide defaults. If None, loaded from the environment.
            configure_logging: Install the log handler for ``settings.log_level``
        """
        self.settings = settings or LabSettings()
        self.logger = get_logger("experiment_graph")

        if configure_logging:
            setup_logging(self.settings.log_level, include_process=self.settings.workers > 1)

        self._create_nodes()
        self.graph = self._build_graph()
        self.logger.debug("Experiment graph initialized")

    def _create_nodes(self):
        """Create and initialize node instances."""
        # Import node classes here to avoid circular imports
        from nodes.classification import ClassificationNode, ExampleNode
        from nodes.output import OutputNode
        from nodes.simulation import BranchingNode, LadderNode, RecursionNode, WalkNode
        from nodes.validation import ValidationNode

        self.nodes = {
            "validation": ValidationNode(),
            "bpire": BranchingNode(),
            "walk": WalkNode(coupling=False),
            "couple": WalkNode(coupling=True),
            "ladder": LadderNode(),
            "ar": RecursionNode(),
            "classification": ClassificationNode(),
            "example": ExampleNode(),
            "output": OutputNode(),
        }

    @staticmethod
    def _route(state: ExperimentState) -> str:
        if state.get("exit_code", 0) != 0:
            return "output"
        return KIND_NODES[state["config"].experiment.kind]

    def _build_graph(self):
        """Build the LangGraph execution graph.

        Returns:
            Compiled StateGraph instance
        """
        builder = StateGraph(ExperimentState)
        for name, node in self.nodes.items():
            builder.add_node(name, node)

        builder.set_entry_point("validation")
        targets = sorted(set(KIND_NODES.values()))
        builder.add_conditional_edges("validation", self._route, {t: t for t in targets})
        for name in targets:
            if name != "output":
                builder.add_edge(name, "output")
        builder.add_edge("output", END)

        return builder.compile()

    def invoke(self, config: ExperimentConfig) -> Dict[str, Any]:
        """Execute the graph for one config.

        Args:
            config: Validated experiment config

        Returns:
            Final experiment state
        """
        run = config.experiment
        self.logger.info(f"Starting {run.kind} experiment (seed {run.seed}, replicas {run.replicas})")
        result = self.graph.invoke(create_initial_state(config, self.settings))
        status = "completed" if result.get("exit_code", 0) == 0 else f"failed with exit code {result['exit_code']}"
        self.logger.info(f"Experiment {status}")
        return result

    def __call__(self, config: ExperimentConfig) -> Dict[str, Any]:
        return self.invoke(config)


def run(config: ExperimentConfig, settings: Optional[LabSettings] = None) -> int:
    """Run an experiment and return its process exit status."""
    return int(ExperimentGraph(settings).invoke(config).get("exit_code", 0))
