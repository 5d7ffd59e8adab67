"""State management for experiment graph execution."""

from datetime import datetime, timezone
from operator import add
from typing import Annotated, Any, Dict, List, Optional, TypedDict

from pydantic import BaseModel, Field

from core.config import LabSettings
from schemas.models import CriterionVerdict, ExperimentConfig, ValidationReport


def merge_dicts(left: Dict[str, Any], right: Dict[str, Any]) -> Dict[str, Any]:
    """Reducer for dict-valued state keys: later nodes add or replace entries."""
    return {**(left or {}), **(right or {})}


class RunManifest(BaseModel):
    """Everything needed to rerun an experiment and trust its artifacts.

    Attributes:
        config: Echo of the validated config, defaults filled
        code_version: Installed package version
        seeds: Experiment seed and the chunk ids its streams were keyed by
        complete: False when the run stopped before writing every artifact
        exit_code: Process exit status of the run
        artifacts: Files written next to the manifest
    """
    config: Dict[str, Any]
    code_version: str
    seeds: Dict[str, Any] = Field(default_factory=dict)
    workers: int = 1
    chunk_size: int = 1000
    started_at: str
    finished_at: Optional[str] = None
    complete: bool = False
    exit_code: int = 0
    artifacts: List[str] = Field(default_factory=list)
    errors: List[str] = Field(default_factory=list)
    warnings: List[str] = Field(default_factory=list)


class ExperimentState(TypedDict):
    """Experiment state passed between graph nodes."""

    # Inputs
    config: ExperimentConfig
    settings: LabSettings
    out_dir: str
    workers: int
    chunk_size: int

    # Processing state
    validation: Optional[ValidationReport]
    verdict: Optional[CriterionVerdict]
    tables: Annotated[Dict[str, Any], merge_dicts]  # name -> pandas DataFrame
    summary: Annotated[Dict[str, Any], merge_dicts]

    # System state
    errors: Annotated[List[str], add]
    warnings: Annotated[List[str], add]
    exit_code: int
    artifacts: List[str]
    execution_metadata: Annotated[Dict[str, Any], merge_dicts]


def create_initial_state(config: ExperimentConfig, settings: LabSettings) -> ExperimentState:
    """Create initial state for graph execution.

    Args:
        config: Validated experiment config
        settings: Process-wide defaults; config values take precedence

    Returns:
        Initial ExperimentState
    """
    run = config.experiment
    return ExperimentState(
        config=config,
        settings=settings,
        out_dir=settings.resolve_out_dir(run.out_dir),
        workers=run.workers or settings.workers,
        chunk_size=run.chunk_size or settings.chunk_size,
        validation=None,
        verdict=None,
        tables={},
        summary={"kind": run.kind, "seed": run.seed},
        errors=[],
        warnings=[],
        exit_code=0,
        artifacts=[],
        execution_metadata={
            "start_time": datetime.now(timezone.utc).isoformat(),
            "completed_nodes": [],
        },
    )
