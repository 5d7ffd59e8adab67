"""Schema definitions for bpire-lab."""

from .models import (
    ConfigIssue,
    CriterionVerdict,
    EmpiricalReport,
    EnvironmentSpec,
    ExperimentConfig,
    HorizonStatistic,
    LadderTailReport,
    RightRecurrenceReport,
    SeriesProbeReport,
    ValidationReport,
)
from .tables import TableSchema, TableSchemas

__all__ = [
    "ConfigIssue",
    "CriterionVerdict",
    "EmpiricalReport",
    "EnvironmentSpec",
    "ExperimentConfig",
    "HorizonStatistic",
    "LadderTailReport",
    "RightRecurrenceReport",
    "SeriesProbeReport",
    "ValidationReport",
    "TableSchema",
    "TableSchemas",
]
