"""Exception hierarchy for bpire-lab.

Every error raised on purpose by the library derives from ``LabError`` and
carries the process exit code the command line reports for it.
"""

from typing import List, Optional


class LabError(Exception):
    """Base class for all library errors."""

    exit_code: int = 1


class ConfigError(LabError):
    """Experiment configuration could not be parsed or validated.

    Attributes:
        issues: Field-precise problems (location, line, message)
    """

    exit_code = 2

    def __init__(self, message: str, issues: Optional[List["object"]] = None):
        super().__init__(message)
        self.issues = list(issues or [])


class SpecViolationError(LabError):
    """Environment spec violates an assumption required by the experiment."""

    exit_code = 3

    def __init__(self, message: str, violations: Optional[List[str]] = None):
        super().__init__(message)
        self.violations = list(violations or [])


class ResourceLimitError(LabError):
    """A request exceeds the configured memory budget."""

    exit_code = 4


class DomainError(LabError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class InsufficientReplicasError(LabError):
    """Too few paths to produce an empirical statistic."""


class IncompleteLedgerError(LabError):
    """Coupling ledger lacks a decision needed by the branching recursion."""


class NotAnExcursionError(LabError, ValueError):
    """Walk path is not a right excursion from 0."""
