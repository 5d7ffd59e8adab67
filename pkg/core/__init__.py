"""Core modules for bpire-lab."""

from .config import DEFAULT_EXACT_THRESHOLD, LabSettings
from .errors import (
    ConfigError,
    LabError,
    ResourceLimitError,
    SpecViolationError,
)

__all__ = [
    "DEFAULT_EXACT_THRESHOLD",
    "LabSettings",
    "ConfigError",
    "LabError",
    "ResourceLimitError",
    "SpecViolationError",
]
