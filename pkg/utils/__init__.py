"""Utility modules for bpire-lab."""

from .decorators import timed_node, validate_node_input
from .logging import configure_worker, get_logger, setup_logging

__all__ = [
    "timed_node",
    "validate_node_input",
    "configure_worker",
    "get_logger",
    "setup_logging",
]
