"""Logging for bpire-lab.

All lab loggers live under the ``bpire_lab`` namespace and share one
stderr handler, so CSV or JSON written to stdout is never interleaved
with log lines. Pool workers tag their records with the process name.
"""

import logging
import sys
from typing import Optional, TextIO

NAMESPACE = "bpire_lab"
LIBRARY_LOGGERS = ("langgraph", "langsmith", "urllib3")

_HANDLER_TAG = "_bpire_lab_handler"


def _formatter(include_timestamp: bool, include_process: bool) -> logging.Formatter:
    parts = []
    if include_timestamp:
        parts.append("%(asctime)s")
    if include_process:
        parts.append("[%(processName)s]")
    parts.append("%(levelname)-7s %(name)s: %(message)s")
    return logging.Formatter(" ".join(parts))


def setup_logging(
    level: str = "INFO",
    include_timestamp: bool = True,
    include_process: bool = False,
    stream: Optional[TextIO] = None,
) -> logging.Logger:
    """Install the lab handler on the ``bpire_lab`` logger.

    Calling again replaces the previous lab handler instead of stacking a
    second one, so graphs built repeatedly in one process log each line once.

    Args:
        level: DEBUG, INFO, WARNING or ERROR
        include_timestamp: Prefix records with their creation time
        include_process: Prefix records with the process name (pooled runs)
        stream: Target stream, stderr by default

    Returns:
        The namespace logger
    """
    numeric = logging.getLevelName(level.upper())
    if not isinstance(numeric, int):
        raise ValueError(f"unknown log level {level!r}")

    root = logging.getLogger(NAMESPACE)
    for handler in list(root.handlers):
        if getattr(handler, _HANDLER_TAG, False):
            root.removeHandler(handler)

    handler = logging.StreamHandler(stream or sys.stderr)
    handler.setFormatter(_formatter(include_timestamp, include_process))
    setattr(handler, _HANDLER_TAG, True)
    root.addHandler(handler)
    root.setLevel(numeric)

    for name in LIBRARY_LOGGERS:
        logging.getLogger(name).setLevel(max(numeric, logging.WARNING))
    return root


def configure_worker(level: str) -> None:
    """Pool initializer: spawned workers start without the parent's handler."""
    setup_logging(level, include_timestamp=False, include_process=True)


def get_logger(name: str) -> logging.Logger:
    return logging.getLogger(f"{NAMESPACE}.{name}")
