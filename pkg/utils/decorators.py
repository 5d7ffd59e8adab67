"""Custom decorators for graph nodes and experiment entry points."""

import time
from functools import wraps
from typing import Any, Callable, Dict, List

from core.errors import LabError
from utils.logging import get_logger

try:
    from langsmith import traceable
    LANGSMITH_AVAILABLE = True
except ImportError:
    traceable = None
    LANGSMITH_AVAILABLE = False


def error_update(node_name: str, error: Exception) -> Dict[str, Any]:
    """State update recording a failed node and the exit code it maps to.

    Args:
        node_name: Name of the failing node
        error: The exception that occurred

    Returns:
        Error state update
    """
    logger = get_logger(f"nodes.{node_name}")
    if isinstance(error, LabError):
        logger.error(f"{node_name} node error: {error}")
        exit_code = error.exit_code
    else:
        logger.error(f"{node_name} node error: {error}", exc_info=True)
        exit_code = 1
    messages = [f"{node_name}: {error}"]
    messages.extend(f"{node_name}: {v}" for v in getattr(error, "violations", []))
    return {
        "errors": messages,
        "exit_code": exit_code,
        "execution_metadata": {f"{node_name}_failed": True},
    }


def timed_node(node_name: str):
    """Record a node's wall time in the execution metadata; trace it when langsmith is installed.

    Args:
        node_name: Name of the node for logging and tracing

    Returns:
        Decorated function
    """
    def decorator(func: Callable[..., Dict[str, Any]]):
        traced = LANGSMITH_AVAILABLE

        @wraps(func)
        def wrapper(*args, **kwargs) -> Dict[str, Any]:
            logger = get_logger(f"nodes.{node_name}")
            start_time = time.monotonic()
            result = func(*args, **kwargs)
            elapsed = time.monotonic() - start_time
            metadata = result.setdefault("execution_metadata", {})
            metadata[f"{node_name}_execution_time"] = elapsed
            metadata[f"{node_name}_traced"] = traced
            logger.info(f"Completed node: {node_name} in {elapsed:.2f}s")
            return result

        if traced:
            return traceable(name=f"bpire_node_{node_name}")(wrapper)
        return wrapper
    return decorator


def validate_node_input(required_fields: List[str]):
    """Decorator to validate required fields in node input state.

    Args:
        required_fields: List of required field names in state

    Returns:
        Decorated function
    """
    def decorator(func: Callable[..., Dict[str, Any]]):
        @wraps(func)
        def wrapper(self, state) -> Dict[str, Any]:
            missing_fields = [name for name in required_fields if state.get(name) is None]
            if missing_fields:
                error_msg = f"Missing required fields: {', '.join(missing_fields)}"
                get_logger("validation").error(error_msg)
                return {"errors": [error_msg], "exit_code": 1}
            return func(self, state)
        return wrapper
    return decorator
