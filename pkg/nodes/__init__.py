"""Node implementations for experiment graph execution."""

from .base import BaseNode
from .classification import ClassificationNode, ExampleNode
from .output import OutputNode
from .simulation import BranchingNode, LadderNode, RecursionNode, WalkNode
from .validation import ValidationNode

__all__ = [
    "BaseNode",
    "BranchingNode",
    "ClassificationNode",
    "ExampleNode",
    "LadderNode",
    "OutputNode",
    "RecursionNode",
    "ValidationNode",
    "WalkNode"
]
