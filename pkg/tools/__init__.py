"""Simulation and analysis tools for branching processes and excited walks."""

from .population import Population
from .streams import Lane, StreamFactory

__all__ = [
    "Lane",
    "Population",
    "StreamFactory"
]
