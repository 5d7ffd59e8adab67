"""Population counts with exact-integer and log-domain representations.

Counts stay exact Python integers up to ``exact_threshold`` and switch to
``log(count)`` above it. The switch only happens upward. A count that went
through a gaussian offspring approximation is flagged ``approximate``.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from core.config import DEFAULT_EXACT_THRESHOLD

# Above this, log(1 + M) and log(M) agree to double precision.
LOG_EQUIVALENCE = 40.0


@dataclass(frozen=True, slots=True)
class Population:
    """A non-negative count.

    Attributes:
        exact: The count when it is at most the exact threshold, else None
        log_value: log(count); -inf for an empty population
        approximate: True once a CLT approximation entered the value
    """

    exact: Optional[int]
    log_value: float
    approximate: bool = False

    @classmethod
    def of(cls, count: int, threshold: int = DEFAULT_EXACT_THRESHOLD, approximate: bool = False) -> "Population":
        if count < 0:
            raise ValueError("population cannot be negative")
        log_value = math.log(count) if count > 0 else -math.inf
        if count > threshold:
            return cls(None, log_value, approximate)
        return cls(int(count), log_value, approximate)

    @classmethod
    def from_log(cls, log_value: float, threshold: int = DEFAULT_EXACT_THRESHOLD, approximate: bool = False) -> "Population":
        """Build from log(count); collapses to exact when it fits."""
        if log_value < math.log(threshold):
            return cls.of(int(round(math.exp(log_value))), threshold, approximate)
        return cls(None, float(log_value), approximate)

    @classmethod
    def from_log1p(cls, log1p_value: float, exact: Optional[int], threshold: int = DEFAULT_EXACT_THRESHOLD) -> "Population":
        """Build from a log(1 + count) value with an optional exact sidecar."""
        if exact is not None:
            return cls.of(exact, threshold)
        if log1p_value > LOG_EQUIVALENCE:
            return cls(None, float(log1p_value))
        return cls.from_log(math.log(math.expm1(log1p_value)), threshold)

    @property
    def is_log(self) -> bool:
        return self.exact is None

    @property
    def is_zero(self) -> bool:
        return self.exact == 0

    @property
    def log1p(self) -> float:
        if self.exact is not None:
            return math.log1p(self.exact)
        return self.log_value

    def add(self, other: "Population", threshold: int = DEFAULT_EXACT_THRESHOLD) -> "Population":
        """Sum of two populations, exact when both parts are exact."""
        approximate = self.approximate or other.approximate
        if self.exact is not None and other.exact is not None:
            return Population.of(self.exact + other.exact, threshold, approximate)
        return Population(None, float(np.logaddexp(self.log_value, other.log_value)), approximate)

    def __int__(self) -> int:
        if self.exact is None:
            raise OverflowError("population is only known in log domain")
        return self.exact

    def __str__(self) -> str:
        if self.exact is not None:
            return str(self.exact)
        return f"exp({self.log_value:.6g})"


ZERO = Population(0, -math.inf)
