"""Counter-based random streams keyed by (seed, replica, lane, index).

Every random draw in the library comes from a ``numpy.random.Generator``
built on a Philox bit generator. The Philox key is derived from the
experiment seed, a replica (or chunk) id and a lane; the index (generation,
site, ...) is written into the high word of the Philox counter. Streams are
therefore independent of scheduling: a replica computed on any worker, in
any order, sees the same numbers.
"""

from enum import IntEnum
from functools import lru_cache
from typing import Tuple

import numpy as np


class Lane(IntEnum):
    """Independent randomness lanes of one replica."""

    ENVIRONMENT = 0
    OFFSPRING = 1
    SITE = 2
    DECISION = 3
    LINES = 4
    LADDER = 5
    RECURSION = 6
    PROBE = 7


def site_index(x: int) -> int:
    """Zig-zag encode an integer site: 0, -1, 1, -2, 2 -> 0, 1, 2, 3, 4."""
    return 2 * x if x >= 0 else -2 * x - 1


class StreamFactory:
    """Builds keyed generators for one experiment seed.

    Args:
        seed: Experiment seed (non-negative integer)
    """

    def __init__(self, seed: int):
        if seed < 0:
            raise ValueError("seed must be non-negative")
        self.seed = int(seed)

    def key(self, replica: int, lane: Lane) -> Tuple[int, int]:
        """Philox key of a (replica, lane) pair."""
        return _derive_key(self.seed, int(replica), int(lane))

    def generator(self, replica: int, lane: Lane, index: int = 0) -> np.random.Generator:
        """Generator for the substream ``index`` of a (replica, lane) pair.

        Args:
            replica: Replica or chunk identifier
            lane: Randomness lane
            index: Substream index (generation, zig-zag site, ...)

        Returns:
            A fresh generator positioned at the start of the substream
        """
        if index < 0:
            raise ValueError("substream index must be non-negative")
        key = np.array(self.key(replica, lane), dtype=np.uint64)
        counter = np.array([0, 0, 0, index], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key, counter=counter))


@lru_cache(maxsize=65536)
def _derive_key(seed: int, replica: int, lane: int) -> Tuple[int, int]:
    words = np.random.SeedSequence(seed, spawn_key=(replica, lane)).generate_state(2, dtype=np.uint64)
    return int(words[0]), int(words[1])
