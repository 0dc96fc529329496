"""
Keyed random streams.

Every random quantity is drawn from a counter-based Philox generator keyed by
(master seed, stream, *sub-keys). A unit's draw is the value at its index in
its stream, so results do not depend on the order in which units or trials
are processed.
"""

from enum import IntEnum
from typing import Optional

import numpy as np


class Stream(IntEnum):
    """Stream identifiers; never renumber, seeds in saved outputs depend on them."""
    TIE_BREAK = 0
    PRUNE_HETE = 1
    PRUNE_HOMO = 2
    TRIAL = 3
    CENTERS = 4
    WEIGHT_PERTURBATION = 5
    PRDS = 6


def keyed_generator(seed: int, stream: int, *keys: int) -> np.random.Generator:
    """Independent generator for (seed, stream, *keys)."""
    seq = np.random.SeedSequence(
        entropy=int(seed), spawn_key=(int(stream),) + tuple(int(k) for k in keys)
    )
    return np.random.Generator(np.random.Philox(seq))


def keyed_uniforms(seed: Optional[int], stream: int, size: int, *keys: int) -> np.ndarray:
    """Uniform(0, 1) draws; entry j belongs to unit j of the stream."""
    return keyed_generator(seed or 0, stream, *keys).random(size)


def derive_seed(seed: int, stream: int, *keys: int) -> int:
    """64-bit seed for (seed, stream, *keys), used to seed nested procedures."""
    seq = np.random.SeedSequence(
        entropy=int(seed), spawn_key=(int(stream),) + tuple(int(k) for k in keys)
    )
    low, high = seq.generate_state(2, dtype=np.uint32)
    return int(high) << 32 | int(low)
