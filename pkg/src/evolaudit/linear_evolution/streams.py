"""Counter-based random streams keyed by (seed, point index, path block)."""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_MASK32 = (1 << 32) - 1


def block_generator(seed: int, point_index: int, block_index: int) -> np.random.Generator:
    """Philox generator whose 128-bit key packs the seed, the point index and the block index.

    Path j of point i always lives in block j // block_size of key (seed, i, block),
    so results never depend on how work is split across threads.
    """
    low = int(seed) & _MASK64
    high = ((int(point_index) & _MASK32) << 32) | (int(block_index) & _MASK32)
    return np.random.Generator(np.random.Philox(key=low | (high << 64)))
