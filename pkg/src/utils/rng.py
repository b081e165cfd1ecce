"""Seedable counter-based random streams."""

from typing import Union

import numpy as np

StreamKey = Union[int, str]


def _key_to_int(key: StreamKey) -> int:
    if isinstance(key, str):
        # Stable across processes, unlike hash()
        return int.from_bytes(key.encode("utf-8")[:8].ljust(8, b"\0"), "little")
    return int(key)


def make_rng(seed: int, *keys: StreamKey) -> np.random.Generator:
    """Create an independent Philox stream for (seed, keys).

    The same seed with different keys gives statistically independent streams,
    so e.g. stage-2 draws for individual 7 do not depend on how many other
    individuals were processed before it.

    Args:
        seed: 64-bit user seed
        *keys: Stage names and/or indices identifying the substream

    Returns:
        NumPy Generator backed by Philox
    """
    spawn_key = tuple(_key_to_int(k) for k in keys)
    seq = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=spawn_key)
    return np.random.Generator(np.random.Philox(seq))
