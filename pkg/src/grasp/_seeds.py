"""Deterministic seed derivation.

Every stochastic component (fold shuffling, bootstrap replicas, synthetic
sampling) owns a seed derived from a single root seed through a splitmix64
step per tag, so parallel consumers never share a stream and a whole run is
reproduced from one number.
"""

import zlib

_MASK64 = (1 << 64) - 1


def _splitmix64(state: int) -> int:
    z = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(root: int, *tags) -> int:
    """Fold integer or string tags into the root seed, one splitmix64 step each.

    Strings are hashed with crc32 so the result is stable across processes.
    """
    state = root & _MASK64
    for tag in tags:
        if isinstance(tag, str):
            tag = zlib.crc32(tag.encode("utf-8"))
        state = _splitmix64(state ^ (int(tag) & _MASK64))
    return state
