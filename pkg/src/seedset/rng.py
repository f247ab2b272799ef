"""Counter-based random streams.

Every random draw in the package comes from a Philox generator keyed by the
master seed plus a path of integers (cell, replicate, permutation index, ...),
so a stream never depends on how work is scheduled.
"""
import numpy as np

_MASK = (1 << 64) - 1


def stream(seed: int, *path: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) & _MASK, spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


def permutation(seed: int, replicate: int, n: int) -> np.ndarray:
    """Uniform random permutation of ``range(n)`` for one permutation replicate."""
    # Generator.permutation is a Fisher-Yates shuffle driven by the stream
    return stream(seed, 0x5EED, replicate).permutation(n)
