"""Counter-based random streams.

Every random draw in the package comes from a Philox counter generator keyed
by ``(seed, stream)``, where the stream id is a 64-bit hash of a label path
such as ``("gap", angle_index, chunk)``.  Distinct paths give disjoint
streams, so trials and blocks can be sampled in any order or in parallel
without changing a single drawn number.  Normal variates use Box-Muller on
the counter stream's uniforms so the produced doubles depend only on the
stream, not on a sampler's internal caching.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def _mix64(x: int) -> int:
    """splitmix64 finalizer; good avalanche for small structured inputs."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (x ^ (x >> 31)) & _MASK64


def stream_id(*parts: int | str) -> int:
    """Fold a label path into a 64-bit stream id.

    Accepts ints and short strings; the same path always gives the same id.
    """
    h = _FNV_OFFSET
    for part in parts:
        if isinstance(part, str):
            for b in part.encode("utf-8"):
                h = ((h ^ b) * _FNV_PRIME) & _MASK64
            h = _mix64(h)
        else:
            h = _mix64(h ^ _mix64(int(part) & _MASK64))
    return h


def generator(seed: int, *parts: int | str) -> np.random.Generator:
    """Philox generator keyed by (seed, stream path)."""
    key = np.array([int(seed) & _MASK64, stream_id(*parts)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def uniforms(seed: int, parts: tuple, shape) -> np.ndarray:
    return generator(seed, *parts).random(size=shape, dtype=np.float64)


def normals(seed: int, parts: tuple, shape) -> np.ndarray:
    """Standard normal array via Box-Muller on the counter stream."""
    gen = generator(seed, *parts)
    n = int(np.prod(shape)) if shape else 1
    m = (n + 1) // 2
    u = gen.random(size=(2, m), dtype=np.float64)
    # 1 - u lies in (0, 1], keeping the log argument strictly positive.
    radius = np.sqrt(-2.0 * np.log1p(-u[0]))
    angle = 2.0 * np.pi * u[1]
    z = np.concatenate([radius * np.cos(angle), radius * np.sin(angle)])
    return z[:n].reshape(shape)
