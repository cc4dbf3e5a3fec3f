"""Kernel backend selection and the walk-stream helpers built on it.

The compiled extension is preferred; set ``TBRW_PURE_PYTHON=1`` to force the
pure-Python twin (identical results, ~100x slower).
"""
from __future__ import annotations

import os

import numpy as np

from . import _pykernels

if os.environ.get("TBRW_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:  # extension not built
        _impl = _pykernels

IMPLEMENTATION: str = _impl.IMPLEMENTATION

walk = _impl.walk
walk_compressed = _impl.walk_compressed
hit_walk = _impl.hit_walk
pb_update = _impl.pb_update
next_u64 = _impl.next_u64
below = _impl.below

_MASK64 = (1 << 64) - 1


def backends():
    """Available kernel modules, keyed by implementation name."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels

        out["cython"] = _ckernels
    except ImportError:
        pass
    return out


def seed_walk_state(seed: int) -> np.ndarray:
    """xoshiro256** state expanded from a 64-bit seed with splitmix64."""
    x = seed & _MASK64
    words = []
    for _ in range(4):
        x = (x + 0x9E3779B97F4A7C15) & _MASK64
        z = x
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        words.append(z ^ (z >> 31))
    return np.array(words, dtype=np.uint64)


def uniform_below(state: np.ndarray, n: int) -> int:
    """Uniform integer in ``[0, n)`` for any positive Python int ``n``.

    Small ``n`` uses the same rule as the walk kernels, so a single move taken
    here matches a one-step kernel call exactly.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if n < (1 << 32):
        return int(below(state, n))
    nbits = n.bit_length()
    nwords = (nbits + 63) // 64
    excess = nwords * 64 - nbits
    while True:
        x = 0
        for _ in range(nwords):
            x = (x << 64) | int(next_u64(state))
        x >>= excess
        if x < n:
            return x
