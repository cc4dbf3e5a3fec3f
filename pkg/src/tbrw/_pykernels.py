"""Pure-Python twins of the compiled kernels in ``_ckernels.pyx``.

Same xoshiro256** stream, same bounded-integer rule, same outputs. Used when
the extension is not built or ``TBRW_PURE_PYTHON=1`` is set.
"""
from __future__ import annotations

import math

import numpy as np

IMPLEMENTATION = "python"

_MASK64 = (1 << 64) - 1
_MASK32 = (1 << 32) - 1
_TWO53 = 1.0 / 9007199254740992.0


def _load(state):
    return [int(x) for x in state]


def _store(state, s):
    state[:] = np.array(s, dtype=np.uint64)


def _next(s):
    s0, s1, s2, s3 = s
    x = (s1 * 5) & _MASK64
    result = ((((x << 7) | (x >> 57)) & _MASK64) * 9) & _MASK64
    t = (s1 << 17) & _MASK64
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    s3 = ((s3 << 45) | (s3 >> 19)) & _MASK64
    s[0], s[1], s[2], s[3] = s0, s1, s2, s3
    return result


def _below(s, n):
    x = _next(s) >> 32
    m = x * n
    low = m & _MASK32
    if low < n:
        t = ((1 << 32) - n) % n
        while low < t:
            x = _next(s) >> 32
            m = x * n
            low = m & _MASK32
    return m >> 32


def _unit(s):
    return float((_next(s) >> 11) + 1) * _TWO53


class _View:
    __slots__ = ("off", "length", "slots", "boff", "blen", "bslots")

    def __init__(self, off, length, slots, boff, blen, bslots):
        self.off = off.tolist()
        self.length = length.tolist()
        self.slots = slots.tolist()
        self.boff = boff.tolist()
        self.blen = blen.tolist()
        self.bslots = bslots.tolist()

    def step(self, pos, s):
        n = self.length[pos]
        u = _below(s, n + self.blen[pos])
        if u < n:
            return self.slots[self.off[pos] + u]
        return self.bslots[self.boff[pos] + u - n]


def next_u64(state):
    s = _load(state)
    r = _next(s)
    _store(state, s)
    return r


def below(state, n):
    s = _load(state)
    r = _below(s, int(n))
    _store(state, s)
    return r


def walk(off, length, slots, boff, blen, bslots, start, nsteps, state,
         target=-1, hits=None, trace=None):
    pos = int(start)
    if nsteps <= 0:
        return pos, 0
    if trace is not None and len(trace) < nsteps:
        raise ValueError("trace buffer shorter than nsteps")
    view = _View(off, length, slots, boff, blen, bslots)
    s = _load(state)
    cap_h = 0 if hits is None else len(hits)
    nh = 0
    for i in range(int(nsteps)):
        pos = view.step(pos, s)
        if trace is not None:
            trace[i] = pos
        if pos == target:
            if nh < cap_h:
                hits[nh] = i + 1
            nh += 1
    _store(state, s)
    return pos, nh


def walk_compressed(off, length, slots, boff, blen, bslots, start, nsteps, state):
    pos = int(start)
    if nsteps <= 0:
        return pos
    view = _View(off, length, slots, boff, blen, bslots)
    s = _load(state)
    r = int(nsteps)
    while r > 0:
        n = view.length[pos]
        b = view.blen[pos]
        if 2 * b < n + b:
            pos = view.step(pos, s)
            r -= 1
            continue
        if n == 0:
            g = float(r)
        else:
            g = math.floor(math.log(_unit(s)) / math.log(b / (n + b)))
        if 2.0 * g >= r:
            if r % 2 == 1:
                pos = view.bslots[view.boff[pos] + _below(s, b)]
            r = 0
        else:
            r -= 2 * int(g)
            pos = view.slots[view.off[pos] + _below(s, n)]
            r -= 1
    _store(state, s)
    return pos


def hit_walk(off, length, slots, boff, blen, bslots, start, target, nhits, state):
    view = _View(off, length, slots, boff, blen, bslots)
    s = _load(state)
    pos = int(start)
    seen = 0
    steps = 0
    while seen < nhits:
        pos = view.step(pos, s)
        steps += 1
        if pos == target:
            seen += 1
    _store(state, s)
    return steps


def pb_update(dist, p):
    # Vectorised over the state; the per-trial recursion is the same as the C loop.
    for q in np.asarray(p, dtype=float):
        shifted = dist[:-1] * q
        dist *= 1.0 - q
        dist[1:] += shifted
