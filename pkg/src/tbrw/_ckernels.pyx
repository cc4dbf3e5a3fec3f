# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: frozen-tree walking and the Poisson-Binomial DP.

Every function here has a line-for-line twin in ``_pykernels``; both consume
the xoshiro256** stream identically so results are bit-for-bit equal.

Walk layout: node ``v`` owns plain options ``slots[off[v]:off[v]+length[v]]``
(parent, root loop, materialised children) and bundle options
``bslots[boff[v]:boff[v]+blen[v]]`` (a bundle of multiplicity m appears m times).
A move is uniform over the union.
"""
from libc.math cimport floor, log
from libc.stdint cimport int64_t, uint64_t

IMPLEMENTATION = "cython"


cdef inline uint64_t _rotl(uint64_t x, int k) noexcept nogil:
    return (x << k) | (x >> (64 - k))


cdef inline uint64_t _next(uint64_t* s) noexcept nogil:
    cdef uint64_t result = _rotl(s[1] * 5, 7) * 9
    cdef uint64_t t = s[1] << 17
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return result


cdef inline uint64_t _below(uint64_t* s, uint64_t n) noexcept nogil:
    # Lemire's method on the top 32 bits; n must lie in [1, 2**32).
    cdef uint64_t x = _next(s) >> 32
    cdef uint64_t m = x * n
    cdef uint64_t low = m & 0xFFFFFFFFULL
    cdef uint64_t t
    if low < n:
        t = (0x100000000ULL - n) % n
        while low < t:
            x = _next(s) >> 32
            m = x * n
            low = m & 0xFFFFFFFFULL
    return m >> 32


cdef inline double _unit(uint64_t* s) noexcept nogil:
    # uniform on (0, 1]
    return (<double>((_next(s) >> 11) + 1)) * (1.0 / 9007199254740992.0)


cdef inline int64_t _step(const int64_t* off, const int64_t* length, const int64_t* slots,
                          const int64_t* boff, const int64_t* blen, const int64_t* bslots,
                          int64_t pos, uint64_t* s) noexcept nogil:
    cdef int64_t n = length[pos]
    cdef int64_t u = <int64_t>_below(s, <uint64_t>(n + blen[pos]))
    if u < n:
        return slots[off[pos] + u]
    return bslots[boff[pos] + u - n]


def next_u64(uint64_t[::1] state):
    """Advance ``state`` in place and return the next 64-bit output."""
    cdef uint64_t s[4]
    s[0] = state[0]; s[1] = state[1]; s[2] = state[2]; s[3] = state[3]
    cdef uint64_t r = _next(s)
    state[0] = s[0]; state[1] = s[1]; state[2] = s[2]; state[3] = s[3]
    return r


def below(uint64_t[::1] state, uint64_t n):
    """Uniform integer in ``[0, n)`` for ``1 <= n < 2**32``."""
    cdef uint64_t s[4]
    s[0] = state[0]; s[1] = state[1]; s[2] = state[2]; s[3] = state[3]
    cdef uint64_t r = _below(s, n)
    state[0] = s[0]; state[1] = s[1]; state[2] = s[2]; state[3] = s[3]
    return r


def walk(const int64_t[::1] off, const int64_t[::1] length, const int64_t[::1] slots,
         const int64_t[::1] boff, const int64_t[::1] blen, const int64_t[::1] bslots,
         int64_t start, int64_t nsteps, uint64_t[::1] state,
         int64_t target=-1, int64_t[::1] hits=None, int64_t[::1] trace=None):
    """Run ``nsteps`` uniform moves from ``start``, one draw per step.

    If ``hits`` is given, the 1-based step indices at which the walker sits on
    ``target`` are written there (up to its length). If ``trace`` is given,
    the position after step ``i`` goes to ``trace[i]``.

    Returns ``(end_node, n_hits)``; ``n_hits`` counts all hits, recorded or not.
    """
    cdef int64_t pos = start
    cdef int64_t i
    cdef int64_t nh = 0
    cdef int64_t cap_h = 0
    cdef bint rec_h = hits is not None
    cdef bint rec_t = trace is not None
    cdef uint64_t s[4]
    if nsteps <= 0:
        return pos, 0
    if rec_h:
        cap_h = hits.shape[0]
    if rec_t and trace.shape[0] < nsteps:
        raise ValueError("trace buffer shorter than nsteps")
    s[0] = state[0]; s[1] = state[1]; s[2] = state[2]; s[3] = state[3]
    with nogil:
        for i in range(nsteps):
            pos = _step(&off[0], &length[0], &slots[0], &boff[0], &blen[0], &bslots[0], pos, s)
            if rec_t:
                trace[i] = pos
            if pos == target:
                if nh < cap_h:
                    hits[nh] = i + 1
                nh += 1
    state[0] = s[0]; state[1] = s[1]; state[2] = s[2]; state[3] = s[3]
    return pos, nh


def walk_compressed(const int64_t[::1] off, const int64_t[::1] length, const int64_t[::1] slots,
                    const int64_t[::1] boff, const int64_t[::1] blen, const int64_t[::1] bslots,
                    int64_t start, int64_t nsteps, uint64_t[::1] state):
    """Endpoint of an ``nsteps`` walk, skipping leaf-bundle bounces in one draw.

    A move from a vertex into one of its bundles is always followed by the move
    back, so at a vertex where bundle options are at least half the weight the
    number of consecutive bounces is drawn as a geometric variable instead of
    step by step. Same law as ``walk``; different stream consumption.
    """
    cdef int64_t pos = start
    cdef int64_t r = nsteps
    cdef int64_t n, b
    cdef double g
    cdef uint64_t s[4]
    if nsteps <= 0:
        return pos
    s[0] = state[0]; s[1] = state[1]; s[2] = state[2]; s[3] = state[3]
    with nogil:
        while r > 0:
            n = length[pos]
            b = blen[pos]
            if 2 * b < n + b:
                pos = _step(&off[0], &length[0], &slots[0], &boff[0], &blen[0], &bslots[0], pos, s)
                r -= 1
                continue
            if n == 0:
                g = <double>r
            else:
                g = floor(log(_unit(s)) / log(<double>b / <double>(n + b)))
            if 2.0 * g >= <double>r:
                if r % 2 == 1:
                    pos = bslots[boff[pos] + <int64_t>_below(s, <uint64_t>b)]
                r = 0
            else:
                r -= 2 * <int64_t>g
                pos = slots[off[pos] + <int64_t>_below(s, <uint64_t>n)]
                r -= 1
    state[0] = s[0]; state[1] = s[1]; state[2] = s[2]; state[3] = s[3]
    return pos


def hit_walk(const int64_t[::1] off, const int64_t[::1] length, const int64_t[::1] slots,
             const int64_t[::1] boff, const int64_t[::1] blen, const int64_t[::1] bslots,
             int64_t start, int64_t target, int64_t nhits, uint64_t[::1] state):
    """Steps needed until the walker from ``start`` has visited ``target`` ``nhits`` times.

    The starting position does not count as a visit.
    """
    cdef int64_t pos = start
    cdef int64_t seen = 0
    cdef int64_t steps = 0
    cdef uint64_t s[4]
    s[0] = state[0]; s[1] = state[1]; s[2] = state[2]; s[3] = state[3]
    with nogil:
        while seen < nhits:
            pos = _step(&off[0], &length[0], &slots[0], &boff[0], &blen[0], &bslots[0], pos, s)
            steps += 1
            if pos == target:
                seen += 1
    state[0] = s[0]; state[1] = s[1]; state[2] = s[2]; state[3] = s[3]
    return steps


def pb_update(double[::1] dist, const double[::1] p):
    """Fold Bernoulli(p_k) trials into a truncated Poisson-Binomial pmf in place.

    ``dist[m]`` holds P(K = m) for m < len(dist); mass above is dropped.
    """
    cdef Py_ssize_t n = dist.shape[0]
    cdef Py_ssize_t j, m
    cdef double q
    with nogil:
        for j in range(p.shape[0]):
            q = p[j]
            for m in range(n - 1, 0, -1):
                dist[m] = dist[m] * (1.0 - q) + dist[m - 1] * q
            dist[0] = dist[0] * (1.0 - q)
