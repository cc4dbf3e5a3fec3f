"""Exact reference computations for small trees and for the growth-count law.

Trees here are plain parent arrays (``parents[root] == -1``). Return and
hitting times concern the simple random walk *without* the root loop; walk
distributions and the stationary law include the loop, as the process does.
"""
from __future__ import annotations

import itertools
import math
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import networkx as nx
import numpy as np
import scipy.linalg
import scipy.sparse

from . import kernels

DEFAULT_CAP = 2000


class OracleError(ValueError):
    pass


# --------------------------------------------------------------------------
# degree law


def pa_target(d: int) -> float:
    """Limiting preferential-attachment degree law ``4 / (d (d+1) (d+2))``."""
    if d < 1:
        raise OracleError("pa_target is defined for d >= 1")
    return 4.0 / (d * (d + 1) * (d + 2))


def pa_partial_sum(D: int) -> Fraction:
    return 1 - Fraction(2, (D + 1) * (D + 2))


def tv_distance(p: Mapping, q: Mapping) -> float:
    """Half the L1 distance; keys missing on one side carry mass 0."""
    keys = set(p) | set(q)
    return 0.5 * math.fsum(abs(float(p.get(k, 0.0)) - float(q.get(k, 0.0))) for k in keys)


# --------------------------------------------------------------------------
# tree helpers


def adjacency(parents: Sequence[int]) -> list[list[int]]:
    adj = [[] for _ in parents]
    for v, p in enumerate(parents):
        if p >= 0:
            adj[v].append(p)
            adj[p].append(v)
    return adj


def _root(parents):
    roots = [v for v, p in enumerate(parents) if p < 0]
    if len(roots) != 1:
        raise OracleError("parent array must have exactly one root")
    return roots[0]


def parents_from_graph(g: nx.Graph, root=0) -> list[int]:
    order = {v: i for i, v in enumerate(nx.bfs_tree(g, root))}
    parents = [-1] * len(order)
    for u, w in nx.bfs_edges(g, root):
        parents[order[w]] = order[u]
    return parents


def nonisomorphic_trees(n: int) -> Iterable[list[int]]:
    """All unlabeled trees on ``n`` vertices, as parent arrays rooted at 0."""
    if n == 1:
        yield [-1]
        return
    for g in nx.nonisomorphic_trees(n):
        yield parents_from_graph(g, 0)


def random_tree(n: int, rng: np.random.Generator) -> list[int]:
    """Uniform random labelled tree (random Pruefer code), rooted at 0."""
    if n <= 2:
        return [-1] + [0] * (n - 1)
    seq = [int(x) for x in rng.integers(0, n, size=n - 2)]
    g = nx.from_prufer_sequence(seq)
    return parents_from_graph(g, 0)


# --------------------------------------------------------------------------
# return and hitting times (plain walk, no loop)


def expected_return_time(parents: Sequence[int], v: int) -> float:
    """``E_v[H_v^+] = 2(|T| - 1) / deg(v)``."""
    n = len(parents)
    if n == 1:
        raise OracleError("return time is undefined on a single vertex")
    deg = len(adjacency(parents)[v])
    return 2.0 * (n - 1) / deg


def expected_return_time_linear(parents: Sequence[int], v: int) -> float:
    """Same quantity from the first-step equations, by dense LU with pivoting."""
    n = len(parents)
    if n == 1:
        raise OracleError("return time is undefined on a single vertex")
    adj = adjacency(parents)
    h = _hitting_times_to(adj, v)
    return 1.0 + sum(h[w] for w in adj[v]) / len(adj[v])


def _hitting_times_to(adj, target) -> np.ndarray:
    n = len(adj)
    others = [u for u in range(n) if u != target]
    idx = {u: i for i, u in enumerate(others)}
    A = np.eye(n - 1)
    b = np.ones(n - 1)
    for u in others:
        du = len(adj[u])
        for w in adj[u]:
            if w != target:
                A[idx[u], idx[w]] -= 1.0 / du
    x = scipy.linalg.solve(A, b) if n > 1 else np.zeros(0)
    h = np.zeros(n)
    for u in others:
        h[u] = x[idx[u]]
    return h


def _side_size(adj, w, v) -> int:
    """Vertices on ``w``'s side after deleting edge ``(v, w)``."""
    seen = {w, v}
    stack = [w]
    count = 0
    while stack:
        x = stack.pop()
        count += 1
        for y in adj[x]:
            if y not in seen:
                seen.add(y)
                stack.append(y)
    return count


def subtree_hitting_time(parents: Sequence[int], w: int, v: int) -> float:
    """``E_w[H_v] = 2 |T_v(w)| - 1`` for adjacent ``v, w``."""
    adj = adjacency(parents)
    if v not in adj[w]:
        raise OracleError(f"{v} and {w} are not adjacent")
    return 2.0 * _side_size(adj, w, v) - 1.0


def subtree_hitting_time_linear(parents: Sequence[int], w: int, v: int) -> float:
    adj = adjacency(parents)
    if v not in adj[w]:
        raise OracleError(f"{v} and {w} are not adjacent")
    return float(_hitting_times_to(adj, v)[w])


def cover_time_bound(m: int) -> int:
    """Cover-time bound ``2 m^2`` for a tree on ``m`` vertices."""
    if m < 1:
        raise OracleError("m must be >= 1")
    return 2 * m * m


# --------------------------------------------------------------------------
# walk with the root loop


def transition_matrix(parents: Sequence[int], sparse: bool = False):
    """Uniform moves over neighbours plus, at the root, the loop (counted once)."""
    n = len(parents)
    r = _root(parents)
    adj = adjacency(parents)
    rows, cols, vals = [], [], []
    for u in range(n):
        opts = list(adj[u]) + ([u] if u == r else [])
        w = 1.0 / len(opts)
        for x in opts:
            rows.append(u)
            cols.append(x)
            vals.append(w)
    P = scipy.sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return P if sparse else P.toarray()


def exact_walk_distribution(parents: Sequence[int], start: int, t: int,
                            cap: int = DEFAULT_CAP) -> np.ndarray:
    """Exact law of ``X_t`` from ``start``: sparse iteration, or squaring for huge ``t``."""
    n = len(parents)
    if n > cap:
        raise OracleError(f"tree has {n} vertices, cap is {cap}")
    if t < 0:
        raise OracleError("t must be >= 0")
    v = np.zeros(n)
    v[start] = 1.0
    if t == 0:
        return v
    if t > n * 1000:
        P = transition_matrix(parents)
        r = int(t)
        Q = P
        while r:
            if r & 1:
                v = v @ Q
            r >>= 1
            if r:
                Q = Q @ Q
        return v / v.sum()
    PT = transition_matrix(parents, sparse=True).T.tocsr()
    for _ in range(int(t)):
        v = PT @ v
    return v


def stationary_distribution(parents: Sequence[int], paper_shorthand: bool = False) -> np.ndarray:
    """Mass proportional to walk-option counts (degree, +1 at the root).

    ``paper_shorthand=True`` returns ``deg / 2k`` instead, which ignores the loop.
    """
    n = len(parents)
    r = _root(parents)
    adj = adjacency(parents)
    w = np.array([len(adj[u]) + (0 if paper_shorthand or u != r else 1) for u in range(n)], float)
    if w.sum() == 0:
        return np.ones(1)
    return w / w.sum()


def detailed_balance_gap(parents: Sequence[int]) -> float:
    P = transition_matrix(parents)
    pi = stationary_distribution(parents)
    F = pi[:, None] * P
    return float(np.abs(F - F.T).max())


# --------------------------------------------------------------------------
# growth counts


def poisson_binomial_pmf(p: Sequence, upto: int | None = None) -> list:
    """``P(K = m)`` for ``m = 0..upto`` (default all). Exact with Fractions."""
    j = len(p)
    top = j if upto is None else min(upto, j)
    exact = all(isinstance(x, (int, Fraction)) for x in p)
    zero, one = (Fraction(0), Fraction(1)) if exact else (0.0, 1.0)
    dist = [one] + [zero] * top
    for q in p:
        for m in range(top, 0, -1):
            dist[m] = dist[m] * (1 - q) + dist[m - 1] * q
        dist[0] = dist[0] * (1 - q)
    return dist


def poisson_binomial_cdf(p: Sequence, i: int):
    """``P(K <= i)``, ``K`` a sum of independent Bernoulli(p_k); equals ``r_{i+1, j}``.

    Fractions in, Fraction out (exact); floats go through the compiled DP.
    """
    if len(p) < 1:
        raise OracleError("need at least one probability")
    if i < 0:
        return Fraction(0) if isinstance(p[0], Fraction) else 0.0
    if all(isinstance(x, (int, Fraction)) for x in p):
        return sum(poisson_binomial_pmf(p, i)[: i + 1], Fraction(0))
    if i >= len(p):
        return 1.0
    dist = np.zeros(i + 1)
    dist[0] = 1.0
    kernels.pb_update(dist, np.ascontiguousarray(p, dtype=float))
    return float(min(1.0, dist.sum()))


def poisson_binomial_bruteforce(p: Sequence, i: int):
    """Sum over all ``2^j`` outcomes; for cross-checks only."""
    total = Fraction(0) if all(isinstance(x, (int, Fraction)) for x in p) else 0.0
    for bits in itertools.product((0, 1), repeat=len(p)):
        if sum(bits) > i:
            continue
        w = 1
        for b, q in zip(bits, p):
            w *= q if b else (1 - q)
        total += w
    return total


def chebyshev_r_bound(p: Sequence[float] | None, i: int, P: float | None = None):
    """``P_j / (P_j - i + 1)^2`` if ``P_j > i - 1``, else ``None``.

    Pass ``P`` directly for astronomically long sequences (see
    :meth:`tbrw.laws.SequenceSpec.partial_sum`).
    """
    if P is None:
        P = math.fsum(p)
    if P > i - 1:
        gap = P - i + 1
        try:
            return P / gap / gap
        except (ZeroDivisionError, OverflowError):
            return math.inf
    return None


# --------------------------------------------------------------------------
# self-check


def self_check(max_n: int = 8, n_random: int = 50, random_max: int = 200,
               epsilon: float = 0.01, seed: int = 0) -> dict:
    """Run every oracle identity; returns a JSON-ready report with ``ok`` flags."""
    from .engine import mixing_threshold

    out = {}
    dev_r = dev_h = 0.0
    count = 0
    for n in range(2, max_n + 1):
        for par in nonisomorphic_trees(n):
            count += 1
            adj = adjacency(par)
            for v in range(n):
                dev_r = max(dev_r, abs(expected_return_time(par, v) - expected_return_time_linear(par, v)))
                for w in adj[v]:
                    dev_h = max(dev_h, abs(subtree_hitting_time(par, w, v)
                                           - subtree_hitting_time_linear(par, w, v)))
    out["return_time_closed_vs_linear"] = {"instances": count, "max_deviation": dev_r, "ok": bool(dev_r <= 1e-9)}
    out["hitting_time_closed_vs_linear"] = {"instances": count, "max_deviation": dev_h, "ok": bool(dev_h <= 1e-9)}

    rng = np.random.default_rng(seed)
    worst = 0.0
    db = 0.0
    for _ in range(n_random):
        n = int(rng.integers(2, random_max + 1))
        par = random_tree(n, rng)
        t = mixing_threshold(n, epsilon, "rigorous")
        d = exact_walk_distribution(par, int(rng.integers(0, n)), t)
        worst = max(worst, 0.5 * float(np.abs(d - stationary_distribution(par)).sum()))
        db = max(db, detailed_balance_gap(par))
    out["mixing_bound_tv"] = {"instances": n_random, "max_deviation": worst, "epsilon": epsilon,
                              "ok": bool(worst <= epsilon)}
    out["stationary_detailed_balance"] = {"instances": n_random, "max_deviation": db, "ok": bool(db <= 1e-12)}

    pb = 0.0
    pbc = 0
    for j in range(1, 11):
        for _ in range(3):
            p = [Fraction(int(a), 12) for a in rng.integers(0, 13, size=j)]
            for i in range(0, j + 1):
                pbc += 1
                if poisson_binomial_cdf(p, i) != poisson_binomial_bruteforce(p, i):
                    pb = 1.0
    out["poisson_binomial_dp_vs_enumeration"] = {"instances": pbc, "max_deviation": pb, "ok": pb == 0.0}

    tel = max(abs(math.fsum(pa_target(d) for d in range(1, D + 1)) - float(pa_partial_sum(D)))
              for D in range(1, 200))
    out["pa_target_telescoping"] = {"instances": 199, "max_deviation": tel, "ok": bool(tel <= 1e-12)}

    cheb = 0
    bad = 0
    hp = [1.0 / (k + 1) for k in range(1, 201)]
    for j in range(1, 201):
        dist = np.zeros(j + 1)
        dist[0] = 1.0
        kernels.pb_update(dist, np.array(hp[:j]))
        cum = np.cumsum(dist)
        P = math.fsum(hp[:j])
        for i in range(1, j + 1):
            b = chebyshev_r_bound(None, i, P)
            if b is None:
                continue
            cheb += 1
            if b < cum[i - 1] - 1e-12:
                bad += 1
    out["chebyshev_dominates_exact"] = {"instances": cheb, "max_deviation": float(bad), "ok": bad == 0}
    out["ok"] = bool(all(v["ok"] for v in out.values() if isinstance(v, dict)))
    return out
