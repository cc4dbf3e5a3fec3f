"""Property tests for the structural and distributional invariants."""
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from scipy import stats

from tbrw import kernels, oracles
from tbrw.engine import lumped_transport, make_state, sample_next_growth
from tbrw.laws import LawSequence, check_recurrence_conditions, moments, sample_z
from tbrw.observables import RedBlueState, classify_interval, update_coloring
from tbrw.tree import BundleMember, CompressedTree, Materialized

# random growth programs: (which live node, how many leaves)
programs = st.lists(st.tuples(st.integers(0, 10**6), st.sampled_from([1, 1, 1, 2, 3, 7, 70_000, 2**70])),
                    min_size=0, max_size=25)


def build(prog, initial="single-edge"):
    t = CompressedTree.from_spec(initial)
    for i, (pick, count) in enumerate(prog, start=1):
        nodes = t.alive_nodes()
        t.grow(t.ref_of(nodes[pick % len(nodes)]), count, i)
    return t


@given(programs, st.sampled_from(["single-vertex", "single-edge"]))
def test_tree_invariants(prog, initial):
    t = build(prog, initial)
    t.audit()
    assert t.n_edges == t.n_vertices - 1
    h = t.degree_histogram()
    if t.n_vertices > 1:
        assert sum(h.values()) == t.n_vertices
    assert sum(d * c for d, c in h.items()) == 2 * t.n_edges


@given(programs)
def test_walk_options_sum(prog):
    t = build(prog)
    for node in t.alive_nodes():
        opts = t.walk_options(t.ref_of(node))
        assert sum(o.weight for o in opts) == t.walk_degree(node)
        ref = t.ref_of(node)
        if isinstance(ref, Materialized):
            assert t.walk_degree(node) == t.degree(ref) + (ref.id == t.root)


@given(programs, st.integers(0, 10**6))
def test_materialize_invariance(prog, pick):
    t = build(prog)
    live = [b for b in range(len(t.b_node)) if t.b_mult[b] >= 1]
    assume(live)
    before = (t.degree_histogram(), t.n_vertices, t.leaf_count())
    t.materialize(live[pick % len(live)])
    assert (t.degree_histogram(), t.n_vertices, t.leaf_count()) == before
    t.audit()


@given(programs, st.integers(0, 10**6), st.integers(1, 9))
def test_landing_probability(prog, pick, z):
    """After growing z leaves at a vertex of walk-degree w, the new bundle carries z/(w+z)."""
    t = build([(p, c) for p, c in prog if c < 100])
    nodes = t.alive_nodes()
    ref = t.ref_of(nodes[pick % len(nodes)])
    ev = t.grow(ref, z, 10**3)
    w_before = t.walk_degree(t.v_node[ev.parent]) - z
    opts = t.walk_options(Materialized(ev.parent))
    new = [o for o in opts if o.kind == "bundle" and o.target == BundleMember(ev.new_bundle)]
    assert len(new) == 1
    assert Fraction(new[0].weight, sum(o.weight for o in opts)) == Fraction(z, w_before + z)


@given(st.lists(st.tuples(st.integers(0, 10**6), st.integers(1, 3)), max_size=6),
       st.integers(0, 64), st.integers(0, 10**6))
def test_lumpability(prog, t_steps, pick):
    t = build(prog)
    assume(t.n_vertices <= 12)
    nodes = t.alive_nodes()
    start = nodes[pick % len(nodes)]
    parents, members = t.expanded_parents()
    got_nodes, v = lumped_transport(t, start, t_steps, 100)
    full = oracles.exact_walk_distribution(parents, members[start][0], t_steps)
    spread = np.zeros_like(full)
    for node, mass in zip(got_nodes, v):
        spread[members[node]] = mass / len(members[node])
    # members of a bundle are exchangeable only if the start is not one of them
    lumped_full = np.zeros_like(full)
    for node in got_nodes:
        ids = members[node]
        lumped_full[ids] = full[ids].sum() / len(ids)
    assert 0.5 * np.abs(lumped_full - spread).sum() < 1e-10


LAWS = [
    {"variant": "BernoulliPower", "gamma": 0.75},
    {"variant": "BernoulliPower", "gamma": 0.3, "c": 0.5},
    {"variant": "LogBurst", "delta": 0.6},
    {"variant": "Constant", "p": 0.3, "z": 4},
    {"variant": "Table", "entries": [[1, 2, 0.5], [2, 0, 0.0], [3, 5, 0.25]], "tail": "last"},
    {"variant": "WeightedBurst", "p": {"kind": "harmonic", "offset": 1},
     "w": {"kind": "pow2", "exponent": 1.0, "round": "floor"}},
]


@given(st.sampled_from(LAWS), st.integers(0, 50), st.integers(0, 50), st.integers(0, 2**32))
def test_shift_composition(cfg, m1, m2, seed):
    a = LawSequence.from_config(cfg).shifted(m1).shifted(m2)
    b = LawSequence.from_config(cfg).shifted(m1 + m2)
    assert a == b
    ra, rb = np.random.default_rng(seed), np.random.default_rng(seed)
    assert [sample_z(a, n, ra) for n in range(1, 30)] == [sample_z(b, n, rb) for n in range(1, 30)]


@pytest.mark.slow
@pytest.mark.parametrize("cfg", LAWS)
def test_moments_match_monte_carlo(cfg):
    seq = LawSequence.from_config(cfg)
    rng = np.random.default_rng(17)
    N = 10**6
    for n in (3, 40):
        draws = np.fromiter((sample_z(seq, n, rng) for _ in range(N)), dtype=float, count=N)
        m, q = moments(seq, n)
        se_m = max(draws.std(ddof=1), 1e-12) / math.sqrt(N)
        se_q = math.sqrt(max(q * (1 - q), 1e-12) / N)
        assert abs(draws.mean() - m) <= 4 * se_m + 1e-12
        assert abs(np.mean(draws == 0) - q) <= 4 * se_q + 1e-12


def _tau_exact_cdf(seq, tmax):
    p = np.array([seq.growth_prob(s) for s in range(1, tmax + 1)])
    return 1.0 - np.cumprod(1.0 - p)


@pytest.mark.slow
@pytest.mark.parametrize("cfg", [{"variant": "BernoulliPower", "gamma": 0.75, "c": 0.5},
                                 {"variant": "BernoulliPower", "gamma": 0.75, "shift": 10}])
def test_thinning_matches_sequential(cfg):
    seq = LawSequence.from_config(cfg)
    N = 10**6
    state = make_state(seq, "single-edge", 1)
    thinned = np.fromiter((sample_next_growth(state)[0] for _ in range(N)), dtype=np.int64, count=N)
    # sequential Bernoulli trials, vectorised over replicas
    rng = np.random.default_rng(2)
    seqt = np.zeros(N, dtype=np.int64)
    alive = np.arange(N)
    s = 0
    while alive.size:
        s += 1
        hit = rng.random(alive.size) < seq.growth_prob(s)
        seqt[alive[hit]] = s
        alive = alive[~hit]
    assert stats.ks_2samp(thinned, seqt).pvalue > 1e-3
    tmax = int(thinned.max())
    cdf = _tau_exact_cdf(seq, tmax)
    emp = np.searchsorted(np.sort(thinned), np.arange(1, tmax + 1), side="right") / N
    # DKW band at 1e-3
    assert np.abs(emp - cdf).max() < math.sqrt(math.log(2 / 1e-3) / (2 * N))


def test_power_degenerate_first_gap():
    state = make_state(LawSequence.from_config({"variant": "BernoulliPower", "gamma": 0.75}), "single-edge", 0)
    assert sample_next_growth(state)[0] == 1


@given(st.lists(st.tuples(st.booleans(), st.integers(0, 10**6)), min_size=1, max_size=60),
       st.integers(0, 2**32))
def test_coloring_invariants(steps, seed):
    t = CompressedTree.from_spec("single-edge")
    s = RedBlueState.from_tree(t)
    rng = np.random.default_rng(seed)
    for i, (good, pick) in enumerate(steps, start=1):
        nodes = t.alive_nodes()
        ev = t.grow(t.ref_of(nodes[pick % len(nodes)]), 1, i)
        update_coloring(s, ev, "good" if good else "bad", rng)
        assert s.B + s.R == 2 * s.k == 2 * t.n_edges
        assert sum(s.blue.values()) == s.B
    for (kind, ref), b in s.blue.items():
        deg = t.v_deg[ref] if kind == "v" else 1
        assert 0 <= b <= deg


@given(st.lists(st.booleans(), min_size=1, max_size=60), st.integers(0, 2**32),
       st.integers(0, 2**32), st.integers(0, 2**32))
def test_coloring_position_independent(flags, seed, pos_a, pos_b):
    """Same flags and coin stream, different attachment vertices: same B/R trajectory."""
    def trajectory(pos_seed):
        t = CompressedTree.from_spec("single-edge")
        s = RedBlueState.from_tree(t)
        rng = np.random.default_rng(seed)
        picks = np.random.default_rng(pos_seed)
        out = []
        for i, good in enumerate(flags, start=1):
            nodes = t.alive_nodes()
            ev = t.grow(t.ref_of(nodes[int(picks.integers(len(nodes)))]), 1, i)
            update_coloring(s, ev, "good" if good else "bad", rng)
            out.append((s.B, s.R))
        return out
    assert trajectory(pos_a) == trajectory(pos_b)


@given(st.integers(1, 10**4), st.integers(1, 10**9), st.floats(0, 0.5))
def test_classify_threshold(k, gap, delta):
    assert (classify_interval(k, gap, delta) == "good") == (gap >= k ** (2 + delta) + 1)


@given(st.lists(st.fractions(0, 1, max_denominator=50), min_size=1, max_size=10), st.integers(0, 10))
def test_pb_dp_matches_enumeration(p, i):
    i = min(i, len(p))
    assert oracles.poisson_binomial_cdf(p, i) == oracles.poisson_binomial_bruteforce(p, i)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=200), st.floats(0, 1, exclude_max=True))
def test_chebyshev_dominates(p, frac):
    i = 1 + int(frac * math.fsum(p))
    b = oracles.chebyshev_r_bound(p, i)
    assume(b is not None)
    assert b >= oracles.poisson_binomial_cdf(p, i - 1) - 1e-12


@pytest.mark.parametrize("gamma,expect", [(0.75, "satisfied-trend"), (0.8, "satisfied-trend"),
                                          (0.95, "satisfied-trend"), (0.5, "violated-trend"),
                                          (0.6, "violated-trend")])
# near the 2/3 threshold a finite horizon may honestly report "inconclusive"
def test_a3_trend_by_gamma(gamma, expect):
    seq = LawSequence.from_config({"variant": "BernoulliPower", "gamma": gamma})
    assert check_recurrence_conditions(seq, 10**7).verdict == expect


@pytest.mark.skipif("cython" not in kernels.backends(), reason="compiled kernels not built")
@given(programs, st.integers(0, 2**63), st.integers(1, 3000))
def test_backends_agree(prog, seed, nsteps):
    t = build([(p, c) for p, c in prog if c <= 70_000])
    arrs = t.kernel_arrays()
    start = t.v_node[0]
    out = []
    for name in ("python", "cython"):
        k = kernels.backends()[name]
        s = kernels.seed_walk_state(seed)
        tr = np.empty(nsteps, dtype=np.int64)
        end, _ = k.walk(*arrs, start, nsteps, s, -1, None, tr)
        s2 = kernels.seed_walk_state(seed)
        endc = k.walk_compressed(*arrs, start, nsteps, s2)
        out.append((int(end), tr.tolist(), s.tolist(), int(endc), s2.tolist()))
    assert out[0] == out[1]
