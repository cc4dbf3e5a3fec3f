"""Compiled and pure-Python kernels must agree bit for bit."""
import numpy as np
import pytest

from tbrw import kernels
from tbrw.engine import Exact, Horizon, make_state, run
from tbrw.laws import LawSequence
from tbrw.tree import CompressedTree, Materialized

B = kernels.backends()
needs_both = pytest.mark.skipif("cython" not in B, reason="compiled kernels not built")


def sample_tree(seed=0):
    st = make_state(LawSequence.from_config({"variant": "BernoulliPower", "gamma": 0.5}), "single-edge", seed)
    run(st, Exact(), Horizon(max_growth=60))
    t = st.tree
    t.grow(Materialized(3), 40, st.clock + 1)
    return t


def test_selected_backend():
    assert kernels.IMPLEMENTATION in B


def test_walk_state_seeding():
    a = kernels.seed_walk_state(42)
    assert a.dtype == np.uint64 and a.shape == (4,)
    assert not np.array_equal(a, kernels.seed_walk_state(43))


@needs_both
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_walk_equivalence(seed):
    t = sample_tree(seed)
    arrs = t.kernel_arrays()
    root = t.v_node[0]
    outs = []
    for name in ("python", "cython"):
        k = B[name]
        s = kernels.seed_walk_state(seed)
        hits = np.empty(5000, dtype=np.int64)
        trace = np.empty(5000, dtype=np.int64)
        end, nh = k.walk(*arrs, root, 5000, s, root, hits, trace)
        outs.append((int(end), int(nh), hits[:nh].tolist(), trace.tolist(), s.tolist()))
    assert outs[0] == outs[1]


@needs_both
def test_walk_compressed_equivalence():
    t = sample_tree(5)
    arrs = t.kernel_arrays()
    ends = []
    for name in ("python", "cython"):
        s = kernels.seed_walk_state(9)
        ends.append((int(B[name].walk_compressed(*arrs, t.v_node[0], 20000, s)), s.tolist()))
    assert ends[0] == ends[1]


@needs_both
def test_hit_walk_equivalence():
    t = sample_tree(3)
    arrs = t.kernel_arrays()
    res = []
    for name in ("python", "cython"):
        s = kernels.seed_walk_state(1)
        res.append((int(B[name].hit_walk(*arrs, t.v_node[1], t.v_node[0], 10, s)), s.tolist()))
    assert res[0] == res[1]


@needs_both
def test_pb_update_equivalence():
    p = np.random.default_rng(0).random(300)
    d1 = np.zeros(40)
    d1[0] = 1
    d2 = d1.copy()
    B["python"].pb_update(d1, p)
    B["cython"].pb_update(d2, p)
    assert np.allclose(d1, d2, rtol=0, atol=1e-15)


@needs_both
def test_prng_equivalence():
    s1, s2 = kernels.seed_walk_state(7), kernels.seed_walk_state(7)
    for n in (1, 2, 3, 1000, 2**31 + 5):
        assert B["python"].below(s1, n) == B["cython"].below(s2, n)
    assert B["python"].next_u64(s1) == B["cython"].next_u64(s2)


def test_uniform_below_big():
    s = kernels.seed_walk_state(3)
    n = 2**90 + 17
    xs = [kernels.uniform_below(s, n) for _ in range(200)]
    assert all(0 <= x < n for x in xs)
    assert max(xs) > 2**88
    with pytest.raises(ValueError):
        kernels.uniform_below(s, 0)


def test_compressed_walk_law():
    # a root with a big bundle: walk_compressed and step-by-step walk end in the same law
    t = CompressedTree.from_spec("single-edge")
    t.grow(Materialized(0), 30, 1)
    arrs = t.kernel_arrays()
    leaf = t.v_node[1]
    n = 20000
    a = np.zeros(t.n_nodes)
    b = np.zeros(t.n_nodes)
    s1, s2 = kernels.seed_walk_state(1), kernels.seed_walk_state(2)
    for _ in range(n):
        a[kernels.walk_compressed(*arrs, leaf, 7, s1)] += 1
        b[kernels.walk(*arrs, leaf, 7, s2)[0]] += 1
    assert 0.5 * np.abs(a - b).sum() / n < 0.02
