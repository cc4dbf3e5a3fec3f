"""Compiled vs pure-Python kernels.

    python3 benchmarks/bench_kernels.py [--steps N] [--repeat R] [--vertices V]

Kernel timings call both backends in-process on the same tree and seed and
check that they return identical results. The end-to-end timing runs a short
EXACT growth run in a subprocess per backend, since the backend is chosen at
import (``TBRW_PURE_PYTHON=1``).
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from tbrw import kernels
from tbrw.tree import CompressedTree

E2E = """
import time
from tbrw.engine import Horizon, make_state, mode_from_config, run
from tbrw.kernels import IMPLEMENTATION
from tbrw.laws import LawSequence
law = LawSequence.from_config({"variant": "BernoulliPower", "gamma": 0.75})
s = make_state(law, "single-edge", 7)
t = time.perf_counter()
r = run(s, mode_from_config({"kind": "exact"}), Horizon(max_growth=%d), [])
print(IMPLEMENTATION, time.perf_counter() - t, r.state.clock)
"""


def random_tree(n_events: int, seed: int) -> CompressedTree:
    rng = np.random.default_rng(seed)
    t = CompressedTree.from_spec("single-edge")
    for i in range(1, n_events + 1):
        nodes = t.alive_nodes()
        count = 1 if rng.random() < 0.9 else int(rng.integers(2, 40))
        t.grow(t.ref_of(nodes[int(rng.integers(len(nodes)))]), count, i)
    return t


def _pb(k, p):
    dist = np.r_[1.0, np.zeros(len(p))]
    k.pb_update(dist, p)
    return dist.round(12).tolist()


def bench(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--vertices", type=int, default=2000, help="growth events used to build the tree")
    ap.add_argument("--events", type=int, default=150, help="growth events in the end-to-end run")
    args = ap.parse_args(argv)

    be = kernels.backends()
    if "cython" not in be:
        print("compiled extension not built; only the Python backend is available", file=sys.stderr)
    tree = random_tree(args.vertices, 1)
    arrs = tree.kernel_arrays()
    start = tree.v_node[0]
    n = args.steps
    p = np.full(2000, 0.3)

    cases = {
        "walk": lambda k: k.walk(*arrs, start, n, kernels.seed_walk_state(3), start, None, None),
        "walk+trace": lambda k: k.walk(*arrs, start, n, kernels.seed_walk_state(3), -1, None,
                                       np.empty(n, dtype=np.int64)),
        "walk_compressed": lambda k: k.walk_compressed(*arrs, start, n, kernels.seed_walk_state(3)),
        "hit_walk": lambda k: k.hit_walk(*arrs, start, start, max(1, n // 2000), kernels.seed_walk_state(3)),
        "pb_update": lambda k: _pb(k, p),
    }
    print(f"tree: {tree.n_vertices} vertices, {len(tree.b_node)} bundles created; {n} steps per walk call")
    print(f"{'kernel':<16}{'python s':>12}{'cython s':>12}{'speedup':>10}  same result")
    for name, call in cases.items():
        res = {b: call(m) for b, m in be.items()}
        same = len({repr(r) for r in res.values()}) == 1
        tp = bench(lambda: call(be["python"]), args.repeat)
        if "cython" in be:
            tc = bench(lambda: call(be["cython"]), args.repeat)
            print(f"{name:<16}{tp:>12.4f}{tc:>12.4f}{tp / tc:>10.1f}  {same}")
        else:
            print(f"{name:<16}{tp:>12.4f}{'-':>12}{'-':>10}")

    print(f"\nend to end: EXACT, gamma=0.75, {args.events} growth events")
    for pure in ("1", "0"):
        env = dict(os.environ, TBRW_PURE_PYTHON=pure)
        r = subprocess.run([sys.executable, "-c", E2E % args.events], env=env, capture_output=True, text=True)
        if r.returncode:
            print(r.stderr.strip(), file=sys.stderr)
            continue
        impl, secs, clock = r.stdout.split()
        print(f"  {impl:<8} {float(secs):8.2f} s  {int(clock)} steps  {int(clock) / float(secs):,.0f} steps/s")


if __name__ == "__main__":
    main()
