"""Growing rooted tree with a root self-loop and compressed leaf bundles.

Leaves born together at one growth event form a *bundle* stored with a
multiplicity. A bundle member gets its own identity only when something
grows at it. Counts are Python ints, so bundles of 2**90 leaves are fine.

Besides the tree itself the class keeps the arrays the walk kernels read.
Every vertex and every bundle is one *walk node*. A node has a block of plain
options (parent or root loop, then materialised children) and a block of
bundle options, where a bundle of multiplicity m appears m times. Bundles
larger than ``SLOT_CAP`` are *heavy*: they are not expanded into slots, and
while any exists the compiled kernels are not used.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from . import kernels

SLOT_CAP = 1 << 16


class InvalidTreeError(ValueError):
    pass


class StaleReferenceError(ValueError):
    pass


@dataclass(frozen=True)
class Materialized:
    id: int


@dataclass(frozen=True)
class BundleMember:
    bundle: int


VertexRef = Materialized | BundleMember


@dataclass(frozen=True)
class GrowthEvent:
    time: int
    parent: int  # materialised vertex id
    leaf_count: int
    new_bundle: int | None
    materialized_from: int | None = None  # bundle the parent was taken from


@dataclass(frozen=True)
class WalkOption:
    kind: str  # "loop" | "parent" | "child" | "bundle"
    target: VertexRef
    weight: int


class _Pool:
    """Append-only int64 storage with per-node blocks that double on overflow."""

    __slots__ = ("data", "top")

    def __init__(self, cap=64):
        self.data = np.zeros(cap, dtype=np.int64)
        self.top = 0

    def alloc(self, n):
        if self.top + n > self.data.shape[0]:
            new = max(2 * self.data.shape[0], self.top + n)
            d = np.zeros(new, dtype=np.int64)
            d[: self.top] = self.data[: self.top]
            self.data = d
        start = self.top
        self.top += n
        return start


class CompressedTree:
    """See the module docstring. Build with :meth:`from_spec`."""

    def __init__(self):
        # walk-node arrays
        self._ncap = 0
        self.n_nodes = 0
        self._off = self._len = self._cap = None
        self._boff = self._blen = self._bcap = None
        self._slots = _Pool()
        self._bslots = _Pool()
        self._node_kind: list[int] = []  # 0 vertex, 1 bundle
        self._node_ref: list[int] = []
        self._grow_nodes(64)
        # vertices
        self.v_node: list[int] = []
        self.v_parent: list[int] = []
        self.v_birth: list[int] = []
        self.v_depth: list[int] = []
        self.v_deg: list[int] = []
        self.v_children: list[list[int]] = []
        self.v_bundles: list[list[int]] = []  # alive child bundles, creation order
        # bundles
        self.b_node: list[int] = []
        self.b_parent: list[int] = []
        self.b_mult: list[int] = []
        self.b_birth: list[int] = []
        self.b_heavy: list[bool] = []
        self._b_seg: list[int] = []  # segment start inside the parent's bundle block
        self._b_ends: list[int] = []  # start of this bundle's member entries in ends
        # one entry per half-edge (the root loop counts once)
        self._ends = _Pool(128)
        self.heavy: list[int] = []  # alive heavy bundle ids
        self.heavy_weight = 0
        self.hist: Counter = Counter()
        self.root = 0
        self.total_vertices = 0
        self.bundle_members = 0

    # ------------------------------------------------------------------
    # construction

    @classmethod
    def from_spec(cls, spec) -> "CompressedTree":
        """``"single-vertex"``, ``"single-edge"``, or ``{"edges": [[u, w], ...], "root": r}``.

        Edge-list vertices are numbered in breadth-first order from the root.
        """
        t = cls()
        if spec == "single-vertex":
            t._add_root()
            return t
        if spec == "single-edge":
            t._add_root()
            t._add_vertex(0, 0)
            return t
        if isinstance(spec, dict) and "edges" in spec:
            edges = [tuple(e) for e in spec["edges"]]
            if not edges:
                raise InvalidTreeError("empty edge list; use single-vertex")
            adj: dict = {}
            for u, w in edges:
                if u == w:
                    raise InvalidTreeError(f"self-loop at {u!r}")
                adj.setdefault(u, []).append(w)
                adj.setdefault(w, []).append(u)
            if len(edges) != len(adj) - 1:
                raise InvalidTreeError("edge count is not |V| - 1: cycle or disconnection")
            root = spec.get("root", edges[0][0])
            if root not in adj:
                raise InvalidTreeError(f"root {root!r} not in edge list")
            ids = {root: 0}
            t._add_root()
            queue = [root]
            for u in queue:
                for w in adj[u]:
                    if w in ids:
                        continue
                    ids[w] = t._add_vertex(ids[u], 0)
                    queue.append(w)
            if len(ids) != len(adj):
                raise InvalidTreeError("edge list is disconnected")
            return t
        raise InvalidTreeError(f"unknown initial tree spec {spec!r}")

    def _grow_nodes(self, need):
        if need <= self._ncap:
            return
        cap = max(need, 2 * self._ncap, 64)

        def ext(a):
            b = np.zeros(cap, dtype=np.int64)
            if a is not None:
                b[: self._ncap] = a[: self._ncap]
            return b

        self._off, self._len, self._cap = ext(self._off), ext(self._len), ext(self._cap)
        self._boff, self._blen, self._bcap = ext(self._boff), ext(self._blen), ext(self._bcap)
        self._ncap = cap

    def _new_node(self, kind, ref, pcap, bcap):
        n = self.n_nodes
        self._grow_nodes(n + 1)
        self.n_nodes += 1
        self._node_kind.append(kind)
        self._node_ref.append(ref)
        self._off[n] = self._slots.alloc(pcap)
        self._cap[n] = pcap
        self._len[n] = 0
        self._boff[n] = self._bslots.alloc(bcap) if bcap else 0
        self._bcap[n] = bcap
        self._blen[n] = 0
        return n

    def _push_slot(self, node, value):
        ln, cp = self._len[node], self._cap[node]
        if ln == cp:
            new = max(4, 2 * int(cp))
            start = self._slots.alloc(new)
            o = self._off[node]
            self._slots.data[start:start + ln] = self._slots.data[o:o + ln]
            self._off[node] = start
            self._cap[node] = new
        self._slots.data[self._off[node] + ln] = value
        self._len[node] = ln + 1

    def _reserve_bslots(self, node, extra):
        ln, cp = int(self._blen[node]), int(self._bcap[node])
        if ln + extra <= cp:
            return
        new = max(4, 2 * cp, ln + extra)
        start = self._bslots.alloc(new)
        o = self._boff[node]
        if ln:
            self._bslots.data[start:start + ln] = self._bslots.data[o:o + ln]
        self._boff[node] = start
        self._bcap[node] = new

    def _push_ends(self, values):
        k = len(values)
        s = self._ends.alloc(k)
        self._ends.data[s:s + k] = values
        return s

    def _set_deg(self, v, new):
        old = self.v_deg[v]
        self.hist[old] -= 1
        if not self.hist[old]:
            del self.hist[old]
        self.hist[new] += 1
        self.v_deg[v] = new

    def _add_root(self):
        node = self._new_node(0, 0, 4, 0)
        self._push_slot(node, node)  # root loop
        self._push_ends([node])
        self.v_node.append(node)
        self.v_parent.append(-1)
        self.v_birth.append(0)
        self.v_depth.append(0)
        self.v_deg.append(0)
        self.v_children.append([])
        self.v_bundles.append([])
        self.hist[0] += 1
        self.total_vertices = 1
        self.root = 0

    def _add_vertex(self, parent, birth, ends_pos=None):
        """New materialised leaf under ``parent``. Returns its id."""
        vid = len(self.v_node)
        pnode = self.v_node[parent]
        node = self._new_node(0, vid, 2, 0)
        self._push_slot(node, pnode)
        self._push_slot(pnode, node)
        self.v_node.append(node)
        self.v_parent.append(parent)
        self.v_birth.append(birth)
        self.v_depth.append(self.v_depth[parent] + 1)
        self.v_deg.append(1)
        self.v_children.append([])
        self.v_bundles.append([])
        self.v_children[parent].append(vid)
        if ends_pos is None:
            self.hist[1] += 1
            self._push_ends([pnode, node])
            self._set_deg(parent, self.v_deg[parent] + 1)
            self.total_vertices += 1
        else:
            # a bundle member taking an id: degrees and counts are unchanged
            self._ends.data[ends_pos] = node
        return vid

    # ------------------------------------------------------------------
    # references

    def node_of(self, ref: VertexRef) -> int:
        if isinstance(ref, Materialized):
            if not 0 <= ref.id < len(self.v_node):
                raise StaleReferenceError(f"no vertex {ref.id}")
            return self.v_node[ref.id]
        if isinstance(ref, BundleMember):
            b = ref.bundle
            if not 0 <= b < len(self.b_node) or self.b_mult[b] < 1:
                raise StaleReferenceError(f"bundle {b} is empty or unknown")
            return self.b_node[b]
        raise StaleReferenceError(f"not a vertex reference: {ref!r}")

    def ref_of(self, node: int) -> VertexRef:
        if self._node_kind[node] == 0:
            return Materialized(self._node_ref[node])
        return BundleMember(self._node_ref[node])

    def is_bundle_node(self, node: int) -> bool:
        return self._node_kind[node] == 1

    def node_ref(self, node: int) -> int:
        """Vertex id or bundle id behind a node."""
        return self._node_ref[node]

    def node_alive(self, node: int) -> bool:
        if self._node_kind[node] == 0:
            return True
        return self.b_mult[self._node_ref[node]] >= 1

    # ------------------------------------------------------------------
    # growth

    def materialize(self, bundle: int) -> int:
        """Give one member of ``bundle`` its own vertex id. Degrees do not change."""
        if not 0 <= bundle < len(self.b_node) or self.b_mult[bundle] < 1:
            raise StaleReferenceError(f"bundle {bundle} is empty or unknown")
        parent = self.b_parent[bundle]
        m = self.b_mult[bundle]
        pnode = self.v_node[parent]
        if self.b_heavy[bundle]:
            self.heavy_weight -= 2
            # the new leaf's half-edges move to the ends array
            s = self._push_ends([pnode, 0])
            ends_pos = s + 1
        else:
            ends_pos = self._b_ends[bundle] + m - 1
            self._drop_bslot(parent, bundle)
        self.b_mult[bundle] = m - 1
        self.bundle_members -= 1
        vid = self._add_vertex(parent, self.b_birth[bundle], ends_pos=ends_pos)
        if m - 1 == 0:
            self.v_bundles[parent].remove(bundle)
            if self.b_heavy[bundle]:
                self.heavy.remove(bundle)
        return vid

    def _drop_bslot(self, parent, bundle):
        # shift later segments left by one slot; entries within a segment are equal
        pnode = self.v_node[parent]
        base = int(self._boff[pnode])
        data = self._bslots.data
        after = False
        for c in self.v_bundles[parent]:
            if c == bundle:
                after = True
                continue
            if after and not self.b_heavy[c]:
                seg = self._b_seg[c]
                data[base + seg - 1] = self.b_node[c]
                self._b_seg[c] = seg - 1
        self._blen[pnode] -= 1

    def grow(self, at: VertexRef, count: int, time: int) -> GrowthEvent:
        """Attach a bundle of ``count`` new leaves at ``at``."""
        count = int(count)
        if count < 1:
            raise ValueError("count must be >= 1")
        src = None
        if isinstance(at, BundleMember):
            self.node_of(at)
            src = at.bundle
            v = self.materialize(at.bundle)
        else:
            self.node_of(at)
            v = at.id
        bid = self._add_bundle(v, count, time)
        return GrowthEvent(time, v, count, bid, src)

    def _add_bundle(self, v, count, time):
        bid = len(self.b_node)
        vnode = self.v_node[v]
        node = self._new_node(1, bid, 1, 0)
        self._push_slot(node, vnode)
        heavy = count > SLOT_CAP
        self.b_node.append(node)
        self.b_parent.append(v)
        self.b_mult.append(count)
        self.b_birth.append(time)
        self.b_heavy.append(heavy)
        if heavy:
            self._b_seg.append(-1)
            self._b_ends.append(-1)
            self.heavy.append(bid)
            self.heavy_weight += 2 * count
        else:
            self._reserve_bslots(vnode, count)
            ln = int(self._blen[vnode])
            s = int(self._boff[vnode]) + ln
            self._bslots.data[s:s + count] = node
            self._blen[vnode] = ln + count
            self._b_seg.append(ln)
            e = self._push_ends(np.full(2 * count, vnode, dtype=np.int64))
            self._ends.data[e + count:e + 2 * count] = node
            self._b_ends.append(e + count)
        self.v_bundles[v].append(bid)
        self._set_deg(v, self.v_deg[v] + count)
        self.hist[1] += count
        self.total_vertices += count
        self.bundle_members += count
        return bid

    # ------------------------------------------------------------------
    # queries

    @property
    def n_vertices(self) -> int:
        return self.total_vertices

    @property
    def n_materialized(self) -> int:
        return len(self.v_node)

    @property
    def n_edges(self) -> int:
        return self.total_vertices - 1

    @property
    def kernel_ok(self) -> bool:
        """True when the compiled walk kernels see every option (no heavy bundles)."""
        return not self.heavy

    def walk_degree(self, node: int) -> int:
        if self._node_kind[node] == 1:
            return 1
        v = self._node_ref[node]
        return self.v_deg[v] + (1 if v == self.root else 0)

    def walk_options(self, at: VertexRef) -> list[WalkOption]:
        node = self.node_of(at)
        if self._node_kind[node] == 1:
            return [WalkOption("parent", Materialized(self.b_parent[at.bundle]), 1)]
        v = at.id
        out = []
        if v == self.root:
            out.append(WalkOption("loop", Materialized(v), 1))
        else:
            out.append(WalkOption("parent", Materialized(self.v_parent[v]), 1))
        out.extend(WalkOption("child", Materialized(c), 1) for c in self.v_children[v])
        out.extend(WalkOption("bundle", BundleMember(b), self.b_mult[b]) for b in self.v_bundles[v])
        return out

    def degree_histogram(self) -> dict[int, int]:
        return {d: c for d, c in sorted(self.hist.items()) if c}

    def degree(self, at: VertexRef) -> int:
        node = self.node_of(at)
        if self._node_kind[node] == 1:
            return 1
        return self.v_deg[at.id]

    def distance_to_root(self, at: VertexRef) -> int:
        node = self.node_of(at)
        if self._node_kind[node] == 1:
            return self.v_depth[self.b_parent[at.bundle]] + 1
        return self.v_depth[at.id]

    def node_depth(self, node: int) -> int:
        r = self._node_ref[node]
        if self._node_kind[node] == 1:
            return self.v_depth[self.b_parent[r]] + 1
        return self.v_depth[r]

    def leaf_count(self) -> int:
        return self.hist.get(1, 0)

    # ------------------------------------------------------------------
    # walking helpers

    def kernel_arrays(self):
        n = self.n_nodes
        return (self._off[:n], self._len[:n], self._slots.data,
                self._boff[:n], self._blen[:n], self._bslots.data)

    def step_node(self, node: int, wstate: np.ndarray) -> int:
        """One uniform move from ``node``; consumes the walk stream like the kernels."""
        if self.kernel_ok:
            n = int(self._len[node])
            u = kernels.uniform_below(wstate, n + int(self._blen[node]))
            if u < n:
                return int(self._slots.data[self._off[node] + u])
            return int(self._bslots.data[self._boff[node] + u - n])
        if self._node_kind[node] == 1:
            return self.v_node[self.b_parent[self._node_ref[node]]]
        v = self._node_ref[node]
        n = int(self._len[node])
        total = n + int(self._blen[node]) + sum(self.b_mult[b] for b in self.v_bundles[v] if self.b_heavy[b])
        u = kernels.uniform_below(wstate, total)
        if u < n:
            return int(self._slots.data[self._off[node] + u])
        u -= n
        bl = int(self._blen[node])
        if u < bl:
            return int(self._bslots.data[self._boff[node] + u])
        u -= bl
        for b in self.v_bundles[v]:
            if self.b_heavy[b]:
                if u < self.b_mult[b]:
                    return self.b_node[b]
                u -= self.b_mult[b]
        raise AssertionError("walk option sampling fell through")

    def stationary_node(self, wstate: np.ndarray) -> int:
        """Draw a node from the frozen walk's stationary law (weight = walk-degree)."""
        ne = self._ends.top
        u = kernels.uniform_below(wstate, ne + self.heavy_weight)
        if u < ne:
            return int(self._ends.data[u])
        u -= ne
        for b in self.heavy:
            m = self.b_mult[b]
            if u < m:
                return self.v_node[self.b_parent[b]]
            u -= m
            if u < m:
                return self.b_node[b]
            u -= m
        raise AssertionError("stationary sampling fell through")

    def alive_nodes(self) -> list[int]:
        return [n for n in range(self.n_nodes) if self.node_alive(n)]

    def lumped_chain(self, max_states: int | None = None):
        """``(nodes, P)``: the walk on vertices and bundles, bundle members lumped.

        Members of one bundle are exchangeable, so the quotient is exact.
        """
        nodes = self.alive_nodes()
        if max_states is not None and len(nodes) > max_states:
            raise StateExplosionError(f"{len(nodes)} lumped states exceed max_states={max_states}")
        index = {n: i for i, n in enumerate(nodes)}
        S = len(nodes)
        P = np.zeros((S, S))
        for i, node in enumerate(nodes):
            if self._node_kind[node] == 1:
                P[i, index[self.v_node[self.b_parent[self._node_ref[node]]]]] = 1.0
                continue
            v = self._node_ref[node]
            W = self.v_deg[v] + (1 if v == self.root else 0)
            if v == self.root:
                P[i, i] += 1.0 / W
            else:
                P[i, index[self.v_node[self.v_parent[v]]]] += 1.0 / W
            for c in self.v_children[v]:
                P[i, index[self.v_node[c]]] += 1.0 / W
            for b in self.v_bundles[v]:
                P[i, index[self.b_node[b]]] += self.b_mult[b] / W
        return nodes, P

    # ------------------------------------------------------------------
    # expansion and snapshots

    def expanded_parents(self, max_vertices: int = 100_000):
        """Fully materialised parent array (root has -1) plus node -> expanded ids.

        Vertex ids keep their numbers; bundle members follow in bundle order.
        """
        if self.total_vertices > max_vertices:
            raise ValueError(f"tree has {self.total_vertices} vertices (> {max_vertices})")
        parents = list(self.v_parent)
        members: dict[int, list[int]] = {}
        for v in range(len(self.v_node)):
            members[self.v_node[v]] = [v]
        for b in range(len(self.b_node)):
            m = self.b_mult[b]
            if m < 1:
                continue
            ids = list(range(len(parents), len(parents) + m))
            parents.extend([self.b_parent[b]] * m)
            members[self.b_node[b]] = ids
        return parents, members

    def to_text(self) -> str:
        lines = [f"root {self.root}"]
        for v in range(len(self.v_node)):
            if v != self.root:
                lines.append(f"{self.v_parent[v]} {v} {self.v_birth[v]}")
        for b in range(len(self.b_node)):
            if self.b_mult[b] >= 1:
                lines.append(f"bundle {self.b_parent[b]} {self.b_mult[b]} {self.b_birth[b]}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "CompressedTree":
        """Inverse of :meth:`to_text` (bundle ids are renumbered densely)."""
        t = cls()
        rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        if not rows or rows[0][0] != "root":
            raise InvalidTreeError("snapshot must start with a root line")
        if int(rows[0][1]) != 0:
            raise InvalidTreeError("snapshot root must be vertex 0")
        t._add_root()
        bundles = []
        for r in rows[1:]:
            if r[0] == "bundle":
                bundles.append((int(r[1]), int(r[2]), int(r[3])))
                continue
            parent, child, birth = int(r[0]), int(r[1]), int(r[2])
            if child != len(t.v_node) or not 0 <= parent < child:
                raise InvalidTreeError(f"vertex {child} out of materialisation order")
            t._add_vertex(parent, birth)
        for parent, m, birth in bundles:
            if not 0 <= parent < len(t.v_node) or m < 1:
                raise InvalidTreeError(f"bad bundle line for parent {parent}")
            t._add_bundle(parent, m, birth)
        return t

    # ------------------------------------------------------------------
    # audit

    def audit(self) -> None:
        """Recompute everything from the parent links and compare. Raises AssertionError."""
        nv = len(self.v_node)
        alive = [b for b in range(len(self.b_node)) if self.b_mult[b] >= 1]
        members = sum(self.b_mult[b] for b in alive)
        assert self.total_vertices == nv + members
        assert self.bundle_members == members
        deg = [0] * nv
        for v in range(nv):
            p = self.v_parent[v]
            if v == self.root:
                assert p == -1 and self.v_depth[v] == 0
                continue
            assert self.v_depth[v] == self.v_depth[p] + 1
            deg[v] += 1
            deg[p] += 1
        for b in alive:
            deg[self.b_parent[b]] += self.b_mult[b]
        assert deg == self.v_deg, "degree bookkeeping drifted"
        for b in range(len(self.b_node)):
            assert (self.b_mult[b] >= 1) == (b in self.v_bundles[self.b_parent[b]])
        hist = Counter(deg)
        hist[1] += members
        assert +hist == +self.hist, (hist, self.hist)
        assert sum(hist.values()) == self.total_vertices
        assert sum(d * c for d, c in hist.items()) == 2 * (self.total_vertices - 1)
        # kernel view matches walk options
        for v in range(nv):
            node = self.v_node[v]
            o, ln = int(self._off[node]), int(self._len[node])
            plain = list(self._slots.data[o:o + ln])
            want = [node if v == self.root else self.v_node[self.v_parent[v]]]
            want += [self.v_node[c] for c in self.v_children[v]]
            assert plain == want, (v, plain, want)
            bo, bl = int(self._boff[node]), int(self._blen[node])
            got = Counter(int(x) for x in self._bslots.data[bo:bo + bl])
            want_b = Counter({self.b_node[b]: self.b_mult[b]
                              for b in self.v_bundles[v] if not self.b_heavy[b]})
            assert got == want_b, (v, got, want_b)
        ends = Counter(int(x) for x in self._ends.data[: self._ends.top])
        for v in range(nv):
            heavy_here = sum(self.b_mult[b] for b in self.v_bundles[v] if self.b_heavy[b])
            w = self.v_deg[v] + (1 if v == self.root else 0) - heavy_here
            assert ends.get(self.v_node[v], 0) == w, ("ends", v)
        for b in alive:
            if not self.b_heavy[b]:
                assert ends.get(self.b_node[b], 0) == self.b_mult[b]
        assert self.heavy_weight == 2 * sum(self.b_mult[b] for b in self.heavy)


class StateExplosionError(RuntimeError):
    pass
