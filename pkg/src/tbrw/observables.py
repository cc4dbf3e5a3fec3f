"""Collectors for the measurable quantities of the process.

Growth-level observers work in every engine mode. Step-level ones (root
visits, full position logs) need EXACT mode and refuse to attach otherwise.
"""
from __future__ import annotations

import csv
import math
from bisect import bisect_left
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .engine import Observer, ProcessState
from .oracles import pa_target, tv_distance
from .tree import GrowthEvent


class ColoringUndefinedError(ValueError):
    pass


class LogCoverageError(ValueError):
    pass


class LeafBoundViolation(AssertionError):
    pass


# --------------------------------------------------------------------------
# good / bad intervals and the red/blue coloring


def classify_interval(k: int, delta_tau: int, delta: float) -> str:
    """``"good"`` iff ``delta_tau >= k^(2+delta) + 1``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return "good" if delta_tau >= float(k) ** (2.0 + delta) + 1.0 else "bad"


def _key_vertex(v):
    return ("v", v)


def _key_bundle(b):
    return ("b", b)


@dataclass
class RedBlueState:
    """Half-edge coloring. ``k`` counts edges, so the next event has index ``k + 1``."""

    k: int
    B: int
    R: int
    blue: dict  # vertex key -> blue degree
    delta: float = 0.1

    @classmethod
    def initial(cls, delta: float = 0.1) -> "RedBlueState":
        """Single edge with both half-edges blue: ``B = 2, R = 0, k = 1``."""
        return cls(1, 2, 0, {_key_vertex(0): 1, _key_vertex(1): 1}, delta)

    @classmethod
    def from_tree(cls, tree, delta: float = 0.1) -> "RedBlueState":
        if tree.bundle_members:
            raise ColoringUndefinedError("coloring starts from a fully materialised tree")
        if tree.n_edges < 1:
            raise ColoringUndefinedError("coloring needs an initial tree with at least one edge")
        blue = {_key_vertex(v): tree.v_deg[v] for v in range(tree.n_materialized)}
        return cls(tree.n_edges, 2 * tree.n_edges, 0, blue, delta)


def update_coloring(state: RedBlueState, event: GrowthEvent, interval: str,
                    rng: np.random.Generator) -> RedBlueState:
    """Color the two half-edges of a single-leaf event.

    bad: both red. good: the leaf's half-edge is blue; the parent's half-edge
    is blue with probability ``B / (2k)`` (values before the event).
    """
    if event.leaf_count != 1:
        raise ColoringUndefinedError(f"coloring is defined for single-leaf events, got {event.leaf_count}")
    if event.materialized_from is not None:
        state.blue[_key_vertex(event.parent)] = state.blue.pop(_key_bundle(event.materialized_from), 0)
    leaf = _key_bundle(event.new_bundle)
    parent = _key_vertex(event.parent)
    b_old, k_old = state.B, state.k
    if interval == "bad":
        state.R += 2
        state.blue[leaf] = 0
    elif interval == "good":
        state.blue[leaf] = 1
        state.B += 1
        if rng.random() * (2 * k_old) < b_old:
            state.blue[parent] = state.blue.get(parent, 0) + 1
            state.B += 1
        else:
            state.R += 1
    else:
        raise ValueError(f"interval must be good or bad, not {interval!r}")
    state.k += 1
    return state


def blue_degree_histogram(state: RedBlueState) -> dict[int, int]:
    """``B_k(d)``: vertices by blue degree, zeros included."""
    return dict(sorted(Counter(state.blue.values()).items()))


class ColoringObserver(Observer):
    """Runs the coloring along a single-leaf run; coins use the state's auxiliary stream."""

    name = "coloring"

    def __init__(self, delta: float = 0.1, checkpoints: Sequence[int] = ()):
        self.delta = delta
        self.checkpoints = set(int(c) for c in checkpoints)
        self.rows = []  # (k, B, R, good)
        self.at_checkpoint = {}

    def start(self, state: ProcessState) -> None:
        self.cs = RedBlueState.from_tree(state.tree, self.delta)
        self.rng = np.random.Generator(np.random.PCG64(state.aux_seed.spawn(1)[0]))
        self.k_offset = self.cs.k - state.k

    def on_growth(self, state, event, gap):
        k_new = self.cs.k + 1
        interval = classify_interval(k_new, gap, self.delta)
        update_coloring(self.cs, event, interval, self.rng)
        self.rows.append((self.cs.k, self.cs.B, self.cs.R, int(interval == "good")))
        if state.k in self.checkpoints:
            self.at_checkpoint[state.k] = {"B": self.cs.B, "R": self.cs.R, "k_edges": self.cs.k,
                                           "red_fraction": self.cs.R / (2 * self.cs.k)}

    def finish(self, state):
        return {"B": self.cs.B, "R": self.cs.R, "k_edges": self.cs.k,
                "red_fraction": self.cs.R / (2 * self.cs.k), "checkpoints": self.at_checkpoint,
                "blue_histogram": blue_degree_histogram(self.cs)}


# --------------------------------------------------------------------------
# tracked vertices


@dataclass
class TrackedVertex:
    """Degree history of the vertex born at growth event ``birth_k``.

    For a multi-leaf event the tracked vertex is the first member of the new
    bundle to take an id (members are exchangeable).
    """

    birth_k: int
    birth_time: int
    bundle: int | None
    vertex: int | None = None
    history: list = field(default_factory=list)  # (time, degree)
    eta: dict = field(default_factory=dict)  # d -> first time degree >= d
    max_d: int = 10_000

    def degree_at(self, t: int) -> int:
        i = bisect_left([h[0] for h in self.history], t + 1) - 1
        return self.history[i][1] if i >= 0 else 0

    def _record(self, time, degree):
        old = self.history[-1][1] if self.history else 0
        self.history.append((time, degree))
        for d in range(old + 1, min(degree, self.max_d) + 1):
            self.eta.setdefault(d, time)


class DegreeTracker(Observer):
    name = "tracked"

    def __init__(self, schedule: Sequence[int]):
        self.schedule = set(int(k) for k in schedule)
        self.tracked: dict[int, TrackedVertex] = {}

    def start(self, state):
        self.rng = np.random.Generator(np.random.PCG64(state.aux_seed.spawn(1)[0]))

    def on_growth(self, state, event, gap):
        for tv in self.tracked.values():
            if tv.vertex is None and event.materialized_from == tv.bundle:
                # the grown member is ours with probability 1 / (members before)
                m = state.tree.b_mult[tv.bundle] + 1
                if m == 1 or self.rng.random() * m < 1:
                    tv.vertex = event.parent
            if tv.vertex == event.parent:
                tv._record(event.time, state.tree.v_deg[event.parent])
        if state.k in self.schedule:
            tv = TrackedVertex(state.k, event.time, event.new_bundle)
            tv._record(event.time, 1)
            self.tracked[state.k] = tv

    def finish(self, state):
        return {k: {"history": tv.history, "eta": tv.eta} for k, tv in sorted(self.tracked.items())}


# --------------------------------------------------------------------------
# windows and red visits (EXACT only)


@dataclass(frozen=True)
class WindowSpec:
    start: int
    length: int
    kind: str = "growth-free"

    def __post_init__(self):
        if self.length < 1:
            raise ValueError("window length must be >= 1")


def window_root_visit_fraction(visits: np.ndarray, windows: Sequence[WindowSpec],
                               log_end: int) -> tuple[float, list[tuple[WindowSpec, bool]], list[WindowSpec]]:
    """Fraction of windows ``[n, n+L]`` containing a root visit.

    ``visits`` are sorted times ``j`` with ``X_j`` at the root; the log covers
    times ``0..log_end``. Windows past the log are skipped and returned.
    """
    visits = np.asarray(visits)
    flags = []
    skipped = []
    for w in windows:
        if w.start + w.length > log_end:
            skipped.append(w)
            continue
        i = int(np.searchsorted(visits, w.start, side="left"))
        flags.append((w, bool(i < len(visits) and visits[i] <= w.start + w.length)))
    frac = sum(f for _, f in flags) / len(flags) if flags else float("nan")
    return frac, flags, skipped


class RootVisitLog(Observer):
    name = "root_visits"
    wants = frozenset({"root_hits"})

    def __init__(self):
        self.parts = []

    def start(self, state):
        self.parts = [np.array([0], dtype=np.int64)] if state.pos == state.tree.v_node[state.tree.root] \
            else []

    def on_root_hits(self, times):
        if len(times):
            self.parts.append(np.array(times, dtype=np.int64))

    def finish(self, state):
        v = np.concatenate(self.parts) if self.parts else np.zeros(0, dtype=np.int64)
        return {"visits": v, "log_end": state.clock}


@dataclass
class StepLog:
    """Positions ``X_0..X_T`` as walk nodes plus each node's birth time."""

    positions: np.ndarray
    node_birth: np.ndarray

    @property
    def end(self) -> int:
        return len(self.positions) - 1


class StepLogger(Observer):
    name = "step_log"
    wants = frozenset({"trace"})

    def __init__(self, max_steps: int = 50_000_000):
        self.max_steps = max_steps

    def start(self, state):
        self.parts = [np.array([state.pos], dtype=np.int64)]
        self.n = 0

    def on_trace(self, t0, nodes):
        self.n += len(nodes)
        if self.n > self.max_steps:
            raise LogCoverageError("step log exceeds its configured size")
        self.parts.append(np.array(nodes, dtype=np.int64))

    def finish(self, state):
        t = state.tree
        births = np.array([t.b_birth[t.node_ref(n)] if t.is_bundle_node(n) else t.v_birth[t.node_ref(n)]
                           for n in range(t.n_nodes)], dtype=np.int64)
        return StepLog(np.concatenate(self.parts), births)


def red_visit_count(log: StepLog, t: int, s: int) -> int:
    """Times ``j`` in ``[t, t+s]`` with ``X_j`` born after time ``t``."""
    if t < 0 or s < 0 or t + s > log.end:
        raise LogCoverageError(f"log covers 0..{log.end}, asked for [{t}, {t + s}]")
    seg = log.positions[t:t + s + 1]
    return int(np.count_nonzero(log.node_birth[seg] > t))


# --------------------------------------------------------------------------
# growth-time snapshots


class SnapshotObserver(Observer):
    """Degree distribution, leaf fraction, tau trace and distance trace.

    Also asserts the leaf bound ``N(1) >= added - |V_0| - k`` at every event.
    """

    name = "snapshot"

    def __init__(self, checkpoints: Sequence[int], gamma: float | None = None,
                 delta: float = 0.1, tv_dmax: int = 50, record_every: bool = True,
                 strict: bool = True):
        self.checkpoints = sorted(set(int(c) for c in checkpoints))
        self.gamma = gamma
        self.delta = delta
        self.tv_dmax = tv_dmax
        self.record_every = record_every
        self.strict = strict

    def start(self, state):
        self.v0 = state.tree.n_vertices
        self.tau = []  # (k, tau_k, distance at tau_k)
        self.snap = {}
        self.leaf_bound_violations = 0
        self._next = 0

    def on_growth(self, state, event, gap):
        tree = state.tree
        k = state.k
        added = tree.n_vertices - self.v0
        if tree.leaf_count() < added - self.v0 - k:
            self.leaf_bound_violations += 1
            if self.strict:
                raise LeafBoundViolation(f"N(1)={tree.leaf_count()} < {added - self.v0 - k} at k={k}")
        if self.record_every:
            self.tau.append((k, state.clock, tree.node_depth(state.pos)))
        if k in self.checkpoints:
            V = tree.n_vertices
            hist = tree.degree_histogram()
            self.snap[k] = {"n_vertices": V, "hist": hist, "leaf_fraction": tree.leaf_count() / V,
                            "tv_pa": tv_to_pa(hist, V, self.tv_dmax), "tau": state.clock}

    def finish(self, state):
        return {"checkpoints": self.snap, "tau": self.tau,
                "leaf_bound_violations": self.leaf_bound_violations}


def degree_fractions(hist: dict, V: int) -> dict[int, float]:
    return {d: c / V for d, c in hist.items()}


def tv_to_pa(hist: dict, V: int, dmax: int = 50) -> float:
    """TV between the empirical degree law and the PA target restricted to ``1..dmax``."""
    p = {d: c / V for d, c in hist.items() if 1 <= d <= dmax}
    q = {d: pa_target(d) for d in range(1, dmax + 1)}
    return tv_distance(p, q)


def tau_statistic(k: int, tau: int, gamma: float, delta: float) -> float:
    """``k^(2+delta) / tau^gamma``."""
    return math.exp((2.0 + delta) * math.log(k) - gamma * math.log(tau))


def snapshot_observables(run, gamma: float | None = None, delta: float = 0.1,
                         coloring: dict | None = None) -> dict:
    """Per-checkpoint summary from a run result (or a bare snapshot report)."""
    if hasattr(run, "reports"):
        coloring = coloring or run.reports.get("coloring")
        report = run.reports["snapshot"]
    else:
        report = run
    out = {}
    for k, s in sorted(report["checkpoints"].items()):
        V = s["n_vertices"]
        row = {"n_vertices": V, "leaf_fraction": s["leaf_fraction"], "tv_pa": s["tv_pa"],
               "degree_fraction": degree_fractions(s["hist"], V), "tau": s["tau"]}
        if gamma is not None:
            row["tau_statistic"] = tau_statistic(k, s["tau"], gamma, delta)
        if coloring and k in coloring.get("checkpoints", {}):
            row["red_fraction"] = coloring["checkpoints"][k]["red_fraction"]
        out[k] = row
    return out


# --------------------------------------------------------------------------
# CSV writers


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, np.integer):
        return str(int(x))
    return str(x)


def _write(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) for x in r])


def write_degree_dist(path, snapshot_report: dict, dmax: int = 50) -> None:
    rows = []
    for k, s in sorted(snapshot_report["checkpoints"].items()):
        V = s["n_vertices"]
        hist = s["hist"]
        ds = list(range(1, dmax + 1)) + sorted(d for d in hist if d > dmax)
        for d in ds:
            c = hist.get(d, 0)
            frac = c / V
            tgt = pa_target(d)
            rows.append((k, d, c, frac, tgt, abs(frac - tgt)))
    _write(path, ["checkpoint_k", "d", "count", "fraction", "target", "abs_error"], rows)


def write_tau(path, snapshot_report: dict, gamma: float, delta: float) -> None:
    rows = [(k, t, tau_statistic(k, t, gamma, delta)) for k, t, _ in snapshot_report["tau"]]
    _write(path, ["k", "tau_k", "statistic"], rows)


def write_redblue(path, coloring_obs: ColoringObserver) -> None:
    _write(path, ["k", "B", "R", "good_flag"], coloring_obs.rows)


def write_distance(path, snapshot_report: dict) -> None:
    rows = [(k, t, d) for k, t, d in snapshot_report["tau"]]
    _write(path, ["k", "tau_k", "distance"], rows)


def write_windows(path, flags: Sequence[tuple[WindowSpec, bool]]) -> None:
    _write(path, ["n", "length", "visited_flag"], [(w.start, w.length, int(f)) for w, f in flags])


def read_csv(path) -> list[dict]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))
