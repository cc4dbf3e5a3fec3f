"""Advancing the coupled (tree, walker) chain.

Time convention: the step taken from clock ``c`` draws ``Z_{c+1}``, grows
that many leaves at the walker, then moves the walker uniformly over the
updated tree; afterwards the clock reads ``c + 1``. A growth time ``tau`` is
therefore the clock value right after its growth step, and leaves born then
carry birth time ``tau``.

Three strategies, fixed per run:

* ``Exact`` -- every move is simulated. Between growths the gap is drawn by
  thinning (same law as stepping one Bernoulli at a time) and the walk runs
  in the compiled kernel.
* ``Shortcut`` -- the walker position right before a growth is drawn from the
  frozen tree's stationary law when the gap is past a mixing threshold, else
  simulated exactly.
* ``Lumped`` -- the exact (gap-1)-step law on the bundle-lumped chain by
  repeated squaring.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Iterable, TextIO

import numpy as np

from . import kernels
from .laws import LawSequence, sample_z
from .tree import CompressedTree, GrowthEvent, Materialized, VertexRef


class EngineError(RuntimeError):
    pass


class NoMoreGrowth(EngineError):
    """The growth probability is zero for every remaining step."""


class BudgetExceededError(EngineError):
    pass


class ObserverError(EngineError):
    pass


# --------------------------------------------------------------------------
# modes


@dataclass(frozen=True)
class Exact:
    name = "exact"


@dataclass(frozen=True)
class Lumped:
    max_states: int = 200
    name = "lumped"


@dataclass(frozen=True)
class Shortcut:
    epsilon: float = 0.01
    policy: str = "rigorous"  # rigorous | fast
    coefficient: float = 8.0
    fallback_cap: int = 10**9
    lumped: Lumped | None = None  # transport beyond fallback_cap, if set
    name = "shortcut"

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if self.fallback_cap < 1:
            raise ValueError("fallback_cap must be >= 1")
        if self.policy not in ("rigorous", "fast"):
            raise ValueError("policy must be rigorous or fast")


EngineMode = Exact | Shortcut | Lumped


def mode_from_config(cfg: dict) -> EngineMode:
    kind = cfg.get("kind", "exact").lower()
    if kind == "exact":
        return Exact()
    if kind == "lumped":
        return Lumped(int(cfg.get("max_states", 200)))
    if kind == "shortcut":
        lump = cfg.get("lumped_max_states")
        return Shortcut(epsilon=float(cfg.get("epsilon", 0.01)),
                        policy=cfg.get("policy", "rigorous").lower(),
                        coefficient=float(cfg.get("coefficient", 8.0)),
                        fallback_cap=int(float(cfg.get("fallback_cap", 1e9))),
                        lumped=Lumped(int(lump)) if lump else None)
    raise ValueError(f"unknown engine mode {kind!r}")


def mode_to_config(mode: EngineMode) -> dict:
    if isinstance(mode, Exact):
        return {"kind": "exact"}
    if isinstance(mode, Lumped):
        return {"kind": "lumped", "max_states": mode.max_states}
    d = {"kind": "shortcut", "epsilon": mode.epsilon, "policy": mode.policy,
         "coefficient": mode.coefficient, "fallback_cap": mode.fallback_cap}
    if mode.lumped:
        d["lumped_max_states"] = mode.lumped.max_states
    return d


def mixing_threshold(vertex_count: int, epsilon: float, policy: str = "rigorous",
                     coefficient: float = 8.0) -> int:
    """Steps after which the frozen walk is treated as mixed.

    rigorous: ``ceil(2 |V|^2 ln(1/eps))``; fast: ``ceil(c |V| log2(|V|)^2 ln(1/eps))``.
    """
    if vertex_count < 1:
        raise ValueError("vertex_count must be >= 1")
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    L = -math.log(epsilon)
    V = float(vertex_count)
    if policy == "rigorous":
        x = 2.0 * V * V * L
    elif policy == "fast":
        x = coefficient * V * math.log2(V) ** 2 * L
    else:
        raise ValueError("policy must be rigorous or fast")
    # absorb last-bit noise in ln(1/eps) so exact products do not round up
    return int(math.ceil(x * (1.0 - 4e-16)))


# --------------------------------------------------------------------------
# state


@dataclass
class ProcessState:
    tree: CompressedTree
    pos: int  # walk node
    clock: int
    law: LawSequence
    rng: np.random.Generator  # leaf counts, gaps, lumped draws
    wstate: np.ndarray  # xoshiro256** state for moves
    k: int = 0
    pending_z: int | None = None
    aux_seed: np.random.SeedSequence | None = None  # for observers that need coins

    @property
    def position(self) -> VertexRef:
        return self.tree.ref_of(self.pos)


def make_state(law: LawSequence, initial: Any = "single-vertex", seed: Any = 0,
               start: int | None = None) -> ProcessState:
    """Fresh process. ``seed`` is an int or a ``SeedSequence``; ``start`` a vertex id."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    s_law, s_walk, s_aux = ss.spawn(3)
    tree = CompressedTree.from_spec(initial)
    v = tree.root if start is None else int(start)
    pos = tree.node_of(Materialized(v))
    wseed = int(s_walk.generate_state(1, np.uint64)[0])
    return ProcessState(tree, pos, 0, law, np.random.Generator(np.random.PCG64(s_law)),
                        kernels.seed_walk_state(wseed), aux_seed=s_aux)


# --------------------------------------------------------------------------
# single steps


def _grow_here(state: ProcessState, z: int) -> GrowthEvent:
    tree = state.tree
    ev = tree.grow(tree.ref_of(state.pos), z, state.clock + 1)
    state.pos = tree.v_node[ev.parent]
    state.k += 1
    return ev


def step_exact(state: ProcessState) -> tuple[ProcessState, list[GrowthEvent]]:
    """One step of the chain: draw Z, grow at the walker, then move."""
    n = state.clock + 1
    z = sample_z(state.law, n, state.rng, k=state.k + 1)
    events = []
    if z >= 1:
        events.append(_grow_here(state, z))
    state.pos = state.tree.step_node(state.pos, state.wstate)
    state.clock = n
    return state, events


def _geometric(rng: np.random.Generator, p: float) -> int:
    if p >= 1.0:
        return 1
    u = 1.0 - rng.random()  # (0, 1]
    return int(math.floor(math.log(u) / math.log1p(-p))) + 1


def sample_next_growth(state: ProcessState) -> tuple[int, int]:
    """``(gap, z)``: steps until the next step with ``Z >= 1``, and that ``Z``.

    Thinning: propose with the envelope probability, accept with
    ``p_t / envelope``, tighten the envelope after each rejection.
    """
    law = state.law
    rng = state.rng
    t = state.clock
    bound = law.envelope(t)
    while True:
        if bound <= 0.0:
            raise NoMoreGrowth(f"no growth possible after clock {state.clock}")
        t += _geometric(rng, bound)
        p = law.growth_prob(t)
        if rng.random() * bound < p:
            z = law.growth_value(t, state.k + 1)
            if z >= 1:
                return t - state.clock, z
        bound = law.envelope(t)


# --------------------------------------------------------------------------
# inter-growth transport


def lumped_transport(tree: CompressedTree, start: int, m: int, max_states: int) -> tuple[list[int], np.ndarray]:
    """Exact law of the position after ``m`` moves, on lumped states."""
    nodes, P = tree.lumped_chain(max_states)
    idx = nodes.index(start)
    v = np.zeros(len(nodes))
    v[idx] = 1.0
    Q = P
    r = int(m)
    while r:
        if r & 1:
            v = v @ Q
            v /= v.sum()
        r >>= 1
        if r:
            Q = Q @ Q
            Q /= Q.sum(axis=1, keepdims=True)
    return nodes, v


def _sample_index(rng: np.random.Generator, w: np.ndarray) -> int:
    c = np.cumsum(w)
    i = int(np.searchsorted(c, rng.random() * c[-1], side="right"))
    return min(i, len(w) - 1)


def _walk_exact_endpoint(state: ProcessState, m: int) -> None:
    tree = state.tree
    if m <= 0:
        return
    if tree.kernel_ok:
        state.pos = int(kernels.walk_compressed(*tree.kernel_arrays(), state.pos, m, state.wstate))
    else:
        for _ in range(m):
            state.pos = tree.step_node(state.pos, state.wstate)


@dataclass
class TransportStats:
    stationary: int = 0
    exact: int = 0
    lumped: int = 0
    exact_steps: int = 0

    def as_dict(self):
        return dict(self.__dict__)


def advance_to_next_growth(state: ProcessState, mode: EngineMode,
                           stats: TransportStats | None = None) -> tuple[ProcessState, int]:
    """Move to time ``tau - 1`` of the next growth; the growth itself stays pending."""
    if isinstance(mode, Exact):
        raise EngineError("advance_to_next_growth needs SHORTCUT or LUMPED; loop step_exact for EXACT")
    gap, z = sample_next_growth(state)
    m = gap - 1
    tree = state.tree
    st = stats or TransportStats()
    if isinstance(mode, Lumped):
        if m > 0:
            nodes, v = lumped_transport(tree, state.pos, m, mode.max_states)
            state.pos = nodes[_sample_index(state.rng, v)]
        st.lumped += 1
    else:
        thr = mixing_threshold(tree.n_vertices, mode.epsilon, mode.policy, mode.coefficient)
        if m >= thr:
            state.pos = tree.stationary_node(state.wstate)
            st.stationary += 1
        elif m <= mode.fallback_cap:
            _walk_exact_endpoint(state, m)
            st.exact += 1
            st.exact_steps += m
        elif mode.lumped is not None:
            if m > 0:
                nodes, v = lumped_transport(tree, state.pos, m, mode.lumped.max_states)
                state.pos = nodes[_sample_index(state.rng, v)]
            st.lumped += 1
        else:
            raise BudgetExceededError(
                f"gap-1 = {m} exceeds fallback_cap {mode.fallback_cap} below the mixing "
                f"threshold {thr} and no lumped fallback is configured")
    state.clock += m
    state.pending_z = z
    return state, gap


def apply_pending_growth(state: ProcessState) -> GrowthEvent:
    """The growth step at ``tau``: grow the pending leaves, then move once."""
    if state.pending_z is None:
        raise EngineError("no pending growth")
    ev = _grow_here(state, state.pending_z)
    state.pending_z = None
    state.pos = state.tree.step_node(state.pos, state.wstate)
    state.clock += 1
    return ev


# --------------------------------------------------------------------------
# observers and the run loop


class Observer:
    """Base collector. Subclasses override the hooks they need.

    ``wants`` may contain ``"root_hits"`` (absolute times the walker sits on
    the root) and ``"trace"`` (every position); both need EXACT mode.
    """

    name = "observer"
    requires_exact = False
    wants: frozenset = frozenset()

    def start(self, state: ProcessState) -> None:
        pass

    def on_growth(self, state: ProcessState, event: GrowthEvent, gap: int) -> None:
        pass

    def on_root_hits(self, times: np.ndarray) -> None:
        pass

    def on_trace(self, t0: int, nodes: np.ndarray) -> None:
        """Positions after steps ``t0+1 .. t0+len(nodes)``."""

    def finish(self, state: ProcessState) -> Any:
        return None


@dataclass
class Horizon:
    max_steps: int | None = None
    max_growth: int | None = None
    max_vertices: int | None = None

    @classmethod
    def from_config(cls, cfg: dict) -> "Horizon":
        h = cls(**{k: int(float(v)) for k, v in cfg.items()})
        if h.max_steps is None and h.max_growth is None and h.max_vertices is None:
            raise ValueError("horizon needs max_steps, max_growth or max_vertices")
        if any(v is not None and v < 0 for v in (h.max_steps, h.max_growth, h.max_vertices)):
            raise ValueError("horizon bounds must be nonnegative")
        return h

    def done(self, state: ProcessState) -> bool:
        if self.max_growth is not None and state.k >= self.max_growth:
            return True
        if self.max_vertices is not None and state.tree.n_vertices >= self.max_vertices:
            return True
        if self.max_steps is not None and state.clock >= self.max_steps:
            return True
        return False


@dataclass
class RunResult:
    state: ProcessState
    reports: dict
    stats: TransportStats
    stopped: str = "horizon"


_CHUNK = 1 << 22


def _node_label(tree: CompressedTree, node: int) -> str:
    r = tree.node_ref(node)
    return f"b{r}" if tree.is_bundle_node(node) else str(r)


class _ExactWalker:
    """Runs EXACT walk segments in the kernel and feeds recorders."""

    def __init__(self, state, observers, stream):
        self.state = state
        self.hit_obs = [o for o in observers if "root_hits" in o.wants]
        self.trace_obs = [o for o in observers if "trace" in o.wants]
        self.stream = stream

    def walk(self, m: int) -> None:
        st = self.state
        tree = st.tree
        need_trace = bool(self.trace_obs) or self.stream is not None
        while m > 0:
            c = min(m, _CHUNK)
            prev = st.pos
            if not tree.kernel_ok:
                nodes = np.empty(c, dtype=np.int64)
                for i in range(c):
                    st.pos = tree.step_node(st.pos, st.wstate)
                    nodes[i] = st.pos
                self._emit(st.clock, prev, nodes)
            elif need_trace:
                nodes = np.empty(c, dtype=np.int64)
                st.pos, _ = kernels.walk(*tree.kernel_arrays(), st.pos, c, st.wstate, -1, None, nodes)
                self._emit(st.clock, prev, nodes)
            elif self.hit_obs:
                root_node = tree.v_node[tree.root]
                hits = np.empty(c, dtype=np.int64)
                st.pos, nh = kernels.walk(*tree.kernel_arrays(), st.pos, c, st.wstate, root_node, hits)
                times = hits[:nh] + st.clock
                for o in self.hit_obs:
                    o.on_root_hits(times)
            else:
                st.pos = kernels.walk_compressed(*tree.kernel_arrays(), st.pos, c, st.wstate)
            st.pos = int(st.pos)
            st.clock += c
            m -= c

    def _emit(self, t0, prev, nodes):
        tree = self.state.tree
        if self.hit_obs:
            times = np.flatnonzero(nodes == tree.v_node[tree.root]) + 1 + t0
            for o in self.hit_obs:
                o.on_root_hits(times)
        for o in self.trace_obs:
            o.on_trace(t0, nodes)
        if self.stream is not None:
            lines = []
            p = prev
            for i, x in enumerate(nodes.tolist()):
                lines.append(f"step {t0 + i + 1} {_node_label(tree, p)} {_node_label(tree, x)}\n")
                p = x
            self.stream.write("".join(lines))

    def growth_step(self, z: int) -> GrowthEvent:
        st = self.state
        ev = _grow_here(st, z)
        if self.stream is not None:
            _write_growth(self.stream, st, ev)
        prev = st.pos
        st.pos = st.tree.step_node(st.pos, st.wstate)
        st.clock += 1
        if self.hit_obs or self.trace_obs or self.stream is not None:
            self._emit(st.clock - 1, prev, np.array([st.pos], dtype=np.int64))
        return ev


def _write_growth(stream, state, ev):
    stream.write(f"growth {state.k} {ev.time} {ev.parent} {ev.leaf_count}\n")


def run(state: ProcessState, mode: EngineMode, horizon: Horizon,
        observers: Iterable[Observer] = (), stream: TextIO | None = None) -> RunResult:
    """Drive the chain until the horizon; deterministic given the state's seeds."""
    observers = list(observers)
    exact = isinstance(mode, Exact)
    for o in observers:
        if (o.requires_exact or o.wants) and not exact:
            raise EngineError(f"observer {o.name} needs EXACT mode")
    if not exact and horizon.max_steps is not None and horizon.max_growth is None \
            and horizon.max_vertices is None:
        raise EngineError("SHORTCUT/LUMPED runs are bounded by growth events or vertices")
    for o in observers:
        o.start(state)
    stats = TransportStats()
    walker = _ExactWalker(state, observers, stream) if exact else None
    stopped = "horizon"
    while not horizon.done(state):
        if exact:
            try:
                gap, z = sample_next_growth(state)
            except NoMoreGrowth:
                if horizon.max_steps is None:
                    stopped = "no-more-growth"
                    break
                walker.walk(horizon.max_steps - state.clock)
                stopped = "no-more-growth"
                break
            if horizon.max_steps is not None and state.clock + gap > horizon.max_steps:
                walker.walk(horizon.max_steps - state.clock)
                break
            walker.walk(gap - 1)
            stats.exact += 1
            stats.exact_steps += gap - 1
            ev = walker.growth_step(z)
        else:
            try:
                _, gap = advance_to_next_growth(state, mode, stats)
            except NoMoreGrowth:
                stopped = "no-more-growth"
                break
            ev = apply_pending_growth(state)
            if stream is not None:
                _write_growth(stream, state, ev)
        for o in observers:
            try:
                o.on_growth(state, ev, gap)
            except Exception as e:  # noqa: BLE001
                raise ObserverError(f"observer {o.name} failed at growth {state.k}: {e}") from e
    reports = {o.name: o.finish(state) for o in observers}
    return RunResult(state, reports, stats, stopped)
