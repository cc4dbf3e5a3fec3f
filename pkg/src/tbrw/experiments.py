"""Named experiments: config presets, replica runners and CSV-derived summaries.

Every replica writes tidy CSVs under ``out/replica_NNN`` (or ``out/<label>/replica_NNN``
for multi-mode experiments). Summaries and gate verdicts are computed from
those files only, so an external script can re-derive them.
"""
from __future__ import annotations

import copy
import json
import math
import os
import platform
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__, kernels, oracles
from .engine import (EngineError, Horizon, NoMoreGrowth, make_state, mode_from_config, run,
                     sample_next_growth)
from .laws import (LawConfigError, LawSequence, check_recurrence_conditions,
                   check_transience_conditions, cumulative_mean_grid, _divergence)
from .observables import (ColoringObserver, RootVisitLog, SnapshotObserver, WindowSpec, read_csv,
                          tau_statistic, window_root_visit_fraction, write_degree_dist, write_distance,
                          write_redblue, write_tau, write_windows)

SCHEMA_VERSION = 1
SPLITTING_RULE = "seed_i = numpy.random.SeedSequence(entropy=master_seed, spawn_key=(i,))"


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# presets

_PA_LAW = {"variant": "BernoulliPower", "gamma": 0.75, "c": 1.0}
_FAST = {"kind": "shortcut", "policy": "fast", "epsilon": 0.01}

PRESETS: dict[str, dict] = {
    "degree-dist": {
        "law": _PA_LAW, "mode": _FAST, "initial": "single-edge",
        "horizon": {"max_growth": 100_000}, "replicas": 5,
        "params": {"checkpoints": [1000, 10_000, 100_000], "dmax": 50, "gate_d": [1, 2, 3, 4, 5],
                   "tol_fraction": 0.01, "tol_tv": 0.02, "delta": 0.1, "coloring": True,
                   "gates": ["pa_fraction", "pa_tv"]},
    },
    "red-fraction": {
        "law": _PA_LAW, "mode": _FAST, "initial": "single-edge",
        "horizon": {"max_growth": 100_000}, "replicas": 10,
        "params": {"checkpoints": [1000, 10_000, 100_000], "dmax": 50, "gate_d": [1, 2, 3, 4, 5],
                   "tol_fraction": 0.01, "tol_tv": 0.02, "delta": 0.1, "coloring": True,
                   "red_checkpoints": [1000, 10_000, 100_000], "red_max": 0.05,
                   "gates": ["red_final", "red_monotone"]},
    },
    "mode-crossval": {
        "law": _PA_LAW, "mode": _FAST, "initial": "single-edge",
        "horizon": {"max_growth": 500}, "replicas": 20,
        "params": {"modes": {"exact": {"kind": "exact"},
                             "shortcut": {"kind": "shortcut", "policy": "rigorous", "epsilon": 0.01}},
                   "checkpoints": [500], "dmax": 50, "gate_d": [1, 2, 3, 4, 5], "n_se": 3.0,
                   "delta": 0.1, "coloring": False, "gates": ["crossval"]},
    },
    "growth-times": {
        "law": {"variant": "BernoulliPower", "gamma": 0.8, "c": 1.0}, "mode": {"kind": "exact"},
        "initial": "single-edge", "horizon": {"max_growth": 10_000}, "replicas": 20,
        "params": {"delta": 0.1, "compare": [100, 10_000], "ratio_max": 0.01, "gates": ["tau_ratio"]},
    },
    "leaf-fraction": {
        "law": {"variant": "LogBurst", "delta": 0.8}, "mode": _FAST, "initial": "single-edge",
        "horizon": {"max_growth": 2000}, "replicas": 10,
        "params": {"checkpoints": [100, 500, 1000, 2000], "dmax": 50, "leaf_min": 0.95,
                   "delta": 0.1, "coloring": False, "gates": ["leaf_final", "leaf_increasing"]},
    },
    "transience-demo": {
        "law": {"variant": "WeightedBurst", "p": {"kind": "harmonic", "offset": 1},
                "w": {"kind": "pow2", "exponent": 1.1, "round": "ceil"}, "index": "growth"},
        "mode": {"kind": "lumped", "max_states": 400}, "initial": "single-vertex",
        "horizon": {"max_growth": 60}, "replicas": 10,
        "params": {"checkpoints": [10, 60], "dmax": 50, "delta": 0.1, "coloring": False,
                   "distance_min": 5, "compare": [10, 60],
                   "a": {"kind": "pow2", "exponent": 1.1, "round": "floor"}, "i_max": 60,
                   "plateau_from": 40, "tol": 1e-3,
                   "gates": ["distance", "transience_conditions"]},
    },
    "recurrence-windows": {
        "law": {"variant": "BernoulliPower", "gamma": 0.8, "c": 1.0}, "mode": {"kind": "exact"},
        "initial": "single-edge", "horizon": {"max_steps": 10_000_000}, "replicas": 10,
        "params": {"window": "gM2", "g_exponent": 0.05, "bases": [10_000, 100_000, 1_000_000],
                   "multipliers": list(range(1, 10)), "fraction_min": 0.95, "gates": ["windows"]},
    },
    "recurrence-windows-low": {
        "law": {"variant": "BernoulliPower", "gamma": 0.6, "c": 1.0}, "mode": {"kind": "exact"},
        "initial": "single-edge", "horizon": {"max_steps": 10_000_000}, "replicas": 10,
        "params": {"window": "power", "delta": 0.1, "bases": [10_000, 100_000, 1_000_000],
                   "multipliers": list(range(1, 10)), "fraction_min": 0.95, "gates": []},
    },
    "oracle-check": {
        "law": None, "mode": {"kind": "exact"}, "initial": "single-edge", "horizon": {}, "replicas": 1,
        "params": {"max_n": 8, "n_random": 50, "random_max": 200, "epsilon": 0.01,
                   "mc_excursions": 1_000_000, "mc_rel_tol": 0.02,
                   "mc_instances": [{"name": "single-edge", "parents": [-1, 0], "v": 0},
                                    {"name": "4-star-center", "parents": [-1, 0, 0, 0, 0], "v": 0},
                                    {"name": "3-path-end", "parents": [-1, 0, 1], "v": 2}],
                   "gates": ["oracles"]},
    },
    "conditions": {
        "law": None, "mode": {"kind": "exact"}, "initial": "single-edge", "horizon": {}, "replicas": 1,
        "params": {
            "recurrence": [
                {"name": "power-0.8", "law": {"variant": "BernoulliPower", "gamma": 0.8},
                 "horizon": 1_000_000, "expect": "satisfied-trend"},
                {"name": "power-0.4", "law": {"variant": "BernoulliPower", "gamma": 0.4},
                 "horizon": 1_000_000, "expect": "violated-trend"},
                {"name": "logburst-0.8", "law": {"variant": "LogBurst", "delta": 0.8},
                 "horizon": 10_000_000, "expect": "satisfied-trend"}],
            "transience": [
                {"name": "example", "p": {"kind": "harmonic", "offset": 1},
                 "w": {"kind": "pow2", "exponent": 1.1, "round": "ceil"},
                 "a": {"kind": "pow2", "exponent": 1.1, "round": "floor"},
                 "i_max": 60, "plateau_from": 40, "tol": 1e-3, "expect": "satisfied-trend"}],
            "gates": ["conditions"]},
    },
}


# --------------------------------------------------------------------------
# config


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "law":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def set_path(cfg: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    d = cfg
    for k in keys[:-1]:
        d = d.setdefault(k, {})
    d[keys[-1]] = value


def resolve_config(experiment: str | None = None, config: dict | None = None,
                   seed: int | None = None, replicas: int | None = None,
                   out: str | None = None) -> dict:
    """Preset, then file values, then explicit flags."""
    config = dict(config or {})
    name = experiment or config.get("experiment")
    if name not in PRESETS:
        raise ConfigError(f"unknown experiment {name!r}; choose from {sorted(PRESETS)}")
    if config.get("schema", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ConfigError(f"config schema {config.get('schema')} is not supported (want {SCHEMA_VERSION})")
    cfg = _merge({"schema": SCHEMA_VERSION, "experiment": name, "seed": 0, "out": None},
                 PRESETS[name])
    cfg = _merge(cfg, {k: v for k, v in config.items() if k != "experiment"})
    cfg["experiment"] = name
    if seed is not None:
        cfg["seed"] = int(seed)
    if replicas is not None:
        cfg["replicas"] = int(replicas)
    if out is not None:
        cfg["out"] = str(out)
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    """Raise :class:`ConfigError` for anything that would fail after work has started."""
    name = cfg["experiment"]
    try:
        if int(cfg["replicas"]) < 1:
            raise ConfigError("replicas must be >= 1")
        if int(cfg["seed"]) < 0:
            raise ConfigError("seed must be nonnegative")
        if cfg.get("law") is not None:
            law = LawSequence.from_config(cfg["law"])
        mode = mode_from_config(cfg["mode"])
        for m in cfg["params"].get("modes", {}).values():
            mode_from_config(m)
        p = cfg["params"]
        if name in ("recurrence-windows", "recurrence-windows-low"):
            if mode.name != "exact":
                raise ConfigError("window observer requires EXACT mode")
            if "max_steps" not in cfg["horizon"]:
                raise ConfigError("window experiments are bounded by horizon.max_steps")
        if p.get("coloring"):
            if not _single_leaf(law):
                raise ConfigError("coloring observer requires a single-leaf law")
            if cfg["initial"] == "single-vertex":
                raise ConfigError("coloring needs an initial tree with at least one edge")
        if name in ("degree-dist", "red-fraction", "leaf-fraction", "transience-demo", "mode-crossval"):
            if "max_growth" not in cfg["horizon"] and "max_vertices" not in cfg["horizon"]:
                raise ConfigError("growth experiments need horizon.max_growth or max_vertices")
        if cfg["horizon"]:
            Horizon.from_config(cfg["horizon"])
    except ConfigError:
        raise
    except (LawConfigError, ValueError, KeyError, TypeError) as e:
        raise ConfigError(f"invalid config: {e}") from None


def _single_leaf(law: LawSequence) -> bool:
    from .laws import BernoulliPower, Constant
    s = law.spec
    return isinstance(s, BernoulliPower) or (isinstance(s, Constant) and s.z == 1)


def replica_seed(master: int, i: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(master), spawn_key=(int(i),))


def _threads() -> int:
    v = os.environ.get("TBRW_THREADS")
    if v:
        try:
            return max(1, int(v))
        except ValueError:
            raise ConfigError(f"TBRW_THREADS must be an integer, got {v!r}") from None
    return os.cpu_count() or 1


# --------------------------------------------------------------------------
# replica runners


def _growth_replica(cfg: dict, i: int, rdir: Path, mode_cfg: dict | None = None) -> None:
    p = cfg["params"]
    law = LawSequence.from_config(cfg["law"])
    state = make_state(law, cfg["initial"], replica_seed(cfg["seed"], i))
    gamma = cfg["law"].get("gamma")
    delta = p.get("delta", 0.1)
    snap = SnapshotObserver(p["checkpoints"], gamma=gamma, delta=delta, tv_dmax=p.get("dmax", 50))
    obs = [snap]
    col = None
    if p.get("coloring"):
        col = ColoringObserver(delta, p.get("red_checkpoints", ()))
        obs.append(col)
    res = run(state, mode_from_config(mode_cfg or cfg["mode"]), Horizon.from_config(cfg["horizon"]), obs)
    rep = res.reports["snapshot"]
    rdir.mkdir(parents=True, exist_ok=True)
    write_degree_dist(rdir / "degree_dist.csv", rep, p.get("dmax", 50))
    write_tau(rdir / "tau.csv", rep, gamma if gamma is not None else 1.0, delta)
    write_distance(rdir / "distance.csv", rep)
    if col is not None:
        write_redblue(rdir / "redblue.csv", col)


def _growth_times_replica(cfg: dict, i: int, rdir: Path) -> None:
    """``tau_k`` by thinning alone; the walk does not affect BernoulliPower growth times."""
    p = cfg["params"]
    law = LawSequence.from_config(cfg["law"])
    state = make_state(law, cfg["initial"], replica_seed(cfg["seed"], i))
    K = int(cfg["horizon"]["max_growth"])
    gamma, delta = float(cfg["law"]["gamma"]), float(p.get("delta", 0.1))
    rows = []
    for k in range(1, K + 1):
        try:
            gap, _ = sample_next_growth(state)
        except NoMoreGrowth:
            break
        state.clock += gap
        state.k = k
        rows.append((k, state.clock, tau_statistic(k, state.clock, gamma, delta)))
    rdir.mkdir(parents=True, exist_ok=True)
    from .observables import _write
    _write(rdir / "tau.csv", ["k", "tau_k", "statistic"], rows)


def window_specs(cfg: dict) -> list[WindowSpec]:
    p = cfg["params"]
    law = LawSequence.from_config(cfg["law"])
    anchors = sorted({int(b) * int(j) for b in p["bases"] for j in p["multipliers"]})
    if p["window"] == "gM2":
        M = cumulative_mean_grid(law, anchors)
        lengths = [max(1, math.ceil(n ** p["g_exponent"] * m * m)) for n, m in zip(anchors, M)]
        kind = "gM2"
    elif p["window"] == "power":
        e = 2.0 * (1.0 - float(cfg["law"]["gamma"])) + float(p["delta"])
        lengths = [max(1, math.ceil(n ** e)) for n in anchors]
        kind = "power"
    else:
        raise ConfigError(f"unknown window kind {p['window']!r}")
    return [WindowSpec(n, L, kind) for n, L in zip(anchors, lengths)]


def _windows_replica(cfg: dict, i: int, rdir: Path) -> None:
    law = LawSequence.from_config(cfg["law"])
    state = make_state(law, cfg["initial"], replica_seed(cfg["seed"], i))
    log = RootVisitLog()
    res = run(state, mode_from_config(cfg["mode"]), Horizon.from_config(cfg["horizon"]), [log])
    rep = res.reports["root_visits"]
    _, flags, skipped = window_root_visit_fraction(rep["visits"], window_specs(cfg), rep["log_end"])
    rdir.mkdir(parents=True, exist_ok=True)
    write_windows(rdir / "windows.csv", flags)


# --------------------------------------------------------------------------
# single-shot experiments


def monte_carlo_return_time(parents, v: int, n: int, rng: np.random.Generator) -> float:
    """Mean of ``n`` independent SSRW excursions from ``v`` back to ``v`` (no loop)."""
    adj = oracles.adjacency(parents)
    deg = np.array([len(a) for a in adj])
    nbr = np.zeros((len(adj), deg.max()), dtype=np.int64)
    for u, a in enumerate(adj):
        nbr[u, :len(a)] = a
    pos = np.full(n, v, dtype=np.int64)
    steps = np.zeros(n, dtype=np.int64)
    active = np.arange(n)
    while active.size:
        cur = pos[active]
        nxt = nbr[cur, (rng.random(active.size) * deg[cur]).astype(np.int64)]
        pos[active] = nxt
        steps[active] += 1
        active = active[nxt != v]
    return float(steps.mean())


def _oracle_check(cfg: dict, out: Path) -> None:
    p = cfg["params"]
    rep = oracles.self_check(p["max_n"], p["n_random"], p["random_max"], p["epsilon"], int(cfg["seed"]))
    rows = [(name, r["instances"], r["max_deviation"], int(r["ok"])) for name, r in rep.items() if isinstance(r, dict)]
    rng = np.random.Generator(np.random.PCG64(replica_seed(cfg["seed"], 0)))
    for inst in p["mc_instances"]:
        exact = oracles.expected_return_time(inst["parents"], inst["v"])
        mc = monte_carlo_return_time(inst["parents"], inst["v"], int(p["mc_excursions"]), rng)
        rel = abs(mc - exact) / exact
        rows.append((f"mc_return_{inst['name']}", int(p["mc_excursions"]), rel, int(rel <= p["mc_rel_tol"])))
    from .observables import _write
    _write(out / "oracles.csv", ["identity", "instances", "max_deviation", "ok"], rows)


def _conditions(cfg: dict, out: Path) -> None:
    p = cfg["params"]
    reports = {}
    rows = []
    for item in p.get("recurrence", []):
        r = check_recurrence_conditions(LawSequence.from_config(item["law"]), int(item["horizon"]))
        reports[item["name"]] = r.to_dict()
        rows += [(item["name"], "A3", n, v) for n, v in r.trace]
    for item in p.get("transience", []):
        r = check_transience_conditions(item["p"], item["w"], item["a"], int(item["i_max"]),
                                        plateau_from=item.get("plateau_from"), tol=item.get("tol", 1e-3))
        reports[item["name"]] = r.to_dict()
        for part, sub in r.parts.items():
            rows += [(item["name"], part, n, v) for n, v in sub.trace]
    from .observables import _write
    _write(out / "conditions.csv", ["case", "condition", "n", "value"], rows)
    (out / "conditions.json").write_text(json.dumps(reports, indent=2, sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# summaries (CSV in, verdicts out)


def _replica_dirs(out: Path, replicas, label: str | None = None) -> list[Path]:
    base = out / label if label else out
    return [base / f"replica_{i:03d}" for i in replicas]


def _median(xs):
    return float(statistics.median(xs)) if xs else float("nan")


def degree_rows(path: Path) -> dict[int, dict[int, tuple[int, float]]]:
    """checkpoint -> d -> (count, fraction)."""
    out: dict = {}
    for r in read_csv(path):
        out.setdefault(int(r["checkpoint_k"]), {})[int(r["d"])] = (int(r["count"]), float(r["fraction"]))
    return out


def tv_from_rows(rows: dict[int, tuple[int, float]], dmax: int) -> float:
    return 0.5 * sum(abs((rows.get(d, (0, 0.0))[1]) - oracles.pa_target(d)) for d in range(1, dmax + 1))


def red_fraction_rows(path: Path) -> dict[int, float]:
    """paper ``k`` (edge count) -> ``R_k / 2k``."""
    return {int(r["k"]): int(r["R"]) / (2 * int(r["k"])) for r in read_csv(path)}


def summarize_degree(cfg: dict, out: Path, replicas, label: str | None = None) -> dict:
    p = cfg["params"]
    ck = max(p["checkpoints"])
    fr = {d: [] for d in p.get("gate_d", [1, 2, 3, 4, 5])}
    tvs = []
    for rd in _replica_dirs(out, replicas, label):
        rows = degree_rows(rd / "degree_dist.csv")[ck]
        for d in fr:
            fr[d].append(rows.get(d, (0, 0.0))[1])
        tvs.append(tv_from_rows(rows, p.get("dmax", 50)))
    med = {d: _median(v) for d, v in fr.items()}
    return {"checkpoint": ck,
            "median_fraction": {str(d): v for d, v in med.items()},
            "abs_error": {str(d): abs(v - oracles.pa_target(d)) for d, v in med.items()},
            "median_tv": _median(tvs), "tv": tvs,
            "pa_fraction": all(abs(v - oracles.pa_target(d)) <= p["tol_fraction"] for d, v in med.items()),
            "pa_tv": _median(tvs) <= p["tol_tv"]}


def summarize_red(cfg: dict, out: Path, replicas) -> dict:
    p = cfg["params"]
    cks = p["red_checkpoints"]
    per = {c: [] for c in cks}
    for rd in _replica_dirs(out, replicas):
        rf = red_fraction_rows(rd / "redblue.csv")
        for c in cks:
            per[c].append(rf[c])
    med = [_median(per[c]) for c in cks]
    return {"checkpoints": cks, "median_red_fraction": med,
            "red_final": med[-1] <= p["red_max"],
            "red_monotone": all(b <= a for a, b in zip(med, med[1:]))}


def summarize_crossval(cfg: dict, out: Path, replicas) -> dict:
    p = cfg["params"]
    ck = max(p["checkpoints"])
    stats = {}
    for label in p["modes"]:
        per = {d: [] for d in p["gate_d"]}
        for rd in _replica_dirs(out, replicas, label):
            rows = degree_rows(rd / "degree_dist.csv")[ck]
            for d in per:
                per[d].append(rows.get(d, (0, 0.0))[1])
        stats[label] = {d: (float(np.mean(v)), float(np.std(v, ddof=1) / math.sqrt(len(v))) if len(v) > 1
                            else float("inf")) for d, v in per.items()}
    a, b = list(p["modes"])[:2]
    table = {}
    ok = True
    for d in p["gate_d"]:
        (ma, sa), (mb, sb) = stats[a][d], stats[b][d]
        se = math.hypot(sa, sb)
        diff = abs(ma - mb)
        table[str(d)] = {a: ma, b: mb, "abs_diff": diff, "pooled_se": se, "z": diff / se if se else float("inf")}
        ok &= diff <= p["n_se"] * se
    return {"checkpoint": ck, "table": table, "crossval": bool(ok)}


def summarize_growth_times(cfg: dict, out: Path, replicas) -> dict:
    p = cfg["params"]
    lo, hi = p["compare"]
    s_lo, s_hi = [], []
    for rd in _replica_dirs(out, replicas):
        st = {int(r["k"]): float(r["statistic"]) for r in read_csv(rd / "tau.csv")}
        s_lo.append(st[lo])
        s_hi.append(st[hi])
    m_lo, m_hi = _median(s_lo), _median(s_hi)
    return {"median_statistic": {str(lo): m_lo, str(hi): m_hi}, "ratio": m_hi / m_lo,
            "tau_ratio": m_hi < p["ratio_max"] * m_lo}


def summarize_leaf(cfg: dict, out: Path, replicas) -> dict:
    p = cfg["params"]
    cks = sorted(p["checkpoints"])
    per = {c: [] for c in cks}
    for rd in _replica_dirs(out, replicas):
        rows = degree_rows(rd / "degree_dist.csv")
        for c in cks:
            V = sum(cnt for cnt, _ in rows[c].values())
            per[c].append(rows[c].get(1, (0, 0.0))[0] / V)
    med = [_median(per[c]) for c in cks]
    return {"checkpoints": cks, "median_leaf_fraction": med,
            "leaf_final": med[-1] >= p["leaf_min"],
            "leaf_increasing": all(b > a for a, b in zip(med, med[1:]))}


def summarize_distance(cfg: dict, out: Path, replicas) -> dict:
    p = cfg["params"]
    lo, hi = p["compare"]
    d_lo, d_hi = [], []
    for rd in _replica_dirs(out, replicas):
        dist = {int(r["k"]): int(r["distance"]) for r in read_csv(rd / "distance.csv")}
        d_lo.append(dist[lo])
        d_hi.append(dist[hi])
    m_lo, m_hi = _median(d_lo), _median(d_hi)
    return {"median_distance": {str(lo): m_lo, str(hi): m_hi},
            "distance": m_hi >= p["distance_min"] and m_hi >= m_lo}


def _plateau_csv(vals: dict[int, float], start: int, tol: float) -> tuple[bool, float]:
    ns = sorted(vals)
    incs = [vals[b] - vals[a] for a, b in zip(ns, ns[1:]) if a >= start]
    worst = max(incs) if incs else float("inf")
    return worst < tol, worst


def summarize_transience_conditions(rows: list[dict], case: str, start: int, tol: float) -> dict:
    parts: dict[str, dict[int, float]] = {}
    for r in rows:
        if r["case"] == case:
            parts.setdefault(r["condition"], {})[int(r["n"])] = float(r["value"])
    ok1, w1 = _plateau_csv(parts["condition1"], start, tol)
    ok2, w2 = _plateau_csv(parts["condition2"], start, tol)
    g3 = sorted(parts["condition3"])
    v3 = _divergence(g3, [parts["condition3"][n] for n in g3])
    return {"condition1_max_tail_increment": w1, "condition2_max_tail_increment": w2,
            "condition1_plateau": ok1, "condition2_plateau": ok2, "condition3": v3,
            "transience_conditions": ok1 and ok2 and v3 == "satisfied-trend"}


def summarize_windows(cfg: dict, out: Path, replicas) -> dict:
    flags = []
    for rd in _replica_dirs(out, replicas):
        flags += [int(r["visited_flag"]) for r in read_csv(rd / "windows.csv")]
    n_all = len(window_specs(cfg)) * len(list(replicas))
    frac = sum(flags) / len(flags) if flags else float("nan")
    return {"windows": len(flags), "skipped": n_all - len(flags), "fraction": frac,
            "windows_gate": bool(flags) and frac >= cfg["params"]["fraction_min"]}


def summarize(cfg: dict, out: Path, replicas=None) -> dict:
    """Metrics and gate verdicts, recomputed from the CSV files under ``out``."""
    out = Path(out)
    name = cfg["experiment"]
    reps = range(int(cfg["replicas"])) if replicas is None else list(replicas)
    p = cfg["params"]
    m: dict[str, Any] = {}
    if name in ("degree-dist", "red-fraction"):
        m.update(summarize_degree(cfg, out, reps))
        if p.get("red_checkpoints"):
            m.update(summarize_red(cfg, out, reps))
    elif name == "mode-crossval":
        m.update(summarize_crossval(cfg, out, reps))
    elif name == "growth-times":
        m.update(summarize_growth_times(cfg, out, reps))
    elif name == "leaf-fraction":
        m.update(summarize_leaf(cfg, out, reps))
    elif name == "transience-demo":
        m.update(summarize_distance(cfg, out, reps))
        rows = read_csv(out / "conditions.csv")
        m.update(summarize_transience_conditions(rows, "demo", p["plateau_from"], p["tol"]))
    elif name.startswith("recurrence-windows"):
        m.update(summarize_windows(cfg, out, reps))
    elif name == "oracle-check":
        rows = read_csv(out / "oracles.csv")
        m["identities"] = {r["identity"]: {"instances": int(r["instances"]),
                                           "max_deviation": float(r["max_deviation"]),
                                           "ok": r["ok"] == "1"} for r in rows}
        m["oracles"] = all(r["ok"] == "1" for r in rows)
    elif name == "conditions":
        rep = json.loads((out / "conditions.json").read_text())
        verdicts = {}
        for item in p.get("recurrence", []) + p.get("transience", []):
            got = rep[item["name"]]["verdict"]
            verdicts[item["name"]] = {"verdict": got, "expect": item.get("expect"),
                                      "ok": item.get("expect") in (None, got)}
        m["verdicts"] = verdicts
        m["conditions"] = all(v["ok"] for v in verdicts.values())
    gate_key = {"windows": "windows_gate"}
    gates = {g: bool(m[gate_key.get(g, g)]) for g in p.get("gates", [])}
    return {"metrics": m, "gates": gates, "passed": all(gates.values())}


# --------------------------------------------------------------------------
# orchestration


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        x = float(x)
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


_REPLICA_RUNNERS: dict[str, Callable] = {
    "degree-dist": _growth_replica,
    "red-fraction": _growth_replica,
    "leaf-fraction": _growth_replica,
    "transience-demo": _growth_replica,
    "growth-times": _growth_times_replica,
    "recurrence-windows": _windows_replica,
    "recurrence-windows-low": _windows_replica,
}


def run_experiment(cfg: dict) -> tuple[int, dict]:
    """Run every replica, write CSVs, ``summary.json`` and ``meta.json``.

    Returns ``(exit_code, summary)`` with 0 when every gate passes, 1 otherwise.
    """
    validate_config(cfg)
    if not cfg.get("out"):
        raise ConfigError("an output directory is required")
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    name = cfg["experiment"]
    t0 = time.perf_counter()
    failures = []
    n = int(cfg["replicas"])

    def guarded(fn, *a):
        try:
            fn(*a)
            return None
        except (EngineError, AssertionError, ValueError, MemoryError) as e:
            return f"{type(e).__name__}: {e}"

    jobs = []
    if name in _REPLICA_RUNNERS:
        fn = _REPLICA_RUNNERS[name]
        jobs = [(f"replica_{i:03d}", fn, cfg, i, out / f"replica_{i:03d}") for i in range(n)]
    elif name == "mode-crossval":
        for label, mc in cfg["params"]["modes"].items():
            jobs += [(f"{label}/replica_{i:03d}", _growth_replica, cfg, i, out / label / f"replica_{i:03d}", mc)
                     for i in range(n)]
    if jobs:
        with ThreadPoolExecutor(max_workers=_threads()) as pool:
            errs = list(pool.map(lambda j: guarded(*j[1:]), jobs))
        failures = [{"replica": j[0], "error": e} for j, e in zip(jobs, errs) if e]
    if name == "transience-demo":
        p = cfg["params"]
        _conditions({"params": {"transience": [{"name": "demo", "p": cfg["law"]["p"], "w": cfg["law"]["w"],
                                                "a": p["a"], "i_max": p["i_max"],
                                                "plateau_from": p["plateau_from"], "tol": p["tol"]}]}}, out)
    elif name == "oracle-check":
        _oracle_check(cfg, out)
    elif name == "conditions":
        _conditions(cfg, out)

    if failures:
        summary = {"experiment": name, "failures": failures, "gates": {g: False for g in cfg["params"]["gates"]},
                   "passed": False}
    else:
        summary = {"experiment": name, "failures": [], **summarize(cfg, out)}
    _dump(out / "summary.json", summary)
    meta = {"config": cfg, "schema": SCHEMA_VERSION, "master_seed": int(cfg["seed"]),
            "splitting_rule": SPLITTING_RULE,
            "replica_seeds": [{"entropy": int(cfg["seed"]), "spawn_key": [i]} for i in range(n)],
            "versions": {"tbrw": __version__, "python": platform.python_version(), "numpy": np.__version__,
                         "kernels": kernels.IMPLEMENTATION},
            "threads": _threads(), "wall_time_s": round(time.perf_counter() - t0, 3)}
    _dump(out / "meta.json", meta)
    return (0 if summary["passed"] else 1), summary


def sweep(cfg: dict, grid: dict[str, list]) -> tuple[int, dict]:
    """One ``run_experiment`` per grid point under ``out/point_NNN``; failures stay local."""
    import itertools

    if not grid:
        raise ConfigError("sweep grid is empty")
    keys = sorted(grid)
    out = Path(cfg["out"])
    points = []
    worst = 0
    for idx, combo in enumerate(itertools.product(*(grid[k] for k in keys))):
        c = copy.deepcopy(cfg)
        for k, v in zip(keys, combo):
            set_path(c, k, v)
        c["out"] = str(out / f"point_{idx:03d}")
        try:
            validate_config(c)
            code, s = run_experiment(c)
        except ConfigError as e:
            code, s = 2, {"error": str(e), "gates": {}, "passed": False}
        worst = max(worst, code)
        points.append({"point": idx, "assignment": dict(zip(keys, combo)), "exit": code,
                       "passed": s.get("passed", False), "gates": s.get("gates", {}),
                       "metrics": s.get("metrics", {})})
    table = {"experiment": cfg["experiment"], "grid": grid, "points": points}
    out.mkdir(parents=True, exist_ok=True)
    _dump(out / "sweep.json", table)
    from .observables import _write
    rows = [(pt["point"], json.dumps(pt["assignment"], sort_keys=True), pt["exit"], int(pt["passed"]),
             *[_scalar(pt["metrics"], k) for k in _SWEEP_COLUMNS]) for pt in points]
    _write(out / "sweep.csv", ["point", "assignment", "exit", "passed", *_SWEEP_COLUMNS], rows)
    return worst, table


_SWEEP_COLUMNS = ["median_tv", "ratio", "fraction"]


def _scalar(m: dict, k: str):
    v = m.get(k, "")
    return v if isinstance(v, (int, float, str)) else ""
