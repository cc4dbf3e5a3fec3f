"""Leaf-law sequences, their moments, and the analytic condition checkers.

A law sequence assigns to every time ``n >= 1`` a distribution ``L_n`` on the
nonnegative integers: the number of leaves added at step ``n``. All built-in
variants put mass on at most one positive value per step, so a step is a
Bernoulli(p_n) trial that adds ``value_n`` leaves on success.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from . import kernels

PROB_FLOOR = 2.0 ** -60
DIRECT_MAX = 1_000_000
_EULER_GAMMA = 0.57721566490153286061


class LawConfigError(ValueError):
    """Malformed law or sequence specification."""


# --------------------------------------------------------------------------
# numeric sequences (used for p_i, w_i, a_i)


@dataclass(frozen=True)
class SequenceSpec:
    """A numeric sequence indexed from 1.

    kinds::

        harmonic  {offset}            1/(i+offset)
        power     {c, gamma}          min(1, c * i**-gamma)
        constant  {value}
        pow2      {exponent, round}   2**(i**exponent); round in floor|ceil|none
        comb      {}                  1/2, 1/2, 1/3, 1/4, 1/4, 1/8, 1/5, 1/16, ...
        table     {values, tail}      explicit prefix, tail "zero" or "last"
    """

    kind: str
    params: tuple = ()

    # construction ---------------------------------------------------------
    @classmethod
    def from_config(cls, cfg: Any) -> "SequenceSpec":
        if isinstance(cfg, SequenceSpec):
            return cfg
        if isinstance(cfg, (int, float)):
            return cls("constant", (("value", cfg),))
        if not isinstance(cfg, dict) or "kind" not in cfg:
            raise LawConfigError(f"bad sequence spec: {cfg!r}")
        kind = cfg["kind"]
        p = {k: v for k, v in cfg.items() if k != "kind"}
        if kind == "harmonic":
            p.setdefault("offset", 1)
        elif kind == "power":
            p.setdefault("c", 1.0)
            if "gamma" not in p:
                raise LawConfigError("power sequence needs gamma")
        elif kind == "constant":
            if "value" not in p:
                raise LawConfigError("constant sequence needs value")
        elif kind == "pow2":
            p.setdefault("round", "ceil")
            if "exponent" not in p:
                raise LawConfigError("pow2 sequence needs exponent")
            if p["round"] not in ("floor", "ceil", "none"):
                raise LawConfigError("pow2 round must be floor, ceil or none")
        elif kind == "comb":
            pass
        elif kind == "table":
            if not p.get("values"):
                raise LawConfigError("table sequence needs values")
            p["values"] = tuple(p["values"])
            p.setdefault("tail", "zero")
            if p["tail"] not in ("zero", "last"):
                raise LawConfigError("table tail must be zero or last")
        else:
            raise LawConfigError(f"unknown sequence kind {kind!r}")
        return cls(kind, tuple(sorted(p.items())))

    def to_config(self) -> dict:
        out = {"kind": self.kind}
        for k, v in self.params:
            out[k] = list(v) if isinstance(v, tuple) else v
        return out

    @property
    def _p(self) -> dict:
        return dict(self.params)

    # evaluation -----------------------------------------------------------
    def __call__(self, i: int):
        """Term ``i`` (1-based). pow2 with rounding returns a Python int."""
        if i < 1:
            raise ValueError("sequences are indexed from 1")
        p = self._p
        k = self.kind
        if k == "harmonic":
            return 1.0 / (i + p["offset"])
        if k == "power":
            return min(1.0, p["c"] * float(i) ** -p["gamma"])
        if k == "constant":
            return p["value"]
        if k == "pow2":
            x = float(i) ** p["exponent"]
            if p["round"] == "none":
                return 2.0 ** x
            e = math.ceil(x) if p["round"] == "ceil" else math.floor(x)
            return 1 << int(e)
        if k == "comb":
            m = (i + 1) // 2
            return 1.0 / (m + 1) if i % 2 == 1 else 2.0 ** -m
        vals = p["values"]
        if i <= len(vals):
            return vals[i - 1]
        return 0 if p["tail"] == "zero" else vals[-1]

    def array(self, lo: int, hi: int) -> np.ndarray:
        """Terms ``lo..hi-1`` as float64."""
        i = np.arange(lo, hi, dtype=np.float64)
        p = self._p
        k = self.kind
        if k == "harmonic":
            return 1.0 / (i + p["offset"])
        if k == "power":
            return np.minimum(1.0, p["c"] * i ** -p["gamma"])
        if k == "constant":
            return np.full(i.shape, float(p["value"]))
        if k == "comb":
            m = np.floor((i + 1) / 2)
            return np.where(i % 2 == 1, 1.0 / (m + 1), 2.0 ** -m)
        return np.array([float(self(int(j))) for j in range(lo, hi)])

    def sup_after(self, n: int) -> float:
        """An upper bound on term ``m`` for every ``m > n`` (terms are probabilities)."""
        k = self.kind
        if k in ("harmonic", "power", "constant"):
            return float(self(n + 1))
        if k == "comb":
            return max(self(n + 1), self(n + 2))
        if k == "table":
            vals = self._p["values"]
            rest = [float(v) for v in vals[n:]]
            if self._p["tail"] == "last":
                rest.append(float(vals[-1]))
            return max(rest, default=0.0)
        raise LawConfigError(f"{k} is not a probability sequence")

    def is_nonincreasing(self) -> bool:
        if self.kind in ("harmonic", "power", "constant"):
            return True
        if self.kind == "table":
            v = list(self._p["values"])
            if self._p["tail"] == "zero":
                v.append(0)
            return all(a >= b for a, b in zip(v, v[1:]))
        return False

    def is_nondecreasing(self) -> bool:
        if self.kind in ("pow2", "constant"):
            return True
        if self.kind == "table":
            v = list(self._p["values"])
            if self._p["tail"] == "zero":
                v.append(0)
            return all(a <= b for a, b in zip(v, v[1:]))
        return False

    # sums -----------------------------------------------------------------
    def partial_sum(self, n: int) -> tuple[float, float]:
        """``(sum_{k=1..n} term_k, error_bound)``.

        Direct float summation up to ``DIRECT_MAX`` terms; beyond that a
        midpoint-rule integral of the analytic tail whose error is at most
        ``|f'(a-1/2) - f'(b+1/2)| / 24`` for convex monotone terms.
        """
        n = int(n)
        if n <= 0:
            return 0.0, 0.0
        head_n = min(n, DIRECT_MAX)
        head = _direct_sum(self, head_n)
        if n == head_n:
            return head, 0.0
        tail, err = self._tail_sum(head_n + 1, n)
        return head + tail, err

    def _tail_sum(self, a: int, b: int) -> tuple[float, float]:
        p = self._p
        k = self.kind
        if k == "constant":
            return float(p["value"]) * (b - a + 1), 0.0
        if k == "harmonic":
            o = p["offset"]
            lo, hi = a - 0.5 + o, b + 0.5 + o
            return math.log(hi / lo), 1.0 / (24 * lo * lo)
        if k == "power":
            c, g = p["c"], p["gamma"]
            if c * float(a) ** -g >= 1.0:
                raise LawConfigError("power sequence still clamped beyond the direct range")
            lo, hi = a - 0.5, b + 0.5
            if g == 1.0:
                val = c * math.log(hi / lo)
            else:
                val = c * (hi ** (1 - g) - lo ** (1 - g)) / (1 - g)
            return val, c * g * lo ** (-g - 1) / 24
        if k == "comb":
            # harmonic half plus geometric half, both in closed form
            m_lo = (a + 1) // 2
            m_hi = (b + 1) // 2
            h = math.log((m_hi + 1.5) / (m_lo + 0.5)) if m_hi >= m_lo else 0.0
            return h, 1.0 / (24 * (m_lo + 0.5) ** 2) + 4.0 * 2.0 ** (-a / 2)
        if k == "table":
            vals = p["values"]
            total = 0.0
            for j in range(a, min(b, len(vals)) + 1):
                total += float(vals[j - 1])
            if b > len(vals) and p["tail"] == "last":
                total += float(vals[-1]) * (b - max(a - 1, len(vals)))
            return total, 0.0
        raise LawConfigError(f"no partial sums for {k}")

    def min_adjacent_sum(self, n: int) -> tuple[float, float]:
        """``sum_{k=1..n} min(term_k, term_{k+1})`` with an error bound."""
        n = int(n)
        if n <= 0:
            return 0.0, 0.0
        if self.is_nonincreasing():
            s, e = self.partial_sum(n + 1)
            return s - float(self(1)), e
        head_n = min(n, DIRECT_MAX)
        t = self.array(1, head_n + 2)
        head = float(np.minimum(t[:-1], t[1:]).sum())
        if n == head_n:
            return head, 0.0
        if self.kind == "comb":
            # every adjacent pair contains a geometric term 2^-m
            return head, 8.0 * 2.0 ** (-head_n / 2)
        raise LawConfigError(f"no adjacent-minimum tail for {self.kind}")


def _direct_sum(seq: SequenceSpec, n: int, chunk: int = 1 << 20) -> float:
    total = 0.0
    lo = 1
    while lo <= n:
        hi = min(n + 1, lo + chunk)
        total += float(seq.array(lo, hi).sum())
        lo = hi
    return total


# --------------------------------------------------------------------------
# law variants


@dataclass(frozen=True)
class BernoulliPower:
    """``Z_n = 1`` with probability ``min(1, c n^-gamma)``."""

    gamma: float
    c: float = 1.0

    def p(self, n):
        return min(1.0, self.c * float(n) ** -self.gamma)

    def p_array(self, lo, hi):
        i = np.arange(lo, hi, dtype=np.float64)
        return np.minimum(1.0, self.c * i ** -self.gamma)

    def value(self, n, k=None):
        return 1

    def value_array(self, lo, hi):
        return np.ones(hi - lo)

    def envelope(self, after):
        return self.p(after + 1)


@dataclass(frozen=True)
class LogBurst:
    """``Z_n = ceil(ln n)`` with probability ``n^-delta``; ``Z_1 = 0``."""

    delta: float

    def p(self, n):
        return float(n) ** -self.delta if n >= 2 else 0.0

    def p_array(self, lo, hi):
        i = np.arange(lo, hi, dtype=np.float64)
        return np.where(i >= 2, i ** -self.delta, 0.0)

    def value(self, n, k=None):
        return _ceil_log(n)

    def value_array(self, lo, hi):
        return np.array([_ceil_log(n) for n in range(lo, hi)], dtype=np.float64)

    def envelope(self, after):
        return self.p(max(after + 1, 2))

    def raw_p(self, n):
        # probability of the burst draw itself; at n = 1 it adds zero leaves
        return float(n) ** -self.delta


def _ceil_log(n: int) -> int:
    if n <= 1:
        return 0
    c = math.ceil(math.log(n))
    # guard float rounding at exact powers of e (never integers, but be safe near them)
    if math.exp(c - 1) >= n:
        c -= 1
    return int(c)


@dataclass(frozen=True)
class WeightedBurst:
    """``Z = w`` with probability ``p_n``.

    ``index="time"`` takes ``w_n`` at time ``n``; ``index="growth"`` takes
    ``w_k`` for the k-th growth event.
    """

    p_seq: SequenceSpec
    w_seq: SequenceSpec
    index: str = "time"

    def p(self, n):
        return float(self.p_seq(int(n)))

    def p_array(self, lo, hi):
        return self.p_seq.array(lo, hi)

    def value(self, n, k=None):
        if self.index == "growth":
            if k is None:
                raise LawConfigError("growth-indexed law needs the growth count")
            return int(self.w_seq(int(k)))
        return int(self.w_seq(int(n)))

    def value_array(self, lo, hi):
        if self.index == "growth":
            raise LawConfigError("moments are undefined for a growth-indexed law")
        return np.array([float(self.w_seq(n)) for n in range(lo, hi)])

    def envelope(self, after):
        return self.p_seq.sup_after(int(after))


@dataclass(frozen=True)
class Constant:
    """``Z = z`` with probability ``p`` at every step."""

    p_: float
    z: int

    def p(self, n):
        return self.p_ if self.z >= 1 else 0.0

    def p_array(self, lo, hi):
        return np.full(hi - lo, self.p(1))

    def value(self, n, k=None):
        return self.z

    def value_array(self, lo, hi):
        return np.full(hi - lo, float(self.z))

    def envelope(self, after):
        return self.p(1)


@dataclass(frozen=True)
class Table:
    """Explicit ``n -> (value, probability)`` entries plus a tail rule.

    ``tail`` is ``"zero"`` (no growth after the last entry), ``"last"``
    (repeat the last entry) or ``None`` (querying past the table is an error).
    Missing interior indices mean no growth.
    """

    entries: tuple  # sorted ((n, value, prob), ...)
    tail: str | None = "zero"

    def _entry(self, n):
        n = int(n)
        last = self.entries[-1][0]
        if n > last:
            if self.tail is None:
                raise LawConfigError(f"table law undefined at n={n} and no tail rule")
            if self.tail == "zero":
                return 0, 0.0
            return self.entries[-1][1], self.entries[-1][2]
        d = self._map
        return d.get(n, (0, 0.0))

    @property
    def _map(self):
        return {n: (v, p) for n, v, p in self.entries}

    def p(self, n):
        v, p = self._entry(n)
        return p if v >= 1 else 0.0

    def p_array(self, lo, hi):
        return np.array([self.p(n) for n in range(lo, hi)])

    def value(self, n, k=None):
        return self._entry(n)[0]

    def value_array(self, lo, hi):
        return np.array([float(self._entry(n)[0]) for n in range(lo, hi)])

    def envelope(self, after):
        rest = [p for n, v, p in self.entries if n > after and v >= 1]
        if self.tail == "last" and self.entries[-1][1] >= 1:
            rest.append(self.entries[-1][2])
        return max(rest, default=0.0)


LawSpec = BernoulliPower | LogBurst | WeightedBurst | Constant | Table


def law_from_config(cfg: dict) -> LawSpec:
    """Parse a variant-tagged law dict, e.g. ``{"variant": "BernoulliPower", "gamma": 0.75}``."""
    if not isinstance(cfg, dict) or "variant" not in cfg:
        raise LawConfigError(f"law spec needs a 'variant' key: {cfg!r}")
    v = cfg["variant"]
    try:
        if v == "BernoulliPower":
            c, g = float(cfg.get("c", 1.0)), float(cfg["gamma"])
            if c <= 0 or g <= 0:
                raise LawConfigError("BernoulliPower needs c > 0 and gamma > 0")
            return BernoulliPower(gamma=g, c=c)
        if v == "LogBurst":
            d = float(cfg["delta"])
            if not 0 < d <= 1:
                raise LawConfigError("LogBurst delta must lie in (0, 1]")
            return LogBurst(delta=d)
        if v == "WeightedBurst":
            p = SequenceSpec.from_config(cfg["p"])
            w = SequenceSpec.from_config(cfg["w"])
            idx = cfg.get("index", "time")
            if idx not in ("time", "growth"):
                raise LawConfigError("WeightedBurst index must be time or growth")
            if not w.is_nondecreasing():
                raise LawConfigError("WeightedBurst w must be nondecreasing")
            if int(w(1)) < 1:
                raise LawConfigError("WeightedBurst w must be >= 1")
            return WeightedBurst(p, w, idx)
        if v == "Constant":
            p, z = float(cfg["p"]), int(cfg["z"])
            if not 0 <= p <= 1 or z < 0:
                raise LawConfigError("Constant needs p in [0,1] and z >= 0")
            return Constant(p_=p, z=z)
        if v == "Table":
            rows = []
            for row in cfg["entries"]:
                n, val, prob = int(row[0]), int(row[1]), float(row[2])
                if n < 1 or val < 0 or not 0 <= prob <= 1:
                    raise LawConfigError(f"bad table row {row!r}")
                rows.append((n, val, prob))
            if not rows:
                raise LawConfigError("table law needs entries")
            rows.sort()
            tail = cfg.get("tail", "zero")
            if tail not in ("zero", "last", None):
                raise LawConfigError("table tail must be zero, last or null")
            return Table(tuple(rows), tail)
    except KeyError as e:
        raise LawConfigError(f"{v} is missing field {e}") from None
    raise LawConfigError(f"unknown law variant {v!r}")


def law_to_config(law: LawSpec) -> dict:
    if isinstance(law, BernoulliPower):
        return {"variant": "BernoulliPower", "gamma": law.gamma, "c": law.c}
    if isinstance(law, LogBurst):
        return {"variant": "LogBurst", "delta": law.delta}
    if isinstance(law, WeightedBurst):
        return {"variant": "WeightedBurst", "p": law.p_seq.to_config(),
                "w": law.w_seq.to_config(), "index": law.index}
    if isinstance(law, Constant):
        return {"variant": "Constant", "p": law.p_, "z": law.z}
    return {"variant": "Table", "entries": [list(e) for e in law.entries], "tail": law.tail}


# --------------------------------------------------------------------------
# sequences of laws


@dataclass(frozen=True)
class LawSequence:
    """A law variant together with a time shift: local step ``n`` uses ``L_{shift+n}``."""

    spec: LawSpec
    shift: int = 0

    def shifted(self, m: int) -> "LawSequence":
        if m < 0:
            raise ValueError("shift must be nonnegative")
        return LawSequence(self.spec, self.shift + m)

    def growth_prob(self, n: int) -> float:
        """P(Z >= 1) at local step ``n``."""
        return self.spec.p(self.shift + n)

    def envelope(self, clock: int) -> float:
        """Upper bound on ``growth_prob(m)`` for all local ``m > clock``."""
        return self.spec.envelope(self.shift + clock)

    def growth_value(self, n: int, k: int | None = None) -> int:
        return self.spec.value(self.shift + n, k)

    @property
    def growth_indexed(self) -> bool:
        return isinstance(self.spec, WeightedBurst) and self.spec.index == "growth"

    def to_config(self) -> dict:
        d = law_to_config(self.spec)
        if self.shift:
            d["shift"] = self.shift
        return d

    @classmethod
    def from_config(cls, cfg: dict) -> "LawSequence":
        cfg = dict(cfg)
        shift = int(cfg.pop("shift", 0))
        return cls(law_from_config(cfg), shift)


def sample_z(seq: LawSequence, n: int, rng: np.random.Generator, k: int | None = None) -> int:
    """One draw of ``Z`` at local step ``n``; always consumes exactly one uniform.

    ``k`` is the index the next growth event would get; only growth-indexed
    laws read it.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    u = rng.random()
    p = seq.growth_prob(n)
    if p < PROB_FLOOR:
        return 0
    if u < p:
        return seq.growth_value(n, k)
    return 0


def moments(seq: LawSequence, n: int) -> tuple[float, float]:
    """``(m_n, q_n)``: mean and zero-probability of ``L_{shift+n}``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if seq.growth_indexed:
        raise LawConfigError("moments are undefined for a growth-indexed law")
    N = seq.shift + n
    spec = seq.spec
    if isinstance(spec, LogBurst):
        v = _ceil_log(N)
        p = spec.raw_p(N)
        return float(v) * p, 1.0 - p if v >= 1 else 1.0
    p = spec.p(N)
    v = spec.value(N)
    return float(v) * p, 1.0 - p


def _mean_array(seq: LawSequence, lo: int, hi: int) -> np.ndarray:
    s = seq.shift
    spec = seq.spec
    if isinstance(spec, LogBurst):
        i = np.arange(lo + s, hi + s, dtype=np.float64)
        return np.ceil(np.log(i)) * i ** -spec.delta * (i >= 2)
    return spec.p_array(lo + s, hi + s) * spec.value_array(lo + s, hi + s)


def cumulative_mean(seq: LawSequence, n: int) -> float:
    """``M_n = sum_{k=1..n} m_k`` by direct summation."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return float(cumulative_mean_grid(seq, [n])[0])


def cumulative_mean_grid(seq: LawSequence, grid: Sequence[int], chunk: int = 1 << 20) -> np.ndarray:
    """``M_n`` at every ``n`` of an increasing grid, in one left-to-right pass.

    Terms are added one by one in order, so ``M_n - M_{n-1}`` reproduces
    ``m_n`` up to one rounding of ``M_n``.
    """
    grid = [int(g) for g in grid]
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("grid must be strictly increasing")
    out = np.empty(len(grid))
    total = 0.0
    lo = 1
    gi = 0
    top = grid[-1]
    while lo <= top and gi < len(grid):
        hi = min(top + 1, lo + chunk)
        m = _mean_array(seq, lo, hi)
        cs = np.cumsum(m)  # sequential within the chunk
        cs += total
        while gi < len(grid) and grid[gi] < hi:
            out[gi] = cs[grid[gi] - lo]
            gi += 1
        total = float(cs[-1])
        lo = hi
    return out


# --------------------------------------------------------------------------
# condition reports


@dataclass
class ConditionReport:
    verdict: str  # satisfied-trend | violated-trend | inconclusive
    trace: list = field(default_factory=list)  # [(n, value)], n strictly increasing
    notes: str = ""
    parts: dict = field(default_factory=dict)  # name -> ConditionReport
    details: list = field(default_factory=list)

    def __post_init__(self):
        ns = [t[0] for t in self.trace]
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise ValueError("condition trace must be strictly increasing in n")

    def to_dict(self) -> dict:
        d = {"verdict": self.verdict,
             "trace": [[_jsonable(n), _jsonable(v)] for n, v in self.trace],
             "notes": self.notes}
        if self.parts:
            d["parts"] = {k: v.to_dict() for k, v in self.parts.items()}
        if self.details:
            d["details"] = self.details
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _jsonable(x):
    if isinstance(x, int) and abs(x) >= 2 ** 53:
        return str(x)
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


def log_grid(lo: int, hi: int, per_decade: int = 8) -> list[int]:
    pts = np.unique(np.round(np.logspace(math.log10(lo), math.log10(hi),
                                         int(per_decade * math.log10(hi / lo)) + 1)).astype(np.int64))
    pts = [int(x) for x in pts if lo <= x <= hi]
    if pts[-1] != hi:
        pts.append(hi)
    return pts


def _trend(values: Sequence[float], factor: float) -> str:
    half = list(values[len(values) // 2:])
    if all(v == 0 for v in half):
        return "satisfied-trend"
    dec = all(b <= a for a, b in zip(half, half[1:]))
    inc = all(b >= a for a, b in zip(half, half[1:]))
    if dec and half[-1] * factor <= half[0]:
        return "satisfied-trend"
    if inc and half[-1] > half[0]:
        return "violated-trend"
    return "inconclusive"


def check_recurrence_conditions(seq: LawSequence, horizon: int, factor: float = 2.0,
                                per_decade: int = 8) -> ConditionReport:
    """Finite-horizon trend check of (A1)-(A3) via ``s_n = (1 - q_n) M_n^2``."""
    if horizon < 10:
        raise ValueError("horizon must be >= 10")
    grid = log_grid(1, int(horizon), per_decade)
    M = cumulative_mean_grid(seq, grid)
    qs = np.array([moments(seq, n)[1] for n in grid])
    ms = np.array([moments(seq, n)[0] for n in grid])
    s = (1.0 - qs) * M ** 2
    a1 = bool(np.all(np.isfinite(ms)))
    dq = np.diff(qs) >= -1e-15
    a2_full = bool(np.all(dq))
    # A2 is judged on the second half of the grid, like the A3 trend; an
    # early dip (LogBurst has Z_1 = 0 since ceil(ln 1) = 0) is reported only
    a2 = bool(np.all(dq[len(dq) // 2:]))
    bad = [grid[i + 1] for i in np.flatnonzero(~dq)]
    verdict = _trend([float(x) for x in s], factor)
    notes = (f"A1 (finite m_n on grid): {a1}; A2 (q_n nondecreasing on the last half of the grid): {a2}"
             f"{'' if a2_full else f', dips at n={bad[:5]}'}; "
             f"A3 trend over last half of {len(grid)} log-spaced points, factor {factor}; "
             "finite-horizon trend, not a proof")
    if verdict == "satisfied-trend" and not (a1 and a2):
        verdict = "inconclusive"
    return ConditionReport(verdict, list(zip(grid, (float(x) for x in s))), notes,
                           details=[{"a1": a1, "a2": a2, "a2_full_grid": a2_full, "M_horizon": float(M[-1])}])


# --------------------------------------------------------------------------
# transience conditions


def chebyshev_bound_value(P: float, i: int) -> float | None:
    """``P / (P - i + 1)^2`` when ``P > i - 1``, else ``None``."""
    if P > i - 1:
        return P / (P - i + 1) ** 2
    return None


def _plateau(trace_vals, idx, start, tol):
    """Verdict from increments of a partial-sum trace."""
    incs = np.diff([0.0] + list(trace_vals))
    tail = [x for n, x in zip(idx, incs) if n >= start]
    if not tail:
        return "inconclusive", float("nan")
    worst = float(max(tail))
    if worst < tol:
        return "satisfied-trend", worst
    h = tail[len(tail) // 2:]
    if len(h) >= 2 and all(b >= a * 0.5 for a, b in zip(h, h[1:])) and h[-1] >= tol:
        return "violated-trend", worst
    return "inconclusive", worst


def check_transience_conditions(p, w, a, i_max: int, dp_max: int = 10_000_000,
                                plateau_from: int | None = None, tol: float = 1e-3,
                                ) -> ConditionReport:
    """Partial sums for the three transience conditions.

    1. ``sum_i r_{i, a_i}`` with ``r_{i,j} = P(K_j <= i - 1)``, ``K_j`` the
       number of growths by time ``j``. Exact Poisson-Binomial DP while
       ``a_i <= dp_max``; otherwise the Chebyshev bound (capped at 1) where
       it applies, otherwise the trivial bound 1 (flagged).
    2. ``sum_i (a_i - a_{i-1}) / (w_{i-1} + 1)`` for ``i >= 2``.
    3. ``sum_n min(p_n, p_{n+1})`` up to ``n = a_{i_max}``.

    Non-integer ``a_i`` are floored.
    """
    p = SequenceSpec.from_config(p)
    w = SequenceSpec.from_config(w)
    a = SequenceSpec.from_config(a)
    if i_max < 2:
        raise ValueError("i_max must be >= 2")
    if plateau_from is None:
        plateau_from = min(40, max(2, (2 * i_max) // 3))
    A = [int(math.floor(a(i))) for i in range(1, i_max + 1)]
    if A[0] < 1 or any(y <= x for x, y in zip(A, A[1:])):
        raise ValueError("a must be strictly increasing and positive")
    if not w.is_nondecreasing() or int(w(1)) < 1:
        raise ValueError("w must be nondecreasing positive integers")

    # condition 1 ---------------------------------------------------------
    terms1 = []
    dist = np.zeros(i_max + 1)
    dist[0] = 1.0
    done = 0  # trials folded into dist
    chunk = 1 << 18
    for i, j in enumerate(A, start=1):
        if j <= dp_max:
            while done < j:
                hi = min(j, done + chunk)
                kernels.pb_update(dist, np.ascontiguousarray(p.array(done + 1, hi + 1)))
                done = hi
            val = float(dist[:i].sum())
            terms1.append({"i": i, "a_i": j, "value": val, "method": "exact"})
            continue
        P, err = p.partial_sum(j)
        b = chebyshev_bound_value(P - err, i)
        if b is not None:
            terms1.append({"i": i, "a_i": j, "value": min(1.0, b), "method": "chebyshev",
                           "P": P, "P_err": err, "raw_bound": b})
        else:
            terms1.append({"i": i, "a_i": j, "value": 1.0, "method": "inapplicable",
                           "P": P, "P_err": err})
    s1 = np.cumsum([t["value"] for t in terms1])
    idx = list(range(1, i_max + 1))
    v1, worst1 = _plateau(s1, idx, plateau_from, tol)
    if any(t["method"] == "inapplicable" for t in terms1) and v1 == "satisfied-trend":
        v1 = "inconclusive"
    rep1 = ConditionReport(
        v1, list(zip(idx, (float(x) for x in s1))),
        f"max increment for i >= {plateau_from}: {worst1:.6g} (tol {tol}); "
        f"{sum(t['method'] == 'exact' for t in terms1)} exact, "
        f"{sum(t['method'] == 'chebyshev' for t in terms1)} Chebyshev, "
        f"{sum(t['method'] == 'inapplicable' for t in terms1)} bound-inapplicable terms",
        details=[{k: _jsonable(v) for k, v in t.items()} for t in terms1])

    # condition 2 ---------------------------------------------------------
    terms2 = [0.0]
    for i in range(2, i_max + 1):
        terms2.append((A[i - 1] - A[i - 2]) / (int(w(i - 1)) + 1))
    s2 = np.cumsum(terms2)
    v2, worst2 = _plateau(s2, idx, plateau_from, tol)
    rep2 = ConditionReport(v2, list(zip(idx, (float(x) for x in s2))),
                           f"sum starts at i=2; max increment for i >= {plateau_from}: "
                           f"{worst2:.6g} (tol {tol})")

    # condition 3 ---------------------------------------------------------
    top = A[-1]
    grid = sorted(set([1 << e for e in range(0, top.bit_length())] + [top]))
    s3 = []
    err3 = 0.0
    for n in grid:
        s, e = p.min_adjacent_sum(n)
        s3.append(s)
        err3 = max(err3, e)
    v3 = _divergence(grid, s3)
    rep3 = ConditionReport(v3, list(zip(grid, s3)),
                           f"partial sums at powers of two up to a_{i_max}; max tail error {err3:.3g}")

    verdicts = [v1, v2, v3]
    if all(v == "satisfied-trend" for v in verdicts):
        overall = "satisfied-trend"
    elif any(v == "violated-trend" for v in verdicts):
        overall = "violated-trend"
    else:
        overall = "inconclusive"
    return ConditionReport(
        overall, rep1.trace,
        "finite-horizon trends; top-level trace is condition 1",
        parts={"condition1": rep1, "condition2": rep2, "condition3": rep3})


def _divergence(grid, sums) -> str:
    """Doubling-interval increments: bounded below means divergence."""
    pts = [(n, s) for n, s in zip(grid, sums) if n & (n - 1) == 0]
    incs = [b[1] - a[1] for a, b in zip(pts, pts[1:])]
    h = incs[len(incs) // 2:]
    if len(h) < 2:
        return "inconclusive"
    if h[-1] >= 0.5 * h[0] and h[-1] > 1e-12:
        return "satisfied-trend"
    if h[-1] < 1e-6 * max(1.0, abs(sums[-1])):
        return "violated-trend"
    return "inconclusive"
