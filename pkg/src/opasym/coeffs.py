"""Recurrence coefficient families, their finite differences, and a
finite-horizon check of the regularity conditions the asymptotic theory needs.

A family supplies the off-diagonal coefficients gamma_n > 0 (with the
convention gamma_{-1} = 1) and optional diagonal offsets beta_n for the
non-symmetric recurrence.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import mpmath
import numpy as np

KINDS = ("power-law", "hermite-exact", "freud-leading", "detour-perturbed", "custom-table")
OFFSET_KINDS = ("zero", "rho-proportional", "custom-table")

# Slack on a fitted tail exponent before a series is called convergent or divergent.
EXPONENT_SLACK = 0.005
# Block-count used by every dyadic tail statistic.
TAIL_BLOCKS = 4


class ConfigError(ValueError):
    """Invalid configuration; ``key`` is the dotted path of the offending entry."""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")


def detour_index(n, period, depth):
    """Index map of a detour family.

    Indices are cut into consecutive blocks whose lengths grow linearly,
    ``period * (k + 1)`` for block ``k``. Inside each block the map runs
    forward, jumps to the last index of the block, walks back ``depth`` steps
    and then resumes with the next block. Each block is therefore a
    permutation of itself. Works on Python ints of any size and on integer
    numpy arrays.
    """
    if isinstance(n, np.ndarray):
        n = n.astype(np.int64)
        m = (2 * n) // period
        k = ((np.sqrt(4.0 * m + 1.0) - 1.0) // 2).astype(np.int64)
        k = np.where((k + 1) * (k + 2) <= m, k + 1, k)
        k = np.where(k * (k + 1) > m, k - 1, k)
        start = period * k * (k + 1) // 2
        length = period * (k + 1)
        j = n - start
        tail = j >= length - depth - 1
        return np.where(tail, start + 2 * length - depth - 2 - j, n)
    n = int(n)
    m = (2 * n) // period
    k = (math.isqrt(4 * m + 1) - 1) // 2
    start = period * k * (k + 1) // 2
    length = period * (k + 1)
    j = n - start
    if j >= length - depth - 1:
        return start + 2 * length - depth - 2 - j
    return n


@dataclass(frozen=True)
class CoefficientFamily:
    """A validated recurrence-coefficient family.

    Build instances through :func:`power_law`, :func:`hermite`,
    :func:`freud`, :func:`detour`, :func:`custom_table` or
    :meth:`from_config` rather than directly.
    """

    kind: str
    c: float = 1.0
    p: float = 0.5
    beta_w: float = 2.0
    base: CoefficientFamily | None = None
    period: int = 50
    depth: int = 3
    table: tuple = ()
    offsets_kind: str = "zero"
    rho: float = 0.0
    offsets_table: tuple = field(default=())

    def __post_init__(self):
        self._validate("family")

    def _validate(self, prefix):
        if self.kind not in KINDS:
            raise ConfigError(f"{prefix}.kind", f"unknown kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "power-law":
            if not (isinstance(self.p, (int, float)) and 0.0 < self.p < 1.0):
                raise ConfigError(f"{prefix}.p", f"exponent must lie in (0, 1), got {self.p!r}")
            if not (isinstance(self.c, (int, float)) and self.c > 0.0 and math.isfinite(self.c)):
                raise ConfigError(f"{prefix}.c", f"scale must be positive, got {self.c!r}")
        elif self.kind == "freud-leading":
            if not (isinstance(self.beta_w, (int, float)) and self.beta_w > 1.0 and math.isfinite(self.beta_w)):
                raise ConfigError(f"{prefix}.beta_w", f"weight exponent must exceed 1, got {self.beta_w!r}")
        elif self.kind == "detour-perturbed":
            if self.base is None:
                raise ConfigError(f"{prefix}.base", "a detour family needs a base family")
            if self.base.kind in ("detour-perturbed", "custom-table"):
                raise ConfigError(f"{prefix}.base.kind", "base must be an analytic family")
            if not (isinstance(self.depth, int) and self.depth >= 1):
                raise ConfigError(f"{prefix}.detour.depth", f"depth must be a positive integer, got {self.depth!r}")
            if not (isinstance(self.period, int) and self.period >= self.depth + 2):
                raise ConfigError(f"{prefix}.detour.period",
                                  f"period must be an integer >= depth + 2, got {self.period!r}")
        elif self.kind == "custom-table":
            if len(self.table) == 0:
                raise ConfigError(f"{prefix}.table", "table is empty")
            for i, v in enumerate(self.table):
                if not (isinstance(v, (int, float)) and v > 0.0 and math.isfinite(v)):
                    raise ConfigError(f"{prefix}.table[{i}]", f"entries must be positive and finite, got {v!r}")
        if self.offsets_kind not in OFFSET_KINDS:
            raise ConfigError(f"{prefix}.offsets.kind",
                              f"unknown offsets kind {self.offsets_kind!r}; expected one of {OFFSET_KINDS}")
        if self.offsets_kind == "rho-proportional" and not (
                isinstance(self.rho, (int, float)) and math.isfinite(self.rho)):
            raise ConfigError(f"{prefix}.offsets.rho", f"rho must be a finite number, got {self.rho!r}")
        if self.offsets_kind == "custom-table":
            if len(self.offsets_table) == 0:
                raise ConfigError(f"{prefix}.offsets.table", "table is empty")
            for i, v in enumerate(self.offsets_table):
                if not (isinstance(v, (int, float)) and math.isfinite(v)):
                    raise ConfigError(f"{prefix}.offsets.table[{i}]", f"entries must be finite, got {v!r}")

    # -- evaluation -------------------------------------------------------

    @property
    def is_symmetric(self):
        return self.offsets_kind == "zero" or (self.offsets_kind == "rho-proportional" and self.rho == 0.0)

    @property
    def max_index(self):
        """Largest index with a defined coefficient (``None`` when unbounded)."""
        if self.kind == "custom-table":
            return len(self.table) - 1
        return None

    def gamma(self, n):
        """gamma_n as a float, with gamma_{-1} = 1. Accepts Python ints of any size."""
        if n == -1:
            return 1.0
        if n < -1:
            raise ValueError(f"index must be >= -1, got {n}")
        k = self.kind
        if k == "power-law":
            return self.c * float(n + 1) ** self.p
        if k == "hermite-exact":
            return math.sqrt((n + 1) / 2.0)
        if k == "freud-leading":
            return float(n + 1) ** (1.0 / self.beta_w) / 2.0
        if k == "detour-perturbed":
            return self.base.gamma(detour_index(n, self.period, self.depth))
        if n >= len(self.table):
            raise IndexError(f"custom table has {len(self.table)} entries, index {n} requested")
        return float(self.table[n])

    def gammas(self, count, start=0):
        """Vector of gamma_start .. gamma_{start+count-1}."""
        n = np.arange(start, start + count, dtype=np.int64)
        k = self.kind
        if k == "power-law":
            return self.c * (n + 1.0) ** self.p
        if k == "hermite-exact":
            return np.sqrt((n + 1.0) / 2.0)
        if k == "freud-leading":
            return (n + 1.0) ** (1.0 / self.beta_w) / 2.0
        if k == "detour-perturbed":
            idx = detour_index(n, self.period, self.depth)
            return self.base.gammas(int(idx.max()) + 1)[idx] if count else np.empty(0)
        if start + count > len(self.table):
            raise IndexError(f"custom table has {len(self.table)} entries, {start + count} requested")
        return np.asarray(self.table[start:start + count], dtype=np.float64)

    def gamma_mp(self, n):
        """gamma_n as an mpmath number at the working precision."""
        if n == -1:
            return mpmath.mpf(1)
        k = self.kind
        if k == "power-law":
            return mpmath.mpf(self.c) * mpmath.power(mpmath.mpf(n + 1), mpmath.mpf(self.p))
        if k == "hermite-exact":
            return mpmath.sqrt(mpmath.mpf(n + 1) / 2)
        if k == "freud-leading":
            return mpmath.power(mpmath.mpf(n + 1), 1 / mpmath.mpf(self.beta_w)) / 2
        if k == "detour-perturbed":
            return self.base.gamma_mp(detour_index(n, self.period, self.depth))
        return mpmath.mpf(self.table[n])

    def offsets(self, count):
        """Vector of diagonal offsets beta_0 .. beta_{count-1}."""
        if self.offsets_kind == "zero":
            return np.zeros(count)
        if self.offsets_kind == "rho-proportional":
            return self.rho * self.gammas(count)
        if count > len(self.offsets_table):
            raise IndexError(f"offsets table has {len(self.offsets_table)} entries, {count} requested")
        return np.asarray(self.offsets_table[:count], dtype=np.float64)

    # -- description ------------------------------------------------------

    @property
    def label(self):
        k = self.kind
        if k == "power-law":
            core = f"power-p{self.p:g}" if self.c == 1.0 else f"power-c{self.c:g}-p{self.p:g}"
        elif k == "hermite-exact":
            core = "hermite"
        elif k == "freud-leading":
            core = f"freud-b{self.beta_w:g}"
        elif k == "detour-perturbed":
            core = f"detour-q{self.period}-d{self.depth}-{self.base.label}"
        else:
            core = f"table{len(self.table)}"
        if self.offsets_kind == "rho-proportional":
            core += f"-rho{self.rho:g}"
        elif self.offsets_kind == "custom-table":
            core += "-offsets"
        return core

    def to_config(self):
        k = self.kind
        cfg = {"kind": k}
        if k == "power-law":
            cfg.update(c=self.c, p=self.p)
        elif k == "freud-leading":
            cfg["beta_w"] = self.beta_w
        elif k == "detour-perturbed":
            cfg["base"] = self.base.to_config()
            cfg["detour"] = {"period": self.period, "depth": self.depth}
        elif k == "custom-table":
            cfg["table"] = list(self.table)
        if self.offsets_kind != "zero":
            off = {"kind": self.offsets_kind}
            if self.offsets_kind == "rho-proportional":
                off["rho"] = self.rho
            else:
                off["table"] = list(self.offsets_table)
            cfg["offsets"] = off
        return cfg

    @classmethod
    def from_config(cls, cfg, prefix="family"):
        """Build a family from a nested mapping, reporting errors by key path."""
        if not isinstance(cfg, dict):
            raise ConfigError(prefix, "expected a mapping")
        known = {"kind", "c", "p", "beta_w", "base", "detour", "table", "offsets"}
        for key in cfg:
            if key not in known:
                raise ConfigError(f"{prefix}.{key}", "unknown key")
        if "kind" not in cfg:
            raise ConfigError(f"{prefix}.kind", "missing")
        kw = {"kind": cfg["kind"]}
        for key in ("c", "p", "beta_w"):
            if key in cfg:
                v = cfg[key]
                if isinstance(v, bool) or not isinstance(v, (int, float)):
                    raise ConfigError(f"{prefix}.{key}", f"expected a number, got {v!r}")
                kw[key] = float(v)
        if "base" in cfg:
            kw["base"] = cls.from_config(cfg["base"], prefix=f"{prefix}.base")
        if "detour" in cfg:
            det = cfg["detour"]
            if not isinstance(det, dict):
                raise ConfigError(f"{prefix}.detour", "expected a mapping")
            for key in det:
                if key not in ("period", "depth"):
                    raise ConfigError(f"{prefix}.detour.{key}", "unknown key")
            if "period" in det:
                kw["period"] = det["period"]
            if "depth" in det:
                kw["depth"] = det["depth"]
        if "table" in cfg:
            if not isinstance(cfg["table"], (list, tuple)):
                raise ConfigError(f"{prefix}.table", "expected a list")
            kw["table"] = tuple(cfg["table"])
        if "offsets" in cfg:
            off = cfg["offsets"]
            if not isinstance(off, dict):
                raise ConfigError(f"{prefix}.offsets", "expected a mapping")
            for key in off:
                if key not in ("kind", "rho", "table"):
                    raise ConfigError(f"{prefix}.offsets.{key}", "unknown key")
            kw["offsets_kind"] = off.get("kind", "zero")
            if "rho" in off:
                if isinstance(off["rho"], bool) or not isinstance(off["rho"], (int, float)):
                    raise ConfigError(f"{prefix}.offsets.rho", f"expected a number, got {off['rho']!r}")
                kw["rho"] = float(off["rho"])
            if "table" in off:
                if not isinstance(off["table"], (list, tuple)):
                    raise ConfigError(f"{prefix}.offsets.table", "expected a list")
                kw["offsets_table"] = tuple(off["table"])
        fam = cls.__new__(cls)
        for name, f in cls.__dataclass_fields__.items():
            object.__setattr__(fam, name, kw.get(name, f.default))
        fam._validate(prefix)
        return fam


def power_law(p, c=1.0):
    return CoefficientFamily("power-law", c=c, p=p)


def hermite():
    return CoefficientFamily("hermite-exact")


def freud(beta_w):
    return CoefficientFamily("freud-leading", beta_w=beta_w)


def detour(base, period=50, depth=3):
    return CoefficientFamily("detour-perturbed", base=base, period=period, depth=depth)


def custom_table(values):
    return CoefficientFamily("custom-table", table=tuple(float(v) for v in values))


def with_rho(family, rho):
    """Same coefficients with diagonal offsets beta_n = rho * gamma_n."""
    return dataclasses.replace(family, offsets_kind="rho-proportional", rho=float(rho))


def corpus():
    """The ten test families: five power laws and a detour version of each."""
    bases = [power_law(p) for p in (0.01, 0.25, 0.5, 0.75, 0.99)]
    return bases + [detour(b, period=20, depth=3) for b in bases]


# -- finite differences ------------------------------------------------------

def detour_region(family, index):
    """Index range (lo, hi) around the backward walk of the block holding ``index``.

    The range covers the reversed stretch plus two indices on each side, which
    is where the differences of a detour family are large. Returns None for
    other kinds.
    """
    if family.kind != "detour-perturbed":
        return None
    q, d = family.period, family.depth
    m = (2 * int(index)) // q
    k = (math.isqrt(4 * m + 1) - 1) // 2
    end = q * (k + 1) * (k + 2) // 2
    return end - d - 3, end + 1


def finite_differences(family, count):
    """First and second forward differences ``s_n``, ``ds_n`` for n < count."""
    g = family.gammas(count + 2)
    s = np.diff(g)
    return s[:count], np.diff(s)[:count]


def epsilon(family, n):
    """Local curvature term for the pair starting at 2n-2 (n >= 1)."""
    if n < 1:
        raise ValueError("epsilon is defined for n >= 1")
    g0, g1, g2 = family.gamma(2 * n - 2), family.gamma(2 * n - 1), family.gamma(2 * n)
    return (g0 * g2 - g1 * g1) / g1


def epsilon_from_differences(family, n):
    """Same quantity through the difference identity ``ds - s s' / gamma``."""
    if n < 1:
        raise ValueError("epsilon is defined for n >= 1")
    g0, g1, g2 = family.gamma(2 * n - 2), family.gamma(2 * n - 1), family.gamma(2 * n)
    s0, s1 = g1 - g0, g2 - g1
    return (s1 - s0) - s0 * s1 / g1


def eta(family, n):
    """Sum of the four absolute first differences s_{2n-4} .. s_{2n-1} (n >= 2)."""
    if n < 2:
        raise ValueError("eta is defined for n >= 2")
    g = [family.gamma(k) for k in range(2 * n - 4, 2 * n + 1)]
    return sum(abs(g[i + 1] - g[i]) for i in range(4))


# -- condition checks --------------------------------------------------------

CONDITIONS = {
    "C1": "gamma_n grows without bound",
    "C2": "first differences tend to zero",
    "C3": "gamma is almost increasing",
    "C4": "sum of 1/gamma diverges",
    "C5": "sum of 1/gamma^kappa converges for some kappa > 1",
    "C6": "sum of |s_n| / gamma_n^2 converges",
    "C7": "sum of |ds_n| / gamma_n converges",
}


@dataclass
class ConditionResult:
    status: str  # consistent | violated | inconclusive
    witness: int | None = None
    statistic: float | None = None
    note: str = ""


@dataclass
class ConditionReport:
    family: str
    horizon: int
    results: dict
    n0: int | None = None
    m0: int | None = None
    kappa: float | None = None

    def all_consistent(self):
        return all(r.status == "consistent" for r in self.results.values())

    def to_dict(self):
        return {
            "family": self.family,
            "horizon": self.horizon,
            "n0": self.n0,
            "m0": self.m0,
            "kappa": self.kappa,
            "conditions": {
                k: {"description": CONDITIONS[k], "status": r.status, "witness": r.witness,
                    "statistic": r.statistic, "note": r.note}
                for k, r in self.results.items()
            },
        }


def _dyadic_blocks(count):
    """Full blocks [2^j, 2^{j+1}) inside [0, count), the last TAIL_BLOCKS of them."""
    jmax = int(math.floor(math.log2(count))) - 1
    js = list(range(max(jmax - TAIL_BLOCKS + 1, 0), jmax + 1))
    return [(2 ** j, 2 ** (j + 1)) for j in js]


def _log_block_sums(log_terms, blocks):
    out = []
    for lo, hi in blocks:
        seg = log_terms[lo:hi]
        top = np.max(seg)
        if not np.isfinite(top):
            out.append(-np.inf)
            continue
        out.append(top + math.log(np.sum(np.exp(seg - top))))
    return np.array(out)


def tail_exponent(log_terms):
    """Decay exponent alpha of a positive series from its dyadic block sums.

    Block sums of a series with terms ~ n^-alpha scale like 2^{j(1 - alpha)}.
    Returns ``inf`` when the tail is identically zero.
    """
    blocks = _dyadic_blocks(len(log_terms))
    sums = _log_block_sums(np.asarray(log_terms, dtype=np.float64), blocks)
    if np.all(np.isneginf(sums)):
        return math.inf
    if np.any(np.isneginf(sums)):
        return math.nan
    j = np.arange(len(sums), dtype=np.float64)
    slope = np.polyfit(j, sums / math.log(2.0), 1)[0]
    return 1.0 - slope


def _block_slope(values, reducer):
    blocks = _dyadic_blocks(len(values))
    stats = np.array([reducer(values[lo:hi]) for lo, hi in blocks])
    if np.all(stats == 0.0):
        return -math.inf, blocks
    if np.any(stats <= 0.0):
        return math.nan, blocks
    j = np.arange(len(stats), dtype=np.float64)
    return np.polyfit(j, np.log2(stats), 1)[0], blocks


def _convergent(alpha, witness):
    if alpha > 1.0 + EXPONENT_SLACK:
        return ConditionResult("consistent", statistic=alpha)
    if alpha < 1.0 - EXPONENT_SLACK:
        return ConditionResult("violated", witness=witness, statistic=alpha,
                               note="tail block sums do not shrink")
    return ConditionResult("inconclusive", statistic=alpha, note="tail exponent too close to 1")


def _almost_increasing(g):
    """Per-index lag after which the sequence stays strictly above its current value.

    Returns an int array; entries equal to ``-1`` mean the index is never
    exceeded for good inside the horizon.
    """
    count = len(g)
    sufmin = np.minimum.accumulate(g[::-1])[::-1]
    lag = np.full(count, -1, dtype=np.int64)
    # sufmin is nondecreasing, so the first position where it beats g[n] is a bisection
    pos = np.searchsorted(sufmin, g, side="right")
    ok = pos < count
    lag[ok] = pos[ok] - np.arange(count)[ok]
    return lag


KAPPA_GRID = (1.25, 1.5, 1.75, 2.0) + tuple(float(k) for k in range(3, 1001))


def check_conditions(family, horizon=10_000):
    """Finite-horizon evidence for each regularity condition.

    Every verdict is tri-state. A violation carries a witness index inside
    the horizon. Tails are judged from dyadic blocks [2^j, 2^{j+1}).
    """
    if horizon < 100:
        raise ValueError("horizon must be at least 100")
    if family.max_index is not None and family.max_index + 1 < horizon + 2:
        raise ValueError(f"custom table too short for horizon {horizon}")
    g = family.gammas(horizon + 2)
    s = np.diff(g)
    ds = np.diff(s)
    g, s, ds = g[:horizon], s[:horizon], ds[:horizon]
    res = {}

    slope, blocks = _block_slope(g, np.min)
    last = blocks[-1]
    if slope > EXPONENT_SLACK:
        res["C1"] = ConditionResult("consistent", statistic=slope)
    elif slope <= 0.0 or not np.isfinite(slope):
        res["C1"] = ConditionResult("violated", witness=int(last[0] + np.argmin(g[last[0]:last[1]])),
                                    statistic=float(slope), note="block minima do not grow")
    else:
        res["C1"] = ConditionResult("inconclusive", statistic=slope, note="block minima grow too slowly")

    abs_s = np.abs(s)
    slope, blocks = _block_slope(abs_s, np.max)
    last = blocks[-1]
    if slope == -math.inf or slope < -EXPONENT_SLACK:
        res["C2"] = ConditionResult("consistent", statistic=float(slope))
    elif slope > EXPONENT_SLACK:
        res["C2"] = ConditionResult("violated", witness=int(last[0] + np.argmax(abs_s[last[0]:last[1]])),
                                    statistic=float(slope), note="block maxima of |s| grow")
    else:
        res["C2"] = ConditionResult("inconclusive", statistic=float(slope))

    lag = _almost_increasing(g)
    half = horizon // 2
    tail_lag = lag[half:]
    n0 = m0 = None
    # indices whose successors all lie beyond the horizon carry no information
    informative = np.arange(half, horizon) < horizon - max(1, horizon // 10)
    if np.any((tail_lag < 0) & informative):
        w = int(half + np.argmax((tail_lag < 0) & informative))
        res["C3"] = ConditionResult("violated", witness=w, note="value never exceeded later in the horizon")
    else:
        m0 = int(tail_lag[informative].max()) if np.any(informative) else 1
        bad = np.nonzero((lag < 0) | (lag > m0))[0]
        bad = bad[bad < horizon - max(1, horizon // 10)]
        n0 = int(bad.max()) + 1 if len(bad) else 0
        if m0 > horizon // 20:
            res["C3"] = ConditionResult("inconclusive", statistic=m0, note="lag comparable to horizon")
        else:
            res["C3"] = ConditionResult("consistent", statistic=m0)

    alpha = tail_exponent(-np.log(g))
    if alpha < 1.0 - EXPONENT_SLACK:
        res["C4"] = ConditionResult("consistent", statistic=alpha)
    elif alpha > 1.0 + EXPONENT_SLACK:
        res["C4"] = ConditionResult("violated", witness=horizon - 1, statistic=alpha,
                                    note="reciprocal tail looks summable")
    else:
        res["C4"] = ConditionResult("inconclusive", statistic=alpha)

    kappa = None
    for k in KAPPA_GRID:
        if tail_exponent(-k * np.log(g)) > 1.0 + EXPONENT_SLACK:
            kappa = k
            break
    if kappa is not None:
        res["C5"] = ConditionResult("consistent", statistic=kappa, note=f"kappa = {kappa:g}")
    elif tail_exponent(-KAPPA_GRID[-1] * np.log(g)) < 1.0 - EXPONENT_SLACK:
        res["C5"] = ConditionResult("violated", witness=horizon - 1,
                                    note=f"no kappa up to {KAPPA_GRID[-1]:g} gives a shrinking tail")
    else:
        res["C5"] = ConditionResult("inconclusive", note="no kappa on the grid decided")

    with np.errstate(divide="ignore"):
        res["C6"] = _convergent(tail_exponent(np.log(abs_s) - 2.0 * np.log(g)), horizon - 1)
        res["C7"] = _convergent(tail_exponent(np.log(np.abs(ds)) - np.log(g)), horizon - 1)
    return ConditionReport(family.label, horizon, res, n0=n0, m0=m0, kappa=kappa)
