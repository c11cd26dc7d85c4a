"""Operators K_n on finite sums of complex exponentials.

K_n multiplies the amplitude of e^{i w t} by i^n p_n(w), so a signal is kept
in its frequency-domain form and every identity below can be evaluated
exactly term by term. Sums over the index use compensated accumulation.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .limits import FLUCTUATION_TOL, LimitEstimate
from .recurrence import run_recurrence

T_GRID = (-2.0, -1.0, 0.0, 1.0, 2.0)


def rot(z, n):
    """i^n z by component swaps, exact for every integer n (n = -1 gives -i z)."""
    z = complex(z)
    k = n % 4
    if k == 0:
        return z
    if k == 1:
        return complex(-z.imag, z.real)
    if k == 2:
        return complex(-z.real, -z.imag)
    return complex(z.imag, -z.real)


@dataclass(frozen=True)
class TrigSignal:
    """f(t) = sum_k q_k e^{i omega_k t} with pairwise distinct real frequencies."""

    terms: tuple = ()

    def __post_init__(self):
        clean = []
        for w, q in self.terms:
            w, q = float(w), complex(q)
            if not (math.isfinite(w) and math.isfinite(q.real) and math.isfinite(q.imag)):
                raise ValueError("frequencies and amplitudes must be finite")
            clean.append((w, q))
        freqs = [w for w, _ in clean]
        if len(set(freqs)) != len(freqs):
            raise ValueError("frequencies must be pairwise distinct")
        object.__setattr__(self, "terms", tuple(clean))

    @classmethod
    def tone(cls, omega, q=1.0):
        return cls(((omega, q),))

    @classmethod
    def from_config(cls, items, prefix="signal"):
        from .coeffs import ConfigError
        if not isinstance(items, list):
            raise ConfigError(prefix, "expected a list of {omega, re, im} terms")
        terms = []
        for i, it in enumerate(items):
            key = f"{prefix}[{i}]"
            if not isinstance(it, dict) or "omega" not in it:
                raise ConfigError(key, "each term needs an omega")
            vals = []
            for name in ("omega", "re", "im"):
                v = it.get(name, 0.0)
                if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                    raise ConfigError(f"{key}.{name}", f"expected a finite number, got {v!r}")
                vals.append(float(v))
            terms.append((vals[0], complex(vals[1], vals[2])))
        try:
            return cls(tuple(terms))
        except ValueError as exc:
            raise ConfigError(prefix, str(exc)) from None

    def to_config(self):
        return [{"omega": w, "re": q.real, "im": q.imag} for w, q in self.terms]

    @property
    def band(self):
        return max((abs(w) for w, _ in self.terms), default=0.0)

    @property
    def freqs(self):
        return np.array([w for w, _ in self.terms])

    @property
    def amps(self):
        return np.array([q for _, q in self.terms], dtype=complex)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape, dtype=complex)
        for w, q in self.terms:
            out = out + q * np.exp(1j * w * t)
        return out

    def __add__(self, other):
        acc = dict(self.terms)
        for w, q in other.terms:
            acc[w] = acc.get(w, 0j) + q
        return TrigSignal(tuple(sorted(acc.items())))

    def scale(self, a):
        return TrigSignal(tuple((w, complex(a) * q) for w, q in self.terms))

    def derivative(self):
        """D_t: each amplitude times i omega."""
        return TrigSignal(tuple((w, rot(w * q, 1)) for w, q in self.terms))


ZERO = TrigSignal()


def _p(family, omega, n):
    return float(run_recurrence(family, omega, max(n, 0)).p[n]) if n >= 0 else 0.0


def apply_K(family, n, f):
    """K_n[f]; n = -1 gives the zero-amplitude signal."""
    if n < -1:
        raise ValueError("n must be >= -1")
    return TrigSignal(tuple((w, rot(_p(family, w, n) * q, n)) for w, q in f.terms))


def recurrence_residual(family, n, f):
    """Largest termwise relative residual of
    gamma_n K_{n+1}[f] = D_t K_n[f] + gamma_{n-1} K_{n-1}[f]."""
    if n < 0:
        raise ValueError("n must be >= 0")
    gn, gm = family.gamma(n), family.gamma(n - 1)
    worst = 0.0
    for w, q in f.terms:
        p = run_recurrence(family, w, n + 1).p
        pm = p[n - 1] if n >= 1 else 0.0
        lhs = gn * rot(p[n + 1] * q, n + 1)
        d = rot(w * rot(p[n] * q, n), 1)
        back = gm * rot(pm * q, n - 1) if n >= 1 else 0j
        scale = max(abs(lhs), abs(d), abs(back))
        if scale > 0:
            worst = max(worst, abs(lhs - (d + back)) / scale)
    return worst


# -- index sums --------------------------------------------------------------

class _Tables:
    """p_k(w) for every frequency needed, plus sum_{k<=n} 1/gamma_k."""

    def __init__(self, family, freqs, N):
        self.N = N
        self.p = {}
        inv = None
        for w in sorted(set(float(v) for v in freqs)):
            run = run_recurrence(family, w, N)
            self.p[w] = run.p
            inv = run.sum_invgamma
        if inv is None:
            inv = run_recurrence(family, 0.0, N).sum_invgamma
        self.inv = inv
        self._cross = {}

    def cross(self, a, b):
        """sum_{k<=n} p_k(a) p_k(b) for n = 0..N."""
        key = (a, b) if a <= b else (b, a)
        if key not in self._cross:
            pa, pb = self.p[key[0]], self.p[key[1]]
            self._cross[key] = kernels.neumaier_cumsum(pa[: self.N + 1] * pb[: self.N + 1])
        return self._cross[key]


def _pair_sum(tab, f, g, t):
    """sum_k K_k[f](t) conj(K_k[g](t)) for every n; shape (N+1, len(t))."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.zeros((tab.N + 1, len(t)), dtype=complex)
    for w, q in f.terms:
        for s, r in g.terms:
            c = tab.cross(w, s)
            phase = q * r.conjugate() * np.exp(1j * (w - s) * t) if w != s else np.full(len(t), q * r.conjugate())
            out += c[:, None] * phase[None, :]
    return out


def _energy_sum(tab, f, t):
    """sum_k |K_k[f](t)|^2 split into self terms (no t) and cross terms."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.zeros((tab.N + 1, len(t)))
    terms = f.terms
    for j, (w, q) in enumerate(terms):
        out += (abs(q) ** 2 * tab.cross(w, w))[:, None]
        for s, r in terms[j + 1:]:
            c = tab.cross(w, s)
            out += 2 * c[:, None] * np.real(q * r.conjugate() * np.exp(1j * (w - s) * t))[None, :]
    return out


def _modsq_at(tab, f, n, t):
    """|K_n[f](t)|^2 through the same self/cross expansion."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.zeros(len(t))
    terms = f.terms
    for j, (w, q) in enumerate(terms):
        pw = tab.p[w][n]
        out += abs(q) ** 2 * pw * pw
        for s, r in terms[j + 1:]:
            out += 2 * pw * tab.p[s][n] * np.real(q * r.conjugate() * np.exp(1j * (w - s) * t))
    return out


def local_energy(family, f, n, t):
    """beta_n^f(t) = gamma_n (|K_n[f](t)|^2 + |K_{n+1}[f](t)|^2)."""
    if n < 0:
        raise ValueError("n must be >= 0")
    tab = _Tables(family, f.freqs, n)
    v = family.gamma(n) * (_modsq_at(tab, f, n, t) + _modsq_at(tab, f, n + 1, t))
    return v if np.ndim(t) else float(v[0])


def nu_seq(family, f, N, t=T_GRID):
    """nu_n^f(t) for n = 0..N at each t; shape (N+1, len(t))."""
    tab = _Tables(family, f.freqs, N)
    return _energy_sum(tab, f, t) / tab.inv[:, None]


def t_spread(family, f, N, t=T_GRID):
    """max over t minus min over t of nu_N^f."""
    v = nu_seq(family, f, N, t)[N]
    return float(v.max() - v.min())


def inner_product(family, f, g, N, t=0.0):
    """sigma_N^{fg}(t) = sum_{k<=N} K_k[f](t) conj(K_k[g](t)) / sum 1/gamma_k."""
    tab = _Tables(family, np.concatenate([f.freqs, g.freqs]), N)
    v = _pair_sum(tab, f, g, t)[N] / tab.inv[N]
    return complex(v[0]) if np.ndim(t) == 0 else v


def norm(family, f, N=200_000, t=0.0, tol=FLUCTUATION_TOL):
    """Square root of the limit of nu_n^f at a reference t.

    The limit is taken from the growth of both sums across [N/2, N], the
    same estimator as the ratio limit. The zero signal has norm 0.
    """
    lo = N // 2
    if not f.terms:
        return LimitEstimate(0.0, (lo, N), 0.0, "cesaro", True, family.label, math.nan)
    tab = _Tables(family, f.freqs, N)
    num = _energy_sum(tab, f, [t])[:, 0]
    ks = np.unique(np.linspace(lo + (N - lo) // 2, N, 64).astype(np.int64))
    r = (num[ks] - num[lo]) / (tab.inv[ks] - tab.inv[lo])
    value = float(r[-1])
    fl = float((r.max() - r.min()) / abs(value)) if value else 0.0
    # the omega slot carries the frequency of a single tone, nan for mixtures
    w = float(f.terms[0][0]) if len(f.terms) == 1 else math.nan
    return LimitEstimate(math.sqrt(value), (lo, N), fl, "cesaro", fl <= tol, family.label, w)


# -- operator Christoffel-Darboux ---------------------------------------------

@dataclass
class CDResult:
    n: int
    residual: float
    relative: float
    scale: float


def operator_cd_check(family, f, g, n, ts=T_GRID):
    """Both sides of
    D_t sum_{m<=n} K_m[f] K_m[g] = gamma_n (K_{n+1}[f] K_n[g] + K_n[f] K_{n+1}[g])
    on a t grid. The derivative is exact: the product of e^{i w t} and
    e^{i s t} differentiates to i (w + s) times itself. ``relative`` is the
    largest residual over the largest side.
    """
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    if n < 0:
        raise ValueError("n must be >= 0")
    tab = _Tables(family, np.concatenate([f.freqs, g.freqs]), n + 1)
    lhs = np.zeros(len(ts), dtype=complex)
    rhs = np.zeros(len(ts), dtype=complex)
    for w, q in f.terms:
        for s, r in g.terms:
            pw, ps = tab.p[w], tab.p[s]
            # K_m[f] K_m[g] carries i^{2m} = (-1)^m
            sign = np.where(np.arange(n + 1) % 2 == 0, 1.0, -1.0)
            coeff = math.fsum((sign * pw[: n + 1] * ps[: n + 1]).tolist())
            e = q * r * np.exp(1j * (w + s) * ts)
            lhs += rot((w + s) * coeff, 1) * e
            edge = family.gamma(n) * (pw[n + 1] * ps[n] + pw[n] * ps[n + 1])
            rhs += rot(edge, 2 * n + 1) * e
    res = np.abs(lhs - rhs)
    scale = float(max(np.abs(lhs).max(initial=0.0), np.abs(rhs).max(initial=0.0)))
    worst = float(res.max(initial=0.0))
    return CDResult(n, worst, worst / scale if scale > 0 else 0.0, scale)


# -- orthogonality of distinct exponentials ----------------------------------

@dataclass
class OrthogonalityReport:
    family: str
    omega: float
    sigma: float
    checkpoints: list
    ratios: list
    bounds: list
    decay: float
    bound_holds: bool

    def to_dict(self):
        return {"family": self.family, "omega": self.omega, "sigma": self.sigma,
                "checkpoints": self.checkpoints, "ratios": self.ratios, "bounds": self.bounds,
                "decay": self.decay, "bound_holds": self.bound_holds}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


def orthogonality_check(family, omega, sigma, N=100_000, checkpoints=None):
    """sum_{k<=n} p_k(omega) p_k(sigma) / sum 1/gamma_k at checkpoints, next to
    the bound gamma_n (|p_{n+1}(w) p_n(s)| + |p_{n+1}(s) p_n(w)|) / |w - s| / sum 1/gamma_k.

    ``decay`` is the first checkpoint's |ratio| over the last one's.
    """
    if omega == sigma:
        raise ValueError("omega and sigma must differ")
    if checkpoints is None:
        checkpoints = [n for n in (10, 100, 1_000, 10_000, 100_000, 1_000_000) if n <= N]
        if not checkpoints or checkpoints[-1] != N:
            checkpoints.append(N)
    checkpoints = sorted(int(n) for n in checkpoints)
    tab = _Tables(family, [omega, sigma], N)
    c = tab.cross(float(min(omega, sigma)), float(max(omega, sigma)))
    pw, ps = tab.p[float(omega)], tab.p[float(sigma)]
    ratios, bounds = [], []
    for n in checkpoints:
        ratios.append(float(c[n] / tab.inv[n]))
        b = family.gamma(n) * (abs(pw[n + 1] * ps[n]) + abs(ps[n + 1] * pw[n])) / abs(omega - sigma)
        bounds.append(float(b / tab.inv[n]))
    first, last = abs(ratios[0]), abs(ratios[-1])
    decay = first / last if last > 0 else math.inf
    holds = all(abs(r) <= b * (1 + 1e-9) + 1e-15 for r, b in zip(ratios, bounds))
    return OrthogonalityReport(family.label, float(omega), float(sigma), checkpoints, ratios, bounds,
                               decay, holds)
