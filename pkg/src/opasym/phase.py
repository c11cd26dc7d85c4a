"""Phase and modulus decomposition of consecutive polynomial pairs.

With E_n = (-1)^n (p_{2n} + i p_{2n+1}) the three-term recurrence collapses to
the two-term step E_n = a_n E_{n-1} + b_n conj(E_{n-1}). Writing
E_n = |E_n| e^{i Phi_n} with an unwound (monotone) phase gives the increments
Delta_n, the multipliers mu_n = |E_n| / |E_{n-1}| and the log-sum S_n.

The odd-pair mode builds E_n from p_{2n+1}, p_{2n+2}. It is the same
construction applied to the shifted family gamma'_k = gamma_{k+1}.
"""
from __future__ import annotations

import io
import math
from dataclasses import asdict, dataclass, field

import mpmath
import numpy as np

from . import pairforms as pf
from ._backend import kernels
from .coeffs import detour_region
from .recurrence import fmt, run_recurrence

PARITIES = ("even-pair", "odd-pair")
CSV_HEADER = "n,abs_E,phi,delta,mu,S"


class PhaseMismatch(ArithmeticError):
    """Unwound phase and directly computed E_n disagree."""

    def __init__(self, index, mismatch):
        self.index = index
        self.mismatch = mismatch
        super().__init__(f"phase mismatch {mismatch:.3e} at n={index}")


def _check_parity(parity):
    if parity not in PARITIES:
        raise ValueError(f"parity must be one of {PARITIES}, got {parity!r}")
    return 1 if parity == "odd-pair" else 0


def pair_arrays(family, omega, n_pairs, parity="even-pair"):
    """Shifted gammas g'_k and values q_k (k = 0 .. 2 n_pairs + 1) for a parity."""
    shift = _check_parity(parity)
    run = run_recurrence(family, omega, 2 * n_pairs + shift)
    g = family.gammas(2 * n_pairs + 2, start=shift)
    q = run.p[shift: shift + 2 * n_pairs + 2]
    return g, q


def en_from_values(q):
    """E_n = (-1)^n (q_{2n} + i q_{2n+1}) for every complete pair in q."""
    m = len(q) // 2
    sign = np.where(np.arange(m) % 2 == 0, 1.0, -1.0)
    return sign * (q[0: 2 * m: 2] + 1j * q[1: 2 * m: 2])


def en_direct(family, omega, n, parity="even-pair"):
    """E_n from a three-term run."""
    if n < 0:
        raise ValueError("n must be >= 0")
    _, q = pair_arrays(family, omega, n, parity)
    return complex(en_from_values(q)[n])


def ab_from_gammas(g, omega):
    """Vectors a_n, b_n for n = 0 .. len(g)//2 - 1 (entry 0 is unused and set to nan)."""
    m = len(g) // 2
    a = np.full(m, np.nan + 0j)
    b = np.full(m, np.nan + 0j)
    if m > 1:
        n = np.arange(1, m)
        g0, g1, g2 = g[2 * n - 2], g[2 * n - 1], g[2 * n]
        a[1:] = pf.basic_a(pf.NP, g0, g1, g2, omega)
        b[1:] = pf.basic_b(pf.NP, g0, g1, g2, omega)
    return a, b


def ab_coefficients(family, omega, n, parity="even-pair"):
    """(a_n, b_n) of the two-term step, n >= 1."""
    if n < 1:
        raise ValueError("a_n and b_n are defined for n >= 1")
    s = _check_parity(parity)
    g0, g1, g2 = (family.gamma(2 * n - 2 + s), family.gamma(2 * n - 1 + s), family.gamma(2 * n + s))
    return complex(pf.basic_a(pf.NP, g0, g1, g2, omega)), complex(pf.basic_b(pf.NP, g0, g1, g2, omega))


def ab_mp(family, omega, n, parity="even-pair"):
    """(a_n, b_n) in mpmath at the working precision; n may be astronomically large."""
    s = _check_parity(parity)
    g0, g1, g2 = (family.gamma_mp(2 * n - 2 + s), family.gamma_mp(2 * n - 1 + s), family.gamma_mp(2 * n + s))
    w = mpmath.mpf(omega)
    return pf.basic_a(pf.MP, g0, g1, g2, w), pf.basic_b(pf.MP, g0, g1, g2, w)


def en_two_term_step(a, b, e_prev):
    """a E + b conj(E). A zero E_prev leaves the phase undefined and raises."""
    if e_prev == 0:
        raise ZeroDivisionError("E_prev = 0: phase undefined at this step")
    return a * e_prev + b * np.conj(e_prev)


def en_two_term(family, omega, n_pairs, parity="even-pair"):
    """E_0 .. E_N composed by the two-term step from the direct E_0.

    Zero intermediate values (phase undefined) are recorded in the second
    return value and the run continues from the direct E_n.
    """
    g, q = pair_arrays(family, omega, n_pairs, parity)
    direct = en_from_values(q)
    a, b = ab_from_gammas(g, omega)
    out = np.empty(n_pairs + 1, dtype=complex)
    out[0] = direct[0]
    zeros = []
    for n in range(1, n_pairs + 1):
        prev = out[n - 1]
        if prev == 0:
            zeros.append(n - 1)
            prev = direct[n - 1]
        out[n] = a[n] * prev + b[n] * np.conj(prev)
    return out, zeros


def lambda_from_gammas(g):
    m = len(g) // 2
    lam = np.empty(m)
    lam[0] = 1.0 / (1.0 / g[0] + 1.0 / g[1])
    n = np.arange(1, m)
    lam[1:] = pf.lam(g[2 * n - 2], g[2 * n - 1], g[2 * n], g[2 * n + 1])
    return lam


def lambda_seq(family, n, parity="even-pair"):
    """lambda_n: lambda_0 = 1/(1/g_0 + 1/g_1), otherwise a ratio of reciprocal pair sums."""
    if n < 0:
        raise ValueError("n must be >= 0")
    s = _check_parity(parity)
    g = [family.gamma(k + s) for k in range(max(2 * n - 2, 0), 2 * n + 2)]
    if n == 0:
        return 1.0 / (1.0 / g[0] + 1.0 / g[1])
    return pf.lam(*g)


def pair_bridge(family, n):
    """(1/gamma_{2n} + 1/gamma_{2n+1}) gamma_{2n} / 2, which tends to 1."""
    g0, g1 = family.gamma(2 * n), family.gamma(2 * n + 1)
    return (1.0 / g0 + 1.0 / g1) * g0 / 2.0


@dataclass
class PhaseTrace:
    """Unwound phase data for n = 0 .. N.

    ``regime[n]`` marks indices where Im a_n > |b_n| and Delta_n came from the
    two-term argument; elsewhere it came from branch continuation of arg E_n.
    ``burn_in`` is the first index from which the regime holds to the end of
    the run (None if it does not hold at the end).
    """

    family: str
    omega: float
    parity: str
    E_abs: np.ndarray
    Phi: np.ndarray
    Delta: np.ndarray
    mu: np.ndarray
    S: np.ndarray
    regime: np.ndarray
    burn_in: int | None
    max_mismatch: float
    gamma: np.ndarray = field(repr=False)
    E: np.ndarray = field(repr=False)

    @property
    def n(self):
        return np.arange(len(self.Phi))

    @property
    def horizon(self):
        return len(self.Phi) - 1

    def to_csv(self, path=None):
        buf = io.StringIO()
        buf.write(CSV_HEADER + "\n")
        for k in range(len(self.Phi)):
            buf.write(f"{k},{fmt(self.E_abs[k])},{fmt(self.Phi[k])},{fmt(self.Delta[k])},"
                      f"{fmt(self.mu[k])},{fmt(self.S[k])}\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def unwind_phase(family, omega, n_pairs, parity="even-pair", tol=1e-8):
    """Unwound phase, increments, multipliers and log-sum for n = 0 .. n_pairs."""
    omega = float(omega)
    if not omega > 0:
        raise ValueError("omega must be positive; negative points follow by the symmetry p_n(-w) = (-1)^n p_n(w)")
    if n_pairs < 1:
        raise ValueError("need at least one pair step")
    g, q = pair_arrays(family, omega, n_pairs, parity)
    e = en_from_values(q)
    a, b = ab_from_gammas(g, omega)
    arg_e = np.arctan2(e.imag, e.real)
    phi, delta, mu, regime, miss = kernels.unwind(
        np.ascontiguousarray(a.real), np.ascontiguousarray(a.imag),
        np.ascontiguousarray(b.real), np.ascontiguousarray(b.imag), arg_e)
    e_abs = np.abs(e)
    mu[0] = e_abs[0]
    on = regime.astype(bool)
    bad = np.nonzero(on & (miss > tol))[0]
    if bad.size:
        raise PhaseMismatch(int(bad[0]), float(miss[bad[0]]))
    # modulus consistency: |E_n| against |E_{n-1}| mu_n
    rel = np.abs(e_abs[1:] - e_abs[:-1] * mu[1:]) / e_abs[1:]
    bad = np.nonzero(rel > tol)[0]
    if bad.size:
        raise PhaseMismatch(int(bad[0]) + 1, float(rel[bad[0]]))
    if on[1:].size and np.any(on[1:] & ~((delta[1:] > 0) & (delta[1:] < math.pi))):
        raise PhaseMismatch(int(np.nonzero(on[1:] & (delta[1:] <= 0))[0][0]) + 1, float("nan"))
    lam = lambda_from_gammas(g)
    terms = np.empty(n_pairs + 1)
    terms[0] = 2.0 * math.log(e_abs[0])
    terms[1:] = 2.0 * np.log(mu[1:]) + np.log(lam[:-1])
    S = kernels.neumaier_cumsum(terms) + np.log(lam)
    off = np.nonzero(~on[1:])[0]
    if off.size == 0:
        burn = 1
    elif off[-1] + 1 == n_pairs:
        burn = None
    else:
        burn = int(off[-1]) + 2
    return PhaseTrace(family.label, omega, parity, e_abs, phi, delta, mu, S, regime, burn,
                      float(miss[on].max()) if on.any() else 0.0, g, e)


def reconstruct_abs2(trace):
    """exp(S_n) (1/g_{2n} + 1/g_{2n+1}), equal to |E_n|^2."""
    g = trace.gamma
    n = trace.n
    return np.exp(trace.S) * (1.0 / g[2 * n] + 1.0 / g[2 * n + 1])


def backward_mu_delta(a_prev, b_prev, phi):
    """mu and Delta of step n from (a_{n-1}, b_{n-1})-free data: inverts step n.

    Given the coefficients of step n and Phi_n, returns
    ((|a|^2-|b|^2)/|a - conj(b) e^{2i Phi_n}|, arg(a - conj(b) e^{2i Phi_n})).
    """
    z = pf.backward_factor(pf.NP, a_prev, b_prev, 2.0 * phi)
    return (abs(a_prev) ** 2 - abs(b_prev) ** 2) / np.abs(z), np.angle(z)


# -- increment asymptotics ---------------------------------------------------

def _dps_for(n):
    return max(30, len(str(int(n))) + 30)


def increment_envelope_mp(family, omega, n, parity="even-pair"):
    """Bounds on Delta_n gamma_{2n-1} / omega valid for every phase.

    When Im a_n > |b_n| the increment arg(a_n + b_n e^{-2i Phi}) lies within
    arcsin(|b_n|/|a_n|) of arg a_n whatever Phi is. Returns (lo, hi, regime).
    Evaluated in mpmath so n can be far beyond any forward run.
    """
    s = _check_parity(parity)
    with mpmath.workdps(_dps_for(n)):
        a, b = ab_mp(family, omega, n, parity)
        scale = family.gamma_mp(2 * n - 1 + s) / mpmath.mpf(omega)
        regime = mpmath.im(a) > abs(b)
        if not abs(b) < abs(a):
            return -math.inf, math.inf, False
        w = mpmath.asin(abs(b) / abs(a))
        c = mpmath.arg(a)
        return float((c - w) * scale), float((c + w) * scale), bool(regime)


def _probe_pairs(family, n, parity):
    """n plus, for detour families, the pair steps touching the nearby irregular stretch."""
    s = _check_parity(parity)
    out = {int(n)}
    region = detour_region(family, 2 * n + s)
    if region is not None:
        lo, hi = region
        lo, hi = lo - s, hi - s
        out.update(range(max(1, lo // 2), (hi + 2) // 2 + 1))
    return sorted(out)


@dataclass
class BandReport:
    """Where Delta_n gamma_{2n-1}/omega settles inside [1 - band, 1 + band].

    ``n0`` is the first index from which every direct value (n <= horizon) and
    every envelope probe beyond the horizon lies in the band. ``certified`` is
    False when the probes never settled before ``max_log2``.
    """

    family: str
    omega: float
    band: float
    horizon: int
    n0: int | None
    certified: bool
    last_direct_out: int | None
    last_probe_out: int | None
    probes: int
    final_ratio: float

    def to_dict(self):
        return asdict(self)


def delta_band(family, omega=1.0, n_pairs=2 ** 20, band=0.01, parity="even-pair",
               per_octave=2, settle_octaves=8, max_log2=4096, trace=None):
    """First index after which Delta_n gamma_{2n-1}/omega stays within the band.

    Direct increments from an unwound run cover n <= n_pairs. Beyond that the
    phase-free envelope of :func:`increment_envelope_mp` is probed on a
    geometric grid (``per_octave`` points per doubling, plus the irregular
    stretch next to each probe for detour families) until it has stayed
    inside a quarter of the band for ``settle_octaves`` doublings.
    """
    tr = trace if trace is not None else unwind_phase(family, omega, n_pairs, parity)
    n = tr.n[1:]
    ratio = tr.Delta[1:] * tr.gamma[2 * n - 1] / omega
    out = np.nonzero(np.abs(ratio - 1.0) > band)[0]
    last_direct = int(n[out[-1]]) if out.size else None
    last_probe = None
    quiet = 0
    probes = 0
    need = settle_octaves * per_octave
    k = 1
    settled = False
    base = tr.horizon
    while True:
        e = k / per_octave
        if e > max_log2:
            break
        m = int(base * 2 ** e) if e < 60 else base * (1 << int(e))
        bad = False
        tight = True
        for q in _probe_pairs(family, m, parity):
            if q <= base:
                continue
            lo, hi, reg = increment_envelope_mp(family, omega, q, parity)
            probes += 1
            if not reg or lo < 1 - band or hi > 1 + band:
                bad = True
                last_probe = q
            if not reg or lo < 1 - band / 4 or hi > 1 + band / 4:
                tight = False
        quiet = quiet + 1 if tight and not bad else 0
        if quiet >= need:
            settled = True
            break
        k += 1
    if last_probe is not None:
        n0 = last_probe + 1
    elif last_direct is not None:
        n0 = last_direct + 1
    else:
        n0 = 1
    return BandReport(family.label, float(omega), band, tr.horizon, n0 if settled else None, settled,
                      last_direct, last_probe, probes, float(ratio[-1]))


@dataclass
class DecayFit:
    """Fitted decay order (in gamma) of the pair-sum residual |Delta_{n-1} + Delta_n - 2 omega/gamma_{2n-1}|."""

    family: str
    omega: float
    route: str
    n: list
    gamma: list
    residual: list
    order: float

    def to_dict(self):
        return asdict(self)


def _fit_order(gam, res):
    lg = np.log(np.asarray(gam, dtype=float))
    lr = np.log(np.asarray(res, dtype=float))
    slope = np.polyfit(lg, lr, 1)[0]
    return float(-slope)


def pair_sum_decay(family, omega=1.0, n_pairs=2 ** 20, parity="even-pair", x_start=0.125,
                   min_points=8, min_ratio=8.0, t_points=256, trace=None):
    """Decay order of the residual of Delta_{n-1} + Delta_n against 2 omega / gamma_{2n-1}.

    Route "window": at dyadic n inside the run, the maximum residual over
    the next ceil(pi gamma_{2n-1}/omega) steps, long enough for 2 Phi to
    sweep a full turn. Route "uniform" is used when the run does not reach far
    enough into the asymptotic regime: the residual is bounded by the
    maximum over t of |G_n(t)/2 - 2 omega/gamma_{2n-1}| (the pair sum equals
    G_n(2 Phi_{n-1})/2), evaluated in mpmath at dyadic n up to a gamma ratio
    of 16, including the irregular stretch of detour families.
    """
    s = _check_parity(parity)
    tr = trace if trace is not None else unwind_phase(family, omega, n_pairs, parity)
    g = tr.gamma
    M = tr.horizon
    pts, gam, res = [], [], []
    j = 1
    while 2 ** j <= M:
        n = 2 ** j
        x = omega / g[2 * n - 1]
        w = int(math.ceil(math.pi / x))
        if x <= x_start and n + w <= M:
            idx = np.arange(n, n + w)
            r = np.abs(tr.Delta[idx - 1] + tr.Delta[idx] - 2.0 * omega / g[2 * idx - 1])
            pts.append(n)
            gam.append(float(g[2 * n - 1]))
            res.append(float(r.max()))
        j += 1
    if len(pts) >= min_points and gam[-1] / gam[0] >= min_ratio:
        return DecayFit(family.label, float(omega), "window", pts, gam, res, _fit_order(gam, res))
    # uniform route
    j0 = 1
    while float(family.gamma(2 ** (j0 + 1) - 1 + s)) * x_start < omega:
        j0 += 1
    g0 = float(family.gamma(2 ** (j0 + 1) - 1 + s))
    j1 = j0
    while float(family.gamma(2 ** (j1 + 1) - 1 + s)) < 16 * g0:
        j1 += 1
    js = sorted(set(np.linspace(j0, j1, 10).round().astype(int).tolist()))
    pts, gam, res = [], [], []
    for j in js:
        n = 2 ** j
        with mpmath.workdps(_dps_for(n)):
            gn = family.gamma_mp(2 * n - 1 + s)
            worst = mpmath.mpf(0)
            for q in _probe_pairs(family, n, parity):
                an, bn = ab_mp(family, omega, q, parity)
                am, bm = ab_mp(family, omega, q - 1, parity)
                gq = family.gamma_mp(2 * q - 1 + s)
                target = 2 * mpmath.mpf(omega) / gq
                for i in range(t_points):
                    t = 2 * mpmath.pi * i / t_points
                    v = abs(mpmath.re(pf.G_pair(pf.MP, an, bn, am, bm, t)) / 2 - target)
                    if v > worst:
                        worst = v
            pts.append(n)
            gam.append(float(gn))
            res.append(float(worst))
    return DecayFit(family.label, float(omega), "uniform", pts, gam, res, _fit_order(gam, res))
