"""Kernel functions of the small parameter x = omega/gamma and numerical
checks that the remainders of the pair-step expansions decay at their
stated orders.
"""
from __future__ import annotations

import functools
import json
import math
from dataclasses import asdict, dataclass

import mpmath
import numpy as np

from . import pairforms as pf
from .coeffs import check_conditions

X_MAX = 0.25
SERIES_CUTOFF = 1e-4
BRANCH_TOL = 1e-12
IMAG_TOL = 1e-12
T_POINTS = 256
SLACK = 0.3


class BranchCutError(ArithmeticError):
    """A logarithm argument came within tolerance of the negative real axis."""


class PreconditionError(ValueError):
    """The family does not satisfy the growth conditions the expansions assume."""


class RangeError(ValueError):
    """The sample indices do not span enough of the gamma range for a fit."""


def _check_x(x):
    xa = np.abs(np.asarray(x, dtype=float))
    if np.any(xa >= X_MAX):
        raise ValueError(f"|x| must be below {X_MAX}")


def _real(z):
    z = np.asarray(z)
    im = np.max(np.abs(np.imag(z))) if z.size else 0.0
    scale = max(1.0, float(np.max(np.abs(z)))) if z.size else 1.0
    if im > IMAG_TOL * scale:
        raise ArithmeticError(f"kernel expected real, imaginary part {im:.3e}")
    r = np.real(z)
    return float(r) if r.ndim == 0 else r


def f_kernel(x, t):
    """Real kernel f(x, t); vanishes at x = 0."""
    _check_x(x)
    return _real(pf.f_kernel(pf.NP, np.asarray(x, dtype=float), np.asarray(t, dtype=float)))


def g_kernel(x, t):
    """Real kernel g(x, t) = 4x + O(x^2)."""
    _check_x(x)
    return _real(pf.g_kernel(pf.NP, np.asarray(x, dtype=float), np.asarray(t, dtype=float)))


def _h_series(x, t):
    c, s = np.cos(t), np.sin(t)
    return (x * c / 2 + x * x * s * c / 4 + x ** 3 * (-c ** 3 / 8 - 5 * c / 24)
            + x ** 4 * (-s * c ** 3 / 16 + 11 * s * c / 48))


def _lmg_series(m, x, t):
    c, s = np.cos(t), np.sin(t)
    return (1 - 2 * m * m * x * x / 3 + x ** 3 * (2 * m * m * s / 3 - 1j * m * c)
            + x ** 4 * (2 * m ** 4 / 15 + m * m * np.cos(2 * t) / 12 - 11 * m * m / 36
                        + 1j * m * np.sin(2 * t) / 4))


def h_kernel(x, t):
    """f/g, with a fourth-order series near x = 0 where the quotient is 0/0."""
    _check_x(x)
    x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
    small = np.abs(x) < SERIES_CUTOFF
    xs = np.where(small, 0.1, x)
    with np.errstate(all="ignore"):
        direct = np.real(pf.f_kernel(pf.NP, xs, t)) / np.real(pf.g_kernel(pf.NP, xs, t))
    out = np.where(small, _h_series(x, t), direct)
    return float(out) if out.ndim == 0 else out


def h_simplified(x, t):
    """The arctan/log closed form of f/g (0/0 at x = 0)."""
    _check_x(x)
    return pf.h_closed(pf.NP, np.asarray(x, dtype=float), np.asarray(t, dtype=float))


def _check_m(m):
    if int(m) != m or m == 0:
        raise ValueError("m must be a nonzero integer")
    return int(m)


def l_kernel(m, x, t):
    """Complex kernel l(m, x, t)."""
    m = _check_m(m)
    _check_x(x)
    return pf.l_kernel(pf.NP, m, np.asarray(x, dtype=float), np.asarray(t, dtype=float))


def l_over_mg(m, x, t):
    """l(m, x, t) / (m g(x, t)), tending to 1 as x -> 0."""
    m = _check_m(m)
    _check_x(x)
    x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
    small = np.abs(x) < SERIES_CUTOFF
    xs = np.where(small, 0.1, x)
    with np.errstate(all="ignore"):
        direct = pf.l_kernel(pf.NP, m, xs, t) / (m * np.real(pf.g_kernel(pf.NP, xs, t)))
    out = np.where(small, _lmg_series(m, x, t), direct)
    return complex(out) if out.ndim == 0 else out


def eps_kernel(m, x, t):
    """e^{imt} (l/(m g) - 1)."""
    t = np.asarray(t, dtype=float)
    out = np.exp(1j * _check_m(m) * t) * (l_over_mg(m, x, t) - 1.0)
    return complex(out) if np.ndim(out) == 0 else out


# -- exact pair combinations -------------------------------------------------

def _log_args(an, bn, am, bm, t):
    e = np.exp(1j * t)
    ei = np.exp(-1j * t)
    return (np.conj(an) + np.conj(bn) * e, an + bn * ei, np.conj(am) - bm * ei, am - np.conj(bm) * e)


def _check_branch(args):
    for z in args:
        z = np.asarray(z)
        near = (np.real(z) < 0) & (np.abs(np.imag(z)) <= BRANCH_TOL * np.maximum(np.abs(z), 1.0))
        if np.any(near | (np.abs(z) <= BRANCH_TOL)):
            raise BranchCutError("logarithm argument within 1e-12 of the branch cut")


def _pair_coeffs(family, omega, n):
    if n < 2:
        raise ValueError("n must be >= 2")
    g = [family.gamma(k) for k in range(2 * n - 4, 2 * n + 1)]
    if abs(omega) / g[3] >= X_MAX:
        raise ValueError("omega/gamma_{2n-1} must be below 1/4")
    an = complex(pf.basic_a(pf.NP, g[2], g[3], g[4], omega))
    bn = complex(pf.basic_b(pf.NP, g[2], g[3], g[4], omega))
    am = complex(pf.basic_a(pf.NP, g[0], g[1], g[2], omega))
    bm = complex(pf.basic_b(pf.NP, g[0], g[1], g[2], omega))
    lam = pf.lam(g[0], g[1], g[2], g[3])
    return an, bn, am, bm, lam


def Fn_Gn_Hn_exact(family, omega, n, t):
    """(F_n(t), G_n(t), H_n(t)) from the exact pair coefficients."""
    an, bn, am, bm, lam = _pair_coeffs(family, omega, n)
    t = np.asarray(t, dtype=float)
    _check_branch(_log_args(an, bn, am, bm, t))
    F = np.real(pf.F_pair(pf.NP, an, bn, am, bm, lam, t))
    G = np.real(pf.G_pair(pf.NP, an, bn, am, bm, t))
    H = F / G
    if F.ndim == 0:
        return float(F), float(G), float(H)
    return F, G, H


def Ln_exact(family, omega, n, m, t):
    """L_n(m, t) from the exact pair coefficients."""
    an, bn, am, bm, _ = _pair_coeffs(family, omega, n)
    return pf.L_pair(pf.NP, _check_m(m), an, bn, am, bm, np.asarray(t, dtype=float))


# -- remainder checks --------------------------------------------------------

class _Ctx:
    """Exact data around pair step n in mpmath (gamma_{2n-4} .. gamma_{2n})."""

    def __init__(self, family, omega, n):
        self.n = n
        w = self.w = mpmath.mpf(omega)
        g = self.g = {k: family.gamma_mp(k) for k in range(2 * n - 4, 2 * n + 1)}
        self.s = {k: g[k + 1] - g[k] for k in range(2 * n - 4, 2 * n)}
        self.ds = {k: self.s[k + 1] - self.s[k] for k in range(2 * n - 4, 2 * n - 1)}
        self.g1 = g[2 * n - 1]
        self.x = w / self.g1
        self.an = pf.basic_a(pf.MP, g[2 * n - 2], g[2 * n - 1], g[2 * n], w)
        self.bn = pf.basic_b(pf.MP, g[2 * n - 2], g[2 * n - 1], g[2 * n], w)
        self.am = pf.basic_a(pf.MP, g[2 * n - 4], g[2 * n - 3], g[2 * n - 2], w)
        self.bm = pf.basic_b(pf.MP, g[2 * n - 4], g[2 * n - 3], g[2 * n - 2], w)
        self.lam = pf.lam(g[2 * n - 4], g[2 * n - 3], g[2 * n - 2], g[2 * n - 1])
        self.eta = sum(abs(v) for v in self.s.values())
        self.eps = (g[2 * n - 2] * g[2 * n] - g[2 * n - 1] ** 2) / g[2 * n - 1]

    def S(self, k):
        return self.s[2 * self.n + k]

    def D(self, k):
        return self.ds[2 * self.n + k]


I = mpmath.mpc(0, 1)


def _lemma_basicn(c, t):
    x, g, w = c.x, c.g1, c.w
    a, b = c.an, c.bn
    s1, s2 = c.S(-1), c.S(-2)
    return {
        "re_a": mpmath.re(a) - (1 - x * x / 2 - (s1 + s2) / (2 * g)),
        "im_a": mpmath.im(a) - x * (1 - (s1 + s2) / (2 * g)),
        "re_b": mpmath.re(b) - (x * x / 2 + c.D(-2) / (2 * g)),
        "im_b": mpmath.im(b) + w * (s1 + s2) / (2 * g * g),
    }


def _lemma_basicm(c, t):
    x, g, w = c.x, c.g1, c.w
    a, b = c.am, c.bm
    s3, s4 = c.S(-3), c.S(-4)
    return {
        "re_a": mpmath.re(a) - (1 - x * x / 2 - (s3 + s4) / (2 * g)),
        "im_a": mpmath.im(a) - x * (1 + (s3 + s4) / (2 * g) + (c.D(-3) + c.D(-4)) / g),
        "re_b": mpmath.re(b) - (x * x / 2 + c.D(-4) / (2 * g)),
        "im_b": mpmath.im(b) + w * (s4 + s3) / (2 * g * g),
    }


def _base_fwd(x, t):
    return 1 - x * x / 2 + I * x + x * x / 2 * mpmath.expj(-t)


def _base_bwd(x, t):
    return 1 - x * x / 2 + I * x - x * x / 2 * mpmath.expj(t)


def _fwd_terms(c, t):
    g = c.g1
    return (c.D(-2) * mpmath.cos(t) / (2 * g) - (c.S(-2) + c.S(-1)) / (2 * g)
            - I * c.D(-2) * mpmath.sin(t) / (2 * g))


def _bwd_terms(c, t):
    g = c.g1
    return (-c.D(-4) * mpmath.cos(t) / (2 * g) - (c.S(-4) + c.S(-3)) / (2 * g)
            - I * c.D(-4) * mpmath.sin(t) / (2 * g))


def _lemma_ztztt(c, t):
    fwd = pf.forward_factor(pf.MP, c.an, c.bn, t)
    bwd = pf.backward_factor(pf.MP, c.am, c.bm, t)
    return {
        "fwd": fwd - (_base_fwd(c.x, t) + _fwd_terms(c, t)),
        "bwd": bwd - (_base_bwd(c.x, t) + _bwd_terms(c, t)),
    }


def _lemma_lgztztt(c, t):
    fwd = pf.forward_factor(pf.MP, c.an, c.bn, t)
    bwd = pf.backward_factor(pf.MP, c.am, c.bm, t)
    return {
        "fwd": mpmath.log(fwd) - (mpmath.log(_base_fwd(c.x, t)) + _fwd_terms(c, t)),
        "bwd": mpmath.log(bwd) - (mpmath.log(_base_bwd(c.x, t)) + _bwd_terms(c, t)),
    }


def _lemma_twologs(c, t):
    g = c.g1
    return {
        "log1": mpmath.log(abs(c.am) ** 2 - abs(c.bm) ** 2) + (c.S(-4) + c.S(-3)) / g,
        "log2": mpmath.log(c.lam) - (c.S(-4) + 2 * c.S(-3) + c.S(-2)) / (2 * g),
    }


def _FG(c, t):
    F, G = pf.FG_pair(pf.MP, c.an, c.bn, c.am, c.bm, c.lam, t)
    return mpmath.re(F), mpmath.re(G)


def _fg(c, t):
    f, g = pf.fg_kernels(pf.MP, c.x, t)
    return mpmath.re(f), mpmath.re(g)


def _lemma_FG1(c, t):
    F, G = _FG(c, t)
    f, g = _fg(c, t)
    d = c.D(-4) + c.D(-2)
    return {
        "F": F - f - d * mpmath.cos(t) / c.g1 + (c.D(-3) + c.D(-2)) / c.g1,
        "G": G - g + d * mpmath.sin(t) / c.g1,
    }


def _lemma_recG(c, t):
    _, G = _FG(c, t)
    _, g = _fg(c, t)
    d = c.D(-4) + c.D(-2)
    return {"recG": 1 / G - 1 / g - c.g1 * d * mpmath.sin(t) / (16 * c.w ** 2)}


def _lemma_FoverG(c, t):
    F, G = _FG(c, t)
    f, g = _fg(c, t)
    main = ((c.D(-2) + c.D(-4)) * mpmath.cos(t) - c.D(-3) - c.D(-2)) / (4 * c.w)
    return {"H": F / G - f / g - main}


def _lemma_lm(c, t):
    x = c.x
    back = (mpmath.conj(c.am) - c.bm * mpmath.expj(-t)) / (c.am - mpmath.conj(c.bm) * mpmath.expj(t))
    fwd = (c.an + c.bn * mpmath.expj(-t)) / (mpmath.conj(c.an) + mpmath.conj(c.bn) * mpmath.expj(t))
    back0 = (1 - x * x / 2 - I * x - x * x / 2 * mpmath.expj(-t)) / (1 - x * x / 2 + I * x - x * x / 2 * mpmath.expj(t))
    fwd0 = (1 - x * x / 2 + I * x + x * x / 2 * mpmath.expj(-t)) / (1 - x * x / 2 - I * x + x * x / 2 * mpmath.expj(t))
    return {
        "fracas": back - back0 - I * c.D(-4) * mpmath.sin(t) / c.g1,
        "frac2": fwd - fwd0 + I * c.D(-2) * mpmath.sin(t) / c.g1,
    }


M_VALUES = (1, 2, 3)


def _lemma_lm3(c, t):
    d = c.D(-4) + c.D(-2)
    out = {}
    for m in M_VALUES:
        L = pf.L_pair(pf.MP, m, c.an, c.bn, c.am, c.bm, t)
        out[f"m{m}"] = L - pf.l_kernel(pf.MP, m, c.x, t) + m * d * mpmath.sin(t) / c.g1
    return out


def _lemma_LG(c, t):
    _, G = _FG(c, t)
    _, g = _fg(c, t)
    d = c.D(-4) + c.D(-2)
    out = {}
    for m in M_VALUES:
        L = pf.L_pair(pf.MP, m, c.an, c.bn, c.am, c.bm, t)
        l = pf.l_kernel(pf.MP, m, c.x, t)
        out[f"m{m}"] = L / (m * G) - l / (m * g) + d * d * mpmath.sin(t) ** 2 / (16 * c.w ** 2)
    return out


def _lemma_arcsin(c, t):
    return {"arcsin": mpmath.asin(abs(c.bn) / abs(c.an))}


def _lemma_serG(c, t):
    _, G = _FG(c, t)
    return {"serG": c.g1 / c.w * G - 4}


def _lemma_asdel(c, t):
    _, G = _FG(c, t)
    return {"asdel": G / 2 - 2 * c.w / c.g1}


def _b_s1_g2(c):
    return abs(c.S(-1)) / c.g1 ** 2


def _b_s1_g3(c):
    return abs(c.S(-1)) / c.g1 ** 3


def _b_eta_g2(c):
    return c.eta / c.g1 ** 2


def _b_eta_g3(c):
    return c.eta / c.g1 ** 3


def _b_eta_g(c):
    return c.eta / c.g1


# id -> (residual function, t-dependent, bound per component (or one for all), claim text)
LEMMAS = {
    "basicn": (_lemma_basicn, False,
               {"re_a": _b_s1_g2, "im_a": _b_s1_g3, "re_b": _b_s1_g2, "im_b": _b_s1_g3}, "|s|/g^2, |s|/g^3"),
    "basicm": (_lemma_basicm, False,
               {"re_a": _b_eta_g2, "im_a": _b_eta_g3, "re_b": _b_eta_g2, "im_b": _b_eta_g3}, "eta/g^2, eta/g^3"),
    "ztztt": (_lemma_ztztt, True, _b_eta_g2, "eta/g^2"),
    "lgztztt": (_lemma_lgztztt, True, _b_eta_g2, "eta/g^2"),
    "twologs": (_lemma_twologs, False, _b_eta_g2, "eta/g^2"),
    "FG1": (_lemma_FG1, True, _b_eta_g2, "eta/g^2"),
    "recG": (_lemma_recG, True, lambda c: c.eta, "eta"),
    "F/G": (_lemma_FoverG, True, _b_eta_g, "eta/g"),
    "lm": (_lemma_lm, True, _b_eta_g2, "eta/g^2"),
    "lm3": (_lemma_lm3, True, _b_eta_g2, "eta/g^2"),
    "LG": (_lemma_LG, True, _b_eta_g, "eta/g"),
    "arcsin": (_lemma_arcsin, False, lambda c: abs(c.eps) / c.g1 + 1 / c.g1 ** 2, "|eps|/g + 1/g^2"),
    "serG": (_lemma_serG, True, lambda c: 1 / c.g1, "1/g"),
    "asdel": (_lemma_asdel, True, lambda c: 1 / c.g1 ** 2, "1/g^2"),
}


@dataclass
class ComponentFit:
    name: str
    residual: list
    log10_residual: list
    bound: list
    fit_exponent: float | None
    fit_stderr: float | None
    claimed: float
    below_floor: bool
    verdict: str


@dataclass
class LemmaResidualReport:
    """Remainder decay of one expansion on one family at one omega.

    Exponents are decay orders in gamma_{2n-1}: residual ~ gamma^(-e).
    ``fit_exponent``/``claimed`` describe the worst component.
    """

    lemma: str
    family: str
    omega: float
    n: list
    gamma: list
    residual: list
    fit_exponent: float | None
    fit_stderr: float | None
    claimed: float
    verdict: str
    worst_component: str
    components: list

    def to_dict(self):
        return asdict(self)

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


def _fit(log_g, log_r):
    A = np.vstack([log_g, np.ones_like(log_g)]).T
    coef, *_ = np.linalg.lstsq(A, log_r, rcond=None)
    k = len(log_g)
    if k > 2:
        resid = log_r - A @ coef
        s2 = float(resid @ resid) / (k - 2)
        cov = s2 * np.linalg.inv(A.T @ A)
        se = math.sqrt(max(cov[0, 0], 0.0))
    else:
        se = float("nan")
    return -float(coef[0]), se


def dyadic_indices(family, omega, x_start=0.125, points=10, min_ratio=16.0, min_span=9):
    """Dyadic sample indices for remainder fits.

    Starts at the first n = 2^j with omega/gamma_{2n-1} <= x_start and runs
    until gamma_{2n-1} has grown by ``min_ratio`` and at least ``min_span``
    doublings; ``points`` exponents are spread evenly over that range.
    """
    w = abs(float(omega))
    j0 = 2
    while w / family.gamma(2 ** (j0 + 1) - 1) > x_start:
        j0 += 1
    g0 = family.gamma(2 ** (j0 + 1) - 1)
    j1 = j0 + min_span
    while family.gamma(2 ** (j1 + 1) - 1) < min_ratio * g0:
        j1 += 1
    js = sorted(set(int(round(v)) for v in np.linspace(j0, j1, points)))
    return [2 ** j for j in js]


@functools.lru_cache(maxsize=None)
def _conditions_ok(family):
    return check_conditions(family).all_consistent()


def verify_lemma(lemma, family, omega, indices=None, t_points=T_POINTS, check=True):
    """Fit the decay of one expansion's remainder and compare with its stated order.

    For every sample index the remainder (exact value minus the displayed main
    terms, maximised over a uniform t-grid where the expansion depends on t)
    is computed in mpmath with precision chosen from the size of the bound.
    Verdict is consistent when the fitted order is at least the claimed order
    minus 0.3 for every component. A component whose remainder sits below the
    working-precision floor (1e-18 of the bound) at all but two indices is
    flagged ``below_floor`` and counted as consistent.
    """
    if lemma not in LEMMAS:
        raise KeyError(f"unknown lemma {lemma!r}; choose from {sorted(LEMMAS)}")
    if check and not _conditions_ok(family):
        raise PreconditionError(f"{family.label} does not satisfy the growth conditions")
    fn, t_dep, bounds, _ = LEMMAS[lemma]
    if indices is None:
        indices = dyadic_indices(family, omega)
    indices = sorted(int(n) for n in indices)
    if len(indices) < 8:
        raise RangeError("need at least 8 sample indices")
    if indices[0] < 2:
        raise ValueError("sample indices must be >= 2")
    gam = [family.gamma_mp(2 * n - 1) for n in indices]
    if gam[-1] / gam[0] < 8:
        raise RangeError("gamma_{2n-1} must grow by a factor of at least 8 over the sample")
    if abs(omega) / float(gam[0]) >= X_MAX:
        raise ValueError("omega/gamma_{2n-1} must be below 1/4 at every sample index")
    ts = [2 * math.pi * i / t_points for i in range(t_points)] if t_dep else [0.0]
    resid, bnd, floors = {}, {}, {}
    for n in indices:
        digits = len(str(n))
        with mpmath.workdps(digits + 30):
            probe = _Ctx(family, omega, n)
            size = min(float(mpmath.log10(b(probe))) for b in (bounds.values() if isinstance(bounds, dict) else [bounds]))
        dps = max(digits + 30, int(-size) + 30)
        with mpmath.workdps(dps):
            c = _Ctx(family, omega, n)
            worst = {}
            for t in ts:
                for name, v in fn(c, mpmath.mpf(t)).items():
                    a = abs(v)
                    if name not in worst or a > worst[name]:
                        worst[name] = a
            for name, v in worst.items():
                b = bounds[name] if isinstance(bounds, dict) else bounds
                resid.setdefault(name, []).append(v)
                bnd.setdefault(name, []).append(b(c))
                floors.setdefault(name, []).append(mpmath.mpf(10) ** (-(dps - 12)))
    log_g = np.array([float(mpmath.log(gv)) for gv in gam])
    comps = []
    for name in resid:
        r, b, fl = resid[name], bnd[name], floors[name]
        claimed, _ = _fit(log_g, np.array([float(mpmath.log(v)) for v in b]))
        live = [i for i in range(len(r)) if r[i] > fl[i]]
        if len(live) < 3:
            e, se, floor, ok = None, None, True, True
        else:
            e, se = _fit(log_g[live], np.array([float(mpmath.log(r[i])) for i in live]))
            floor = False
            ok = e >= claimed - SLACK
        comps.append(ComponentFit(
            name, [float(v) for v in r], [float(mpmath.log10(v)) if v > 0 else -math.inf for v in r],
            [float(v) for v in b], e, se, claimed, floor, "consistent" if ok else "inconsistent"))

    def margin(cf):
        return math.inf if cf.fit_exponent is None else cf.fit_exponent - cf.claimed

    worst = min(comps, key=margin)
    verdict = "consistent" if all(cf.verdict == "consistent" for cf in comps) else "inconsistent"
    return LemmaResidualReport(
        lemma, family.label, float(omega), indices, [float(gv) for gv in gam], worst.residual,
        worst.fit_exponent, worst.fit_stderr, worst.claimed, verdict, worst.name, [asdict(cf) for cf in comps])
