"""Closed forms shared by the phase, asymptotics and Fourier modules.

Each formula takes a math namespace first (:data:`NP` for numpy arrays,
:data:`MP` for mpmath scalars), so the same expression serves fast vectorised
evaluation and arbitrary-precision checks deep in the asymptotic regime.

Index conventions: for the pair step n the coefficients come from
gamma_{2n-2}, gamma_{2n-1}, gamma_{2n} (called ``g0, g1, g2`` below).
"""
from types import SimpleNamespace

import mpmath
import numpy as np

NP = SimpleNamespace(
    log=np.log, exp=np.exp, sin=np.sin, cos=np.cos, sqrt=np.sqrt, conj=np.conj,
    atan=np.arctan, asin=np.arcsin, abs=np.abs, re=np.real, im=np.imag, I=1j, pi=np.pi,
)
MP = SimpleNamespace(
    log=mpmath.log, exp=mpmath.exp, sin=mpmath.sin, cos=mpmath.cos, sqrt=mpmath.sqrt,
    conj=mpmath.conj, atan=mpmath.atan, asin=mpmath.asin, abs=abs, re=mpmath.re, im=mpmath.im,
    I=mpmath.mpc(0, 1), pi=mpmath.pi,
)


def basic_a(xp, g0, g1, g2, w):
    """Diagonal coefficient of the two-term pair step."""
    re = -w * w / (2 * g1 * g2) + g1 / (2 * g2) + g0 / (2 * g1)
    im = w / (2 * g1) + w * g0 / (2 * g1 * g2)
    return re + xp.I * im


def basic_b(xp, g0, g1, g2, w):
    """Conjugate-coupling coefficient of the two-term pair step."""
    re = w * w / (2 * g1 * g2) - g1 / (2 * g2) + g0 / (2 * g1)
    im = -w / (2 * g1) + w * g0 / (2 * g1 * g2)
    return re + xp.I * im


def lam(g0, g1, g2, g3):
    """Ratio (1/g0 + 1/g1) / (1/g2 + 1/g3) of consecutive reciprocal pair sums."""
    return (1 / g0 + 1 / g1) / (1 / g2 + 1 / g3)


def forward_factor(xp, a, b, t):
    """a + b e^{-it}."""
    return a + b * xp.exp(-xp.I * t)


def backward_factor(xp, a, b, t):
    """a - conj(b) e^{it}."""
    return a - xp.conj(b) * xp.exp(xp.I * t)


def F_pair(xp, an, bn, am, bm, lam_m, t):
    """Log-growth combination over steps n-1 and n as a function of t."""
    e = xp.exp(xp.I * t)
    ei = xp.exp(-xp.I * t)
    return (2 * xp.log(xp.abs(am) ** 2 - xp.abs(bm) ** 2) + 2 * xp.log(lam_m)
            + xp.log(xp.conj(an) + xp.conj(bn) * e) + xp.log(an + bn * ei)
            - xp.log(xp.conj(am) - bm * ei) - xp.log(am - xp.conj(bm) * e))


def G_pair(xp, an, bn, am, bm, t):
    """Phase-advance combination over steps n-1 and n as a function of t."""
    e = xp.exp(xp.I * t)
    ei = xp.exp(-xp.I * t)
    return xp.I * (xp.log(xp.conj(an) + xp.conj(bn) * e) - xp.log(an + bn * ei)
                   + xp.log(xp.conj(am) - bm * ei) - xp.log(am - xp.conj(bm) * e))


def FG_pair(xp, an, bn, am, bm, lam_m, t):
    """(F, G) sharing the four logarithms."""
    e = xp.exp(xp.I * t)
    ei = xp.exp(-xp.I * t)
    l1 = xp.log(xp.conj(an) + xp.conj(bn) * e)
    l2 = xp.log(an + bn * ei)
    l3 = xp.log(xp.conj(am) - bm * ei)
    l4 = xp.log(am - xp.conj(bm) * e)
    F = 2 * xp.log(xp.abs(am) ** 2 - xp.abs(bm) ** 2) + 2 * xp.log(lam_m) + l1 + l2 - l3 - l4
    return F, xp.I * (l1 - l2 + l3 - l4)


def L_pair(xp, m, an, bn, am, bm, t):
    """Difference of m-th powers of the backward and forward phase ratios, times i."""
    e = xp.exp(xp.I * t)
    ei = xp.exp(-xp.I * t)
    back = (xp.conj(am) - bm * ei) / (am - xp.conj(bm) * e)
    fwd = (an + bn * ei) / (xp.conj(an) + xp.conj(bn) * e)
    return xp.I * (back ** m - fwd ** m)


# -- kernels in the small parameter x = omega / gamma ------------------------

def _quads(xp, x, t):
    e = xp.exp(xp.I * t)
    ei = xp.exp(-xp.I * t)
    h = x * x / 2
    q1 = 1 - h - xp.I * x + h * e
    q2 = 1 - h + xp.I * x + h * ei
    q3 = 1 - h - xp.I * x - h * ei
    q4 = 1 - h + xp.I * x - h * e
    return q1, q2, q3, q4


def f_kernel(xp, x, t):
    q1, q2, q3, q4 = _quads(xp, x, t)
    return xp.log(q1) + xp.log(q2) - xp.log(q3) - xp.log(q4)


def g_kernel(xp, x, t):
    q1, q2, q3, q4 = _quads(xp, x, t)
    return xp.I * (xp.log(q1) - xp.log(q2) + xp.log(q3) - xp.log(q4))


def fg_kernels(xp, x, t):
    """(f, g) sharing the four logarithms."""
    l1, l2, l3, l4 = (xp.log(q) for q in _quads(xp, x, t))
    return l1 + l2 - l3 - l4, xp.I * (l1 - l2 + l3 - l4)


def l_kernel(xp, m, x, t):
    q1, q2, q3, q4 = _quads(xp, x, t)
    return xp.I * ((q3 / q4) ** m - (q2 / q1) ** m)


def h_closed(xp, x, t):
    """Simplified real form of f/g."""
    c, s = xp.cos(t), xp.sin(t)
    c2 = xp.cos(t / 2)
    num = xp.log(1 + 2 * x * x * (1 - x * x / 2) * c / (1 - x * x * c - x ** 3 * s + x ** 4 * c2 * c2))
    den = 2 * xp.atan(2 * x * (1 - x * x / 2) * (1 - x / 2 * s) / (1 - 2 * x * x + x ** 3 * s))
    return num / den
