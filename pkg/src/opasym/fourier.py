"""Fourier coefficients of the kernels h(x, .) and eps_m(x, .), and the
contour decomposition of c_m(x) into a small-circle integral plus a residue.
"""
from __future__ import annotations

import cmath
import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .asym import eps_kernel, h_kernel
from .recurrence import fmt

TOL = 1e-11
GRID_CAP = 2 ** 20
MIN_GRID = 16


class QuadratureError(ArithmeticError):
    """Grid doubling did not reach the tolerance before the cap."""


def _check_x(x):
    if not 0 < x < 0.25:
        raise ValueError("x must lie in (0, 1/4)")


def _doubling(coeffs_at, grid, tol=TOL, cap=GRID_CAP, strict=False):
    """Evaluate ``coeffs_at(N)`` on doubling grids until successive results agree."""
    prev = coeffs_at(grid)
    while True:
        if 2 * grid > cap:
            if strict:
                raise QuadratureError(f"no convergence to {tol} by grid {cap}")
            return prev, grid, float("nan")
        cur = coeffs_at(2 * grid)
        err = float(np.max(np.abs(cur - prev)))
        grid *= 2
        if err < tol:
            return cur, grid, err
        prev = cur


@dataclass
class FourierTable:
    """c_{-M} .. c_M of h(x, .) with the grid used and a doubling error estimate."""

    x: float
    M: int
    coeffs: np.ndarray
    grid: int
    error: float

    def c(self, m):
        return complex(self.coeffs[m + self.M])

    @property
    def orders(self):
        return np.arange(-self.M, self.M + 1)

    def to_csv(self, path=None):
        buf = io.StringIO()
        buf.write("m,re,im,abs\n")
        for m, v in zip(self.orders, self.coeffs):
            buf.write(f"{m},{fmt(v.real)},{fmt(v.imag)},{fmt(abs(v))}\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
            with open(str(path) + ".json", "w") as fh:
                json.dump(self.sidecar(), fh, indent=2)
        return text

    def sidecar(self):
        return {"x": self.x, "M": self.M, "grid": self.grid, "error": self.error}


def _is_pow2(n):
    return n > 0 and n & (n - 1) == 0


def cm_fft(x, M, grid=None, audit=False):
    """Fourier coefficients of h(x, t) by the trapezoid rule with grid doubling.

    Coefficients with negative index are conjugates of the positive ones
    (h is real). ``audit=True`` computes them by an independent sum instead.
    """
    _check_x(x)
    if M < 1:
        raise ValueError("M must be positive")
    grid = grid if grid is not None else max(1 << (MIN_GRID * M - 1).bit_length(), 64)
    if not _is_pow2(grid) or grid < MIN_GRID * M:
        raise ValueError("grid must be a power of two and at least 16 M")

    def at(n):
        t = 2 * np.pi * np.arange(n) / n
        return np.fft.rfft(h_kernel(x, t))[: M + 1] / n

    pos, used, err = _doubling(at, grid)
    neg = np.conj(pos[1:][::-1])
    if audit:
        t = 2 * np.pi * np.arange(used) / used
        h = h_kernel(x, t)
        neg = np.array([np.mean(h * np.exp(1j * m * t)) for m in range(M, 0, -1)])
    return FourierTable(float(x), int(M), np.concatenate([neg, pos]), used, err)


# -- contour decomposition ---------------------------------------------------

def _root(x):
    return math.sqrt(1 - x * x / 4)


@dataclass
class ContourGeometry:
    x: float
    w1: complex
    w2: complex
    v1: complex
    v2: complex
    pl1: complex
    pl2: complex
    arc_radius: float


def geometry(x):
    """Cut endpoints, poles and the radius of the disc holding the small cut."""
    _check_x(x)
    h = x * x / 2
    k = h / (1 + x ** 4 / 4)
    w1 = -k * complex(1 - h, -x)
    w2 = k * complex(1 - h, x)
    v1 = complex(1 - 2 / x ** 2, 2 / x)
    v2 = complex(-1 + 2 / x ** 2, 2 / x)
    r = 1 + _root(x)
    pl1 = 1j * x / (2 * r)
    pl2 = 1j * 2 * r / x
    arc = math.sqrt(x ** 4 / (4 + x ** 4))
    assert abs(pl1) < 1 < abs(pl2)
    assert arc <= x * x / 2
    return ContourGeometry(float(x), w1, w2, v1, v2, pl1, pl2, arc)


def _fg_star(x, z):
    h = x * x / 2
    r1 = ((1 - h + 1j * x) * z + h) / ((1 - h - 1j * x) * z - h)
    r2 = (1 - h - 1j * x + h * z) / (1 - h + 1j * x - h * z)
    l1, l2 = np.log(r1), np.log(r2)
    return l1 + l2, -1j * l1 + 1j * l2


def h_star(x, z):
    """f*(x, z) / g*(x, z); equals h(x, t) at z = e^{it}."""
    f, g = _fg_star(x, np.asarray(z, dtype=complex))
    return f / g


def residue_parts(x):
    """f*(x, pl1) as A - iB on the unit circle, and g*'(x, pl1)."""
    s = _root(x)
    A = 1 - 2 * x * x + x ** 4 / 2
    B = 2 * x * s * (1 - x * x / 2)
    dg = -8j * (1 - x * x / 2) * s * (1 + s)
    return A, B, dg


def residue(x, m, printed=False):
    """Residue of z^{m-1} h*(x, z) at pl1 (the m-th coefficient of negative index).

    The logarithm in f*(pl1) has modulus-one argument A - iB (checked to
    1e-12), so f* = -2i arctan(B/A). ``printed=True`` swaps the arctan
    denominator for 1 - 2x^2 + x^4/4, the variant in the simplified display,
    for comparison.
    """
    _check_x(x)
    if m < 1:
        raise ValueError("m must be >= 1")
    A, B, dg = residue_parts(x)
    if abs(math.hypot(A, B) - 1) > 1e-12:
        raise ArithmeticError("log argument is not on the unit circle")
    s = _root(x)
    if printed:
        theta = math.atan(B / (1 - 2 * x * x + x ** 4 / 4))
        return (1j) ** (m - 1) * x ** (m - 1) * theta / (2 ** (m + 1) * (1 + s) ** m * (1 - x * x / 2) * s)
    pl1 = 1j * x / (2 * (1 + s))
    fstar = 2 * cmath.log(complex(A, -B))
    return pl1 ** (m - 1) * fstar / dg


def small_circle(x, m, grid=256, tol=TOL):
    """(1/2pi) int x^{2m} e^{imt} h*(x, x^2 e^{it}) dt by trapezoid doubling."""
    _check_x(x)

    def at(n):
        t = 2 * np.pi * np.arange(n) / n
        vals = h_star(x, x * x * np.exp(1j * t)) * np.exp(1j * m * t)
        return np.array([x ** (2 * m) * np.mean(vals)])

    v, _, _ = _doubling(at, grid, tol=tol, strict=True)
    return complex(v[0])


def cm_contour(x, m):
    """c_m(x) for m != 0 through the contour decomposition.

    c_{-m} = small-circle term + residue at pl1 for m >= 1, and
    c_m = conj(c_{-m}).
    """
    if m == 0:
        raise ValueError("use c_0 = 0; the decomposition is for m != 0")
    k = abs(m)
    neg = small_circle(x, k) + residue(x, k)
    return neg.conjugate() if m > 0 else neg


def leading_term(x, m):
    """(-i)^{m-1} (x/4)^m for m >= 1."""
    return (-1j) ** (m - 1) * (x / 4) ** m


# -- eps_m coefficients ------------------------------------------------------

def fkm(x, m, k, grid=64):
    """f_k^m(x) = (1/2pi) int eps_m(x, t) e^{-ikt} dt."""
    _check_x(x)
    if m == 0:
        raise ValueError("m must be nonzero")

    def at(n):
        t = 2 * np.pi * np.arange(n) / n
        return np.array([np.mean(eps_kernel(m, x, t) * np.exp(-1j * k * t))])

    v, _, _ = _doubling(at, max(grid, MIN_GRID * (abs(m) + abs(k) + 1)))
    return complex(v[0])


def fkm_structure(x, m, k):
    """Conjugation and parity checks for one coefficient.

    Returns the coefficient, |f_k^m - conj(f_{-k}^{-m})| and the size of the
    component that should vanish (imaginary part when m, k share parity,
    real part otherwise).
    """
    v = fkm(x, m, k)
    mirror = fkm(x, -m, -k)
    off = abs(v.imag) if (m - k) % 2 == 0 else abs(v.real)
    return {"value": v, "conj_gap": abs(v - mirror.conjugate()), "parity_gap": off}


# -- monotonicity ------------------------------------------------------------

@dataclass
class MonotonicityVerdict:
    m: int
    xs: list
    magnitudes: list
    verdict: str
    threshold: float | None


def monotonicity_scan(m, xs, min_tail=3):
    """Check that |c_m(x)| decreases along a descending x grid.

    ``threshold`` is the largest grid x from which the decrease holds to the
    end of the grid. The verdict is "monotone" for the whole grid,
    "monotone-tail" for a tail of at least ``min_tail`` points and
    "inconclusive" otherwise.
    """
    if m == 0:
        raise ValueError("c_0 vanishes identically; pick m != 0")
    xs = [float(v) for v in xs]
    if any(not 0 < v <= 0.2 for v in xs) or any(a <= b for a, b in zip(xs, xs[1:])):
        raise ValueError("x grid must be strictly descending inside (0, 0.2]")
    M = abs(m)
    mags = [abs(cm_fft(v, M).c(m)) for v in xs]
    start = len(xs) - 1
    while start > 0 and mags[start - 1] > mags[start]:
        start -= 1
    tail = len(xs) - start
    if start == 0:
        verdict = "monotone"
    elif tail >= min_tail:
        verdict = "monotone-tail"
    else:
        verdict = "inconclusive"
    return MonotonicityVerdict(m, xs, mags, verdict, xs[start] if tail >= min_tail else None)
