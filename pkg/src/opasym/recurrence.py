"""Forward evaluation of orthonormal polynomial values from the three-term
recurrence, with compensated running sums and checkpointed traces.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from ._backend import BACKEND, kernels

CSV_HEADER = "n,p_n,p_np1,sum_p2,sum_invgamma"


class RecurrenceOverflow(ArithmeticError):
    """A polynomial value left the floating-point range."""

    def __init__(self, index, omega):
        self.index = index
        self.omega = omega
        super().__init__(f"non-finite value p_{index}({omega!r})")


def fmt(x):
    """Float text with 17 significant digits (round-trips binary64)."""
    return format(float(x), ".17g")


@dataclass
class EvalTrace:
    """Checkpoints of one forward run.

    ``rows`` has columns n, p_n, p_{n+1}, sum_{k<=n} p_k^2, sum_{k<=n} 1/gamma_k.
    """

    family: str
    omega: float
    horizon: int
    stride: int
    rows: np.ndarray
    backend: str = BACKEND

    def to_csv(self, path=None):
        buf = io.StringIO()
        buf.write(CSV_HEADER + "\n")
        for n, a, b, s2, si in self.rows:
            buf.write(f"{int(n)},{fmt(a)},{fmt(b)},{fmt(s2)},{fmt(si)}\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @property
    def last(self):
        return self.rows[-1]


@dataclass
class RecurrenceRun:
    """Full arrays of one forward run: p_0..p_{N+1} and running sums up to N."""

    family: str
    omega: float
    horizon: int
    p: np.ndarray
    sum_p2: np.ndarray
    sum_invgamma: np.ndarray
    gamma: np.ndarray

    @property
    def nu(self):
        """Christoffel-type ratio sum p_k^2 / sum 1/gamma_k for every n <= N."""
        return self.sum_p2 / self.sum_invgamma

    @property
    def local_energy(self):
        """gamma_n (p_n^2 + p_{n+1}^2) for n = 0..N."""
        p = self.p
        return self.gamma * (p[:-1] ** 2 + p[1:] ** 2)


def _inputs(family, horizon, symmetric):
    if horizon < 0:
        raise ValueError("horizon must be non-negative")
    gamma = family.gammas(horizon + 1)
    shift = np.empty(0) if symmetric or family.is_symmetric else family.offsets(horizon + 1)
    return np.ascontiguousarray(gamma), np.ascontiguousarray(shift)


def _run(family, omega, horizon, stride, keep, symmetric):
    if stride < 1:
        raise ValueError("stride must be positive")
    omega = float(omega)
    if not math.isfinite(omega):
        raise ValueError("omega must be finite")
    gamma, shift = _inputs(family, horizon, symmetric)
    rows, p, s2, si, bad = kernels.three_term(gamma, shift, omega, horizon, stride, keep)
    if bad >= 0:
        raise RecurrenceOverflow(bad, omega)
    return gamma, rows, p, s2, si


def eval_symmetric(family, omega, horizon, stride=1000):
    """Checkpointed trace of p_n(omega) with zero diagonal offsets."""
    _, rows, *_ = _run(family, omega, horizon, stride, False, True)
    return EvalTrace(family.label, float(omega), horizon, stride, rows)


def eval_nonsymmetric(family, omega, horizon, stride=1000):
    """Checkpointed trace using the family's diagonal offsets beta_n.

    With zero offsets this reproduces :func:`eval_symmetric` exactly.
    """
    _, rows, *_ = _run(family, omega, horizon, stride, False, False)
    return EvalTrace(family.label, float(omega), horizon, stride, rows)


def run_recurrence(family, omega, horizon, symmetric=None):
    """Full value and running-sum arrays up to ``horizon``.

    ``symmetric=None`` follows the family (offsets used when present).
    """
    sym = family.is_symmetric if symmetric is None else symmetric
    gamma, _, p, s2, si = _run(family, omega, horizon, max(horizon, 1), True, sym)
    return RecurrenceRun(family.label, float(omega), horizon, p, s2, si, gamma)


def values(family, omega, horizon):
    """p_0(omega) .. p_{horizon+1}(omega) as an array."""
    return run_recurrence(family, omega, horizon).p


@dataclass
class CDCheck:
    residual: float
    lhs: float
    rhs: float


def cd_residual(family, omega, sigma, n):
    """Relative residual of the Christoffel-Darboux identity at degree n.

    Compares (omega - sigma) sum_{k<=n} p_k(omega) p_k(sigma) with
    gamma_n (p_{n+1}(omega) p_n(sigma) - p_{n+1}(sigma) p_n(omega)),
    relative to the larger side.
    """
    if omega == sigma:
        raise ValueError("the identity is trivial at omega == sigma; pick distinct points")
    pa = values(family, omega, n)
    pb = values(family, sigma, n)
    lhs = (omega - sigma) * math.fsum((pa[: n + 1] * pb[: n + 1]).tolist())
    rhs = family.gamma(n) * (pa[n + 1] * pb[n] - pb[n + 1] * pa[n])
    scale = max(abs(lhs), abs(rhs))
    return CDCheck(abs(lhs - rhs) / scale if scale > 0 else 0.0, lhs, rhs)


def christoffel_ratio(family, omega, n):
    """nu_n = sum_{k<=n} p_k^2 / sum_{k<=n} 1/gamma_k."""
    run = run_recurrence(family, omega, n)
    return float(run.nu[n])


def summation_audit(family, omega, horizon):
    """Relative gap between compensated and naive left-to-right sums of p_k^2."""
    run = run_recurrence(family, omega, horizon)
    naive = 0.0
    for v in (run.p[: horizon + 1] ** 2).tolist():
        naive += v
    comp = float(run.sum_p2[horizon])
    return abs(comp - naive) / abs(comp)


def tail_band(family, omega, horizon):
    """Smallest and largest gamma_n (p_n^2 + p_{n+1}^2) over [N/2, N]."""
    run = run_recurrence(family, omega, horizon)
    e = run.local_energy[horizon // 2:]
    return float(e.min()), float(e.max())
