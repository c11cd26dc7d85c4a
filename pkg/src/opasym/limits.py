"""Limit estimates for the normalised local energy gamma_n (p_n^2 + p_{n+1}^2)
and for the Christoffel ratio nu_n, growth exponents of sum p_k^2, uniformity
scans over compact omega sets, and a stability scanner for families with
diagonal offsets.
"""
from __future__ import annotations

import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import coeffs
from .asym import PreconditionError
from .recurrence import RecurrenceOverflow, fmt, run_recurrence

METHODS = ("tail-average", "cesaro", "ratio")
FLUCTUATION_TOL = 0.05
EQUALITY_TOL = 0.02
MIN_N = 10_000
MIN_GROWTH_N = 100_000
MIN_GRID = 16
# checkpoints used by the smoothed statistics
CHECKPOINTS = 64


@dataclass
class LimitEstimate:
    value: float
    window: tuple
    fluctuation: float
    method: str
    converged: bool
    family: str = ""
    omega: float = 0.0

    def to_dict(self):
        d = asdict(self)
        d["window"] = list(self.window)
        return d


def _require_family(family, N, minimum):
    if N < minimum:
        raise PreconditionError(f"N must be at least {minimum}, got {N}")
    if family.max_index is None:
        horizon = min(N, 10_000)
    else:
        horizon = min(N, family.max_index - 1)
    if horizon >= 100:
        report = coeffs.check_conditions(family, horizon)
        bad = [k for k, r in report.results.items() if r.status == "violated"]
        if bad:
            raise PreconditionError(f"{family.label} violates {', '.join(bad)}; the limit cannot converge")


def _run(family, omega, N):
    run = run_recurrence(family, omega, N)
    if not (np.all(np.isfinite(run.sum_p2)) and np.all(np.isfinite(run.p))):
        raise RecurrenceOverflow(int(np.argmax(~np.isfinite(run.p))), omega)
    return run


def _spread(values, ref):
    return float((np.max(values) - np.min(values)) / abs(ref)) if ref != 0 else math.inf


def _checkpoints(lo, hi):
    return np.unique(np.linspace(lo, hi, CHECKPOINTS).astype(np.int64))


def beta_limit(family, omega, N=200_000, tol=FLUCTUATION_TOL, run=None, check=True):
    """Tail estimate of lim gamma_n (p_n^2 + p_{n+1}^2).

    The value is the Cesaro mean of the local energy over [N/2, N].
    ``fluctuation`` is the relative spread of the running Cesaro means over
    the second half of that window.
    """
    if check:
        _require_family(family, N, MIN_N)
    run = run if run is not None else _run(family, omega, N)
    lo = N // 2
    e = run.local_energy[lo:N + 1]
    means = np.cumsum(e) / np.arange(1, len(e) + 1)
    value = float(means[-1])
    fl = _spread(means[len(means) // 2:], value)
    return LimitEstimate(value, (lo, N), fl, "tail-average", fl <= tol, family.label, float(omega))


def ratio_limit(family, omega, N=200_000, method="cesaro", tol=FLUCTUATION_TOL, run=None, check=True):
    """Estimate of lim nu_n with nu_n = sum p_k^2 / sum 1/gamma_k.

    ``cesaro`` divides the growth of the two sums across [N/2, N], which
    drops the transient of the head. ``tail-average`` averages nu_n over the
    window and ``ratio`` reports nu_N itself. Below ``MIN_N`` the window is
    degenerate: the value is nu_N and the estimate is never marked converged.
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    if N < 0:
        raise ValueError("N must be non-negative")
    degenerate = N < MIN_N
    if check and not degenerate:
        _require_family(family, N, MIN_N)
    run = run if run is not None else _run(family, omega, N)
    nu = run.nu
    if degenerate:
        return LimitEstimate(float(nu[N]), (N, N), 0.0, method, False, family.label, float(omega))
    lo = N // 2
    if method == "cesaro":
        ks = _checkpoints(lo + (N - lo) // 2, N)
        r = (run.sum_p2[ks] - run.sum_p2[lo]) / (run.sum_invgamma[ks] - run.sum_invgamma[lo])
        value = float(r[-1])
        fl = _spread(r, value)
    elif method == "tail-average":
        value = float(np.mean(nu[lo:N + 1]))
        fl = _spread(nu[lo:N + 1], value)
    else:
        value = float(nu[N])
        fl = _spread(nu[lo:N + 1], value)
    return LimitEstimate(value, (lo, N), fl, method, fl <= tol, family.label, float(omega))


@dataclass
class EqualityCheck:
    ratio: LimitEstimate
    beta: LimitEstimate
    gap: float
    ok: bool


def equality_check(family, omega, N=100_000, tol=EQUALITY_TOL):
    """Compare the ratio limit with half the local-energy limit on one run."""
    _require_family(family, N, MIN_N)
    run = _run(family, omega, N)
    r = ratio_limit(family, omega, N, run=run, check=False)
    b = beta_limit(family, omega, N, run=run, check=False)
    gap = abs(r.value - b.value / 2) / r.value
    return EqualityCheck(r, b, gap, gap <= tol)


@dataclass
class GrowthFit:
    exponent: float
    expected: float
    stderr: float
    window: tuple


def growth_exponent(family, omega, N=100_000, points=41):
    """Least-squares slope of log sum_{k<=n} p_k^2 against log(n+1) over the
    last two decades below N."""
    if family.kind != "power-law":
        raise PreconditionError("growth exponents are defined for power-law families")
    if N < MIN_GROWTH_N:
        raise PreconditionError(f"N must be at least {MIN_GROWTH_N}")
    run = _run(family, omega, N)
    lo = N // 100
    ns = np.unique(np.geomspace(lo, N, points).astype(np.int64))
    X = np.log(ns + 1.0)
    Y = np.log(run.sum_p2[ns])
    A = np.vstack([X, np.ones_like(X)]).T
    coef, res, *_ = np.linalg.lstsq(A, Y, rcond=None)
    dof = max(len(ns) - 2, 1)
    resid = Y - A @ coef
    var = float(resid @ resid) / dof
    se = math.sqrt(var / float(np.sum((X - X.mean()) ** 2)))
    return GrowthFit(float(coef[0]), 1.0 - family.p, se, (int(lo), int(N)))


# -- uniformity --------------------------------------------------------------

@dataclass
class UniformityPoint:
    omega: float
    value: float | None
    beta: float | None
    fluctuation: float | None
    converged: bool
    error: str | None = None


@dataclass
class UniformityReport:
    family: str
    B: float
    N: int
    m_B: float | None
    M_B: float | None
    max_fluctuation: float | None
    unconverged: list
    points: list = field(default_factory=list)

    @property
    def all_converged(self):
        return not self.unconverged and all(p.error is None for p in self.points)

    def to_dict(self):
        d = asdict(self)
        d["all_converged"] = self.all_converged
        return d


def limit_point(family, omega, N, tol=FLUCTUATION_TOL):
    """L(omega) as twice the ratio limit, with the local-energy mean alongside."""
    try:
        run = _run(family, omega, N)
    except RecurrenceOverflow as exc:
        return UniformityPoint(float(omega), None, None, None, False, str(exc))
    r = ratio_limit(family, omega, N, tol=tol, run=run, check=False)
    b = beta_limit(family, omega, N, tol=tol, run=run, check=False)
    return UniformityPoint(float(omega), 2 * r.value, b.value, r.fluctuation, r.converged)


def omega_grid(B, points):
    if points < MIN_GRID:
        raise ValueError(f"grid needs at least {MIN_GRID} points")
    if not B > 0:
        raise ValueError("B must be positive")
    return np.linspace(-B, B, points)


def uniformity_scan(family, B=2.0, points=17, N=100_000, tol=FLUCTUATION_TOL, mapper=map):
    """Grid extrema m_B, M_B of the converged limit estimates on [-B, B].

    Symmetric families are evaluated at |omega| only and mirrored.
    ``mapper`` may be a pool's ordered ``map``; results are merged in grid
    order either way.
    """
    _require_family(family, N, MIN_N)
    grid = omega_grid(B, points)
    keys = np.abs(grid) if family.is_symmetric else grid
    distinct = sorted(set(float(k) for k in keys))
    solved = dict(zip(distinct, mapper(_point_task, [(family, w, N, tol) for w in distinct])))
    pts = []
    for w, k in zip(grid, keys):
        p = solved[float(k)]
        pts.append(UniformityPoint(float(w), p.value, p.beta, p.fluctuation, p.converged, p.error))
    good = [p.value for p in pts if p.converged]
    flucts = [p.fluctuation for p in pts if p.fluctuation is not None]
    return UniformityReport(
        family.label, float(B), int(N),
        min(good) if good else None, max(good) if good else None,
        max(flucts) if flucts else None,
        [p.omega for p in pts if not p.converged], pts)


def _point_task(args):
    family, w, N, tol = args
    return limit_point(family, w, N, tol)


# -- stability scan for non-symmetric recurrences ----------------------------

ENVELOPE_HEADER = "n,env_lo,env_hi,nu"
STABLE_TAIL = 0.05
UNSTABLE_TAIL = 0.5
ENVELOPE_SLACK = 0.1
BOUNDARY = 2.0


@dataclass
class StabilityVerdict:
    rho: float
    classification: str
    tail_change: float | None
    envelope: np.ndarray | None
    reason: str = ""
    width_early: float | None = None
    width_late: float | None = None
    overflow_index: int | None = None

    def envelope_csv(self, path=None):
        buf = io.StringIO()
        buf.write(ENVELOPE_HEADER + "\n")
        if self.envelope is not None:
            for n, lo, hi, nu in self.envelope:
                buf.write(f"{int(n)},{fmt(lo)},{fmt(hi)},{fmt(nu)}\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def to_dict(self):
        return {"rho": self.rho, "classification": self.classification, "tail_change": self.tail_change,
                "reason": self.reason, "width_early": self.width_early, "width_late": self.width_late,
                "overflow_index": self.overflow_index}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


def envelopes(energy, nu, N, count=200):
    """Running min and max of the local energy over consecutive windows.

    Row j covers (n_{j-1}, n_j] with n_j = j N / count.
    """
    edges = np.linspace(0, N, count + 1).astype(np.int64)
    rows = []
    for a, b in zip(edges[:-1], edges[1:]):
        seg = energy[a + 1:b + 1] if a > 0 else energy[:b + 1]
        rows.append((b, seg.min(), seg.max(), nu[b]))
    return np.array(rows, dtype=np.float64)


def _relative_width(env, lo_n, hi_n):
    n = env[:, 0]
    sel = (n > lo_n) & (n <= hi_n)
    lo, hi = env[sel, 1], env[sel, 2]
    return float(np.mean((hi - lo) / ((hi + lo) / 2)))


def classify_stability(family, rho, omega=1.0, N=100_000):
    """Run the offset recurrence with beta_n = rho gamma_n and classify it.

    Stable needs nu to change by at most 5% over the last decade and the
    relative envelope width of the local energy to shrink or hold (within
    10%) from the decade before. Overflow or a drift of nu above 50% is
    unstable. Anything else, and |rho| exactly at the boundary, is
    inconclusive.
    """
    fam = coeffs.with_rho(family, rho)
    boundary = abs(abs(rho) - BOUNDARY) < 1e-12
    try:
        run = run_recurrence(fam, omega, N)
    except RecurrenceOverflow as exc:
        if boundary:
            return StabilityVerdict(float(rho), "inconclusive", None, None,
                                    "on the conjectured boundary; overflow", overflow_index=exc.index)
        return StabilityVerdict(float(rho), "unstable", None, None, "overflow", overflow_index=exc.index)
    energy = run.local_energy
    nu = run.nu
    if not (np.all(np.isfinite(energy)) and np.all(np.isfinite(nu))):
        bad = int(np.argmax(~np.isfinite(energy)))
        return StabilityVerdict(float(rho), "unstable", None, None, "overflow", overflow_index=bad)
    env = envelopes(energy, nu, N)
    tail = float(abs(nu[N] - nu[N // 10]) / abs(nu[N]))
    w_early = _relative_width(env, N // 100, N // 10)
    w_late = _relative_width(env, N // 10, N)
    envelope_ok = w_late <= w_early * (1 + ENVELOPE_SLACK)
    if boundary:
        cls, why = "inconclusive", "on the conjectured boundary"
    elif tail <= STABLE_TAIL and envelope_ok:
        cls, why = "stable", "nu settled and envelopes hold"
    elif tail > UNSTABLE_TAIL or not np.isfinite(tail):
        cls, why = "unstable", "nu drifts"
    elif tail <= STABLE_TAIL:
        cls, why = "inconclusive", "nu settled but envelopes widen"
    else:
        cls, why = "inconclusive", "nu still moving"
    return StabilityVerdict(float(rho), cls, tail, env, why, w_early, w_late)


def conjecture_scan(family, rhos, omega=1.0, N=100_000, mapper=map):
    """Stability verdicts over a rho grid, ordered by rho."""
    if family.max_index is not None:
        raise PreconditionError("the scan needs an unbounded coefficient family")
    rhos = sorted(float(r) for r in rhos)
    return list(mapper(_rho_task, [(family, r, omega, N) for r in rhos]))


def _rho_task(args):
    family, rho, omega, N = args
    return classify_stability(family, rho, omega, N)
