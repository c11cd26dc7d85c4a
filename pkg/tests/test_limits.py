import math

import numpy as np
import pytest

from opasym import limits
from opasym.asym import PreconditionError
from opasym.coeffs import custom_table, detour, hermite, power_law
from opasym.limits import (
    beta_limit, classify_stability, conjecture_scan, equality_check, growth_exponent, ratio_limit,
    uniformity_scan,
)
from opasym.recurrence import run_recurrence

INV_SQRT_PI = 1 / math.sqrt(math.pi)


def central(n):
    """C(2n, n) / 4^n through log-gamma."""
    return math.exp(math.lgamma(2 * n + 1) - 2 * math.lgamma(n + 1) - n * math.log(4.0))


def test_stirling_oracle_values():
    # gamma_{2n} p_{2n}(0)^2 = sqrt((2n+1)/2) C(2n, n) / 4^n tends to 1/sqrt(pi)
    n = 50_000
    assert math.sqrt((2 * n + 1) / 2) * central(n) == pytest.approx(INV_SQRT_PI, rel=1e-5)
    p = run_recurrence(hermite(), 0.0, 2 * n).p
    assert p[2 * n] ** 2 == pytest.approx(central(n), rel=1e-10)


def test_hermite_limits_at_zero():
    N = 200_000
    b = beta_limit(hermite(), 0.0, N)
    r = ratio_limit(hermite(), 0.0, N)
    assert b.converged and r.converged
    assert b.value == pytest.approx(INV_SQRT_PI, rel=0.01)
    assert r.value == pytest.approx(INV_SQRT_PI / 2, rel=0.01)


def test_ratio_against_direct_summation():
    # sum_{j<=J} C(2j, j)/4^j = (2J+1) C(2J, J)/4^J; odd values vanish at 0
    N = 200_000
    J = N // 2
    num = (2 * J + 1) * central(J)
    den = math.fsum(math.sqrt(2.0 / (k + 1)) for k in range(N + 1))
    run = run_recurrence(hermite(), 0.0, N)
    assert run.nu[N] == pytest.approx(num / den, rel=1e-9)
    assert ratio_limit(hermite(), 0.0, N, method="ratio").value == pytest.approx(num / den, rel=1e-9)


@pytest.mark.parametrize("w", [0.5, 1.0, 2.0])
def test_hermite_limit_follows_weight(w):
    # for the Hermite weight the limit is exp(w^2)/sqrt(pi)
    r = ratio_limit(hermite(), w, 200_000)
    assert 2 * r.value == pytest.approx(math.exp(w * w) * INV_SQRT_PI, rel=0.01)


def test_power_half_converges():
    b = beta_limit(power_law(0.5), 1.0, 100_000)
    assert b.converged and b.value > 0
    assert b.method == "tail-average" and b.window == (50_000, 100_000)


def test_bounded_family_rejected():
    with pytest.raises(PreconditionError):
        beta_limit(custom_table([2.0] * 20_002), 1.0, 20_000)
    with pytest.raises(PreconditionError):
        beta_limit(hermite(), 1.0, 5_000)


def test_degenerate_ratio_window():
    r = ratio_limit(hermite(), 0.3, 0)
    assert r.value == hermite().gamma(0) and not r.converged and r.window == (0, 0)
    with pytest.raises(ValueError):
        ratio_limit(hermite(), 0.3, 100_000, method="median")


@pytest.mark.parametrize("w", [0.0, 0.5, 1.0, 2.0])
def test_hermite_equality(w):
    eq = equality_check(hermite(), w, 100_000)
    assert eq.ok and eq.gap <= 0.02


def test_estimators_agree():
    for method in limits.METHODS:
        r = ratio_limit(power_law(0.5), 1.0, 100_000, method=method)
        assert r.value == pytest.approx(ratio_limit(power_law(0.5), 1.0, 100_000).value, rel=5e-3)


@pytest.mark.parametrize("p,w", [(0.5, 1.0), (0.75, 1.0), (0.25, 0.5)])
def test_growth_exponents(p, w):
    fit = growth_exponent(power_law(p), w, 100_000)
    assert fit.expected == 1 - p
    assert abs(fit.exponent - (1 - p)) <= 0.02


def test_growth_preconditions():
    with pytest.raises(PreconditionError):
        growth_exponent(hermite(), 1.0)
    with pytest.raises(PreconditionError):
        growth_exponent(power_law(0.5), 1.0, 10_000)


def test_scale_covariance_exact():
    # gamma -> 2 gamma with omega -> 2 omega leaves every p_n unchanged
    for p in (0.25, 0.5):
        a, b = power_law(p), power_law(p, c=2.0)
        assert np.array_equal(run_recurrence(a, 0.7, 20_000).p, run_recurrence(b, 1.4, 20_000).p)
        assert beta_limit(b, 1.4, 20_000).value == 2 * beta_limit(a, 0.7, 20_000).value
        assert ratio_limit(b, 1.4, 20_000).value == 2 * ratio_limit(a, 0.7, 20_000).value


def test_even_in_omega():
    for fam in (hermite(), power_law(0.5), detour(power_law(0.25), 20, 3)):
        for w in (0.5, 1.7):
            assert beta_limit(fam, w, 20_000).value == beta_limit(fam, -w, 20_000).value
            assert ratio_limit(fam, w, 20_000).value == ratio_limit(fam, -w, 20_000).value


def test_uniformity_hermite():
    rep = uniformity_scan(hermite(), B=2.0, points=17, N=100_000)
    assert rep.all_converged
    assert 0 < rep.m_B <= rep.M_B < math.inf
    zero = [pt for pt in rep.points if pt.omega == 0.0][0]
    assert zero.value == pytest.approx(INV_SQRT_PI, rel=0.01)
    assert rep.M_B == pytest.approx(math.exp(4) * INV_SQRT_PI, rel=0.01)
    vals = {pt.omega: pt.value for pt in rep.points}
    assert all(vals[w] == vals[-w] for w in vals)
    with pytest.raises(ValueError):
        uniformity_scan(hermite(), B=2.0, points=9)


def test_slow_growth_converges_slower():
    # the slower gamma grows, the larger the residual fluctuation
    slow = ratio_limit(power_law(0.1), 2.0, 100_000).fluctuation
    fast = ratio_limit(power_law(0.9), 2.0, 100_000).fluctuation
    assert slow > 10 * fast


def test_conjecture_examples(tmp_path):
    fam = power_law(0.5)
    out = conjecture_scan(fam, [2.5, 1.0, 0.0], 1.0, 100_000)
    assert [v.rho for v in out] == [0.0, 1.0, 2.5]
    assert out[0].classification == "stable"
    assert out[1].classification == "stable"
    assert out[2].classification != "stable"
    text = out[1].envelope_csv(tmp_path / "env.csv")
    assert text.splitlines()[0] == limits.ENVELOPE_HEADER
    assert len(text.splitlines()) == 201
    assert out[2].to_dict()["classification"] in ("unstable", "inconclusive")


def test_boundary_is_inconclusive():
    v = classify_stability(power_law(0.5), 2.0, 1.0, 20_000)
    assert v.classification == "inconclusive"
    v = classify_stability(power_law(0.5), -2.0, 1.0, 20_000)
    assert v.classification == "inconclusive"


def test_conjecture_rejects_bounded_table():
    with pytest.raises(PreconditionError):
        conjecture_scan(custom_table([1.0] * 100), [0.0])
