import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.polynomial import hermite as H

from opasym import coeffs
from opasym.coeffs import custom_table, detour, hermite, power_law, with_rho
from opasym.recurrence import (
    CSV_HEADER, RecurrenceOverflow, cd_residual, christoffel_ratio, eval_nonsymmetric,
    eval_symmetric, run_recurrence, summation_audit, tail_band, values,
)

FAMILIES = coeffs.corpus() + [hermite(), coeffs.freud(3.0)]


def mp_values(fam, omega, N, rho=0.0):
    """Straight three-term recurrence at 50 digits."""
    with mpmath.workdps(50):
        w = mpmath.mpf(omega)
        prev, cur = mpmath.mpf(0), mpmath.mpf(1)
        out = [cur]
        for n in range(N + 1):
            g = fam.gamma_mp(n)
            nxt = ((w + rho * g) * cur - fam.gamma_mp(n - 1) * prev) / g
            prev, cur = cur, nxt
            out.append(cur)
        return [float(v) for v in out]


@pytest.mark.parametrize("w", [-1.3, 0.0, 0.4, 1.0, 2.5])
def test_hermite_first_values(w):
    p = values(hermite(), w, 3)
    assert p[0] == 1.0
    assert p[1] == pytest.approx(math.sqrt(2) * w, abs=1e-15)
    assert p[2] == pytest.approx((2 * w * w - 1) / math.sqrt(2), abs=1e-14)


def test_hermite_against_hermite_polynomials():
    # p_n = H_n / sqrt(2^n n!) with physicists' Hermite H_n
    for w in (0.3, 1.1, 2.0):
        p = values(hermite(), w, 40)
        for n in range(41):
            c = np.zeros(n + 1)
            c[n] = 1.0
            ref = H.hermval(w, c) / math.sqrt(2.0 ** n * math.factorial(n))
            assert p[n] == pytest.approx(ref, rel=1e-11, abs=1e-13)


def test_power_half_hand_values():
    p = values(power_law(0.5), 1.0, 4)
    r = math.sqrt(2 / 3)
    expected = [1.0, 1.0, 0.0, -r, -r / 2, 1.5 * r / math.sqrt(5)]
    np.testing.assert_allclose(p, expected, rtol=1e-14, atol=1e-15)


@given(st.sampled_from(range(len(FAMILIES))), st.floats(-3, 3))
def test_against_extended_precision(which, w):
    fam = FAMILIES[which]
    p = values(fam, w, 60)
    ref = mp_values(fam, w, 60)
    scale = max(1.0, max(abs(v) for v in ref))
    np.testing.assert_allclose(p, ref, rtol=0, atol=1e-12 * scale)


@pytest.mark.parametrize("which", range(len(FAMILIES)))
def test_odd_values_vanish_at_zero(which):
    p = values(FAMILIES[which], 0.0, 1001)
    assert np.all(p[1::2] == 0.0)


@given(st.sampled_from(range(len(FAMILIES))), st.floats(0.01, 3))
def test_reflection_is_exact(which, w):
    fam = FAMILIES[which]
    a = values(fam, w, 500)
    b = values(fam, -w, 500)
    sign = np.where(np.arange(len(a)) % 2 == 0, 1.0, -1.0)
    assert np.array_equal(b, sign * a)


def test_sums_monotone(corpus):
    for fam in corpus:
        run = run_recurrence(fam, 0.7, 5000)
        assert run.sum_p2[0] == 1.0
        assert np.all(np.diff(run.sum_p2) > 0)
        assert np.all(np.diff(run.sum_invgamma) > 0)


def test_checkpoint_rows_and_csv():
    tr = eval_symmetric(power_law(0.5), 1.0, 2500, stride=1000)
    assert tr.rows[:, 0].tolist() == [0, 1000, 2000, 2500]
    p = values(power_law(0.5), 1.0, 2500)
    assert tr.rows[-1, 1] == p[2500] and tr.rows[-1, 2] == p[2501]
    text = tr.to_csv()
    assert text.splitlines()[0] == CSV_HEADER
    assert len(text.splitlines()) == 5


def test_zero_offsets_bit_identical():
    fam = custom_table(list(power_law(0.5).gammas(3000)))
    zero = coeffs.CoefficientFamily.from_config(
        {"kind": "custom-table", "table": fam.table, "offsets": {"kind": "custom-table", "table": [0.0] * 3000}})
    a = eval_symmetric(fam, 1.3, 2000, stride=7)
    b = eval_nonsymmetric(zero, 1.3, 2000, stride=7)
    assert np.array_equal(a.rows, b.rows)
    b = eval_nonsymmetric(with_rho(power_law(0.5), 0.0), 1.3, 2000, stride=7)
    assert np.array_equal(eval_symmetric(power_law(0.5), 1.3, 2000, stride=7).rows, b.rows)


def test_rho_one_hand_values():
    p = values(with_rho(hermite(), 1.0), 0.0, 2)
    assert p[1] == pytest.approx(1.0, rel=1e-15)
    assert p[2] == pytest.approx(1 - 1 / math.sqrt(2), rel=1e-14)
    ref = mp_values(hermite(), 0.0, 30, rho=1)
    np.testing.assert_allclose(values(with_rho(hermite(), 1.0), 0.0, 30), ref, rtol=1e-12, atol=1e-14)


def test_rho_sign_flip():
    a = values(with_rho(power_law(0.5), 1.0), 0.0, 400)
    b = values(with_rho(power_law(0.5), -1.0), 0.0, 400)
    sign = np.where(np.arange(len(a)) % 2 == 0, 1.0, -1.0)
    assert np.array_equal(b, sign * a)


def test_overflow_reports_index():
    with pytest.raises(RecurrenceOverflow) as exc:
        run_recurrence(with_rho(power_law(0.5), 10.0), 1.0, 100_000)
    i = exc.value.index
    p = values(with_rho(power_law(0.5), 10.0), 1.0, i - 2)
    assert np.all(np.isfinite(p))


def test_cd_examples():
    assert cd_residual(power_law(0.5), 1.0, 0.3, 0).residual <= 1e-15
    assert cd_residual(hermite(), 1.0, 0.5, 100).residual <= 1e-10
    with pytest.raises(ValueError):
        cd_residual(hermite(), 1.0, 1.0, 5)


@given(st.sampled_from(range(len(FAMILIES))), st.floats(-2, 2), st.floats(-2, 2), st.integers(0, 200))
def test_cd_random(which, w, s, n):
    if abs(w - s) < 1e-6:
        return
    assert cd_residual(FAMILIES[which], w, s, n).residual <= 1e-9


def test_christoffel_ratio_examples():
    for fam in FAMILIES:
        assert christoffel_ratio(fam, 0.8, 0) == pytest.approx(fam.gamma(0), rel=1e-15)
    nu = run_recurrence(power_law(0.5), 1.0, 100_000).nu
    assert nu[-1] > 0 and abs(nu[-1] / nu[50_000] - 1) < 0.02


def test_summation_audit():
    for fam in (power_law(0.25), hermite(), detour(power_law(0.5), 20, 3)):
        assert summation_audit(fam, 1.0, 100_000) <= 1e-10


@pytest.mark.parametrize("w", [0.0, 0.5, 1.0, 2.0])
def test_tail_band_bounded(corpus, w):
    for fam in corpus:
        lo, hi = tail_band(fam, w, 100_000)
        assert 0 < lo < hi < math.inf
