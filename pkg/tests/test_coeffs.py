import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from opasym import coeffs
from opasym.coeffs import (
    ConfigError, CoefficientFamily, check_conditions, custom_table, detour, detour_index,
    epsilon, epsilon_from_differences, eta, finite_differences, hermite, power_law,
)


def test_gamma_examples():
    assert hermite().gamma(0) == pytest.approx(1 / math.sqrt(2), rel=1e-15)
    for fam in (hermite(), power_law(0.3), coeffs.freud(4.0), custom_table([3.0, 4.0])):
        assert fam.gamma(-1) == 1.0
    assert power_law(0.5).gamma(3) == 2.0


def test_gamma_vector_matches_scalar(corpus):
    for fam in corpus + [hermite(), coeffs.freud(3.0)]:
        g = fam.gammas(300)
        # numpy's vector pow and libm pow may differ in the last bit
        np.testing.assert_allclose(g, [fam.gamma(n) for n in range(300)], rtol=4.5e-16, atol=0)
        assert np.all(g > 0)


def test_hermite_squares_step_by_half():
    g = hermite().gammas(10_000)
    np.testing.assert_allclose(np.diff(g ** 2), 0.5, rtol=0, atol=1e-11)


def test_freud_leading_form():
    assert coeffs.freud(4.0).gamma(15) == pytest.approx(16 ** 0.25 / 2)


def test_finite_differences_examples():
    s, ds = finite_differences(hermite(), 1)
    assert s[0] == pytest.approx(1 - 1 / math.sqrt(2), rel=1e-14)
    s, ds = finite_differences(custom_table([1, 1, 1]), 1)
    assert (s[0], ds[0]) == (0.0, 0.0)


@pytest.mark.parametrize("p", [1.0, 1.5, 0.0, -0.2])
def test_bad_exponent_rejected(p):
    with pytest.raises(ConfigError) as exc:
        power_law(p)
    assert exc.value.key == "family.p"


def test_config_key_paths():
    with pytest.raises(ConfigError, match=r"family\.p"):
        CoefficientFamily.from_config({"kind": "power-law", "p": 1.5})
    with pytest.raises(ConfigError, match=r"family\.base\.p"):
        CoefficientFamily.from_config({"kind": "detour-perturbed", "base": {"kind": "power-law", "p": 2}})
    with pytest.raises(ConfigError, match=r"family\.table\[1\]"):
        CoefficientFamily.from_config({"kind": "custom-table", "table": [1.0, -1.0]})
    with pytest.raises(ConfigError, match=r"family\.offsets\.rho"):
        CoefficientFamily.from_config({"kind": "hermite-exact", "offsets": {"kind": "rho-proportional", "rho": "x"}})
    with pytest.raises(ConfigError, match=r"family\.bogus"):
        CoefficientFamily.from_config({"kind": "hermite-exact", "bogus": 1})


def test_config_roundtrip(corpus):
    fams = corpus + [hermite(), coeffs.freud(2.5), custom_table([1, 2, 3]), coeffs.with_rho(power_law(0.5), 1.0)]
    for fam in fams:
        assert CoefficientFamily.from_config(fam.to_config()) == fam


def test_custom_table_bounds():
    fam = custom_table([1.0, 2.0])
    with pytest.raises(IndexError):
        fam.gamma(2)


def test_epsilon_examples():
    assert epsilon(custom_table([2, 2, 2, 2]), 1) == 0.0
    # (gamma_0 gamma_2 - gamma_1^2)/gamma_1 with gamma_k = sqrt((k+1)/2)
    assert epsilon(hermite(), 1) == pytest.approx(math.sqrt(3) / 2 - 1, abs=1e-12)
    assert epsilon(hermite(), 1) == pytest.approx(-0.1339746, abs=1e-7)
    fam = power_law(0.5)
    assert abs(epsilon(fam, 10 ** 6)) < abs(epsilon(fam, 10 ** 3)) < abs(epsilon(fam, 10))


FAMILIES = coeffs.corpus() + [hermite(), coeffs.freud(3.0)]


@given(st.integers(1, 10 ** 6), st.sampled_from(range(len(FAMILIES))))
def test_epsilon_difference_identity(n, which):
    fam = FAMILIES[which]
    # exact algebra: compare the two forms at high precision
    with mpmath.workdps(60):
        g0, g1, g2 = (fam.gamma_mp(k) for k in (2 * n - 2, 2 * n - 1, 2 * n))
        direct = (g0 * g2 - g1 * g1) / g1
        s0, s1 = g1 - g0, g2 - g1
        via = (s1 - s0) - s0 * s1 / g1
        assert abs(direct - via) <= mpmath.mpf("1e-12") * abs(direct)
    # binary64: both forms cancel, so the gap is judged against the operand size
    a, b = epsilon(fam, n), epsilon_from_differences(fam, n)
    assert abs(a - b) <= 1e-14 * fam.gamma(2 * n - 1)


def test_eta_examples():
    assert eta(custom_table([5.0] * 8), 2) == 0.0
    # monotone family: the four differences telescope to gamma_4 - gamma_0
    assert eta(hermite(), 2) == pytest.approx(math.sqrt(2.5) - math.sqrt(0.5), rel=1e-14)
    assert eta(hermite(), 2) == pytest.approx(0.8740, abs=5e-5)
    fam = detour(power_law(0.5), period=20, depth=3)
    lo, hi = coeffs.detour_region(fam, 20)
    for n in range(max(lo // 2, 2), hi // 2 + 2):
        e = eta(fam, n)
        plain = sum(abs(fam.gamma(k + 1) - fam.gamma(k)) for k in range(2 * n - 4, 2 * n))
        assert e > 0 and e == pytest.approx(plain)


@given(st.floats(0.02, 0.98), st.integers(1, 10 ** 7))
def test_power_law_difference_bounds(p, n):
    fam = power_law(p)
    with mpmath.workdps(50):
        g = [fam.gamma_mp(n + k) for k in range(3)]
        s = float(g[1] - g[0])
        ds = float(g[2] - 2 * g[1] + g[0])
    assert 0 < s <= p * (n + 1) ** (p - 1) * (1 + 1e-12)
    assert -p * (1 - p) * n ** (p - 2) * (1 + 1e-12) <= ds < 0


@given(st.integers(4, 40), st.integers(1, 3), st.integers(0, 30))
def test_detour_blocks_are_permutations(period, depth, k):
    if period < depth + 2:
        return
    start = period * k * (k + 1) // 2
    length = period * (k + 1)
    idx = np.arange(start, start + length)
    mapped = detour_index(idx, period, depth)
    assert sorted(mapped.tolist()) == idx.tolist()
    assert [detour_index(int(i), period, depth) for i in idx] == mapped.tolist()
    # exactly the last depth + 1 entries are reversed
    assert mapped[-depth - 1:].tolist() == idx[-depth - 1:][::-1].tolist()


def test_detour_not_monotone_but_almost_increasing(corpus):
    for fam in corpus[5:]:
        g = fam.gammas(5000)
        assert np.any(np.diff(g) < 0)
        rep = check_conditions(fam)
        assert rep.results["C3"].status == "consistent"
        assert rep.m0 > 1 and rep.m0 <= 2 * fam.depth + 1


def test_conditions_power_half():
    rep = check_conditions(power_law(0.5), 10_000)
    assert rep.all_consistent()
    assert rep.kappa == 3.0
    assert set(rep.results) == set(coeffs.CONDITIONS)


def test_conditions_detour_q50():
    rep = check_conditions(detour(power_law(0.5), period=50, depth=3), 10_000)
    assert rep.all_consistent()
    assert rep.m0 <= 7


def test_conditions_corpus_consistent(corpus):
    for fam in corpus:
        assert check_conditions(fam).all_consistent(), fam.label


def test_constant_table_violates_growth():
    rep = check_conditions(custom_table([1.0] * 202), 200)
    c1 = rep.results["C1"]
    assert c1.status == "violated" and c1.witness is not None
    for r in rep.results.values():
        if r.status == "violated":
            assert r.witness is not None


def test_small_horizon_rejected():
    with pytest.raises(ValueError):
        check_conditions(power_law(0.5), 50)


def test_corpus_shape(corpus):
    assert len(corpus) == 10
    assert sorted({f.p if f.kind == "power-law" else f.base.p for f in corpus}) == [0.01, 0.25, 0.5, 0.75, 0.99]
    assert [f.kind for f in corpus].count("detour-perturbed") == 5


def test_offsets():
    fam = coeffs.with_rho(hermite(), 1.5)
    np.testing.assert_array_equal(fam.offsets(5), 1.5 * hermite().gammas(5))
    assert not fam.is_symmetric
    assert coeffs.with_rho(hermite(), 0.0).is_symmetric
