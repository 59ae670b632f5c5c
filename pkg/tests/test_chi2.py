import io
import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from scipy import optimize

from tiltec.chi2 import (
    TABLE_COLUMNS,
    Regime,
    c_n,
    chi2_closed_form_state,
    chi2_comparison_table,
    chi2_exact_density,
    chi2_normalized_density,
    chi2_tail,
    r_polynomial,
    r_polynomial_closed_form,
    regime_grid,
    write_table_csv,
)
from tiltec.ec_density import HermiteArg, Rho0Method, rho_tilted, rho_tilted_refined
from tiltec.saddlepoint import Chi2Normalized, solve_saddlepoint
from tiltec.special import hermite

mpmath.mp.dps = 50


def exact_sum_oracle(k, n, y):
    """Double sum in rational arithmetic; prefactor in 50-digit floating point."""
    y = Fraction(y)
    total = Fraction(0)
    for j in range((k - 1) // 2 + 1):
        for l in range(k - 1 - 2 * j + 1):
            if n >= k - 2 * j - l:
                total += Fraction(math.comb(n - 1, k - 1 - 2 * j - l) * (-1) ** (k - 1)) * (-y) ** (j + l) / (
                    math.factorial(l) * math.factorial(j) * 2**j
                )
    yy = mpmath.mpf(y.numerator) / y.denominator
    pre = (
        mpmath.factorial(k - 1)
        * yy ** (mpmath.mpf(n - k) / 2)
        * mpmath.e ** (-yy / 2)
        / ((2 * mpmath.pi) ** (mpmath.mpf(k) / 2) * mpmath.gamma(mpmath.mpf(n) / 2) * 2 ** (mpmath.mpf(n) / 2 - 1))
    )
    return float(pre * mpmath.mpf(total.numerator) / total.denominator)


def test_first_density_single_term():
    # k = 1: only j = l = 0, the sum is C(n-1, 0) = 1
    for n in (1, 3, 10):
        y = 2.7
        hand = y ** ((n - 1) / 2) * math.exp(-y / 2) / (math.sqrt(2 * math.pi) * math.gamma(n / 2) * 2 ** (n / 2 - 1))
        assert chi2_exact_density(1, n, y) == pytest.approx(hand, rel=1e-13)


def test_exact_density_rational_oracle():
    assert chi2_exact_density(2, 64, 100.0) == pytest.approx(exact_sum_oracle(2, 64, 100), rel=1e-10)
    for k, n, y in [(3, 5, 7.5), (3, 200, 260.0), (2, 1, 0.4), (3, 2, 9.0)]:
        assert chi2_exact_density(k, n, y) == pytest.approx(exact_sum_oracle(k, n, Fraction(y)), rel=1e-10)


def test_indicator_drops_terms_when_n_is_small():
    # k = 3, n = 1: only terms with k - 2j - l <= 1 survive, i.e. (j, l) in {(1, 0), (0, 2)}
    y = 3.0
    survivors = 0
    for j in range(2):
        for l in range(3 - 2 * j):
            survivors += 1 >= 3 - 2 * j - l
    assert survivors == 2
    assert math.isfinite(chi2_exact_density(3, 1, y))
    assert chi2_exact_density(3, 1, y) == pytest.approx(exact_sum_oracle(3, 1, 3), rel=1e-12)


def test_exact_density_rejects_bad_input():
    with pytest.raises(ValueError):
        chi2_exact_density(1, 5, 0.0)
    with pytest.raises(ValueError):
        chi2_exact_density(0, 5, 1.0)


def test_normalized_density_zero_order():
    assert chi2_normalized_density(0, 10, 0.0) == pytest.approx(0.4404932850652, rel=1e-12)
    assert chi2_tail(10, 10.0) == pytest.approx(float(mpmath.gammainc(5, 5, mpmath.inf, regularized=True)), rel=1e-13)


def test_normalized_density_rejects_out_of_range():
    with pytest.raises(ValueError):
        chi2_normalized_density(1, 100, -10.0)
    with pytest.raises(ValueError):
        chi2_normalized_density(4, 100, 1.0)


def _via_r_polynomial(k, n, u):
    # exp(-I) structure: the exact density written with R_{k-1,n}
    st = chi2_closed_form_state(n, u)
    return (2 * math.pi) ** (-(k + 1) / 2) * math.exp(-st.rate) / st.tau**k * r_polynomial(k - 1, n, u)


@pytest.mark.parametrize("k", [1, 2, 3])
@pytest.mark.parametrize("n", [3, 10, 100, 1000])
@pytest.mark.parametrize("u", [0.0, 0.5, 2.0, 5.0])
def test_two_composition_paths_agree(k, n, u):
    assert chi2_normalized_density(k, n, u) == pytest.approx(_via_r_polynomial(k, n, u), rel=1e-12)


def test_first_density_at_zero():
    n = 100
    expected = 0.5 * chi2_exact_density(1, n, n)
    assert chi2_normalized_density(1, n, 0.0) == pytest.approx(expected, rel=1e-15)
    assert chi2_normalized_density(1, n, 0.0) == pytest.approx(_via_r_polynomial(1, n, 0.0), rel=1e-12)


def test_third_density_tail_decay():
    vals = [chi2_normalized_density(3, 2, u) for u in (10.0, 20.0, 40.0, 80.0)]
    assert all(v > 0 for v in vals)
    assert vals[-1] < 1e-15 and np.all(np.diff(vals) < 0)


def test_r_polynomial_closed_forms():
    for n in (5, 50, 500):
        assert r_polynomial(0, n, 0.0) == pytest.approx(c_n(n), rel=1e-13)
        for x in (-1.5, 0.3, 2.0, 6.0):
            for k in (0, 1, 2):
                assert r_polynomial(k, n, x) == pytest.approx(r_polynomial_closed_form(k, n, x), rel=1e-11)


def test_r1_closed_form_singular_at_zero():
    with pytest.raises(ZeroDivisionError):
        r_polynomial_closed_form(1, 50, 0.0)
    # the general sum is fine there: c_n (1/sqrt(2n)) from the 1/(u sqrt n) term times u/sqrt 2
    assert r_polynomial(1, 50, 0.0) == pytest.approx(c_n(50) / math.sqrt(2 * 50), rel=1e-12)


def test_c_n_tends_to_one():
    assert abs(c_n(500) - 1) < 0.01
    assert abs(c_n(5000) - 1) < abs(c_n(500) - 1)


def test_r2_approaches_hermite():
    ratios = [r_polynomial(2, n, 2.0) / hermite(2, 2.0 / math.sqrt(2)) for n in (100, 1000, 10000)]
    gaps = [abs(r - 1) for r in ratios]
    assert gaps[0] > gaps[1] > gaps[2]


def test_closed_form_state_matches_solver():
    for n in (10, 100, 1000):
        for u in (0.25, 1.0, 5.0):
            a = chi2_closed_form_state(n, u)
            b = solve_saddlepoint(Chi2Normalized(n), u)
            assert a.theta_hat == pytest.approx(b.theta_hat, abs=1e-10)
            assert a.tau2 == pytest.approx(b.tau2, abs=1e-10)
            assert a.rate == pytest.approx(b.rate, abs=1e-10)
            assert a.zeta == pytest.approx(u / math.sqrt(2), rel=1e-14)


def test_regime_grids():
    assert regime_grid(Regime.FIXED_U, ns=(10, 100), u=2.0) == [(10, 2.0), (100, 2.0)]
    assert regime_grid("fixed-n", us=(1.0, 2.0)) == [(500, 1.0), (500, 2.0)]
    grow = regime_grid("grow-both", ns=(64,), c=1.5)
    assert grow[0][1] == pytest.approx(1.5 * 2.0)


def test_fixed_u_first_density_converges():
    rows = chi2_comparison_table(1, regime_grid(Regime.FIXED_U, ns=(10, 100, 1000, 10000), u=2.0))
    gaps = [abs(r.ratio_tilted - 1) for r in rows]
    assert gaps == sorted(gaps, reverse=True) and gaps[-1] < 0.01


def test_first_density_crossover_tends_to_sqrt6():
    # relative errors to first order: tilted u/(2 sqrt n), Gaussian u |1/2 - u^2/6| / sqrt n,
    # so the Gaussian density is closer below u = sqrt(6) and the tilted one above
    def gap(n, u):
        r = chi2_comparison_table(1, [(n, u)])[0]
        return abs(r.ratio_tilted - 1) - abs(r.ratio_gaussian - 1)

    crossings = [optimize.brentq(lambda u: gap(n, u), 1.5, 3.5) for n in (100, 1000, 10000, 100000)]
    assert np.all(np.diff(np.abs(np.array(crossings) - math.sqrt(6))) < 0)
    assert abs(crossings[-1] - math.sqrt(6)) < 0.01
    for n in (100, 1000):
        assert gap(n, 2.0) > 0 and gap(n, 3.0) < 0


def test_integrated_normalized_rows_are_exact():
    rows = chi2_comparison_table(0, regime_grid(Regime.FIXED_U, ns=(10, 100, 1000), u=2.0), Rho0Method.INTEGRATED_NORMALIZED)
    for r in rows:
        assert r.ratio_tilted == pytest.approx(1.0, abs=1e-8)


def test_fixed_n_gaussian_diverges():
    rows = chi2_comparison_table(1, regime_grid(Regime.FIXED_N, us=(4.0, 6.0, 8.0)))
    assert rows[-1].ratio_gaussian < 0.1
    assert [r.ratio_gaussian for r in rows] == sorted([r.ratio_gaussian for r in rows], reverse=True)


@pytest.mark.parametrize("k", [2, 3])
def test_fixed_n_crossover_direction(k):
    rows = chi2_comparison_table(k, regime_grid(Regime.FIXED_N, us=(2.0, 3.0, 5.0, 6.0, 7.0, 8.0)))
    for r in rows:
        tilted_better = abs(r.ratio_tilted - 1) < abs(r.ratio_gaussian - 1)
        # Gaussian densities win at moderate levels, the tilted ones far out in the tail
        assert tilted_better == (r.u >= 5.0), r


def test_tilted_ratio_error_rate():
    ns = np.array([1e2, 1e3, 1e4, 1e5])
    for k in (0, 1):
        rows = chi2_comparison_table(k, [(int(n), 1.0) for n in ns])
        gaps = np.array([abs(r.ratio_tilted - 1) for r in rows])
        slope = np.polyfit(np.log(ns), np.log(gaps), 1)[0]
        assert abs(slope + 0.5) <= 0.15


def test_mixed_skew_zero_refinements_coincide():
    st = chi2_closed_form_state(200, 3.0)
    for k in (1, 2, 3):
        base = rho_tilted(k, st, HermiteArg.TILTED)
        assert rho_tilted_refined(k, st, np.zeros(k), 1) == base
        if k > 1:
            assert rho_tilted_refined(k, st, np.zeros(k), 2) == base


def test_table_csv_schema():
    rows = chi2_comparison_table(1, [(100, 2.0)])
    text = write_table_csv(rows)
    lines = text.splitlines()
    assert lines[0].startswith("# schema: tiltec.chi2_comparison/v1")
    assert lines[1] == ",".join(TABLE_COLUMNS)
    buf = io.StringIO()
    write_table_csv(rows, buf)
    assert buf.getvalue() == text
    with pytest.raises(ValueError):
        chi2_comparison_table(1, [])
