import math
from fractions import Fraction as F

import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from ksflow.estimates import (
    INF,
    GNQuery,
    as_rational,
    audit_rows,
    check_pm_exponent_chain,
    critical_exponent,
    format_table,
    gn_balance,
    gn_exponent,
    lemma24_check,
    lemma24_threshold,
    young_c1,
)

P, THETA = F(25, 16), F(8, 7)


def test_critical_exponent_values():
    assert critical_exponent(3) == F(4, 3)
    assert critical_exponent(2) == 1
    assert critical_exponent(1) == 0
    with pytest.raises(ValueError):
        critical_exponent(0)


def test_as_rational_uses_decimal_repr():
    assert as_rational(1.2) == F(6, 5)
    assert as_rational("29/10") == F(29, 10)
    assert as_rational(3) == F(3)


def test_gn_nonadmissible_value():
    r = gn_exponent(GNQuery(1, 2, 3, F(41, 2), F(41, 16), 2))
    assert r.a == F(193, 191) and not r.admissible


def test_gn_step_one_exponent():
    r = gn_exponent(GNQuery(0, 1, 3, F(9, 2), 2, 1))
    assert r.a == F(14, 15) and r.admissible
    assert F(3, 2) * r.a == F(7, 5)


@pytest.mark.parametrize("s", [1, F(3, 2), 7, INF])
def test_gn_identity_interpolation(s):
    r = gn_exponent(GNQuery(1, 1, 3, F(5, 2), F(5, 2), s))
    assert r.a == 1 and r.admissible


def test_gn_degenerate_balance():
    # 1/r - k/N - 1/s = 1/2 - 1/2 - 0
    with pytest.raises(ZeroDivisionError):
        gn_exponent(GNQuery(0, 1, 2, 4, 2, INF))


@pytest.mark.parametrize("bad", [dict(N=4), dict(j=2, k=1), dict(q=F(1, 2))])
def test_gn_query_validation(bad):
    kw = dict(j=0, k=1, N=3, q=2, r=2, s=2)
    kw.update(bad)
    with pytest.raises(ValueError):
        GNQuery(**kw)


exps = st.one_of(st.fractions(min_value=1, max_value=50, max_denominator=60), st.just(INF))


@settings(max_examples=200)
@given(j=st.integers(0, 2), dk=st.integers(0, 2), N=st.sampled_from([2, 3]), q=exps, r=exps, s=exps)
def test_gn_plug_back_reproduces_balance(j, dk, N, q, r, s):
    query = GNQuery(j, j + dk, N, q, r, s)
    try:
        res = gn_exponent(query)
    except ZeroDivisionError:
        return
    assert isinstance(res.a, F)
    assert gn_balance(query, res.a) == (0 if q == INF else 1 / F(q))


def test_gn_against_sympy_solve():
    a = sp.symbols("a")
    for (j, k, N, q, r, s) in [(1, 2, 3, F(41, 2), F(41, 16), 2), (0, 1, 3, F(9, 2), 2, 1), (0, 2, 2, 7, 3, 2)]:
        eq = sp.Eq(sp.Rational(1) / sp.Rational(q), sp.Rational(j, N) + a * (1 / sp.Rational(r) - sp.Rational(k, N))
                   + (1 - a) / sp.Rational(s))
        (sol,) = sp.solve(eq, a)
        assert F(int(sol.p), int(sol.q)) == gn_exponent(GNQuery(j, k, N, q, r, s)).a


def test_interval_sum_at_threshold():
    r = lemma24_check(P, THETA, F(579, 194))
    assert r.theta_prime == 8
    assert r.total == 1 and not r.holds


def test_interval_sum_upper_endpoint():
    r = lemma24_check(P, THETA, 3)
    assert r.total == F(14284, 14325) and r.holds


def test_interval_sum_small_l0_fails():
    r = lemma24_check(P, THETA, 2)
    assert not r.holds and r.a_tilde > 0


def test_interval_sum_by_hand():
    # a = (5/6 - 16/328) / (7/6 - 16/41), a_tilde = (1/l0 - 14/41) / (1/l0 + 2/3 - 16/41)
    a = (F(5, 6) - F(1, 8) * F(16, 41)) / (F(7, 6) - F(16, 41))
    for l0 in (F(299, 100), F(3), F(2)):
        x = 1 / l0
        at = (x - F(14, 41)) / (x + F(2, 3) - F(16, 41))
        r = lemma24_check(P, THETA, l0)
        assert (r.a, r.a_tilde, r.total) == (a, at, a + at)


def test_interval_sum_validation():
    with pytest.raises(ValueError):
        lemma24_check(1, THETA, 3)
    with pytest.raises(ValueError):
        lemma24_check(P, THETA, 0)


def test_threshold_value_and_reduction():
    assert lemma24_threshold(P, THETA) == F(579, 194) == F(1737, 582)


def test_threshold_self_consistent():
    thr = lemma24_threshold(P, THETA)
    assert lemma24_check(P, THETA, thr).total == 1


def test_threshold_preconditions():
    # for p, theta > 1 the solve always has a positive root, so only the
    # preconditions can fail
    for bad in ((1, THETA), (P, 1), (F(1, 2), 3)):
        with pytest.raises(ValueError):
            lemma24_threshold(*bad)


def test_brute_force_scan_matches_threshold():
    thr = lemma24_threshold(P, THETA)
    lo, hi = F(2), F(4)
    grid = [lo + (hi - lo) * F(i, 999) for i in range(1000)]
    results = [lemma24_check(P, THETA, l0).holds for l0 in grid]
    # holds exactly above the threshold on the scanned range and switches once
    assert results == [l0 > thr for l0 in grid]
    assert sum(1 for x, y in zip(results, results[1:]) if x != y) == 1


@pytest.mark.parametrize("theta", [F(8, 7), F(6, 5), F(3, 2), F(2)])
def test_threshold_moves_with_theta(theta):
    thr = lemma24_threshold(P, theta)
    above, below = thr * F(101, 100), thr * F(99, 100)
    assert lemma24_check(P, theta, above).holds
    assert not lemma24_check(P, theta, below).holds


def test_threshold_monotone_in_theta():
    thetas = [F(8, 7) + F(i, 50) for i in range(10)]
    thr = [1 / lemma24_threshold(P, t) for t in thetas]
    assert all(a > b for a, b in zip(thr, thr[1:])) or all(a < b for a, b in zip(thr, thr[1:]))


@given(st.fractions(min_value=F(11, 10), max_value=5, max_denominator=100),
       st.fractions(min_value=F(11, 10), max_value=5, max_denominator=100),
       st.integers(2, 9))
def test_exactness_under_equivalent_inputs(p, theta, k):
    expanded = (F(p.numerator * k, p.denominator * k), F(theta.numerator * k, theta.denominator * k))
    a = lemma24_check(p, theta, 3)
    b = lemma24_check(*expanded, F(3 * k, k))
    assert a == b
    assert a.total.denominator > 0 and math.gcd(a.total.numerator, a.total.denominator) == 1


def _c1_direct(eps1, p, m, vol):
    mu = m - 1 / 3
    return mu / (p + mu) * (eps1 * (p + mu) / p) ** (-p / mu) * ((p + 1) / p) ** ((p + mu) / mu) * vol


def test_young_c1_double_evaluation():
    log_domain = young_c1(1, P, F(3, 2), 1)
    assert abs(log_domain - _c1_direct(1.0, 25 / 16, 1.5, 1.0)) <= 1e-12 * log_domain


def test_young_c1_unit_base():
    p, m = F(25, 16), F(3, 2)
    mu = m - F(1, 3)
    got = young_c1(p / (p + mu), p, m, 1)
    expected = float(mu / (p + mu)) * float((p + 1) / p) ** float((p + mu) / mu)
    assert got == pytest.approx(expected, rel=1e-13)


def test_young_c1_linear_in_volume():
    assert young_c1(F(1, 3), 2, 2, 2) == pytest.approx(2 * young_c1(F(1, 3), 2, 2, 1), rel=1e-14)


def test_young_c1_survives_large_exponents():
    # exponents near 4e4: the two powers over- and underflow separately but
    # cancel to C1 = mu/(p+mu) * (p+1)/p when eps1 (p+mu)/p = (p+1)/p
    p, mu = F(40), F(1, 1000)
    eps1 = (p + 1) / (p + mu)
    value = young_c1(eps1, p, F(1, 3) + mu, 1)
    assert value == pytest.approx(float(mu / (p + mu) * (p + 1) / p), rel=1e-9)
    with pytest.raises(OverflowError):
        _c1_direct(float(eps1), 40.0, 1 / 3 + 1e-3, 1.0)


@pytest.mark.parametrize("bad", [(0, 2, 2, 1), (1, 1, 2, 1), (1, 2, F(1, 3), 1), (1, 2, 2, 0)])
def test_young_c1_validation(bad):
    with pytest.raises(ValueError):
        young_c1(*bad)


def test_chain_paper_values():
    rep = check_pm_exponent_chain(F(3, 2), P)
    assert rep.holds
    assert rep.comparisons[0].lhs == F(41, 16) and rep.comparisons[0].rhs == F(131, 48)


def test_chain_fails_at_critical_exponent():
    rep = check_pm_exponent_chain(F(4, 3), P)
    assert not rep.holds
    assert rep.comparisons[0].lhs == rep.comparisons[0].rhs


def test_chain_fails_below():
    assert not check_pm_exponent_chain(1.2, P).holds


@given(st.fractions(min_value=F(101, 100), max_value=4, max_denominator=100),
       st.fractions(min_value=F(101, 100), max_value=6, max_denominator=100))
def test_chain_first_link_iff_supercritical(m, p):
    rep = check_pm_exponent_chain(m, p)
    assert rep.comparisons[0].holds == (m > F(4, 3))


def test_audit_table():
    rows = audit_rows()
    checks = [r.check for r in rows]
    assert "critical_exponent(3) = 4/3" in checks
    assert "lemma24 threshold = 579/194" in checks
    warn = [r for r in rows if r.status == "WARN"]
    assert any("193/191" in r.check for r in warn)
    assert not any(r.status == "FAIL" for r in rows)
    text = format_table(rows)
    assert text.splitlines()[0].split() == ["check", "inputs", "result", "status"]
