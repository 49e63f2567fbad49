"""Sampled verdicts for the growth, superlinearity, vanishing and convexity checks."""

import pytest

from ballcrit.grid import Nonlinearity
from ballcrit.hypotheses import (
    FAIL,
    PASS,
    HypothesisParams,
    WitnessCache,
    check_ar_h7,
    check_convexity_h5_h10,
    check_growth_h4,
    check_growth_h8,
    check_vanishing_h9,
    params_for,
    run_all_checks,
)

QUARTIC = Nonlinearity.power(1.0, 4.0)     # F = x^4, f = 4x^3
QUADRATIC = Nonlinearity.power(1.0, 2.0)   # F = x^2, f = 2x


def revalidate(nl, verdict):
    """Every witness must re-evaluate to a strict violation."""
    w = verdict.witness
    assert w is not None
    return w


# -- H4 ---------------------------------------------------------------------


def test_h4_quartic_equality_passes():
    v = check_growth_h4(QUARTIC, HypothesisParams(c1=1.0, mu=4.0, c2=0.0, d=1.0))
    assert v.verdict == PASS


def test_h4_quadratic_against_cubic_bound_fails():
    v = check_growth_h4(QUADRATIC, HypothesisParams(c1=1.0, mu=3.0, c2=0.0, d=1.0))
    assert v.verdict == FAIL
    w = revalidate(QUADRATIC, v)
    x = w.x
    assert abs(x) >= 1.0
    assert float(QUADRATIC.F(*w.site, x)) < 1.0 * abs(x) ** 3.0


def test_h4_constant_shift_passes():
    shifted = Nonlinearity.power(1.0, 4.0, c2=1.0)
    v = check_growth_h4(shifted, HypothesisParams(c1=1.0, mu=4.0, c2=1.0, d=1.0))
    assert v.verdict == PASS


def test_h4_validates_params():
    with pytest.raises(ValueError):
        check_growth_h4(QUARTIC, HypothesisParams(mu=2.0))
    with pytest.raises(ValueError):
        check_growth_h4(QUARTIC, HypothesisParams(c1=0.0))
    with pytest.raises(ValueError):
        check_growth_h4(QUARTIC, HypothesisParams(d=0.0))


# -- H7 ---------------------------------------------------------------------


def test_h7_quartic_theta4_equality_passes():
    v = check_ar_h7(QUARTIC, 4.0)
    assert v.verdict == PASS


def test_h7_quartic_theta_above_fails():
    v = check_ar_h7(QUARTIC, 4.5)
    assert v.verdict == FAIL
    w = revalidate(QUARTIC, v)
    assert 4.5 * float(QUARTIC.F(*w.site, w.x)) > w.x * float(QUARTIC.f(*w.site, w.x))


def test_h7_quadratic_fails():
    v = check_ar_h7(QUADRATIC, 3.0)
    assert v.verdict == FAIL
    w = revalidate(QUADRATIC, v)
    # 3 x^2 > 2 x^2 for every x != 0
    assert w.lhs > w.rhs


def test_h7_rejects_theta_at_or_below_2():
    with pytest.raises(ValueError):
        check_ar_h7(QUARTIC, 2.0)


# -- H8 ---------------------------------------------------------------------


def test_h8_exact_bound_passes():
    v = check_growth_h8(QUARTIC, 4.0, 4.0, 0.0)
    assert v.verdict == PASS


def test_h8_undersized_bound_fails():
    v = check_growth_h8(QUARTIC, 1.0, 3.0, 0.0)
    assert v.verdict == FAIL
    w = revalidate(QUARTIC, v)
    assert abs(float(QUARTIC.f(*w.site, w.x))) > 1.0 * abs(w.x) ** 2.0


def test_h8_zero_nonlinearity_passes():
    v = check_growth_h8(Nonlinearity.zero(), 1.0, 3.0, 0.0)
    assert v.verdict == PASS


# -- H9 ---------------------------------------------------------------------


def test_h9_quartic_ratio_vanishes():
    assert check_vanishing_h9(QUARTIC).verdict == PASS


def test_h9_linear_ratio_constant_fails():
    v = check_vanishing_h9(QUADRATIC)
    assert v.verdict == FAIL
    w = revalidate(QUADRATIC, v)
    assert w.lhs == pytest.approx(2.0)  # |2v|/|v|


def test_h9_subquadratic_power_passes():
    # f = |x|^1.5 sign(x): ratio |v|^0.5 -> 0
    nl = Nonlinearity.power(1.0 / 2.5, 2.5)
    assert check_vanishing_h9(nl).verdict == PASS


# -- H5/H10 -----------------------------------------------------------------


def test_h5_quartic_convex_passes():
    assert check_convexity_h5_h10(QUARTIC).verdict == PASS


def test_h5_concave_fails_at_symmetric_bracket():
    neg = Nonlinearity.polynomial([0.0, 0.0, -1.0])  # F = -x^2
    v = check_convexity_h5_h10(neg)
    assert v.verdict == FAIL
    x, y = v.witness.x
    assert v.witness.lhs > v.witness.rhs


def test_h5_shallow_dip_near_origin_fails():
    dip = Nonlinearity.polynomial([0.0, 0.0, -0.01, 0.0, 1.0])  # x^4 - 0.01 x^2
    v = check_convexity_h5_h10(dip)
    assert v.verdict == FAIL
    x, y = v.witness.x
    assert max(abs(x), abs(y)) < 0.5  # violation sits near the origin


# -- catalog and cache ------------------------------------------------------


def test_catalog_quartic_full_checklist():
    params = params_for(QUARTIC)
    assert params is not None
    assert (params.c1, params.mu, params.theta, params.beta1, params.eta) == (
        1.0,
        4.0,
        4.0,
        4.0,
        4.0,
    )
    verdicts = run_all_checks(QUARTIC, params)
    assert [v.verdict for v in verdicts] == [PASS] * 5


def test_even_power_catalog_passes_growth_and_convexity():
    # the worked family F = c1 |x|^mu + c2 with even mu > 2
    for mu in (4.0, 6.0):
        nl = Nonlinearity.power(0.5, mu, c2=-0.2)
        p = params_for(nl)
        assert check_growth_h4(nl, p).verdict == PASS
        assert check_convexity_h5_h10(nl, p).verdict == PASS
        assert check_vanishing_h9(nl, p).verdict == PASS


def test_witness_cache_blocks_return_to_pass():
    # bound 4|v|^2 + 100 holds on [0, 3] but fails for larger |v|
    cache = WitnessCache()
    small = HypothesisParams(x_max=3.0)
    wide = HypothesisParams(x_max=10.0)
    first = check_growth_h8(QUARTIC, 4.0, 3.0, 100.0, small, cache=cache)
    assert first.verdict == PASS
    second = check_growth_h8(QUARTIC, 4.0, 3.0, 100.0, wide, cache=cache)
    assert second.verdict == FAIL
    # the cached witness keeps the narrow sampling from passing again
    third = check_growth_h8(QUARTIC, 4.0, 3.0, 100.0, small, cache=cache)
    assert third.verdict == FAIL
    assert third.samples == 0  # decided from the cache, before sampling


def test_site_dependent_checks_cover_all_sites():
    from ballcrit.grid import GridShape

    table = {
        (1, 1): Nonlinearity.power(1.0, 4.0),
        (2, 1): Nonlinearity.power(1.0, 2.0),  # violates vanishing at site (2,1)
    }
    nl = Nonlinearity.from_table(table)
    sites = list(GridShape(2, 1).sites())
    v = check_vanishing_h9(nl, sites=sites)
    assert v.verdict == FAIL
    assert v.witness.site == (2, 1)
