"""Mesh-scaled problems, the smallest-eigenvalue extrapolation, refinement."""

import math

import numpy as np
import pytest

from ballcrit.grid import GridShape, Nonlinearity, OperatorA, eigen_analytic
from ballcrit.pde import (
    RectDomain,
    XYNonlinearity,
    discretize,
    interpolate_bilinear,
    poincare_estimate,
    refinement_study,
    restrict_nested,
    weighted_energy,
)
from ballcrit.solvers import SolverOptions

TWO_PI_SQ = 2.0 * math.pi**2


def test_domain_validation():
    with pytest.raises(ValueError):
        RectDomain(1.0, 1.0, 0.3)          # 1/0.3 not integral
    with pytest.raises(ValueError):
        RectDomain(1.0, 1.0, 1.0)          # empty interior
    with pytest.raises(ValueError):
        RectDomain(-1.0, 1.0, 0.5)
    dom = RectDomain(2.0, 1.0, 0.25)
    assert (dom.cols, dom.rows) == (7, 3)
    assert dom.node_xy(1, 1) == (0.25, 0.25)


def test_discretize_unit_square_h_half():
    dom = RectDomain(1.0, 1.0, 0.5)
    p = discretize(dom, Nonlinearity.power(1.0, 4.0), 1.0)
    assert p.shape == GridShape(1, 1)
    np.testing.assert_allclose(p.operator.dense(), [[16.0]])


def test_discretize_h_one_recovers_unscaled_operator():
    dom = RectDomain(4.0, 3.0, 1.0)
    p = discretize(dom, Nonlinearity.power(1.0, 4.0), 1.0)
    ref = OperatorA(GridShape(3, 2), scale=1.0)
    rng = np.random.default_rng(1)
    for _ in range(20):
        u = rng.standard_normal(p.size)
        np.testing.assert_array_equal(p.operator.apply(u), ref.apply(u))


def test_discretize_fine_alpha1_approaches_dirichlet_eigenvalue():
    dom = RectDomain(1.0, 1.0, 1.0 / 32.0)
    p = discretize(dom, Nonlinearity.zero(), 1.0)
    a1 = p.operator.alpha1()
    assert a1 == pytest.approx(1024.0 * (4.0 - 4.0 * math.cos(math.pi / 32.0)), rel=1e-12)
    assert a1 == pytest.approx(19.72, abs=0.01)


def test_discretize_xy_dependent_sampled_at_nodes():
    dom = RectDomain(1.0, 1.0, 0.25)
    xy = XYNonlinearity(
        f=lambda x, y, u: x * u,
        F=lambda x, y, u: 0.5 * x * u**2,
        fprime=lambda x, y, u: x * np.ones_like(u),
    )
    p = discretize(dom, xy, 1.0)
    # site (2, 1) sits at x = 0.5: f = 0.5 u
    assert float(p.nonlinearity.f(2, 1, 2.0)) == pytest.approx(1.0)
    assert float(p.nonlinearity.f(1, 3, 2.0)) == pytest.approx(0.5)


def test_poincare_unit_square():
    est = poincare_estimate(RectDomain(1.0, 1.0, 1.0 / 8.0), levels=3)
    assert est.extrapolated and est.monotone
    assert est.lambda1 == pytest.approx(TWO_PI_SQ, rel=5e-3)
    assert est.c == pytest.approx(1.0 / math.sqrt(TWO_PI_SQ), rel=5e-3)


def test_poincare_scales_with_domain_side():
    unit = poincare_estimate(RectDomain(1.0, 1.0, 1.0 / 8.0), levels=3)
    double = poincare_estimate(RectDomain(2.0, 2.0, 1.0 / 4.0), levels=3)
    assert double.c == pytest.approx(2.0 * unit.c, rel=1e-9)


def test_poincare_single_level_flagged_unextrapolated():
    dom = RectDomain(1.0, 1.0, 1.0 / 8.0)
    est = poincare_estimate(dom, levels=1)
    assert not est.extrapolated
    raw = float(eigen_analytic(dom.grid_shape(), 64.0)[0])
    assert est.lambda1 == pytest.approx(raw)
    assert est.c == pytest.approx(1.0 / math.sqrt(raw))


def test_interpolation_and_restriction_roundtrip():
    coarse = GridShape(3, 3)
    fine = GridShape(7, 7)
    rng = np.random.default_rng(8)
    u = rng.standard_normal(coarse.size)
    up = interpolate_bilinear(coarse, u, fine)
    back = restrict_nested(fine, up, coarse, 2)
    np.testing.assert_allclose(back, u, atol=1e-14)


def test_interpolation_requires_factor_two():
    with pytest.raises(ValueError):
        interpolate_bilinear(GridShape(3, 3), np.zeros(9), GridShape(6, 6))
    with pytest.raises(ValueError):
        restrict_nested(GridShape(6, 6), np.zeros(36), GridShape(3, 3), 2)


def test_weighted_energy_matches_hand_value():
    dom = RectDomain(1.0, 1.0, 0.5)
    p = discretize(dom, Nonlinearity.power(1.0, 4.0), 2.0)
    u = np.array([3.0])
    # J = 0.5 * 16 * 9 - 2 * 81 = 72 - 162 = -90, weighted by h^2 = 1/4
    assert weighted_energy(dom, p, u) == pytest.approx(-22.5)


def test_refinement_zero_nonlinearity_trivial_branch():
    dom = RectDomain(1.0, 1.0, 1.0 / 4.0)
    rep = refinement_study(dom, Nonlinearity.zero(), 0.5, levels=2, opts=SolverOptions())
    zero_branches = [b for b in rep.branches if b.kind == "ball_min"]
    assert zero_branches
    br = zero_branches[0]
    assert all(np.allclose(lv.point.values, 0.0, atol=1e-10) for lv in br.levels)
    assert all(d <= 1e-10 for d in br.diffs)


def test_refinement_zero_branch_stable_for_small_lambda():
    dom = RectDomain(1.0, 1.0, 1.0 / 4.0)
    rep = refinement_study(
        dom, Nonlinearity.power(1.0, 4.0), 0.5, levels=2, opts=SolverOptions()
    )
    br = next(b for b in rep.branches if b.kind == "ball_min")
    for lv in br.levels:
        np.testing.assert_allclose(lv.point.values, 0.0, atol=1e-9)


@pytest.mark.slow
def test_refinement_mountain_branch_second_order():
    dom = RectDomain(1.0, 1.0, 1.0 / 8.0)
    rep = refinement_study(
        dom, Nonlinearity.power(1.0, 4.0), 1.0, levels=3, opts=SolverOptions()
    )
    assert rep.hs == pytest.approx([1 / 8, 1 / 16, 1 / 32])
    br = next(b for b in rep.branches if b.kind == "mountain_pass")
    assert br.lost_at is None and len(br.levels) == 3
    ratio = br.diffs[0] / br.diffs[1]
    assert 2.5 <= ratio <= 6.0
    # branch energies converge along the ladder
    gaps = [
        abs(b.energy_weighted - a.energy_weighted)
        for a, b in zip(br.levels, br.levels[1:])
    ]
    assert gaps[1] < gaps[0]
    # every continued point still solves its level to solver tolerance
    for lv in br.levels:
        assert lv.residual <= 1e-6
