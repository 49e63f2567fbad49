"""Structure constants, the lambda* threshold, and the criticality certificate."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ballcrit.dc import (
    StructureConstants,
    beta_sup,
    certify,
    convex_companion,
    discrete_constants,
    h3_check,
    lambda_star,
)
from ballcrit.grid import GridProblem, GridShape, Nonlinearity, OperatorA
from ballcrit.linsolve import conjugate_gradient

from conftest import sphere_grid_argmax


# --------------------------------------------------------------------------
# conjugate gradient
# --------------------------------------------------------------------------


def test_cg_solves_spd_system():
    rng = np.random.default_rng(2)
    for n in (1, 3, 10, 40):
        b = rng.standard_normal((n, n))
        a = b @ b.T + n * np.eye(n)
        rhs = rng.standard_normal(n)
        res = conjugate_gradient(lambda v: a @ v, rhs, tol=1e-11)
        assert res.converged
        assert np.linalg.norm(a @ res.x - rhs) <= 1e-11


def test_cg_reports_nonconvergence():
    a = np.diag([1.0, 1e12])
    res = conjugate_gradient(lambda v: a @ v, np.array([1.0, 1.0]), tol=1e-15, max_iter=1)
    assert not res.converged


# --------------------------------------------------------------------------
# constants and lambda*
# --------------------------------------------------------------------------


def test_constants_validation():
    with pytest.raises(ValueError):
        StructureConstants(gamma=2.0, rho=1.0, alpha=1.0)
    with pytest.raises(ValueError):
        StructureConstants(gamma=-2.0, rho=1.0)
    with pytest.raises(ValueError):
        StructureConstants(gamma=2.0, rho=0.0)


def test_lambda_star_formula_examples():
    assert lambda_star(StructureConstants(gamma=2.0, rho=1.0), 4.0) == pytest.approx(0.5)
    assert lambda_star(StructureConstants(gamma=1.0, rho=1.0), 1.0) == pytest.approx(1.0)
    assert lambda_star(StructureConstants(gamma=1.0, rho=1.0), 0.0) == math.inf


@given(
    st.floats(0.1, 100.0),
    st.floats(0.1, 100.0),
    st.floats(0.1, 100.0),
    st.floats(0.1, 100.0),
)
@settings(max_examples=100, deadline=None)
def test_lambda_star_homogeneity(gamma, rho, c, beta):
    base = lambda_star(StructureConstants(gamma=gamma, rho=rho, c=c), beta)
    assert lambda_star(StructureConstants(gamma=2.0 * gamma, rho=rho, c=c), beta) == pytest.approx(
        2.0 * base
    )
    assert lambda_star(StructureConstants(gamma=gamma, rho=rho, c=c), 2.0 * beta) == pytest.approx(
        0.5 * base
    )


def test_discrete_constants_use_alpha1():
    op = OperatorA(GridShape(2, 2))
    c = discrete_constants(op, 1.0)
    assert c.alpha == 2.0
    assert c.c == 1.0
    assert c.gamma == pytest.approx(2.0)


# --------------------------------------------------------------------------
# beta_sup
# --------------------------------------------------------------------------


def test_beta_closed_form_quartic(quartic):
    c = StructureConstants(gamma=2.0, rho=1.0)
    res = beta_sup(GridShape(2, 2), quartic, c)
    assert res.method == "closed-form"
    assert res.beta == pytest.approx(4.0)
    assert res.lam_star == pytest.approx(0.5)
    # witness concentrates the entire radius on one coordinate
    w = res.maximizer.values
    assert np.linalg.norm(w) == pytest.approx(1.0)
    assert np.count_nonzero(w) == 1


def test_beta_zero_nonlinearity():
    c = StructureConstants(gamma=2.0, rho=1.0)
    res = beta_sup(GridShape(2, 2), Nonlinearity.zero(), c)
    assert res.beta == 0.0
    assert res.lam_star == math.inf


def test_beta_linear_constant_on_sphere():
    c = StructureConstants(gamma=3.0, rho=2.0)
    res = beta_sup(GridShape(2, 1), Nonlinearity.linear(1.0), c)
    assert res.beta == pytest.approx(2.0)
    # oracle: |f(x)| = |x| = rho everywhere on the sphere
    rng = np.random.default_rng(1)
    for _ in range(50):
        d = rng.standard_normal(2)
        d *= 2.0 / np.linalg.norm(d)
        assert np.linalg.norm(d) <= res.beta + 1e-9


def test_beta_multistart_matches_closed_form_and_grid_oracle(quartic):
    c = StructureConstants(gamma=2.0, rho=1.0)
    shape = GridShape(2, 1)
    closed = beta_sup(shape, quartic, c)
    # force the ascent path by dropping the concentration flag
    from dataclasses import replace

    opaque = replace(quartic, f_sq_convex=False)
    ascent = beta_sup(shape, opaque, c, seeds=12)
    assert ascent.method == "multistart-ascent"
    assert ascent.beta == pytest.approx(closed.beta, rel=1e-6)

    def fnorm(x):
        return float(np.linalg.norm(quartic.f_grid(shape, x)))

    oracle_val, _ = sphere_grid_argmax(fnorm, 2, 1.0, steps=4000)
    assert ascent.beta == pytest.approx(oracle_val, rel=1e-5)
    assert closed.beta >= oracle_val - 1e-9


def test_beta_equals_f_norm_at_witness(quartic):
    from dataclasses import replace

    c = StructureConstants(gamma=2.0, rho=1.0)
    for shape in (GridShape(2, 2), GridShape(3, 1)):
        for nl in (quartic, replace(quartic, f_sq_convex=False)):
            res = beta_sup(shape, nl, c, seeds=8)
            at_witness = float(np.linalg.norm(nl.f_grid(shape, res.maximizer.values)))
            assert at_witness == pytest.approx(res.beta, rel=1e-9, abs=1e-12)


def test_beta_dominates_sphere_samples():
    rng = np.random.default_rng(6)
    shape = GridShape(3, 1)
    nl = Nonlinearity.power(1.0, 4.0)
    c = StructureConstants(gamma=1.0, rho=1.5)
    res = beta_sup(shape, nl, c)
    for _ in range(500):
        d = rng.standard_normal(3)
        d *= 1.5 / np.linalg.norm(d)
        assert np.linalg.norm(nl.f_grid(shape, d)) <= res.beta + 1e-9


def test_beta_site_table_closed_form():
    table = {
        (1, 1): Nonlinearity.power(1.0, 4.0),   # |f(1)| = 4
        (2, 1): Nonlinearity.power(2.0, 3.0),   # |f(1)| = 6
    }
    nl = Nonlinearity.from_table(table)
    c = StructureConstants(gamma=1.0, rho=1.0)
    res = beta_sup(GridShape(2, 1), nl, c)
    assert res.method == "closed-form"
    assert res.beta == pytest.approx(6.0)
    # f is odd so +-rho tie; the lexicographically smaller witness wins
    assert abs(res.maximizer.values[1]) == pytest.approx(1.0)
    assert res.maximizer.values[0] == 0.0


# --------------------------------------------------------------------------
# H3 sampling check
# --------------------------------------------------------------------------


def test_h3_pass_at_alpha1(p22):
    c = discrete_constants(p22.operator, 1.0)
    rep = h3_check(p22.operator, c, samples=1000)
    assert rep.passed
    assert rep.worst_ratio >= 2.0 - 1e-9


def test_h3_fail_above_top_eigenvalue(p22):
    c = StructureConstants(gamma=6.01, rho=1.0)
    rep = h3_check(p22.operator, c, samples=1000)
    assert not rep.passed
    assert rep.worst_ratio <= 6.0 + 1e-9


def test_h3_degenerate_empty_sample_set(p22):
    rep = h3_check(p22.operator, StructureConstants(gamma=100.0, rho=1.0), samples=0)
    assert rep.passed and rep.degenerate


# --------------------------------------------------------------------------
# certificate
# --------------------------------------------------------------------------


def test_certify_trivial_zero(p11):
    rep = certify(p11, [0.0])
    assert rep.verdict == "certified"
    assert rep.j_u == 0.0 and rep.j_v == 0.0
    assert rep.residual == 0.0
    np.testing.assert_allclose(rep.companion.values, [0.0])


def test_certify_exact_critical_point(p11):
    u = math.sqrt(2.0)
    rep = certify(p11, [u])
    assert rep.verdict == "certified"
    assert rep.companion.values[0] == pytest.approx(u, abs=1e-12)
    assert rep.j_u == pytest.approx(2.0)
    assert rep.j_v == pytest.approx(2.0)
    assert rep.residual <= 1e-12


def test_certify_non_critical_point_inconclusive(p11):
    rep = certify(p11, [1.0])
    assert rep.verdict == "inconclusive"
    assert rep.companion.values[0] == pytest.approx(0.5)
    assert rep.j_u == pytest.approx(1.5)
    assert rep.j_v == pytest.approx(0.46875)
    assert rep.residual == pytest.approx(2.0)
    assert "energy test failed" in rep.diagnostic


def test_certified_points_have_small_euler_lagrange_residual():
    # empirical soundness across a corpus of certified instances
    rng = np.random.default_rng(9)
    corpus = []
    for m, n, lam in [(1, 1, 0.5), (2, 1, 0.4), (2, 2, 0.3), (3, 2, 0.2)]:
        p = GridProblem.build(m, n, Nonlinearity.power(1.0, 4.0), lam)
        corpus.append((p, np.zeros(p.size)))
    p11x = GridProblem.build(1, 1, Nonlinearity.power(1.0, 4.0), 0.5)
    corpus.append((p11x, np.array([math.sqrt(2.0)])))
    for p, u in corpus:
        rep = certify(p, u, tol_energy=1e-10, tol_linear=1e-10)
        if rep.verdict == "certified":
            assert rep.residual <= 1e-6 * (1.0 + float(np.linalg.norm(u)))


def test_companion_stays_in_ball_below_lambda_star():
    # whenever lambda <= lambda* and |u| <= rho, the companion lands in the ball
    rng = np.random.default_rng(13)
    nl = Nonlinearity.power(1.0, 4.0)
    for m, n in [(1, 1), (2, 1), (2, 2), (3, 3)]:
        shape = GridShape(m, n)
        op = OperatorA(shape)
        constants = discrete_constants(op, 1.0)
        star = beta_sup(shape, nl, constants).lam_star
        for lam_frac in (0.25, 0.75, 1.0):
            p = GridProblem(shape, op, nl, lam_frac * star)
            for _ in range(25):
                u = rng.standard_normal(shape.size)
                nu = np.linalg.norm(u)
                if nu > 0:
                    u *= rng.uniform(0.0, 1.0) / nu
                rep = certify(p, u, rho=1.0)
                assert np.linalg.norm(rep.companion.values) <= 1.0 + 1e-8
                assert rep.companion_in_ball


def test_certify_inconclusive_on_cg_stall(p22):
    # rhs is not an eigenvector, so one CG step cannot reach 1e-14
    rep = certify(p22, np.array([1.0, 2.0, 3.0, 4.0]), max_cg_iter=1, tol_linear=1e-14)
    assert rep.verdict == "inconclusive"
    assert "companion solve stalled" in rep.diagnostic


def test_convex_companion_example():
    # A v = lambda f(u) for the 2x1 grid: A (1,1) = (3,3)
    p = GridProblem.build(2, 1, Nonlinearity.linear(1.0), 1.0)
    cg = convex_companion(p, [3.0, 3.0])
    np.testing.assert_allclose(cg.x, [1.0, 1.0], atol=1e-10)
