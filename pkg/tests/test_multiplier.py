import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lagflow.models import GradientFlow, ScalarModel
from lagflow.multiplier import (
    EtaEquation,
    FieldPoly,
    NonConvergence,
    NonFiniteIterate,
    build_eta_equation,
    solve_eta,
)
from lagflow.spectral import make_grid

from oracles import direct_residual, double_well_poly, nearest_root_to_one, random_instance, scan_roots


class QuadraticModel(GradientFlow):
    """Test-only flow with ``F = c phi^2 / 2``."""

    def __init__(self, c=1.0):
        self.c = c

    def linear_symbols(self, grid):
        return (grid.neg_laplacian_symbol(),)

    def mobility_symbols(self, grid):
        return (grid.symbol(1.0),)

    def nonlinear_density(self, grid, fields):
        (phi,) = fields
        return (self.c / 2) * (phi * phi)

    def nonlinear_force(self, grid, fields):
        (phi,) = fields
        return (self.c * phi,)


# -- FieldPoly ---------------------------------------------------------------


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), eta=st.floats(-3, 3))
def test_fieldpoly_matches_direct_evaluation(seed, eta):
    r = np.random.default_rng(seed)
    p, q = r.standard_normal((2, 4, 4))
    x = FieldPoly.linear(p, q)
    expr = ((x * x - 1.0) ** 2) / 4.0 + 0.3 * x - (2.0 - x) * x ** 3
    direct = ((p + eta * q) ** 2 - 1) ** 2 / 4 + 0.3 * (p + eta * q) - (2 - (p + eta * q)) * (p + eta * q) ** 3
    value = sum(c * eta**k for k, c in enumerate(expr.coeffs))
    np.testing.assert_allclose(value, direct, rtol=1e-10, atol=1e-10)
    assert expr.degree == 4


def test_fieldpoly_rejects_bad_operations():
    x = FieldPoly.linear(np.ones(2), np.ones(2))
    with pytest.raises(TypeError):
        x / x
    with pytest.raises(ValueError):
        x ** 1.5
    assert (x ** 0).coeffs == [1.0]
    assert (3 - x).coeffs[0][0] == 2.0


# -- assembly ----------------------------------------------------------------


def test_constant_field_quartic_matches_rational_expansion():
    # p = 0.5, q = 0.1, phi^n = 0.4 on 4x4, AC double well, BE1/CN weights
    eps2 = Fraction(1, 10)
    model = ScalarModel("allen-cahn", math.sqrt(0.1))
    g = make_grid(4)
    one = np.ones(g.shape)
    p, q, old = 0.5 * one, 0.1 * one, 0.4 * one
    fstar = model.nonlinear_force(g, (old,))
    eq = build_eta_equation(g, model, (p,), (q,), [(old,)], (1.0, -1.0), fstar)

    # r(eta) = |Omega| [F(p + eta q) - F(phi^n) - eta F'(phi^n) (p + eta q - phi^n)]
    Fnew = double_well_poly(Fraction(1, 2), Fraction(1, 10), eps2)
    phin = Fraction(2, 5)
    Fold = (phin * phin - 1) ** 2 / (4 * eps2)
    dF = phin * (phin * phin - 1) / eps2
    expected = list(Fnew)
    expected[0] -= Fold
    expected[1] -= dF * (Fraction(1, 2) - phin)
    expected[2] -= dF * Fraction(1, 10)
    area = g.area
    np.testing.assert_allclose(eq.coeffs, [float(c) * area for c in expected], rtol=1e-12, atol=1e-12)

    # dense scan + bisection oracle for the root nearest 1
    oracle = nearest_root_to_one(scan_roots(lambda e: np.polyval([float(c) * area for c in expected[::-1]], e),
                                            samples=1_000_001, chunk=200_000))
    report = solve_eta(eq)
    assert report.converged
    assert report.eta == pytest.approx(oracle, abs=1e-9)


@pytest.mark.parametrize("kind", ["allen-cahn", "cahn-hilliard", "coupled"])
def test_polynomial_and_generic_agree(kind):
    inst = None
    seed = 0
    while inst is None:
        inst = random_instance(kind, seed)
        seed += 1
    g, model, args = inst
    poly = build_eta_equation(*args, representation="polynomial")
    gen = build_eta_equation(*args, representation="generic")
    for eta in (0.5, 1.0, 1.5):
        assert poly.residual(eta) == pytest.approx(gen.residual(eta), abs=1e-10 * max(1.0, poly.scale))
        assert poly.derivative(eta) == pytest.approx(gen.derivative(eta), abs=1e-9 * max(1.0, poly.scale))


@pytest.mark.parametrize("kind", ["allen-cahn", "cahn-hilliard", "mbe", "coupled"])
def test_residual_matches_direct_oracle(kind):
    g, model, args = random_instance(kind, 11)
    eq = build_eta_equation(*args)
    etas = np.array([-0.7, 0.0, 0.9, 1.0, 1.3])
    ref = direct_residual(model, g, *args[2:7], etas)
    got = np.array([eq.residual(e) for e in etas])
    np.testing.assert_allclose(got, ref, rtol=0, atol=1e-11 * max(1.0, eq.scale))


@pytest.mark.parametrize("kind", ["allen-cahn", "mbe", "coupled"])
def test_derivative_consistent_with_residual(kind):
    g, model, args = random_instance(kind, 5)
    eq = build_eta_equation(*args)
    h = 1e-6
    fd = (eq.residual(1 + h) - eq.residual(1 - h)) / (2 * h)
    assert eq.derivative(1.0) == pytest.approx(fd, rel=1e-5, abs=1e-8 * max(1.0, eq.scale))


def test_zero_force_is_degenerate():
    model = QuadraticModel(0.0)
    g = make_grid(8)
    r = np.random.default_rng(0)
    p, q, old = r.standard_normal((3,) + g.shape)
    eq = build_eta_equation(g, model, (p,), (q,), [(old,)], (1.0, -1.0), (np.zeros(g.shape),))
    assert eq.degenerate
    report = solve_eta(eq)
    assert report.eta == 1.0 and report.converged and report.iterations == 0



def test_degenerate_with_nonzero_energy_difference_raises():
    with pytest.raises(NonConvergence, match="split force vanishes"):
        solve_eta(EtaEquation.from_coefficients([0.3], degenerate=True))
    assert solve_eta(EtaEquation.from_coefficients([0.0], degenerate=True)).eta == 1.0

def test_quadratic_density_gives_quadratic_residual():
    model = QuadraticModel(2.0)
    g = make_grid(8)
    r = np.random.default_rng(1)
    old = r.standard_normal(g.shape)
    fstar = model.nonlinear_force(g, (old,))
    p = old - 0.01 * r.standard_normal(g.shape)
    q = -0.01 * fstar[0]
    eq = build_eta_equation(g, model, (p,), (q,), [(old,)], (1.0, -1.0), fstar)
    assert eq.coeffs.size <= 3
    report = solve_eta(eq)
    assert report.converged and report.iterations <= 3


def test_grid_mismatch_rejected():
    model = ScalarModel("allen-cahn", 0.3)
    g = make_grid(8)
    z = np.zeros(g.shape)
    with pytest.raises(ValueError, match="grid mismatch"):
        build_eta_equation(g, model, (np.zeros((4, 4)),), (z,), [(z,)], (1.0, -1.0), (z,))


def test_non_finite_inputs_rejected():
    model = ScalarModel("allen-cahn", 0.3)
    g = make_grid(8)
    z = np.zeros(g.shape)
    bad = z.copy()
    bad[0, 0] = np.inf
    with np.errstate(invalid="ignore"), pytest.raises(ValueError, match="non-finite"):
        build_eta_equation(g, model, (z,), (z,), [(z,)], (1.0, -1.0), (bad,))


# -- solver ------------------------------------------------------------------


@given(c=st.floats(0.01, 1e3) | st.floats(-1e3, -0.01))
def test_linear_residual_one_iteration(c):
    eq = EtaEquation.from_coefficients([-c, c])
    report = solve_eta(eq)
    assert report.converged and report.eta == pytest.approx(1.0) and report.iterations <= 1


def test_no_real_root_raises():
    # (eta - 1)^2 + 0.5 is positive everywhere: min residual 0.5 at eta = 1
    eq = EtaEquation.from_coefficients([1.5, -2.0, 1.0])
    assert not scan_roots(lambda e: np.polyval([1.0, -2.0, 1.5], e))
    with pytest.raises(NonConvergence) as info:
        solve_eta(eq)
    assert info.value.report is not None and not info.value.report.converged


def test_closest_policy_is_opt_in_and_bounded():
    # (eta - 1)^2 + 1e-10: above the Newton tolerance, below the defect bound
    tiny = EtaEquation.from_coefficients([1.0 + 1e-10, -2.0, 1.0])
    with pytest.raises(NonConvergence):
        solve_eta(tiny)
    report = solve_eta(tiny, no_root="closest")
    assert not report.converged
    assert report.eta == pytest.approx(1.0, abs=1e-6)
    assert report.residual_norm <= 2e-10
    big = EtaEquation.from_coefficients([1.5, -2.0, 1.0])
    with pytest.raises(NonConvergence):
        solve_eta(big, no_root="closest")
    assert solve_eta(big, no_root="closest", defect_tol=1.0).eta == pytest.approx(1.0)


def test_closest_policy_generic_equation():
    eq = EtaEquation(lambda e: (e - 0.8) ** 2 + 1e-9, lambda e: 2 * (e - 0.8), None, False, 1.0, (1.0, -1.0))
    with pytest.raises(NonConvergence):
        solve_eta(eq)
    report = solve_eta(eq, no_root="closest")
    assert report.eta == pytest.approx(0.8, abs=1e-4) and not report.converged


def test_bisection_fallback_when_newton_stalls():
    # (eta - 1)^3 + 1e-3 has r'(1) = 0, so Newton stops at once; root 0.9
    eq = EtaEquation.from_coefficients([-1.0 + 1e-3, 3.0, -3.0, 1.0])
    report = solve_eta(eq)
    assert report.converged
    assert report.eta == pytest.approx(0.9, abs=1e-9)


def test_solver_argument_validation():
    eq = EtaEquation.from_coefficients([-1.0, 1.0])
    with pytest.raises(ValueError):
        solve_eta(eq, tol=0.0)
    with pytest.raises(ValueError):
        solve_eta(eq, max_iter=0)
    with pytest.raises(ValueError):
        solve_eta(eq, no_root="ignore")


def test_non_finite_residual():
    eq = EtaEquation(lambda e: math.inf, lambda e: 1.0, None, False, 1.0, (1.0, -1.0))
    with pytest.raises(NonFiniteIterate):
        solve_eta(eq)


def test_non_finite_coefficients_rejected():
    with pytest.raises(ValueError):
        EtaEquation.from_coefficients([1.0, np.nan])


@settings(max_examples=60, deadline=None)
@given(roots=st.lists(st.floats(-3, 3), min_size=1, max_size=4), lead=st.floats(0.5, 5))
def test_converged_roots_are_roots(roots, lead):
    coeffs = np.polynomial.polynomial.polyfromroots(roots) * lead
    eq = EtaEquation.from_coefficients(coeffs)
    try:
        report = solve_eta(eq)
    except NonConvergence:
        # only acceptable when no real root lies in the bisection bracket
        assert not any(0.0 <= r <= 2.0 for r in roots) or len(set(np.round(roots, 6))) < len(roots)
        return
    assert abs(eq.residual(report.eta)) <= 1e-12 * (1 + abs(eq.residual(1.0))) + 16 * np.finfo(float).eps * eq.scale
