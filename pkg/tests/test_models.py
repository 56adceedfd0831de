import math

import numpy as np
import pytest

from lagflow.models import (
    COUPLED_MANUFACTURED,
    SCALAR_MANUFACTURED,
    CoupledModel,
    ScalarModel,
    exact_solution,
    forcing_for,
    manufactured_forcing,
)
from lagflow.spectral import make_grid

MODELS = {
    "allen-cahn": ScalarModel("allen-cahn", 0.3),
    "cahn-hilliard": ScalarModel("cahn-hilliard", 0.3, mobility=0.7),
    "mbe": ScalarModel("mbe", 0.2),
    "coupled": CoupledModel(0.2, 0.15, 10.0, -0.1, 0.3, 0.2, Mu=1.0, Mv=2.0),
    "coupled-stab": CoupledModel(0.2, 0.15, 10.0, -0.1, 0.3, 0.2, Su=1.5, Sv=0.5),
}


def smooth_fields(grid, model, seed):
    r = np.random.default_rng(seed)
    X, Y = grid.mesh
    out = []
    for _ in range(model.ncomp):
        a, b, c = r.uniform(-0.5, 0.5, 3)
        out.append(a * np.sin(X + 2 * Y) + b * np.cos(3 * X) + c + 0.2 * np.sin(2 * X) * np.cos(Y))
    return tuple(out)


@pytest.mark.parametrize("name", MODELS)
def test_chemical_potential_is_energy_gradient(name):
    # oracle: central difference of E along a direction psi equals (mu, psi)
    model = MODELS[name]
    g = make_grid(16)
    phi = smooth_fields(g, model, 1)
    psi = smooth_fields(g, model, 2)
    h = 1e-5
    plus = model.total_energy(g, tuple(a + h * b for a, b in zip(phi, psi)))
    minus = model.total_energy(g, tuple(a - h * b for a, b in zip(phi, psi)))
    fd = (plus - minus) / (2 * h)
    mu = model.chemical_potential(g, phi)
    exact = sum(g.inner_product(m, p) for m, p in zip(mu, psi))
    assert fd == pytest.approx(exact, rel=1e-7, abs=1e-9)


@pytest.mark.parametrize("name", MODELS)
def test_split_energy_equals_total_energy(name):
    model = MODELS[name]
    g = make_grid(16)
    phi = smooth_fields(g, model, 3)
    assert model.split_energy(g, phi) == pytest.approx(model.total_energy(g, phi), rel=1e-13)


def test_double_well_energy_of_constant_state():
    m = ScalarModel("allen-cahn", 0.5)
    g = make_grid(8)
    phi = np.full(g.shape, 0.5)
    # (0.25 - 1)^2 / (4 * 0.25) = 0.5625 per unit area
    assert m.total_energy(g, (phi,)) == pytest.approx(0.5625 * 4 * math.pi**2)


def test_coupled_nonlocal_term():
    # v = cos(x): sigma/2 |(-Δ)^{-1/2} v|^2 = sigma/2 * int cos^2 = sigma pi^2
    m = CoupledModel(1e-3, 1e-3, 4.0, 0.0, 0.0, 0.0)
    g = make_grid(16)
    X, _ = g.mesh
    u = np.ones(g.shape)
    v = np.cos(X) + 2.0  # the mean does not enter the nonlocal term
    W = g.integrate((u**2 - 1) ** 2 / 4 + (v**2 - 1) ** 2 / 4)
    grad = 0.5e-6 * g.integrate(np.sin(X) ** 2)
    assert m.total_energy(g, (u, v)) == pytest.approx(W + grad + 4.0 * math.pi**2, rel=1e-12)


def test_mbe_density_is_log():
    m = ScalarModel("mbe", 0.1)
    g = make_grid(32)
    X, _ = g.mesh
    phi = 0.3 * np.sin(X)
    dens = m.nonlinear_density(g, (phi,))
    np.testing.assert_allclose(dens, -0.5 * np.log1p((0.3 * np.cos(X)) ** 2), atol=1e-12)


@pytest.mark.parametrize("bad", [dict(eps=0.0), dict(eps=0.1, mobility=-1.0)])
def test_scalar_validation(bad):
    with pytest.raises(ValueError):
        ScalarModel("allen-cahn", **bad)


def test_coupled_validation():
    with pytest.raises(ValueError):
        CoupledModel(0.1, 0.1, 10, 0, 0, 0, Su=-1)
    with pytest.raises(ValueError):
        CoupledModel(0.0, 0.1, 10, 0, 0, 0)


def test_unknown_kind():
    with pytest.raises(ValueError):
        ScalarModel("navier-stokes", 0.1)


def test_field_count_checked():
    with pytest.raises(ValueError, match="expects 2"):
        MODELS["coupled"].total_energy(make_grid(8), (np.zeros((8, 8)),))


@pytest.mark.parametrize("name", ["allen-cahn", "cahn-hilliard", "coupled", "coupled-stab"])
def test_manufactured_forcing_balances_equation(name):
    # f - phi_t (by finite differences in time) must equal G mu(phi)
    model = MODELS[name]
    spec = SCALAR_MANUFACTURED if model.ncomp == 1 else COUPLED_MANUFACTURED
    g = make_grid(16)
    t, h = 0.3, 1e-6
    f = manufactured_forcing(model, spec, g, t)
    plus, minus = exact_solution(spec, g, t + h), exact_solution(spec, g, t - h)
    mu = model.chemical_potential(g, exact_solution(spec, g, t))
    for c in range(model.ncomp):
        phit = (plus[c] - minus[c]) / (2 * h)
        Gmu = g.apply_symbol(model.mobility_symbols(g)[c], mu[c])
        np.testing.assert_allclose(f[c] - phit, Gmu, atol=1e-6 * max(1, np.abs(Gmu).max()))


@pytest.mark.parametrize("name", ["allen-cahn", "cahn-hilliard", "coupled-stab"])
def test_precomputed_forcing_matches(name):
    model = MODELS[name]
    spec = SCALAR_MANUFACTURED if model.ncomp == 1 else COUPLED_MANUFACTURED
    g = make_grid(16)
    fast = forcing_for(model, spec, g)
    for t in (0.0, 0.05, 0.7):
        for a, b in zip(fast(t), manufactured_forcing(model, spec, g, t)):
            np.testing.assert_allclose(a, b, atol=1e-10 * max(1, np.abs(b).max()))


def test_forcing_component_mismatch():
    with pytest.raises(ValueError):
        manufactured_forcing(MODELS["coupled"], SCALAR_MANUFACTURED, make_grid(8), 0.0)


def test_labels():
    assert MODELS["allen-cahn"].label == "allen-cahn"
    assert MODELS["coupled"].label == "coupled"
    assert hash(MODELS["coupled"]) == hash(CoupledModel(0.2, 0.15, 10.0, -0.1, 0.3, 0.2, Mu=1.0, Mv=2.0))
