"""
Gradient-flow problems: energies, nonlinear densities and forces, and the
linear operators that the time steppers treat implicitly.

Every model is a system of ``ncomp`` real fields ``phi_c`` evolving by

    d(phi_c)/dt = -G_c mu_c,      mu_c = L_c phi_c + F'_c(phi),

with ``L_c`` and ``G_c`` Fourier multipliers and ``F`` the nonlinear
(explicitly treated) part of the free energy.  Scalar models have one
component; the coupled block-copolymer model has two, ``(u, v)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .spectral import Grid, Symbol

Fields = tuple  # tuple of (ny, nx) arrays, one per component

__all__ = [
    "GradientFlow",
    "Kind",
    "ScalarModel",
    "CoupledModel",
    "ExactSolutionSpec",
    "SCALAR_MANUFACTURED",
    "COUPLED_MANUFACTURED",
    "exact_solution",
    "manufactured_forcing",
    "forcing_for",
    "as_fields",
]


class GradientFlow:
    """Interface shared by the scalar and coupled models."""

    ncomp: int = 1
    names: tuple[str, ...] = ("phi",)
    #: ``split_density`` is polynomial in the fields (pointwise arithmetic
    #: only), so it can be expanded exactly along ``p + eta*q``.
    polynomial_density: bool = True

    # subclasses supply these four
    def linear_symbols(self, grid: Grid) -> tuple[Symbol, ...]:
        raise NotImplementedError

    def mobility_symbols(self, grid: Grid) -> tuple[Symbol, ...]:
        raise NotImplementedError

    def nonlinear_density(self, grid: Grid, fields: Fields):
        raise NotImplementedError

    def nonlinear_force(self, grid: Grid, fields: Fields) -> Fields:
        raise NotImplementedError

    # stabilized splitting; identical to the plain one unless overridden
    def base_linear_symbols(self, grid: Grid) -> tuple[Symbol, ...]:
        return self.linear_symbols(grid)

    def split_density(self, grid: Grid, fields: Fields):
        return self.nonlinear_density(grid, fields)

    def split_force(self, grid: Grid, fields: Fields) -> Fields:
        return self.nonlinear_force(grid, fields)

    @property
    def label(self) -> str:
        return type(self).__name__

    # -- derived quantities -----------------------------------------------
    def check_fields(self, grid: Grid, fields: Fields) -> None:
        if len(fields) != self.ncomp:
            raise ValueError(f"{type(self).__name__} expects {self.ncomp} field(s), got {len(fields)}")
        grid.check(*fields)

    def total_energy(self, grid: Grid, fields: Fields) -> float:
        """Original free energy ``sum_c 1/2 (L_c phi_c, phi_c) + int F``."""
        self.check_fields(grid, fields)
        quad = sum(
            0.5 * grid.quadratic_form(L, f)
            for L, f in zip(self.base_linear_symbols(grid), fields)
        )
        return quad + grid.integrate(self.nonlinear_density(grid, fields))

    def split_energy(self, grid: Grid, fields: Fields) -> float:
        """Same energy evaluated through the stabilized splitting."""
        quad = sum(
            0.5 * grid.quadratic_form(L, f)
            for L, f in zip(self.linear_symbols(grid), fields)
        )
        return quad + grid.integrate(self.split_density(grid, fields))

    def chemical_potential(self, grid: Grid, fields: Fields) -> Fields:
        force = self.split_force(grid, fields)
        return tuple(
            grid.apply_symbol(L, f) + g for L, f, g in zip(self.linear_symbols(grid), fields, force)
        )

    def density_along(
        self, grid: Grid, ps: Fields, qs: Fields, weight: float = 1.0, offset=0.0
    ) -> tuple[Callable[[float], float], Callable[[float], float]]:
        """
        ``eta -> int (weight F(p + eta q) + offset)`` and its derivative.

        ``offset`` is added pointwise before integrating.  The default
        evaluates the split density directly and differentiates through the
        split force, which is exact for pointwise densities.
        """

        def value(eta: float) -> float:
            fields = tuple(p + eta * q for p, q in zip(ps, qs))
            return grid.integrate(weight * self.split_density(grid, fields) + offset)

        def deriv(eta: float) -> float:
            fields = tuple(p + eta * q for p, q in zip(ps, qs))
            force = self.split_force(grid, fields)
            return weight * sum(grid.inner_product(g, q) for g, q in zip(force, qs))

        return value, deriv


class Kind(str, Enum):
    ALLEN_CAHN = "allen-cahn"
    CAHN_HILLIARD = "cahn-hilliard"
    MBE = "mbe"


@dataclass(frozen=True)
class ScalarModel(GradientFlow):
    """
    Single-field gradient flow.

    Allen-Cahn and Cahn-Hilliard use ``L = -Δ`` and the double well
    ``F = (phi^2 - 1)^2 / (4 eps^2)``; ``G`` is ``M I`` and ``M(-Δ)``
    respectively.  The MBE model without slope selection uses
    ``L = eps^2 Δ²``, ``G = M`` and ``F = -1/2 ln(1 + |∇phi|^2)``.
    """

    kind: Kind
    eps: float
    mobility: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if not self.mobility > 0:
            raise ValueError("mobility must be positive")

    @property
    def polynomial_density(self) -> bool:  # type: ignore[override]
        return self.kind is not Kind.MBE

    @property
    def label(self) -> str:
        return self.kind.value

    def linear_symbols(self, grid):
        if self.kind is Kind.MBE:
            return (grid.bilaplacian_symbol().scaled(self.eps**2),)
        return (grid.neg_laplacian_symbol(),)

    def mobility_symbols(self, grid):
        if self.kind is Kind.CAHN_HILLIARD:
            return (grid.neg_laplacian_symbol().scaled(self.mobility),)
        return (grid.symbol(self.mobility),)

    def nonlinear_density(self, grid, fields):
        (phi,) = fields
        if self.kind is Kind.MBE:
            gx, gy = grid.gradient(phi)
            return -0.5 * np.log1p(gx * gx + gy * gy)
        return (phi * phi - 1) ** 2 / (4 * self.eps**2)

    def nonlinear_force(self, grid, fields):
        (phi,) = fields
        if self.kind is Kind.MBE:
            gx, gy = grid.gradient(phi)
            w = 1.0 / (1.0 + gx * gx + gy * gy)
            force = grid.divergence(gx * w, gy * w)
        else:
            force = phi * (phi * phi - 1) / self.eps**2
        if grid.dealias:
            force = grid.dealias_filter(force)
        return (force,)

    def density_along(self, grid, ps, qs, weight=1.0, offset=0.0):
        if self.kind is not Kind.MBE:
            return super().density_along(grid, ps, qs, weight, offset)
        # gradients of p and q are cached so each evaluation is FFT-free
        (p,), (q,) = ps, qs
        px, py = grid.gradient(p)
        qx, qy = grid.gradient(q)

        def value(eta):
            gx, gy = px + eta * qx, py + eta * qy
            return grid.integrate(-0.5 * weight * np.log1p(gx * gx + gy * gy) + offset)

        def deriv(eta):
            gx, gy = px + eta * qx, py + eta * qy
            return -weight * grid.integrate((gx * qx + gy * qy) / (1.0 + gx * gx + gy * gy))

        return value, deriv


@dataclass(frozen=True)
class CoupledModel(GradientFlow):
    """
    Coupled non-local Cahn-Hilliard system for block copolymers.

    Energy::

        int eps_u^2/2 |∇u|^2 + eps_v^2/2 |∇v|^2 + W(u, v)
            + sigma/2 |(-Δ)^{-1/2}(v - mean v)|^2

    with ``W = (u^2-1)^2/4 + (v^2-1)^2/4 + alpha uv + beta uv^2 + gamma u^2 v``.
    Dynamics ``u_t = Mu Δ mu_u``, ``v_t = Mv Δ mu_v``.  The stabilization
    constants ``Su, Sv`` move ``S/2 |.|^2`` from ``W`` into the implicit
    linear part; with ``Su = Sv = 0`` the splitting is the plain one.
    """

    eps_u: float
    eps_v: float
    sigma: float
    alpha: float
    beta: float
    gamma: float
    Mu: float = 1.0
    Mv: float = 1.0
    Su: float = 0.0
    Sv: float = 0.0

    ncomp = 2
    names = ("u", "v")
    label = "coupled"

    def __post_init__(self):
        if not (self.eps_u > 0 and self.eps_v > 0):
            raise ValueError("interface widths must be positive")
        if not (self.Mu > 0 and self.Mv > 0):
            raise ValueError("mobilities must be positive")
        if self.Su < 0 or self.Sv < 0 or self.sigma < 0:
            raise ValueError("sigma and stabilization constants must be >= 0")

    def base_linear_symbols(self, grid):
        Lu = grid.neg_laplacian_symbol().scaled(self.eps_u**2)
        Lv = grid.neg_laplacian_symbol().scaled(self.eps_v**2) + grid.inv_neg_laplacian_symbol().scaled(self.sigma)
        return (Lu, Lv)

    def linear_symbols(self, grid):
        Lu, Lv = self.base_linear_symbols(grid)
        return (Lu + grid.symbol(self.Su), Lv + grid.symbol(self.Sv))

    def mobility_symbols(self, grid):
        k2 = grid.neg_laplacian_symbol()
        return (k2.scaled(self.Mu), k2.scaled(self.Mv))

    def nonlinear_density(self, grid, fields):
        u, v = fields
        return (
            (u * u - 1) ** 2 / 4
            + (v * v - 1) ** 2 / 4
            + self.alpha * (u * v)
            + self.beta * (u * (v * v))
            + self.gamma * ((u * u) * v)
        )

    def nonlinear_force(self, grid, fields):
        u, v = fields
        fu = (u * u - 1) * u + self.alpha * v + self.beta * v * v + 2 * self.gamma * u * v
        fv = (v * v - 1) * v + self.alpha * u + 2 * self.beta * u * v + self.gamma * u * u
        if grid.dealias:
            fu, fv = grid.dealias_filter(fu), grid.dealias_filter(fv)
        return (fu, fv)

    def split_density(self, grid, fields):
        u, v = fields
        return self.nonlinear_density(grid, fields) - (self.Su / 2) * (u * u) - (self.Sv / 2) * (v * v)

    def split_force(self, grid, fields):
        u, v = fields
        fu, fv = self.nonlinear_force(grid, fields)
        return (fu - self.Su * u, fv - self.Sv * v)


# ---------------------------------------------------------------------------
# manufactured solutions


@dataclass(frozen=True)
class ExactSolutionSpec:
    """
    Separable profile ``(A s(x, y) + c) (1 - sin^2(t) / 2)``.

    ``profile`` selects ``s``: ``"sin2x_cos2y"`` or ``"sin2x_sin2y"``.
    The same profile is used for every component.
    """

    profile: str
    ncomp: int = 1
    amplitude: float = 0.25
    offset: float = 0.48

    def spatial(self, grid: Grid) -> np.ndarray:
        X, Y = grid.mesh
        if self.profile == "sin2x_cos2y":
            s = np.sin(2 * X) * np.cos(2 * Y)
        elif self.profile == "sin2x_sin2y":
            s = np.sin(2 * X) * np.sin(2 * Y)
        else:
            raise ValueError(f"unknown profile {self.profile!r}")
        return self.amplitude * s + self.offset

    @staticmethod
    def time_factor(t: float) -> float:
        return 1.0 - math.sin(t) ** 2 / 2

    @staticmethod
    def time_factor_rate(t: float) -> float:
        return -math.sin(t) * math.cos(t)


SCALAR_MANUFACTURED = ExactSolutionSpec("sin2x_cos2y", ncomp=1)
COUPLED_MANUFACTURED = ExactSolutionSpec("sin2x_sin2y", ncomp=2)


def exact_solution(spec: ExactSolutionSpec, grid: Grid, t: float) -> Fields:
    phi = spec.spatial(grid) * spec.time_factor(t)
    return tuple(phi.copy() for _ in range(spec.ncomp))


def manufactured_forcing(model: GradientFlow, spec: ExactSolutionSpec, grid: Grid, t: float) -> Fields:
    """Source ``f = phi_t + G mu(phi)`` making ``spec`` an exact solution."""
    if spec.ncomp != model.ncomp:
        raise ValueError("exact-solution spec does not match the model's component count")
    fields = exact_solution(spec, grid, t)
    rate = spec.spatial(grid) * spec.time_factor_rate(t)
    mu = model.chemical_potential(grid, fields)
    return tuple(rate + grid.apply_symbol(G, m) for G, m in zip(model.mobility_symbols(grid), mu))


def forcing_for(model: GradientFlow, spec: ExactSolutionSpec, grid: Grid) -> Callable[[float], Fields]:
    """
    ``t -> manufactured_forcing(model, spec, grid, t)`` with the
    time-independent pieces (profile and ``G L`` of it) precomputed.
    """
    if spec.ncomp != model.ncomp:
        raise ValueError("exact-solution spec does not match the model's component count")
    s = spec.spatial(grid)
    Gs = model.mobility_symbols(grid)
    GLs = [grid.apply_symbol(G * L, s) for G, L in zip(Gs, model.linear_symbols(grid))]

    def forcing(t: float) -> Fields:
        g = spec.time_factor(t)
        force = model.split_force(grid, tuple(g * s for _ in range(model.ncomp)))
        return tuple(
            spec.time_factor_rate(t) * s + g * gl + grid.apply_symbol(G, fc)
            for G, gl, fc in zip(Gs, GLs, force)
        )

    return forcing


def as_fields(fields: np.ndarray | Sequence[np.ndarray]) -> Fields:
    """Accept a bare array for single-component models."""
    if isinstance(fields, np.ndarray):
        return (fields,)
    return tuple(fields)
