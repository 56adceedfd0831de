"""
The scalar equation for the Lagrange multiplier ``eta``.

With the implicit linear solve split as ``phi_new = p + eta q`` the scheme's
discrete energy balance reads

    r(eta) = w0 int F(p + eta q) + sum_k w_k int F(phi_k)
             - eta * sum_c (F'_c(phi*), w0 (p_c + eta q_c) + sum_k w_k phi_{k,c}) = 0,

where ``w`` are the scheme's time-difference weights (``(1, -1)`` for CN and
backward Euler, ``(3, -4, 1)`` for BDF2) and ``phi_k`` the history levels.
For polynomial densities ``r`` is assembled as an exact polynomial in
``eta`` (degree 4 for the double-well potentials); otherwise it is evaluated
on demand.  ``solve_eta`` runs Newton from ``eta = 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.optimize import minimize_scalar

from .models import GradientFlow
from .spectral import Grid

__all__ = [
    "FieldPoly",
    "EtaEquation",
    "EtaSolveReport",
    "EtaSolveError",
    "NonConvergence",
    "NonFiniteIterate",
    "build_eta_equation",
    "solve_eta",
]

_EPS = np.finfo(float).eps


class FieldPoly:
    """
    Polynomial in a scalar unknown whose coefficients are grid fields.

    Supports the arithmetic used by the model densities (``+ - * / **``
    with scalars and other ``FieldPoly`` objects), so a density written in
    plain arithmetic expands exactly when fed ``p + eta q``.
    """

    __slots__ = ("coeffs",)
    __array_ufunc__ = None  # keep numpy from broadcasting over us

    def __init__(self, coeffs: Sequence):
        self.coeffs = list(coeffs)

    @classmethod
    def linear(cls, p: np.ndarray, q: np.ndarray) -> "FieldPoly":
        return cls([p, q])

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @staticmethod
    def _lift(other) -> "FieldPoly":
        return other if isinstance(other, FieldPoly) else FieldPoly([other])

    def __add__(self, other):
        other = self._lift(other)
        n = max(len(self.coeffs), len(other.coeffs))
        a = self.coeffs + [0.0] * (n - len(self.coeffs))
        b = other.coeffs + [0.0] * (n - len(other.coeffs))
        return FieldPoly([x + y for x, y in zip(a, b)])

    __radd__ = __add__

    def __neg__(self):
        return FieldPoly([-c for c in self.coeffs])

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) + (-self)

    def __mul__(self, other):
        other = self._lift(other)
        out = [0.0] * (len(self.coeffs) + len(other.coeffs) - 1)
        for i, a in enumerate(self.coeffs):
            for j, b in enumerate(other.coeffs):
                out[i + j] = out[i + j] + a * b
        return FieldPoly(out)

    __rmul__ = __mul__

    def __truediv__(self, c):
        if isinstance(c, FieldPoly):
            raise TypeError("division by a FieldPoly is not polynomial")
        return FieldPoly([a / c for a in self.coeffs])

    def __pow__(self, n: int):
        if int(n) != n or n < 0:
            raise ValueError("FieldPoly powers must be non-negative integers")
        if n == 0:
            return FieldPoly([1.0])
        out = self
        for _ in range(int(n) - 1):
            out = out * self
        return out

    def integrate(self, grid: Grid) -> np.ndarray:
        """Ascending coefficients of ``int (sum_k c_k eta^k)``."""
        return np.array(
            [grid.integrate(np.broadcast_to(c, grid.shape)) for c in self.coeffs], dtype=float
        )


class EtaSolveError(ArithmeticError):
    """Base class for failures of the multiplier solve."""

    def __init__(self, message: str, report: "EtaSolveReport | None" = None):
        super().__init__(message)
        self.report = report


class NonConvergence(EtaSolveError):
    """Newton (and the bisection fallback) failed; reduce the time step."""


class NonFiniteIterate(EtaSolveError):
    """An iterate or residual became NaN/inf."""


@dataclass(frozen=True)
class EtaSolveReport:
    eta: float
    iterations: int
    residual_norm: float
    converged: bool


@dataclass(frozen=True)
class EtaEquation:
    """
    Residual ``r(eta)`` with derivative, plus the exact polynomial
    coefficients (ascending) when the density is polynomial.

    ``scale`` bounds the magnitude of the terms that cancel inside ``r`` and
    sets the round-off floor of the convergence test.  ``degenerate``
    marks a vanishing split force, which makes ``r`` constant: the solver
    returns ``eta = 1`` when that constant vanishes and raises otherwise.
    """

    residual: Callable[[float], float]
    derivative: Callable[[float], float]
    coeffs: np.ndarray | None
    degenerate: bool
    scale: float
    weights: tuple[float, ...]

    @property
    def is_polynomial(self) -> bool:
        return self.coeffs is not None

    @classmethod
    def from_coefficients(cls, coeffs, weights=(1.0, -1.0), degenerate=False) -> "EtaEquation":
        c = np.trim_zeros(np.asarray(coeffs, dtype=float), "b")
        if c.size == 0:
            c = np.zeros(1)
        if not np.all(np.isfinite(c)):
            raise ValueError("non-finite polynomial coefficients")
        dc = P.polyder(c) if c.size > 1 else np.zeros(1)
        return cls(
            residual=lambda eta: float(P.polyval(eta, c)),
            derivative=lambda eta: float(P.polyval(eta, dc)),
            coeffs=c,
            degenerate=degenerate,
            scale=float(np.abs(c).sum()),
            weights=tuple(weights),
        )


def build_eta_equation(
    grid: Grid,
    model: GradientFlow,
    p: Sequence[np.ndarray],
    q: Sequence[np.ndarray],
    history: Sequence[Sequence[np.ndarray]],
    weights: Sequence[float],
    force_star: Sequence[np.ndarray],
    representation: str = "auto",
) -> EtaEquation:
    """
    Assemble the multiplier equation for one step.

    Parameters
    ----------
    p, q : per-component fields from the implicit solve.
    history : levels ``phi^n, phi^{n-1}, ...`` matching ``weights[1:]``.
    weights : time-difference weights, new level first.
    force_star : ``F'(phi*)`` per component (the same split force that
        drove ``q``).
    representation : ``"auto"``, ``"polynomial"`` or ``"generic"``.
    """
    weights = tuple(float(w) for w in weights)
    if len(history) != len(weights) - 1:
        raise ValueError("need one history level per trailing weight")
    for fields in (p, q, force_star, *history):
        model.check_fields(grid, tuple(fields))
    if representation == "auto":
        representation = "polynomial" if model.polynomial_density else "generic"
    if representation == "polynomial" and not model.polynomial_density:
        raise ValueError(f"{type(model).__name__} density is not polynomial")

    # F'(phi*) == 0 makes q == 0: the update no longer depends on eta
    force_zero = all(not np.any(g) for g in force_star)
    if representation == "polynomial":
        return _polynomial_equation(grid, model, p, q, history, weights, force_star, force_zero)
    return _generic_equation(grid, model, p, q, history, weights, force_star, force_zero)


def _field_coeffs(model, grid, base, direction) -> list[np.ndarray]:
    """Coefficients of ``s -> F(base + s direction)`` as full grid fields."""
    polys = tuple(FieldPoly.linear(b, d) for b, d in zip(base, direction))
    coeffs = FieldPoly._lift(model.split_density(grid, polys)).coeffs
    return [np.broadcast_to(c, grid.shape) for c in coeffs]


def _polynomial_equation(grid, model, p, q, history, weights, force_star, force_zero):
    # The roots sit near 1, often as a close pair, so r(1) is a small
    # difference of O(int F) quantities and its rounding moves the root by
    # noise / r'(1).  Everything is therefore expanded about
    # phi~ = p + q in zeta = eta - 1, and each history density enters as
    # F(phi_k) - F(phi~), summed from the expansion along
    # phi_k - phi~ so that every term carries its own relative rounding.
    # Each coefficient is combined pointwise and integrated once.
    w0 = weights[0]
    tilde = [pc + qc for pc, qc in zip(p, q)]
    along_q = _field_coeffs(model, grid, tilde, q)
    along_q += [np.zeros(grid.shape)] * max(0, 3 - len(along_q))
    deltas = [[hc - tc for hc, tc in zip(h, tilde)] for h in history]
    jumps = [sum(_field_coeffs(model, grid, tilde, d)[1:]) for d in deltas]
    # w0 p + sum_k w_k phi_k, rewritten about phi~
    known = [-w0 * qc + sum(w * d[c] for w, d in zip(weights[1:], deltas)) for c, qc in enumerate(q)]
    a_field = sum(g * k for g, k in zip(force_star, known))
    b_field = w0 * sum(g * qc for g, qc in zip(force_star, q))
    # r(1 + zeta) = int sum_k w_k F(.) - (1 + zeta) A - (1 + zeta)^2 B
    fields = [w0 * f for f in along_q]
    fields[0] = sum(weights) * along_q[0] + sum(w * j for w, j in zip(weights[1:], jumps)) - a_field - b_field
    fields[1] = fields[1] - a_field - 2 * b_field
    fields[2] = fields[2] - b_field
    d = np.array([grid.integrate(f) for f in fields])
    # ascending coefficients in eta for reporting and the closest-root scan
    c = np.zeros(len(d))
    for k, dk in enumerate(d):
        c[: k + 1] += dk * P.polypow([-1.0, 1.0], k)
    if not (np.all(np.isfinite(d)) and np.all(np.isfinite(c))):
        raise ValueError("non-finite polynomial coefficients")
    eq = EtaEquation.from_coefficients(c, weights)
    term_scale = sum(abs(w) * grid.integrate(np.abs(along_q[0] + j)) for w, j in zip(weights[1:], jumps))
    dd = P.polyder(d)
    return EtaEquation(
        lambda eta: float(P.polyval(eta - 1.0, d)),
        lambda eta: float(P.polyval(eta - 1.0, dd)),
        eq.coeffs, force_zero, max(eq.scale, term_scale), weights,
    )


def _generic_equation(grid, model, p, q, history, weights, force_star, force_zero):
    # every term is combined pointwise before integrating: the separate
    # integrals are O(int F) while r and its slope are O(dt)
    w0 = weights[0]
    hist_dens = [model.split_density(grid, tuple(h)) for h in history]
    hist = sum(w * d for w, d in zip(weights[1:], hist_dens))
    known = [w0 * pc + sum(w * h[c] for w, h in zip(weights[1:], history)) for c, pc in enumerate(p)]
    # eta * (A + eta * B) is the multiplier-weighted force/difference product
    A = grid.integrate(sum(g * k for g, k in zip(force_star, known)))
    B = w0 * grid.integrate(sum(g * qc for g, qc in zip(force_star, q)))
    if not (math.isfinite(A) and math.isfinite(B) and np.all(np.isfinite(hist))):
        raise ValueError("non-finite terms in the multiplier equation")
    value, deriv = model.density_along(grid, tuple(p), tuple(q), weight=w0, offset=hist)

    def residual(eta: float) -> float:
        return value(eta) - eta * (A + eta * B)

    def derivative(eta: float) -> float:
        return deriv(eta) - A - 2 * eta * B

    scale = (
        sum(abs(w) * grid.integrate(np.abs(d)) for w, d in zip(weights[1:], hist_dens))
        + abs(w0) * grid.integrate(np.abs(model.split_density(grid, tuple(p))))
        + abs(A) + abs(B)
    )
    return EtaEquation(residual, derivative, None, force_zero, scale, weights)


def solve_eta(
    eq: EtaEquation,
    tol: float = 1e-12,
    max_iter: int = 50,
    no_root: str = "raise",
    defect_tol: float = 1e-8,
) -> EtaSolveReport:
    """
    Newton iteration from ``eta = 1``.

    Converged when ``|r(eta)| <= tol * (1 + |r(1)|)`` plus a round-off floor
    of ``16 eps * scale``; the accepted root is then refined by a few more
    Newton steps down to round-off.  On failure a bisection on ``[0, 2]`` is tried
    once (only if the residual changes sign there) before raising
    ``NonConvergence``.

    Parameters
    ----------
    no_root : {"raise", "closest"}
        What to do when no root is found.  ``"closest"`` is an explicit
        opt-in: it returns the minimiser of ``|r|`` on ``[0, 2]`` (flagged
        ``converged=False``) provided that minimum is at most
        ``defect_tol * max(scale, 1)``; otherwise it raises as well.  This
        happens near stationary points of the nonlinear energy, where the
        root pair of the multiplier equation can become complex.
    """
    if not tol > 0 or max_iter < 1:
        raise ValueError("tol must be > 0 and max_iter >= 1")
    if no_root not in ("raise", "closest"):
        raise ValueError(f"no_root must be 'raise' or 'closest', got {no_root!r}")
    if eq.degenerate:
        # the residual is constant: eta = 1 if it vanishes, otherwise the
        # step's energy balance cannot be met by any eta
        r0 = abs(eq.residual(1.0))
        if r0 <= tol + 16 * _EPS * eq.scale:
            return EtaSolveReport(1.0, 0, r0, True)
        raise NonConvergence(
            f"split force vanishes but the energy difference does not (|r| = {r0:.3e})",
            EtaSolveReport(1.0, 0, r0, False),
        )

    r1 = eq.residual(1.0)
    if not math.isfinite(r1):
        raise NonFiniteIterate("residual is not finite at eta = 1")
    atol = tol * (1.0 + abs(r1)) + 16 * _EPS * eq.scale

    eta, r = 1.0, r1
    for it in range(max_iter + 1):
        if abs(r) <= atol:
            return _polish(eq, eta, r, it, atol)
        if it == max_iter:
            break
        d = eq.derivative(eta)
        if not math.isfinite(d):
            raise NonFiniteIterate(f"derivative not finite at eta = {eta}")
        if abs(d) < 1e-14:
            break
        eta = eta - r / d
        r = eq.residual(eta)
        if not (math.isfinite(eta) and math.isfinite(r)):
            raise NonFiniteIterate(f"non-finite Newton iterate after {it + 1} iterations")

    report = _bisect(eq, 0.0, 2.0, atol, max_iter)
    if report is not None and report.converged:
        return report
    if no_root == "closest":
        closest = _least_defect(eq)
        if closest.residual_norm <= defect_tol * max(eq.scale, 1.0):
            return closest
    raise NonConvergence(
        f"multiplier equation did not converge (|r| = {abs(r):.3e}, tol = {atol:.3e})",
        EtaSolveReport(eta, max_iter, abs(r), False),
    )


def _polish(eq: EtaEquation, eta: float, r: float, it: int, atol: float, max_polish: int = 4) -> EtaSolveReport:
    """
    Extra Newton steps once ``|r| <= atol``.

    Near ``eta = 1`` the slope of ``r`` is O(dt), so an accepted residual
    can still leave an O(atol / dt) error in ``eta``; over many steps that
    shows up as an error of the same order as the scheme's own.  Steps are
    taken while the correction keeps shrinking and stays above round-off.
    """
    last = math.inf
    for _ in range(max_polish):
        d = eq.derivative(eta)
        if not (math.isfinite(d) and d != 0.0):
            break
        delta = r / d
        if not abs(delta) < last or abs(delta) <= 4 * _EPS * max(1.0, abs(eta)):
            break
        trial = eta - delta
        rt = eq.residual(trial)
        if not (math.isfinite(rt) and abs(rt) <= atol):
            break
        eta, r, last, it = trial, rt, abs(delta), it + 1
    return EtaSolveReport(eta, it, abs(r), True)


def _bisect(eq: EtaEquation, lo: float, hi: float, atol: float, max_iter: int) -> EtaSolveReport | None:
    rlo, rhi = eq.residual(lo), eq.residual(hi)
    if not (math.isfinite(rlo) and math.isfinite(rhi)) or rlo * rhi > 0:
        return None
    for it in range(1, 200 + max_iter):
        mid = 0.5 * (lo + hi)
        rm = eq.residual(mid)
        if abs(rm) <= atol or hi - lo <= 4 * _EPS:
            return EtaSolveReport(mid, it, abs(rm), abs(rm) <= atol)
        if (rm < 0) == (rlo < 0):
            lo, rlo = mid, rm
        else:
            hi = mid
    return None


def _least_defect(eq: EtaEquation) -> EtaSolveReport:
    """Minimiser of ``|r|`` on ``[0, 2]``; ties go to the candidate nearest 1."""
    if eq.is_polynomial and eq.coeffs.size > 2:
        crit = P.polyroots(P.polyder(eq.coeffs))
        crit = crit[np.abs(crit.imag) <= 1e-9 * np.maximum(1.0, np.abs(crit))].real
        crit = crit[(crit >= 0.0) & (crit <= 2.0)]
        if crit.size:
            cand = sorted(crit, key=lambda e: (abs(eq.residual(e)), abs(e - 1.0)))
            eta = float(cand[0])
            return EtaSolveReport(eta, 0, abs(eq.residual(eta)), False)
    res = minimize_scalar(lambda e: abs(eq.residual(e)), bounds=(0.0, 2.0), method="bounded",
                          options={"xatol": 1e-12})
    return EtaSolveReport(float(res.x), int(res.nfev), float(abs(eq.residual(res.x))), False)
