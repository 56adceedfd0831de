"""
Lagrange-multiplier time steppers.

All schemes share one three-stage step:

1. invert the constant-coefficient operator
   ``chi = w0/dt + theta G L`` twice to get ``p`` (known data, solved
   for as the increment ``p - phi^n``) and ``q`` (response to
   ``-G F'(phi*)``);
2. solve the scalar multiplier equation for ``eta``;
3. set ``phi_new = p + eta q``.

For conserved components (mobility symbol zero at ``k = 0``) the mean of
``p`` is set from the level means directly and ``q`` is made mean-free,
which is what the spectral solve gives in exact arithmetic.

A scheme is fixed by its time-difference weights ``w`` (new level first),
the implicitness ``theta`` of ``L``, and the extrapolation used for
``phi*``.  Crank-Nicolson takes ``theta = 1/2`` and
``phi* = (1 + a/2) phi^n - (a/2) phi^{n-1}`` with ``a = dt_n / dt_{n-1}``
(``a = 1`` gives the fixed-step ``3/2, -1/2``); BDF2 takes weights
``(3/2, -2, 1/2)``, ``theta = 1`` and ``phi* = 2 phi^n - phi^{n-1}``;
the first-order scheme is backward Euler with ``phi* = phi^n``.
"""

from __future__ import annotations

import dataclasses
import functools
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import diagnostics
from .models import CoupledModel, GradientFlow, as_fields
from .multiplier import EtaSolveError, build_eta_equation, solve_eta
from .spectral import Grid

Forcing = Optional[Callable[[float], tuple]]

log = logging.getLogger(__name__)

__all__ = [
    "Scheme",
    "BE1",
    "BDF2",
    "cn_scheme",
    "StepperState",
    "TrajectoryRecord",
    "StepFailure",
    "initial_state",
    "step_be1",
    "step_cn",
    "step_bdf2",
    "step_bdf2_coupled",
    "step_cn_adaptive_coupled",
    "run_fixed",
    "make_record",
    "SCHEMES",
]


@dataclass(frozen=True)
class Scheme:
    name: str
    weights: tuple[float, ...]  # (sum_k w_k phi^{n+1-k}) / dt approximates phi_t
    eta_weights: tuple[float, ...]  # discrete F-balance weights, proportional to weights
    theta: float
    extrap: tuple[float, ...]  # phi* = sum_k extrap[k] phi^{n-k}
    forcing_offset: float  # forcing evaluated at t + offset * dt

    @property
    def levels_needed(self) -> int:
        return max(len(self.weights) - 1, len(self.extrap))

    @property
    def second_order(self) -> bool:
        return self.name != "be1"


BE1 = Scheme("be1", (1.0, -1.0), (1.0, -1.0), 1.0, (1.0,), 1.0)
BDF2 = Scheme("bdf2", (1.5, -2.0, 0.5), (3.0, -4.0, 1.0), 1.0, (2.0, -1.0), 1.0)


def cn_scheme(ratio: float = 1.0) -> Scheme:
    """Crank-Nicolson with variable-step extrapolation ``a = ratio``."""
    return Scheme("cn", (1.0, -1.0), (1.0, -1.0), 0.5, (1.0 + ratio / 2, -ratio / 2), 0.5)


@dataclass(frozen=True)
class StepperState:
    """Solution levels ``phi^n`` (``fields``) and ``phi^{n-1}`` (``prev``)."""

    grid: Grid
    fields: tuple
    prev: Optional[tuple] = None
    t: float = 0.0
    dt_prev: Optional[float] = None
    eta_last: float = 1.0
    step_index: int = 0
    newton_iterations: int = 0
    last_scheme: Optional[Scheme] = None
    eta_converged: bool = True

    def __post_init__(self):
        self.grid.check(*self.fields)
        if self.prev is not None:
            self.grid.check(*self.prev)
            if len(self.prev) != len(self.fields):
                raise ValueError("prev and fields have different component counts")
        if not math.isfinite(self.eta_last):
            raise ValueError("eta_last must be finite")

    @property
    def phi(self) -> np.ndarray:
        return self.fields[0]


def initial_state(grid: Grid, fields, t: float = 0.0) -> StepperState:
    fields = tuple(np.array(f, dtype=float) for f in as_fields(fields))
    return StepperState(grid, fields, t=t)


@dataclass
class TrajectoryRecord:
    step: int
    t: float
    dt: float
    eta: float
    energy: float
    modified_energy: float
    masses: tuple
    newton_iterations: int
    accepted: bool = True
    error_estimate: float = float("nan")
    eta_converged: bool = True


class StepFailure(RuntimeError):
    """A multiplier solve failed during a run; carries the step index and dt."""

    def __init__(self, message: str, step: int, dt: float, cause: EtaSolveError):
        super().__init__(message)
        self.step = step
        self.dt = dt
        self.cause = cause


# ---------------------------------------------------------------------------


def _exact_mean(f: np.ndarray) -> float:
    return math.fsum(f.ravel().tolist()) / f.size


def _pin_mean(f: np.ndarray, target: float) -> np.ndarray:
    """
    Return ``f`` shifted so that its correctly rounded mean is ``target``.

    A uniform shift far below the spacing of the entries is rounded away,
    so the leftover sum deficit is spread over the 1/64 of entries that
    are smallest in magnitude, where it is representable.
    """
    g = f + (target - _exact_mean(f))
    deficit = (target - _exact_mean(g)) * g.size
    if deficit != 0.0:
        flat = g.reshape(-1)
        k = max(1, flat.size // 64)
        idx = np.argpartition(np.abs(flat), k - 1)[:k]
        flat[idx] += deficit / k
    return g


@functools.lru_cache(maxsize=32)
def _operators(model, grid, w0, theta, dt):
    """Per component: ``G``, ``G L`` and ``chi = w0/dt + theta G L`` multipliers."""
    out = []
    for L, G in zip(model.linear_symbols(grid), model.mobility_symbols(grid)):
        GL = G.multiplier * L.multiplier
        out.append((G.multiplier, GL, w0 / dt + theta * GL))
    return tuple(out)


def advance(
    state: StepperState,
    model: GradientFlow,
    scheme: Scheme,
    dt: float,
    forcing: Forcing = None,
    eta_tol: float = 1e-12,
    eta_max_iter: int = 50,
    eta_no_root: str = "raise",
    eta_defect_tol: float = 1e-8,
) -> StepperState:
    """One Lagrange-multiplier step of ``scheme``; see the module docstring."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    grid = state.grid
    model.check_fields(grid, state.fields)
    levels = [state.fields]
    if scheme.levels_needed > 1:
        if state.prev is None:
            raise ValueError(f"{scheme.name} needs two time levels; take a startup step first")
        levels.append(state.prev)

    phi_star = tuple(
        sum(e * lev[c] for e, lev in zip(scheme.extrap, levels) if e != 0.0)
        for c in range(model.ncomp)
    )
    force_star = model.split_force(grid, phi_star)
    f_ext = forcing(state.t + scheme.forcing_offset * dt) if forcing is not None else None

    p, q, dp = [], [], []
    for c, (G, GL, chi) in enumerate(_operators(model, grid, scheme.weights[0], scheme.theta, dt)):
        # solve for the increment p - phi^n: the time difference is formed
        # pointwise, so FFT round-off scales with the change, not with phi
        diff = sum(w * lev[c] for w, lev in zip(scheme.weights, [state.fields] + levels))
        rhs = grid.fft(-diff / dt if f_ext is None else f_ext[c] - diff / dt)
        dpc = grid.ifft((rhs - GL * grid.fft(state.fields[c])) / chi)
        pc = state.fields[c] + dpc
        qc = grid.ifft(-G * grid.fft(force_star[c]) / chi)
        if np.ndim(G) and G.flat[0] == 0.0:
            # conserved component: pin the constant mode in real space so
            # FFT round-off cannot accumulate as mass drift
            m = [_exact_mean(lev[c]) for lev in levels]
            dm = sum(w * (mk - m[0]) for w, mk in zip(scheme.weights[1:], m))
            f_mean = float(np.mean(f_ext[c])) if f_ext is not None else 0.0
            target = m[0] + (dt * f_mean - dm) / scheme.weights[0]
            pc = _pin_mean(pc, target)
            qc = qc - float(np.mean(qc))
        p.append(pc)
        q.append(qc)
        dp.append(dpc)

    history = levels[: len(scheme.eta_weights) - 1]
    eq = build_eta_equation(grid, model, p, q, history, scheme.eta_weights, force_star)
    report = solve_eta(eq, tol=eta_tol, max_iter=eta_max_iter, no_root=eta_no_root, defect_tol=eta_defect_tol)
    if not report.converged:
        log.warning("step %d: multiplier equation has no root; using least-defect eta=%.12g "
                    "(|r| = %.3e)", state.step_index + 1, report.eta, report.residual_norm)
    eta = report.eta
    new = tuple(
        pc + eta * qc if np.ndim(G) and G.flat[0] == 0.0 else phi + (dpc + eta * qc)
        for (G, _, _), phi, pc, qc, dpc in zip(
            _operators(model, grid, scheme.weights[0], scheme.theta, dt), state.fields, p, q, dp)
    )
    return StepperState(
        grid,
        new,
        prev=state.fields,
        t=state.t + dt,
        dt_prev=dt,
        eta_last=eta,
        step_index=state.step_index + 1,
        newton_iterations=report.iterations,
        last_scheme=scheme,
        eta_converged=report.converged,
    )


def step_be1(state, model, dt, forcing=None, **newton):
    """First-order (backward Euler) multiplier step; also the startup step."""
    return advance(state, model, BE1, dt, forcing, **newton)


def step_cn(state, model, dt, forcing=None, ratio: float | None = None, **newton):
    """
    Crank-Nicolson multiplier step.

    ``ratio`` is ``a_n = dt_n / dt_{n-1}``; by default it is taken from the
    state's previous step, which is exactly 1 for fixed-step runs.
    """
    if ratio is None:
        ratio = 1.0 if state.dt_prev is None else dt / state.dt_prev
    return advance(state, model, cn_scheme(ratio), dt, forcing, **newton)


def step_bdf2(state, model, dt, forcing=None, **newton):
    if state.dt_prev is not None and not math.isclose(dt, state.dt_prev, rel_tol=1e-9):
        raise ValueError("BDF2 here is fixed-step: dt must match the previous step")
    return advance(state, model, BDF2, dt, forcing, **newton)


def step_bdf2_coupled(state, model: CoupledModel, dt, **newton):
    if not isinstance(model, CoupledModel):
        raise TypeError("step_bdf2_coupled needs a CoupledModel")
    return step_bdf2(state, model, dt, **newton)


def step_cn_adaptive_coupled(state, model: CoupledModel, dt, **newton):
    if not isinstance(model, CoupledModel):
        raise TypeError("step_cn_adaptive_coupled needs a CoupledModel")
    if state.dt_prev is None:
        raise ValueError("variable-step CN needs the previous step size")
    return step_cn(state, model, dt, **newton)


SCHEMES = ("be1", "cn", "bdf2")


def make_record(model: GradientFlow, state: StepperState, dt: float, accepted=True, error=float("nan")):
    grid = state.grid
    energy = model.total_energy(grid, state.fields)
    if state.last_scheme is not None and state.last_scheme.name == "bdf2":
        modified = diagnostics.modified_energy("bdf2", model, state)
    else:
        modified = energy
    return TrajectoryRecord(
        step=state.step_index,
        t=state.t,
        dt=dt,
        eta=state.eta_last,
        energy=energy,
        modified_energy=modified,
        masses=tuple(diagnostics.mass(grid, f) for f in state.fields),
        newton_iterations=state.newton_iterations,
        accepted=accepted,
        error_estimate=error,
        eta_converged=state.eta_converged,
    )


def run_fixed(
    state: StepperState,
    model: GradientFlow,
    scheme: str,
    dt: float,
    t_end: float,
    forcing: Forcing = None,
    record_every: int | None = 1,
    callback: Callable[[StepperState], None] | None = None,
    **newton,
) -> tuple[StepperState, list[TrajectoryRecord]]:
    """
    March from ``state.t`` to ``t_end`` with a fixed step.

    Two-level schemes start with one backward-Euler step.  If ``dt`` does
    not divide the interval, the last step is shortened and taken with the
    variable-step Crank-Nicolson formula (backward Euler for ``be1``); the
    same formula bridges a BDF2 run whose incoming ``dt_prev`` differs
    from ``dt``.  ``record_every=None`` disables records.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    if not dt > 0 or not t_end > state.t:
        raise ValueError("need dt > 0 and t_end > state.t")
    if record_every is not None and record_every < 1:
        raise ValueError("record_every must be >= 1 (or None for no records)")

    t0 = state.t
    span = t_end - t0
    n_full = int(math.floor(span / dt + 1e-9))
    rest = span - n_full * dt
    n_total = n_full + (1 if rest > 1e-9 * dt else 0)

    records: list[TrajectoryRecord] = []
    for k in range(1, n_total + 1):
        h = dt if k <= n_full else rest
        try:
            if scheme == "be1" or state.prev is None:
                new = step_be1(state, model, h, forcing, **newton)
            elif scheme == "bdf2" and math.isclose(h, state.dt_prev, rel_tol=1e-9):
                new = step_bdf2(state, model, h, forcing, **newton)
            else:
                # CN, or a BDF2 run whose step size just changed
                new = step_cn(state, model, h, forcing, **newton)
        except EtaSolveError as exc:
            raise StepFailure(f"step {state.step_index + 1} failed at dt={h:g}: {exc}",
                              state.step_index + 1, h, exc) from exc
        t_new = t_end if k == n_total else t0 + k * dt
        state = dataclasses.replace(new, t=t_new)
        if record_every is not None and state.step_index % record_every == 0:
            records.append(make_record(model, state, h))
        if callback is not None:
            callback(state)
    return state, records
