"""
Adaptive time stepping with a first/second-order error estimate.

Each attempted step is computed twice from the same state: once with the
backward-Euler multiplier scheme and once with the variable-step
Crank-Nicolson scheme.  Their relative discrete L2 distance

    e = max_c ||phi_2,c - phi_1,c|| / ||phi_2,c||

drives the step-size update ``A(e, dt) = rho sqrt(tol / e) dt``, clamped
to ``[dt_min, dt_max]``.  Steps with ``e > tol`` are retried with the
reduced step; the second-order solution is the one that is kept.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .integrators import (
    Forcing,
    StepFailure,
    StepperState,
    TrajectoryRecord,
    make_record,
    step_be1,
    step_cn,
)
from .models import GradientFlow
from .multiplier import EtaSolveError

__all__ = ["AdaptiveParams", "adapt_step", "relative_difference", "run_adaptive"]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AdaptiveParams:
    """
    Controller settings.

    Attributes
    ----------
    tol : float
        Accepted relative first/second-order discrepancy per step.
    rho : float
        Safety factor in ``(0, 1]``.
    dt_min, dt_max : float
        Step-size bounds.
    dt_init : float, optional
        First step size; defaults to ``dt_min``.
    max_retries : int
        Rejections allowed per step before the step is accepted anyway.
    """

    tol: float = 1e-3
    rho: float = 0.6
    dt_min: float = 1e-6
    dt_max: float = 1e-2
    dt_init: float | None = None
    max_retries: int = 20

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not 0 < self.rho <= 1:
            raise ValueError("rho must lie in (0, 1]")
        if not 0 < self.dt_min <= self.dt_max:
            raise ValueError("need 0 < dt_min <= dt_max")
        if self.dt_init is not None and not self.dt_min <= self.dt_init <= self.dt_max:
            raise ValueError("dt_init must lie in [dt_min, dt_max]")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")

    @property
    def first_step(self) -> float:
        return self.dt_min if self.dt_init is None else self.dt_init


def adapt_step(e: float, dt: float, params: AdaptiveParams) -> float:
    """``clamp(rho * sqrt(tol / e) * dt, dt_min, dt_max)``; ``e = 0`` gives ``dt_max``."""
    if e < 0 or math.isnan(e):
        raise ValueError(f"error estimate must be >= 0, got {e}")
    if e == 0:
        return params.dt_max
    proposed = params.rho * math.sqrt(params.tol / e) * dt
    return min(max(proposed, params.dt_min), params.dt_max)


def relative_difference(second: Sequence[np.ndarray], first: Sequence[np.ndarray]) -> float:
    """Max over components of the relative discrete L2 distance."""
    out = 0.0
    for a, b in zip(second, first):
        norm = float(np.linalg.norm(a))
        diff = float(np.linalg.norm(a - b))
        out = max(out, diff / norm if norm > 0 else diff)
    return out


def run_adaptive(
    state: StepperState,
    model: GradientFlow,
    params: AdaptiveParams,
    t_end: float,
    forcing: Forcing = None,
    stops: Sequence[float] = (),
    callback: Callable[[StepperState], None] | None = None,
    **newton,
) -> tuple[StepperState, list[TrajectoryRecord]]:
    """
    March to ``t_end`` with the adaptive controller.

    A state without a previous level is started with one backward-Euler
    step of size ``params.first_step``.  Every attempt, accepted or not,
    produces a record.  Steps are shortened to land exactly on each time
    in ``stops`` (e.g. snapshot times) and on ``t_end``; ``callback`` is
    called after every accepted step.

    Raises
    ------
    StepFailure
        If the multiplier solve still fails at ``dt_min``.
    """
    if not t_end > state.t:
        raise ValueError("t_end must exceed the current time")
    landing = sorted(t for t in set(stops) if state.t < t < t_end) + [t_end]
    records: list[TrajectoryRecord] = []
    t_tiny = 1e-12 * max(1.0, abs(t_end))

    def clip(dt: float) -> float:
        nxt = next(t for t in landing if t > state.t + t_tiny)
        return min(dt, nxt - state.t)

    dt = params.first_step
    if state.prev is None:
        h = clip(dt)
        try:
            state = step_be1(state, model, h, forcing, **newton)
        except EtaSolveError as exc:
            raise StepFailure(f"startup step failed at dt={h:g}: {exc}", 1, h, exc) from exc
        records.append(make_record(model, state, h))
        if callback is not None:
            callback(state)

    while state.t < t_end - t_tiny:
        h = clip(dt)
        clipped = h < dt
        for attempt in range(params.max_retries + 1):
            try:
                first = step_be1(state, model, h, forcing, **newton)
                second = step_cn(state, model, h, forcing, **newton)
            except EtaSolveError as exc:
                last_exc = exc
                if h <= params.dt_min * (1 + 1e-12):
                    raise StepFailure(
                        f"step {state.step_index + 1} failed at dt_min={h:g}: {exc}",
                        state.step_index + 1, h, exc,
                    ) from exc
                log.info("multiplier solve failed at dt=%g; halving", h)
                h = max(params.dt_min, h / 2)
                continue
            e = relative_difference(second.fields, first.fields)
            at_floor = h <= params.dt_min * (1 + 1e-12)
            if e <= params.tol or at_floor or attempt == params.max_retries:
                if e > params.tol:
                    log.warning("accepting step %d at dt=%g with error %.3e > tol",
                                second.step_index, h, e)
                break
            records.append(make_record(model, second, h, accepted=False, error=e))
            h = clip(adapt_step(e, h, params))
            clipped = False
        else:
            raise StepFailure(
                f"step {state.step_index + 1}: multiplier solve kept failing down to dt={h:g}",
                state.step_index + 1, h, last_exc,
            )
        landed = next(t for t in landing if t > state.t + t_tiny)
        state = second
        if abs(state.t - landed) <= t_tiny:
            state = dataclasses.replace(state, t=landed)
        records.append(make_record(model, state, h, accepted=True, error=e))
        if callback is not None:
            callback(state)
        # a step shortened only to land on a stop does not shrink the next one
        dt = max(adapt_step(e, h, params), dt) if clipped else adapt_step(e, h, params)
    return state, records

