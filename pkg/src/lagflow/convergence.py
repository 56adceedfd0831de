"""Manufactured-solution convergence studies."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

from .diagnostics import linf_error
from .integrators import StepFailure, initial_state, run_fixed
from .models import ExactSolutionSpec, GradientFlow, exact_solution, forcing_for
from .spectral import Grid

__all__ = ["ConvergenceRow", "ConvergenceTable", "observed_orders", "convergence_study"]


@dataclass(frozen=True)
class ConvergenceRow:
    dt: float
    errors: tuple[float, ...]  # one per variable
    orders: tuple[float, ...]  # nan on the first row


@dataclass
class ConvergenceTable:
    """Max-norm errors at ``t_final`` for a sequence of decreasing steps."""

    model: str
    scheme: str
    t_final: float
    variables: tuple[str, ...]
    rows: list[ConvergenceRow] = field(default_factory=list)

    def __post_init__(self):
        dts = [r.dt for r in self.rows]
        if any(b >= a for a, b in zip(dts, dts[1:])):
            raise ValueError("dt must be strictly decreasing down the rows")

    @property
    def dts(self) -> list[float]:
        return [r.dt for r in self.rows]

    def errors(self, var: str | int = 0) -> list[float]:
        i = var if isinstance(var, int) else self.variables.index(var)
        return [r.errors[i] for r in self.rows]

    def orders(self, var: str | int = 0) -> list[float]:
        i = var if isinstance(var, int) else self.variables.index(var)
        return [r.orders[i] for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["dt"] + [f"error_{v}" for v in self.variables] + [f"order_{v}" for v in self.variables])
        for r in self.rows:
            orders = ["" if math.isnan(o) else f"{o:.4f}" for o in r.orders]
            w.writerow([repr(r.dt)] + [f"{e:.6e}" for e in r.errors] + orders)
        return buf.getvalue()

    def write_csv(self, path) -> None:
        try:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(self.to_csv())
        except OSError as exc:
            raise OSError(f"cannot write convergence table to {path}: {exc}") from exc


def observed_orders(dts: Sequence[float], errors: Sequence[float]) -> list[float]:
    """``log(e_i / e_{i+1}) / log(dt_i / dt_{i+1})``, i.e. ``log2`` ratios for halving."""
    out = [math.nan]
    for (d0, e0), (d1, e1) in zip(zip(dts, errors), zip(dts[1:], errors[1:])):
        if e0 > 0 and e1 > 0:
            out.append(math.log(e0 / e1) / math.log(d0 / d1))
        else:
            out.append(math.nan)
    return out


def convergence_study(
    model: GradientFlow,
    spec: ExactSolutionSpec,
    scheme: str,
    dt_list: Sequence[float],
    t_final: float,
    grid: Grid,
    t0: float = 0.0,
    **newton,
) -> ConvergenceTable:
    """
    March the forced problem from the exact data at ``t0`` to ``t_final``
    for each step size and tabulate max-norm errors and observed orders.

    Raises
    ------
    StepFailure
        With ``dt`` set to the offending entry of ``dt_list``.
    """
    dt_list = [float(d) for d in dt_list]
    if not dt_list:
        raise ValueError("dt_list is empty")
    if any(b >= a for a, b in zip(dt_list, dt_list[1:])):
        raise ValueError("dt_list must be strictly decreasing")
    forcing = forcing_for(model, spec, grid)
    exact = exact_solution(spec, grid, t_final)
    errors = []
    for dt in dt_list:
        state = initial_state(grid, exact_solution(spec, grid, t0), t=t0)
        if t_final > t0:
            try:
                state, _ = run_fixed(state, model, scheme, dt, t_final, forcing, record_every=None, **newton)
            except StepFailure as exc:
                raise StepFailure(f"convergence study failed for dt={dt:g}: {exc}", exc.step, dt,
                                  exc.cause) from exc
        errors.append(tuple(linf_error(a, b) for a, b in zip(state.fields, exact)))
    per_var = list(zip(*errors))
    orders = list(zip(*[observed_orders(dt_list, e) for e in per_var]))
    rows = [ConvergenceRow(dt, err, o) for dt, err, o in zip(dt_list, errors, orders)]
    return ConvergenceTable(
        model=model.label,
        scheme=scheme,
        t_final=t_final,
        variables=tuple(model.names),
        rows=rows,
    )
