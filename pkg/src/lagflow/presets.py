"""
Named experiment presets.

Each preset is ordinary configuration text plus the subcommand that runs
it, so ``lagflow preset NAME --set key=value`` can override any field.
"""

from __future__ import annotations

from dataclasses import dataclass

__all__ = ["Preset", "PRESETS", "preset_names", "get_preset"]


@dataclass(frozen=True)
class Preset:
    name: str
    command: str  # accuracy | simulate | adaptive
    description: str
    text: str


_SCALAR_DTS = "2e-3, 1e-3, 5e-4, 2.5e-4, 1.25e-4, 6.25e-5, 3.125e-5"
_COUPLED_DTS = "4e-3, 2e-3, 1e-3, 5e-4, 2.5e-4, 1.25e-4, 6.25e-5"

_COUPLED_ACCURACY = """\
model = coupled
nx = 128
eps_u = 0.075
eps_v = 0.075
sigma = 10
alpha = -0.1
beta = -0.1
gamma = 0
Mu = 1
Mv = 1
ic = manufactured
dt_list = {dts}
scheme = {scheme}
t_end = 0.1
"""

_ENERGY = """\
model = {model}
nx = 128
eps = 0.07071067811865475   # eps^2 = 0.005
scheme = bdf2
dt = 1e-5
t_end = 0.1                 # 10^4 steps
seed = 1
ic = random-uniform
ic.lo = -0.001
ic.hi = 0.001
ic.shift = 0.03
record_every = 1
{extra}"""

# near-stationary stretches late in the CH run leave the multiplier equation
# a few ulps short of a root; accept the least-defect eta there
_CH_NO_ROOT = "newton.no_root = closest\n"

_BCP = """\
model = coupled
nx = 128
eps_u = {eps_u}
eps_v = {eps_v}
sigma = 10
alpha = {alpha}
beta = {beta}
gamma = 0
Su = 1
Sv = 1
scheme = bdf2
dt = 2e-5
t_end = {t_end}
seed = 0
ic = random-uniform
ic.lo = -1
ic.hi = 1
record_every = 100
snapshot_times = {snaps}
newton.no_root = closest
"""


def _bcp(name, eps_u, eps_v, alpha, beta, t_end, snaps, what):
    text = _BCP.format(eps_u=eps_u, eps_v=eps_v, alpha=alpha, beta=beta, t_end=t_end, snaps=snaps)
    return Preset(name, "simulate", f"block copolymer annealing, {what}", text)


PRESETS: dict[str, Preset] = {p.name: p for p in [
    Preset("ac-table1", "accuracy", "Allen-Cahn accuracy study, eps^2 = 0.02, BDF2 and CN", f"""\
model = allen-cahn
nx = 128
eps = 0.1414213562373095    # eps^2 = 0.02
ic = manufactured
scheme = bdf2, cn
dt_list = {_SCALAR_DTS}
t_end = 0.1
"""),
    Preset("ch-table2", "accuracy", "Cahn-Hilliard accuracy study, eps^2 = 0.06, BDF2 and CN", f"""\
model = cahn-hilliard
nx = 128
eps = 0.2449489742783178    # eps^2 = 0.06
ic = manufactured
scheme = bdf2, cn
dt_list = {_SCALAR_DTS}
t_end = 0.1
"""),
    Preset("coupled-table3", "accuracy", "coupled model accuracy study, BDF2",
           _COUPLED_ACCURACY.format(dts=_COUPLED_DTS, scheme="bdf2")),
    Preset("coupled-table4", "accuracy", "coupled model accuracy study, Crank-Nicolson",
           _COUPLED_ACCURACY.format(dts=_COUPLED_DTS, scheme="cn")),
    Preset("ac-energy", "simulate", "Allen-Cahn energy decay from a near-constant random state",
           _ENERGY.format(model="allen-cahn", extra="")),
    Preset("ch-energy", "simulate", "Cahn-Hilliard energy decay from a near-constant random state",
           _ENERGY.format(model="cahn-hilliard", extra=_CH_NO_ROOT)),
    Preset("mbe-coarsen", "simulate", "MBE coarsening without slope selection", """\
model = mbe
nx = 128
eps = 0.03
mobility = 1
scheme = bdf2
dt = 1e-2
t_end = 200
seed = 2
ic = random-uniform
ic.lo = -0.001
ic.hi = 0.001
record_every = 1
snapshot_times = 2.5, 5, 10, 30, 50, 200
"""),
    Preset("coupled-stab-sweep", "simulate", "stabilized coupled scheme, step-size sweep to T = 0.5", """\
model = coupled
nx = 128
eps_u = 0.05
eps_v = 0.05
sigma = 10
alpha = -0.1
beta = 0.75
gamma = 0
Su = 1
Sv = 1
scheme = bdf2
dt_list = 8e-3, 2e-3, 8e-4, 4e-4, 2e-4, 1e-4
t_end = 0.5
seed = 3
ic = random-uniform
ic.zero_mean = true
record_every = 10
"""),
    Preset("adaptive-demo", "adaptive", "adaptive time stepping for the stabilized coupled model", """\
model = coupled
nx = 128
eps_u = 0.075
eps_v = 0.075
sigma = 10
alpha = -0.23
beta = 0.5
gamma = 0
Su = 5
Sv = 5
scheme = cn
adaptive.tol = 1e-3
adaptive.rho = 0.6
adaptive.dt_min = 1e-6
adaptive.dt_max = 1e-2
newton.no_root = closest
t_end = 0.6
seed = 42
ic = random-uniform
ic.zero_mean = true
snapshot_times = 0.0012, 0.1096, 0.5225
"""),
    _bcp("bcp-second", 0.075, 0.05, 0.1, -0.75, 2, "0.02, 0.1, 0.5, 2", "beta = -0.75"),
    _bcp("bcp-first", 0.075, 0.05, 0.1, 0.75, 2, "0.02, 0.1, 0.5, 2", "beta = 0.75"),
    _bcp("bcp-third", 0.03, 0.01, 0.33, 0.5, 3, "0.01, 0.1, 0.25, 3", "higher temperature, beta = 0.5"),
    _bcp("bcp-fourth", 0.03, 0.01, 0.33, -0.5, 3, "0.01, 0.1, 0.25, 3", "higher temperature, beta = -0.5"),
]}


def preset_names() -> list[str]:
    return list(PRESETS)


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; valid names: {', '.join(PRESETS)}") from None
