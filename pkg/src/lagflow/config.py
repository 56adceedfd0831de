"""
Run configuration files.

The format is UTF-8 text with one ``key = value`` per line, ``#``
comments, and dotted keys for the nested blocks (``adaptive.tol``,
``ic.lo``, ``newton.tol``).  Lists are comma separated.  Unknown keys,
keys that do not apply to the chosen model, and conflicting time-step
settings are errors.

Example::

    model = allen-cahn
    nx = 128
    eps = 0.1414
    scheme = bdf2
    dt = 1e-5
    t_end = 0.1
    seed = 7
    ic = random-uniform
    ic.lo = -0.001
    ic.hi = 0.001
    ic.shift = 0.03
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np

from .adaptive import AdaptiveParams
from .integrators import SCHEMES
from .models import (
    COUPLED_MANUFACTURED,
    SCALAR_MANUFACTURED,
    CoupledModel,
    GradientFlow,
    ScalarModel,
    exact_solution,
)
from .rng import seeded_random_field
from .spectral import Grid, make_grid

__all__ = [
    "ConfigError",
    "ICConfig",
    "NewtonConfig",
    "RunConfig",
    "MODELS",
    "parse_config",
    "parse_pairs",
    "config_from_pairs",
    "format_config",
    "build_model",
    "build_grid",
    "initial_fields",
]

MODELS = ("allen-cahn", "cahn-hilliard", "mbe", "coupled")
IC_KINDS = ("random-uniform", "manufactured", "file")


class ConfigError(ValueError):
    """Invalid configuration text or values."""


@dataclass(frozen=True)
class ICConfig:
    """Initial condition: uniform noise on ``[lo, hi)``, optionally centred, plus ``shift``."""

    kind: str = "random-uniform"
    lo: float = -1.0
    hi: float = 1.0
    shift: float = 0.0
    zero_mean: bool = False
    paths: tuple[str, ...] = ()


@dataclass(frozen=True)
class NewtonConfig:
    tol: float = 1e-12
    max_iter: int = 50
    no_root: str = "raise"
    defect_tol: float = 1e-8

    def kwargs(self) -> dict:
        return {"eta_tol": self.tol, "eta_max_iter": self.max_iter, "eta_no_root": self.no_root,
                "eta_defect_tol": self.defect_tol}


@dataclass(frozen=True)
class RunConfig:
    model: str
    nx: int
    t_end: float
    ny: int | None = None
    lx: float = 2 * math.pi
    ly: float | None = None
    dealias: bool = False
    scheme: str = "bdf2"
    dt: float | None = None
    dt_list: tuple[float, ...] | None = None
    adaptive: AdaptiveParams | None = None
    t0: float = 0.0
    # scalar models
    eps: float | None = None
    mobility: float = 1.0
    # coupled model
    eps_u: float | None = None
    eps_v: float | None = None
    sigma: float | None = None
    alpha: float | None = None
    beta: float | None = None
    gamma: float | None = None
    Mu: float = 1.0
    Mv: float = 1.0
    Su: float = 0.0
    Sv: float = 0.0
    # run control
    seed: int = 0
    ic: ICConfig = field(default_factory=ICConfig)
    newton: NewtonConfig = field(default_factory=NewtonConfig)
    output: str = "output"
    record_every: int = 1
    snapshot_every: int = 0
    snapshot_times: tuple[float, ...] = ()

    @property
    def schemes(self) -> tuple[str, ...]:
        return tuple(s.strip() for s in self.scheme.split(","))

    @property
    def is_coupled(self) -> bool:
        return self.model == "coupled"


# ---------------------------------------------------------------------------
# value parsers


def _p_float(v: str) -> float:
    x = float(v)
    if not math.isfinite(x):
        raise ValueError("must be finite")
    return x


def _p_int(v: str) -> int:
    return int(v, 0)


def _p_bool(v: str) -> bool:
    low = v.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean (true/false)")


def _p_str(v: str) -> str:
    if not v:
        raise ValueError("empty value")
    return v


def _p_floats(v: str) -> tuple[float, ...]:
    return tuple(_p_float(x.strip()) for x in v.split(",") if x.strip())


def _p_strs(v: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in v.split(",") if x.strip())


# key -> (block, attribute, parser); block None is the top level
_KEYS: dict[str, tuple[str | None, str, Callable[[str], Any]]] = {
    "model": (None, "model", _p_str),
    "nx": (None, "nx", _p_int),
    "ny": (None, "ny", _p_int),
    "lx": (None, "lx", _p_float),
    "ly": (None, "ly", _p_float),
    "dealias": (None, "dealias", _p_bool),
    "scheme": (None, "scheme", _p_str),
    "dt": (None, "dt", _p_float),
    "dt_list": (None, "dt_list", _p_floats),
    "t0": (None, "t0", _p_float),
    "t_end": (None, "t_end", _p_float),
    "eps": (None, "eps", _p_float),
    "mobility": (None, "mobility", _p_float),
    "eps_u": (None, "eps_u", _p_float),
    "eps_v": (None, "eps_v", _p_float),
    "sigma": (None, "sigma", _p_float),
    "alpha": (None, "alpha", _p_float),
    "beta": (None, "beta", _p_float),
    "gamma": (None, "gamma", _p_float),
    "Mu": (None, "Mu", _p_float),
    "Mv": (None, "Mv", _p_float),
    "Su": (None, "Su", _p_float),
    "Sv": (None, "Sv", _p_float),
    "seed": (None, "seed", _p_int),
    "output": (None, "output", _p_str),
    "record_every": (None, "record_every", _p_int),
    "snapshot_every": (None, "snapshot_every", _p_int),
    "snapshot_times": (None, "snapshot_times", _p_floats),
    "ic": ("ic", "kind", _p_str),
    "ic.lo": ("ic", "lo", _p_float),
    "ic.hi": ("ic", "hi", _p_float),
    "ic.shift": ("ic", "shift", _p_float),
    "ic.zero_mean": ("ic", "zero_mean", _p_bool),
    "ic.path": ("ic", "paths", _p_strs),
    "adaptive.tol": ("adaptive", "tol", _p_float),
    "adaptive.rho": ("adaptive", "rho", _p_float),
    "adaptive.dt_min": ("adaptive", "dt_min", _p_float),
    "adaptive.dt_max": ("adaptive", "dt_max", _p_float),
    "adaptive.dt_init": ("adaptive", "dt_init", _p_float),
    "adaptive.max_retries": ("adaptive", "max_retries", _p_int),
    "newton.tol": ("newton", "tol", _p_float),
    "newton.max_iter": ("newton", "max_iter", _p_int),
    "newton.no_root": ("newton", "no_root", _p_str),
    "newton.defect_tol": ("newton", "defect_tol", _p_float),
}

_SCALAR_KEYS = {"eps", "mobility"}
_COUPLED_KEYS = {"eps_u", "eps_v", "sigma", "alpha", "beta", "gamma", "Mu", "Mv", "Su", "Sv"}
_COUPLED_REQUIRED = ("eps_u", "eps_v", "sigma", "alpha", "beta", "gamma")


def parse_pairs(text: str) -> dict[str, str]:
    """Raw ``key -> value`` strings, in file order; duplicates are errors."""
    pairs: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        if key in pairs:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        pairs[key] = value
    return pairs


def parse_config(text: str, overrides: Mapping[str, str] | None = None) -> RunConfig:
    """
    Parse and validate configuration text.

    ``overrides`` replace or add keys before validation; an empty override
    value removes the key.
    """
    pairs = parse_pairs(text)
    for key, value in (overrides or {}).items():
        if value == "":
            pairs.pop(key, None)
        else:
            pairs[key] = value
    return config_from_pairs(pairs)


def config_from_pairs(pairs: Mapping[str, str]) -> RunConfig:
    top: dict[str, Any] = {}
    blocks: dict[str, dict[str, Any]] = {"ic": {}, "adaptive": {}, "newton": {}}
    for key, value in pairs.items():
        if key not in _KEYS:
            raise ConfigError(f"unknown key {key!r}")
        block, attr, parse = _KEYS[key]
        try:
            parsed = parse(value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {value!r} ({exc})") from None
        (top if block is None else blocks[block])[attr] = parsed

    for required in ("model", "nx", "t_end"):
        if required not in top:
            raise ConfigError(f"missing required key {required!r}")
    model = top["model"]
    if model not in MODELS:
        raise ConfigError(f"unknown model {model!r}; expected one of {', '.join(MODELS)}")
    foreign = (_COUPLED_KEYS if model != "coupled" else _SCALAR_KEYS) & top.keys()
    if foreign:
        raise ConfigError(f"key(s) {', '.join(sorted(foreign))} do not apply to model {model!r}")
    needed = _COUPLED_REQUIRED if model == "coupled" else ("eps",)
    for key in needed:
        if key not in top:
            raise ConfigError(f"missing required key {key!r} for model {model!r}")

    modes = [k for k in ("dt", "dt_list") if k in top] + (["adaptive.*"] if blocks["adaptive"] else [])
    if len(modes) > 1:
        raise ConfigError(f"conflicting time-step settings: {' and '.join(modes)}")
    if not modes:
        raise ConfigError("one of dt, dt_list or an adaptive.* block is required")

    try:
        if blocks["adaptive"]:
            top["adaptive"] = AdaptiveParams(**blocks["adaptive"])
        top["ic"] = ICConfig(**blocks["ic"])
        top["newton"] = NewtonConfig(**blocks["newton"])
        cfg = RunConfig(**top)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    def need(cond: bool, msg: str):
        if not cond:
            raise ConfigError(msg)

    need(cfg.nx >= 4 and cfg.nx % 2 == 0, "nx must be an even integer >= 4")
    need(cfg.ny is None or (cfg.ny >= 4 and cfg.ny % 2 == 0), "ny must be an even integer >= 4")
    need(cfg.lx > 0 and (cfg.ly is None or cfg.ly > 0), "domain lengths must be positive")
    need(cfg.t_end > cfg.t0, "t_end must exceed t0")
    for s in cfg.schemes:
        need(s in SCHEMES, f"unknown scheme {s!r}; expected one of {', '.join(SCHEMES)}")
    need(len(cfg.schemes) == 1 or cfg.dt_list is not None, "several schemes need dt_list")
    need(cfg.dt is None or cfg.dt > 0, "dt must be positive")
    if cfg.dt_list is not None:
        need(len(cfg.dt_list) > 0 and all(d > 0 for d in cfg.dt_list), "dt_list entries must be positive")
        need(all(b < a for a, b in zip(cfg.dt_list, cfg.dt_list[1:])), "dt_list must be strictly decreasing")
    need(0 <= cfg.seed < 2**64, "seed must be a 64-bit unsigned integer")
    need(cfg.record_every >= 1, "record_every must be >= 1")
    need(cfg.snapshot_every >= 0, "snapshot_every must be >= 0")
    need(all(cfg.t0 < t <= cfg.t_end for t in cfg.snapshot_times), "snapshot_times must lie in (t0, t_end]")
    need(list(cfg.snapshot_times) == sorted(set(cfg.snapshot_times)), "snapshot_times must be increasing")
    ic = cfg.ic
    need(ic.kind in IC_KINDS, f"unknown ic {ic.kind!r}; expected one of {', '.join(IC_KINDS)}")
    if ic.kind == "random-uniform":
        need(ic.lo < ic.hi, "ic.lo must be below ic.hi")
    if ic.kind == "file":
        need(len(ic.paths) == (2 if cfg.is_coupled else 1), "ic.path needs one snapshot per field")
    need(cfg.newton.tol > 0 and cfg.newton.max_iter >= 1, "newton.tol must be > 0 and newton.max_iter >= 1")
    need(cfg.newton.no_root in ("raise", "closest"), "newton.no_root must be 'raise' or 'closest'")
    need(cfg.newton.defect_tol > 0, "newton.defect_tol must be positive")
    try:
        build_model(cfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------------------
# round trip


def _f(x: float) -> str:
    return repr(float(x))


def format_config(cfg: RunConfig) -> str:
    """Text that re-parses to a ``RunConfig`` equal to ``cfg``."""
    out = [f"model = {cfg.model}", f"nx = {cfg.nx}"]
    if cfg.ny is not None:
        out.append(f"ny = {cfg.ny}")
    out.append(f"lx = {_f(cfg.lx)}")
    if cfg.ly is not None:
        out.append(f"ly = {_f(cfg.ly)}")
    out += [f"dealias = {str(cfg.dealias).lower()}", f"scheme = {cfg.scheme}"]
    if cfg.dt is not None:
        out.append(f"dt = {_f(cfg.dt)}")
    if cfg.dt_list is not None:
        out.append("dt_list = " + ", ".join(_f(d) for d in cfg.dt_list))
    if cfg.adaptive is not None:
        a = cfg.adaptive
        out += [f"adaptive.tol = {_f(a.tol)}", f"adaptive.rho = {_f(a.rho)}",
                f"adaptive.dt_min = {_f(a.dt_min)}", f"adaptive.dt_max = {_f(a.dt_max)}",
                f"adaptive.max_retries = {a.max_retries}"]
        if a.dt_init is not None:
            out.append(f"adaptive.dt_init = {_f(a.dt_init)}")
    out += [f"t0 = {_f(cfg.t0)}", f"t_end = {_f(cfg.t_end)}"]
    keys = _COUPLED_KEYS if cfg.is_coupled else _SCALAR_KEYS
    for key in sorted(keys, key=list(_KEYS).index):
        value = getattr(cfg, key)
        if value is not None:
            out.append(f"{key} = {_f(value)}")
    out += [f"seed = {cfg.seed}", f"ic = {cfg.ic.kind}", f"ic.lo = {_f(cfg.ic.lo)}",
            f"ic.hi = {_f(cfg.ic.hi)}", f"ic.shift = {_f(cfg.ic.shift)}",
            f"ic.zero_mean = {str(cfg.ic.zero_mean).lower()}"]
    if cfg.ic.paths:
        out.append("ic.path = " + ", ".join(cfg.ic.paths))
    out += [f"newton.tol = {_f(cfg.newton.tol)}", f"newton.max_iter = {cfg.newton.max_iter}",
            f"newton.no_root = {cfg.newton.no_root}", f"newton.defect_tol = {_f(cfg.newton.defect_tol)}",
            f"output = {cfg.output}",
            f"record_every = {cfg.record_every}", f"snapshot_every = {cfg.snapshot_every}"]
    if cfg.snapshot_times:
        out.append("snapshot_times = " + ", ".join(_f(t) for t in cfg.snapshot_times))
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# builders


def build_model(cfg: RunConfig) -> GradientFlow:
    if cfg.is_coupled:
        return CoupledModel(cfg.eps_u, cfg.eps_v, cfg.sigma, cfg.alpha, cfg.beta, cfg.gamma,
                            Mu=cfg.Mu, Mv=cfg.Mv, Su=cfg.Su, Sv=cfg.Sv)
    return ScalarModel(cfg.model, cfg.eps, cfg.mobility)


def build_grid(cfg: RunConfig) -> Grid:
    return make_grid(cfg.nx, cfg.ny, cfg.lx, cfg.ly, cfg.dealias)


def initial_fields(cfg: RunConfig, grid: Grid) -> tuple[np.ndarray, ...]:
    ncomp = 2 if cfg.is_coupled else 1
    ic = cfg.ic
    if ic.kind == "manufactured":
        spec = COUPLED_MANUFACTURED if cfg.is_coupled else SCALAR_MANUFACTURED
        return exact_solution(spec, grid, cfg.t0)
    if ic.kind == "file":
        from .output import read_snapshot

        fields = []
        for path in ic.paths:
            f, hdr = read_snapshot(path)
            if (hdr.nx, hdr.ny) != (grid.nx, grid.ny):
                raise ConfigError(f"{path}: snapshot is {hdr.nx}x{hdr.ny}, grid is {grid.nx}x{grid.ny}")
            fields.append(f)
        return tuple(fields)
    return tuple(
        seeded_random_field(grid, cfg.seed, ic.lo, ic.hi, ic.zero_mean, stream=c) + ic.shift
        for c in range(ncomp)
    )


def replace(cfg: RunConfig, **changes) -> RunConfig:
    """``dataclasses.replace`` followed by validation."""
    new = dataclasses.replace(cfg, **changes)
    _validate(new)
    return new
