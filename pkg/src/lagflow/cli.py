"""
Command line entry point.

::

    lagflow accuracy --config ac.cfg
    lagflow simulate --config run.cfg --set dt=1e-4 --output out/
    lagflow adaptive --config adaptive.cfg
    lagflow preset bcp-second --set t_end=0.1

Exit status is 0 on success, 2 for configuration errors or an unknown
preset, 3 when the multiplier equation cannot be solved, and 1 for I/O
errors.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path
from typing import Sequence

from .adaptive import run_adaptive
from .config import ConfigError, RunConfig, build_grid, build_model, format_config, initial_fields, parse_config
from .convergence import convergence_study
from .integrators import StepFailure, StepperState, TrajectoryRecord, initial_state, run_fixed
from .models import COUPLED_MANUFACTURED, SCALAR_MANUFACTURED
from .multiplier import EtaSolveError
from .output import SnapshotHeader, ensure_dir, write_energy_csv, write_pgm, write_snapshot
from .presets import PRESETS, get_preset

__all__ = ["main", "run_config"]

log = logging.getLogger("lagflow")

EXIT_OK, EXIT_IO, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3


class _Snapshots:
    """Writes ``.hdr``/``.bin``/``.pgm`` triples at requested times or step counts."""

    def __init__(self, cfg: RunConfig, model, outdir: Path, tag: str = ""):
        self.every = cfg.snapshot_every
        self.times = list(cfg.snapshot_times)
        self.names = model.names
        self.outdir = outdir
        self.tag = tag
        self.written = 0

    def write(self, state: StepperState) -> None:
        for name, f in zip(self.names, state.fields):
            stem = self.outdir / f"{name}{self.tag}_{state.step_index:07d}"
            write_snapshot(f, SnapshotHeader.for_grid(state.grid, state.t, name), stem.with_suffix(".hdr"))
            write_pgm(f, stem.with_suffix(".pgm"))
        self.written += 1

    def __call__(self, state: StepperState) -> None:
        tol = 1e-12 * max(1.0, abs(state.t))
        at_time = any(abs(state.t - t) <= tol for t in self.times)
        at_step = self.every > 0 and state.step_index % self.every == 0
        if at_time or at_step:
            self.write(state)


def _newton(cfg: RunConfig) -> dict:
    return cfg.newton.kwargs()


def _fixed_run(cfg, model, grid, dt, outdir, tag=""):
    """Fixed-step march, pausing exactly at each snapshot time."""
    state = initial_state(grid, initial_fields(cfg, grid), t=cfg.t0)
    snaps = _Snapshots(cfg, model, outdir, tag)
    records: list[TrajectoryRecord] = []
    stops = [t for t in cfg.snapshot_times if t < cfg.t_end] + [cfg.t_end]
    for stop in stops:
        if stop <= state.t:
            continue
        state, recs = run_fixed(state, model, cfg.scheme, dt, stop, record_every=cfg.record_every,
                                callback=snaps, **_newton(cfg))
        records += recs
    write_energy_csv(records, outdir / f"energy{tag}.csv")
    return state, records, snaps.written


def _describe(state: StepperState, records: list[TrajectoryRecord]) -> str:
    energy = records[-1].energy if records else float("nan")
    return f"{state.step_index} steps to t={state.t:.6g}, final energy {energy:.10g}"


def cmd_accuracy(cfg: RunConfig, outdir: Path) -> str:
    if cfg.ic.kind != "manufactured" or cfg.dt_list is None:
        raise ConfigError("accuracy runs need ic = manufactured and a dt_list")
    model, grid = build_model(cfg), build_grid(cfg)
    spec = COUPLED_MANUFACTURED if cfg.is_coupled else SCALAR_MANUFACTURED
    parts = []
    for scheme in cfg.schemes:
        table = convergence_study(model, spec, scheme, cfg.dt_list, cfg.t_end, grid, t0=cfg.t0, **_newton(cfg))
        table.write_csv(outdir / f"convergence_{scheme}.csv")
        finest = [table.orders(v)[-1] for v in table.variables]
        parts.append(f"{scheme}: {len(table.rows)} rows, finest order "
                     + "/".join(f"{o:.2f}" for o in finest))
    return f"accuracy {model.label}: " + "; ".join(parts)


def cmd_simulate(cfg: RunConfig, outdir: Path) -> str:
    if cfg.adaptive is not None:
        return cmd_adaptive(cfg, outdir)
    if len(cfg.schemes) != 1:
        raise ConfigError("simulate takes a single scheme")
    model, grid = build_model(cfg), build_grid(cfg)
    if cfg.dt_list is None:
        state, records, nsnap = _fixed_run(cfg, model, grid, cfg.dt, outdir)
        return f"simulate {model.label} {cfg.scheme}: {_describe(state, records)}, {nsnap} snapshots"
    lines = ["dt,steps,t,energy,modified_energy"]
    for dt in cfg.dt_list:
        state, records, _ = _fixed_run(cfg, model, grid, dt, outdir, tag=f"_dt{dt:g}")
        last = records[-1] if records else None
        e = last.energy if last else math.nan
        me = last.modified_energy if last else math.nan
        lines.append(f"{dt!r},{state.step_index},{state.t!r},{e!r},{me!r}")
    try:
        (outdir / "sweep.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {outdir / 'sweep.csv'}: {exc}") from exc
    return f"simulate {model.label} {cfg.scheme}: swept {len(cfg.dt_list)} step sizes to t={cfg.t_end:g}"


def cmd_adaptive(cfg: RunConfig, outdir: Path) -> str:
    if cfg.adaptive is None:
        raise ConfigError("adaptive runs need an adaptive.* block")
    model, grid = build_model(cfg), build_grid(cfg)
    state = initial_state(grid, initial_fields(cfg, grid), t=cfg.t0)
    snaps = _Snapshots(cfg, model, outdir)
    state, records = run_adaptive(state, model, cfg.adaptive, cfg.t_end, stops=cfg.snapshot_times,
                                  callback=snaps, **_newton(cfg))
    accepted = [r for r in records if r.accepted]
    kept = [r for r in records if not r.accepted or r.step % cfg.record_every == 0]
    write_energy_csv(kept, outdir / "energy.csv")
    dts = [r.dt for r in accepted]
    return (f"adaptive {model.label}: {len(accepted)} accepted / {len(records) - len(accepted)} rejected, "
            f"dt in [{min(dts):.3g}, {max(dts):.3g}], final energy {accepted[-1].energy:.10g}")


COMMANDS = {"accuracy": cmd_accuracy, "simulate": cmd_simulate, "adaptive": cmd_adaptive}


def run_config(command: str, cfg: RunConfig, output: str | None = None) -> str:
    """Run ``command`` for ``cfg``; returns the summary line."""
    outdir = ensure_dir(output or cfg.output)
    try:
        (outdir / "config.txt").write_text(format_config(cfg), encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {outdir / 'config.txt'}: {exc}") from exc
    return COMMANDS[command](cfg, outdir) + f" [{outdir}]"


def _parse_set(items: Sequence[str]) -> dict[str, str]:
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"--set expects key=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lagflow", description="Energy-stable Lagrange multiplier gradient-flow solver.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress information")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="configuration file")
    s = sub.add_parser("preset", help=f"run a named experiment: {', '.join(PRESETS)}")
    s.add_argument("name")
    sub.add_parser("list-presets")
    for s in sub.choices.values():
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a configuration key (empty value removes it)")
        s.add_argument("--output", help="output directory (overrides the config)")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "list-presets":
        for p in PRESETS.values():
            print(f"{p.name:20s} {p.command:9s} {p.description}")
        return EXIT_OK
    try:
        overrides = _parse_set(args.set)
        if args.command == "preset":
            try:
                preset = get_preset(args.name)
            except KeyError as exc:
                print(f"lagflow: {exc.args[0]}", file=sys.stderr)
                return EXIT_CONFIG
            command, text = preset.command, preset.text
            overrides.setdefault("output", f"output/{preset.name}")
        else:
            command = args.command
            try:
                text = Path(args.config).read_text(encoding="utf-8")
            except OSError as exc:
                print(f"lagflow: cannot read config {args.config}: {exc.strerror}", file=sys.stderr)
                return EXIT_CONFIG
        cfg = parse_config(text, overrides)
        print(run_config(command, cfg, args.output))
    except ConfigError as exc:
        print(f"lagflow: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StepFailure, EtaSolveError) as exc:
        print(f"lagflow: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"lagflow: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
