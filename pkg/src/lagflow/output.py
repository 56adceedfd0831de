"""
Run outputs: diagnostics CSV, raw field snapshots and PGM images.

Snapshot format
---------------
A snapshot is two files.  ``NAME.hdr`` is UTF-8 text of ``key = value``
lines::

    format = lagflow-snapshot
    version = 1
    nx = 128
    ny = 128
    lx = 6.283185307179586
    ly = 6.283185307179586
    t = 0.5
    variable = u
    byte_order = little
    dtype = float64
    layout = row-major (ny, nx), x fastest
    payload = NAME.bin

``NAME.bin`` holds exactly ``nx * ny`` little-endian IEEE-754 doubles,
row ``m`` (``y = m ly / ny``) after row ``m - 1``.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .integrators import TrajectoryRecord

__all__ = [
    "CSV_HEADER",
    "SnapshotHeader",
    "write_energy_csv",
    "write_snapshot",
    "read_snapshot",
    "write_pgm",
    "pgm_bytes",
    "ensure_dir",
]

CSV_HEADER = (
    "step", "t", "dt", "eta", "energy", "modified_energy",
    "mass_u", "mass_v", "newton_iters", "accepted",
)

_FORMAT = "lagflow-snapshot"
_LAYOUT = "row-major (ny, nx), x fastest"


@dataclass(frozen=True)
class SnapshotHeader:
    nx: int
    ny: int
    lx: float
    ly: float
    t: float
    variable: str
    byte_order: str = "little"
    dtype: str = "float64"

    def __post_init__(self):
        if self.byte_order != "little" or self.dtype != "float64":
            raise ValueError("snapshots are little-endian float64 only")
        if self.nx < 1 or self.ny < 1:
            raise ValueError("snapshot dimensions must be positive")

    @property
    def payload_bytes(self) -> int:
        return self.nx * self.ny * 8

    @classmethod
    def for_grid(cls, grid, t: float, variable: str) -> "SnapshotHeader":
        return cls(grid.nx, grid.ny, grid.lx, grid.ly, float(t), variable)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_energy_csv(records: Iterable[TrajectoryRecord], path) -> None:
    """One row per record; ``mass_v`` is empty for single-field runs."""
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for r in records:
                masses = list(r.masses) + [None] * (2 - len(r.masses))
                w.writerow([
                    r.step, _fmt(r.t), _fmt(r.dt), _fmt(r.eta), _fmt(r.energy), _fmt(r.modified_energy),
                    "" if masses[0] is None else _fmt(masses[0]),
                    "" if masses[1] is None else _fmt(masses[1]),
                    r.newton_iterations, int(bool(r.accepted)),
                ])
    except OSError as exc:
        raise OSError(f"cannot write diagnostics CSV {path}: {exc}") from exc


def _payload_path(hdr_path: Path) -> Path:
    return hdr_path.with_suffix(".bin")


def write_snapshot(field: np.ndarray, header: SnapshotHeader, path) -> Path:
    """
    Write ``path`` (the ``.hdr`` text header; the suffix is forced) and
    its ``.bin`` payload.  Returns the header path.
    """
    field = np.asarray(field)
    if field.shape != (header.ny, header.nx):
        raise ValueError(f"field shape {field.shape} does not match header ({header.ny}, {header.nx})")
    if not np.all(np.isfinite(field)):
        raise ValueError("refusing to write a non-finite field")
    hdr = Path(path).with_suffix(".hdr")
    payload = _payload_path(hdr)
    lines = [
        f"format = {_FORMAT}",
        "version = 1",
        f"nx = {header.nx}",
        f"ny = {header.ny}",
        f"lx = {_fmt(header.lx)}",
        f"ly = {_fmt(header.ly)}",
        f"t = {_fmt(header.t)}",
        f"variable = {header.variable}",
        f"byte_order = {header.byte_order}",
        f"dtype = {header.dtype}",
        f"layout = {_LAYOUT}",
        f"payload = {payload.name}",
    ]
    try:
        payload.write_bytes(np.ascontiguousarray(field, dtype="<f8").tobytes(order="C"))
        hdr.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write snapshot {hdr}: {exc}") from exc
    return hdr


def read_snapshot(path) -> tuple[np.ndarray, SnapshotHeader]:
    hdr = Path(path).with_suffix(".hdr")
    try:
        text = hdr.read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read snapshot header {hdr}: {exc}") from exc
    kv = {}
    for line in text.splitlines():
        if line.strip():
            key, _, value = line.partition("=")
            kv[key.strip()] = value.strip()
    if kv.get("format") != _FORMAT:
        raise ValueError(f"{hdr}: not a snapshot header")
    header = SnapshotHeader(
        nx=int(kv["nx"]), ny=int(kv["ny"]), lx=float(kv["lx"]), ly=float(kv["ly"]),
        t=float(kv["t"]), variable=kv["variable"], byte_order=kv["byte_order"], dtype=kv["dtype"],
    )
    payload = hdr.parent / kv.get("payload", _payload_path(hdr).name)
    try:
        raw = payload.read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read snapshot payload {payload}: {exc}") from exc
    if len(raw) != header.payload_bytes:
        raise ValueError(f"{payload}: expected {header.payload_bytes} bytes, found {len(raw)}")
    field = np.frombuffer(raw, dtype="<f8").reshape(header.ny, header.nx).astype(np.float64)
    return field, header


def pgm_bytes(field: np.ndarray) -> bytes:
    """Binary P5 image, values mapped linearly from ``[min, max]`` to ``0..255``."""
    field = np.asarray(field, dtype=float)
    if field.ndim != 2:
        raise ValueError("PGM needs a 2D field")
    lo, hi = float(field.min()), float(field.max())
    if hi > lo:
        pix = np.rint((field - lo) / (hi - lo) * 255.0).astype(np.uint8)
    else:
        pix = np.full(field.shape, 128, dtype=np.uint8)
    ny, nx = field.shape
    return f"P5\n{nx} {ny}\n255\n".encode("ascii") + pix.tobytes(order="C")


def write_pgm(field: np.ndarray, path) -> None:
    try:
        with open(path, "wb") as fh:
            fh.write(pgm_bytes(field))
    except OSError as exc:
        raise OSError(f"cannot write image {path}: {exc}") from exc


def ensure_dir(path) -> Path:
    p = Path(path)
    try:
        os.makedirs(p, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {p}: {exc}") from exc
    return p
