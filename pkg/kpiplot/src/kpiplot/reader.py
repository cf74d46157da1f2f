"""Read-only access to kpilab run directories.

A run directory holds run.json (manifest), series.csv (17-digit floats,
header first), fields/NNNN.bin snapshot dumps, and a DONE marker that
completed runs write last.  This module parses those files from their
documented layouts only; it never imports the simulator.

Field dump layout:
  4 bytes   magic b"KPIF"
  1 byte    endianness tag, b"<" or b">"
  3 bytes   padding
  2 int64   nx, ny
  3 float64 Lx, Ly, t
  then nx*ny float64 values, row major (x index slowest)
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

FIELD_MAGIC = b"KPIF"


class RunReadError(RuntimeError):
    pass


@dataclass(frozen=True)
class FieldDump:
    nx: int
    ny: int
    Lx: float
    Ly: float
    t: float
    values: np.ndarray  # shape (nx, ny)

    @property
    def x(self) -> np.ndarray:
        return -self.Lx + 2.0 * self.Lx / self.nx * np.arange(self.nx)


@dataclass(frozen=True)
class Run:
    path: Path
    manifest: dict
    columns: tuple[str, ...]
    series: dict[str, np.ndarray]
    fields: tuple[FieldDump, ...]

    @property
    def label(self) -> str:
        return self.path.name


def read_field(path: Path) -> FieldDump:
    blob = Path(path).read_bytes()
    if blob[:4] != FIELD_MAGIC:
        raise RunReadError(f"{path}: not a field dump (bad magic)")
    tag = blob[4:5]
    if tag not in (b"<", b">"):
        raise RunReadError(f"{path}: unknown endianness tag {tag!r}")
    nx, ny = struct.unpack_from("=2q", blob, 8)
    Lx, Ly, t = struct.unpack_from("=3d", blob, 24)
    dtype = np.dtype(np.float64).newbyteorder("<" if tag == b"<" else ">")
    vals = np.frombuffer(blob, dtype=dtype, count=nx * ny, offset=48)
    return FieldDump(nx=int(nx), ny=int(ny), Lx=Lx, Ly=Ly, t=t,
                     values=vals.reshape(nx, ny).astype(float))


def read_run(run_dir: str | Path) -> Run:
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise RunReadError(f"{run_dir}: not a directory")
    if not (run_dir / "DONE").exists():
        raise RunReadError(f"{run_dir}: incomplete run (no DONE marker)")
    try:
        manifest = json.loads((run_dir / "run.json").read_text())
    except FileNotFoundError:
        raise RunReadError(f"{run_dir}: missing run.json")

    columns: tuple[str, ...] = ()
    series: dict[str, np.ndarray] = {}
    csv_path = run_dir / "series.csv"
    if csv_path.exists():
        with open(csv_path, newline="") as fh:
            reader = csv.reader(fh)
            columns = tuple(next(reader))
            rows = list(reader)
        for j, name in enumerate(columns):
            vals = []
            for cells in rows:
                try:
                    vals.append(float(cells[j]))
                except (ValueError, IndexError):
                    vals.append(np.nan)
            series[name] = np.array(vals)

    fields = []
    fdir = run_dir / "fields"
    if fdir.is_dir():
        for path in sorted(fdir.glob("*.bin")):
            fields.append(read_field(path))
    return Run(path=run_dir, manifest=manifest, columns=columns,
               series=series, fields=tuple(fields))


def require_columns(run: Run, needed: tuple[str, ...], kind: str):
    missing = [c for c in needed if c not in run.series]
    if missing:
        raise RunReadError(
            f"{run.path}: figure kind {kind!r} needs columns {missing}; "
            f"available: {sorted(run.series) or 'none'}")
