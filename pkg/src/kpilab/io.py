"""Config parsing and run-artifact persistence.

A run directory holds:
  run.json    manifest: experiment name, resolved config echo, code version,
              seed, and the verdict (passed, measured, thresholds)
  series.csv  diagnostic time/iteration series, header line first, floats
              written with 17 significant digits
  fields/     NNNN.bin snapshot dumps (see FIELD_MAGIC header layout)
  DONE        terminal marker; readers refuse directories without it

Field dump layout (all little- or big-endian per the tag byte):
  4 bytes   magic b"KPIF"
  1 byte    endianness tag, b"<" or b">"
  3 bytes   padding (zeros)
  2 int64   nx, ny
  3 float64 Lx, Ly, t
  then nx*ny float64 values, row major (x index slowest)
"""

from __future__ import annotations

import csv
import json
import struct
import sys
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .spectral import Field, Grid2D, make_grid
from .dynamics import SolverConfig
from .experiments import ExperimentConfig, Verdict

FIELD_MAGIC = b"KPIF"
_NATIVE_TAG = b"<" if sys.byteorder == "little" else b">"


class ConfigError(ValueError):
    pass


class ArtifactError(RuntimeError):
    pass


# --- config parsing ---------------------------------------------------------

class _DupKeyLoader(yaml.SafeLoader):
    """SafeLoader that rejects duplicate mapping keys with line numbers."""


def _construct_mapping(loader, node, deep=False):
    seen = {}
    for key_node, _ in node.value:
        key = loader.construct_object(key_node, deep=deep)
        if key in seen:
            raise ConfigError(
                f"duplicate key {key!r} at line {key_node.start_mark.line + 1} "
                f"(first seen at line {seen[key] + 1})")
        seen[key] = key_node.start_mark.line
    return yaml.SafeLoader.construct_mapping(loader, node, deep)


_DupKeyLoader.add_constructor(
    yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


_GRID_KEYS = {"nx": int, "ny": int, "Lx": float, "Ly": float}
_SOLVER_KEYS = {"dt": float, "T": float, "dealias_frac": float,
                "cfl_safety": float, "scheme": str, "record_every": int,
                "check_margin": bool, "margin_tol": float}
_TOP_KEYS = {"experiment": str, "grid": dict, "data": dict, "solver": dict,
             "L": int, "sigma": float, "seeds": list, "resolutions": list,
             "n_iters": int, "amplitudes": list, "K": int, "c_margin": float,
             "t_min_frac": float, "weight_window": float}

_DEFAULTS = {
    "grid": {"nx": 128, "ny": 32, "Lx": 20.0, "Ly": 10.0},
    "data": {"kind": "gaussian"},
    "solver": {"dt": 0.01, "T": 0.5},
    "L": 2, "sigma": 0.5, "seeds": [0], "resolutions": [],
    "n_iters": 4, "amplitudes": [], "K": 3, "c_margin": 10.0,
    "t_min_frac": 0.1, "weight_window": 0.75,
}


def _check_section(raw: dict, schema: dict[str, type], where: str) -> dict:
    out = {}
    for key, val in raw.items():
        if key not in schema:
            raise ConfigError(
                f"unknown key {key!r} in {where}; known keys: "
                f"{sorted(schema)}")
        want = schema[key]
        if want in (int, float) and isinstance(val, bool):
            raise ConfigError(f"{where}.{key}: expected {want.__name__}, "
                              f"got a boolean")
        if want is float and isinstance(val, int):
            val = float(val)
        if not isinstance(val, want):
            raise ConfigError(f"{where}.{key}: expected {want.__name__}, "
                              f"got {type(val).__name__} ({val!r})")
        out[key] = val
    return out


def parse_config(path: str | Path) -> tuple[ExperimentConfig, dict]:
    """Read a YAML experiment config; returns the config and its full echo.

    Unknown keys anywhere are an error; the echo contains every resolved
    value including applied defaults.
    """
    text = Path(path).read_text()
    try:
        raw = yaml.load(text, Loader=_DupKeyLoader)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path}: top level must be a mapping")
    raw = _check_section(raw, _TOP_KEYS, "config")
    if "experiment" not in raw:
        raise ConfigError("config: missing required key 'experiment'")

    merged = {k: (dict(v) if isinstance(v, dict) else v)
              for k, v in _DEFAULTS.items()}
    for key, val in raw.items():
        if key == "experiment":
            continue
        if isinstance(val, dict) and key in ("grid", "solver"):
            merged[key].update(val)
        elif key == "data":
            merged[key] = dict(val)
        else:
            merged[key] = val

    grid_kw = _check_section(merged["grid"], _GRID_KEYS, "grid")
    solver_kw = _check_section(merged["solver"], _SOLVER_KEYS, "solver")
    if "kind" not in merged["data"]:
        raise ConfigError("data: missing required key 'kind'")

    config = ExperimentConfig(
        name=raw["experiment"],
        nx=grid_kw.get("nx", 128), ny=grid_kw.get("ny", 32),
        Lx=grid_kw.get("Lx", 20.0), Ly=grid_kw.get("Ly", 10.0),
        data=dict(merged["data"]),
        solver=SolverConfig(**solver_kw),
        L=merged["L"], sigma=float(merged["sigma"]),
        seeds=tuple(merged["seeds"]),
        resolutions=tuple(merged["resolutions"]),
        n_iters=merged["n_iters"],
        amplitudes=tuple(merged["amplitudes"]),
        K=merged["K"], c_margin=float(merged["c_margin"]),
        t_min_frac=float(merged["t_min_frac"]),
        weight_window=float(merged["weight_window"]),
    )
    echo = {
        "experiment": config.name,
        "grid": {"nx": config.nx, "ny": config.ny,
                 "Lx": config.Lx, "Ly": config.Ly},
        "data": dict(config.data),
        "solver": asdict(config.solver),
        "L": config.L, "sigma": config.sigma,
        "seeds": list(config.seeds), "resolutions": list(config.resolutions),
        "n_iters": config.n_iters, "amplitudes": list(config.amplitudes),
        "K": config.K, "c_margin": config.c_margin,
        "t_min_frac": config.t_min_frac,
        "weight_window": config.weight_window,
    }
    return config, echo


# --- artifacts --------------------------------------------------------------

@dataclass(frozen=True)
class RunArtifact:
    manifest: dict
    series: tuple[dict, ...]
    snapshots: tuple[Field, ...] = ()

    def __post_init__(self):
        ts = [row["t"] for row in self.series if "t" in row]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ArtifactError("series times must be strictly increasing")


def make_artifact(experiment: str, echo: dict, seed: int | None,
                  verdict: Verdict,
                  snapshots: tuple[Field, ...] = ()) -> RunArtifact:
    manifest = {
        "experiment": experiment,
        "config": echo,
        "code_version": __version__,
        "seed": seed,
        "verdict": {
            "passed": verdict.passed,
            "measured": dict(verdict.measured),
            "thresholds": {k: list(v) for k, v in verdict.thresholds.items()},
        },
    }
    return RunArtifact(manifest=manifest, series=tuple(verdict.series),
                       snapshots=snapshots)


def _fresh_dir(base: Path) -> Path:
    """The directory itself, or the first free numeric-suffix sibling."""
    if not base.exists():
        return base
    for n in range(1, 10000):
        cand = base.with_name(f"{base.name}-{n}")
        if not cand.exists():
            return cand
    raise ArtifactError(f"no free run directory near {base}")


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def write_field(path: Path, field: Field):
    g = field.grid
    header = FIELD_MAGIC + _NATIVE_TAG + b"\x00" * 3 + struct.pack(
        "=2q3d", g.nx, g.ny, g.Lx, g.Ly, field.time)
    vals = np.ascontiguousarray(field.phys(), dtype=np.float64)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(vals.tobytes(order="C"))


def read_field(path: Path) -> Field:
    blob = Path(path).read_bytes()
    if blob[:4] != FIELD_MAGIC:
        raise ArtifactError(f"{path}: not a field dump (bad magic)")
    tag = blob[4:5]
    if tag not in (b"<", b">"):
        raise ArtifactError(f"{path}: unknown endianness tag {tag!r}")
    nx, ny = struct.unpack_from("=2q", blob, 8)
    Lx, Ly, t = struct.unpack_from("=3d", blob, 24)
    dtype = np.dtype(np.float64).newbyteorder("<" if tag == b"<" else ">")
    vals = np.frombuffer(blob, dtype=dtype, count=nx * ny, offset=48)
    grid = make_grid(int(nx), int(ny), Lx, Ly)
    return Field.from_phys(grid, vals.reshape(nx, ny).astype(float), time=t)


def write_artifact(artifact: RunArtifact, out_dir: str | Path) -> Path:
    run_dir = _fresh_dir(Path(out_dir))
    run_dir.mkdir(parents=True)
    (run_dir / "run.json").write_text(
        json.dumps(artifact.manifest, indent=2, sort_keys=True) + "\n")

    if artifact.series:
        columns = list(artifact.series[0].keys())
        with open(run_dir / "series.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(columns)
            for row in artifact.series:
                writer.writerow([_fmt(row.get(c, "")) for c in columns])

    if artifact.snapshots:
        fdir = run_dir / "fields"
        fdir.mkdir()
        for n, snap in enumerate(artifact.snapshots):
            write_field(fdir / f"{n:04d}.bin", snap)

    (run_dir / "DONE").write_text("")
    return run_dir


def _parse_cell(text: str):
    if text == "":
        return None
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def read_artifact(run_dir: str | Path) -> RunArtifact:
    run_dir = Path(run_dir)
    if not (run_dir / "DONE").exists():
        raise ArtifactError(f"{run_dir}: incomplete run (no DONE marker)")
    manifest = json.loads((run_dir / "run.json").read_text())

    series = []
    csv_path = run_dir / "series.csv"
    if csv_path.exists():
        with open(csv_path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            for cells in reader:
                series.append({c: _parse_cell(v)
                               for c, v in zip(header, cells)})

    snapshots = []
    fdir = run_dir / "fields"
    if fdir.is_dir():
        for path in sorted(fdir.glob("*.bin")):
            snapshots.append(read_field(path))
    return RunArtifact(manifest=manifest, series=tuple(series),
                       snapshots=tuple(snapshots))
