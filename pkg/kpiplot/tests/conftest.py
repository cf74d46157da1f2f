import json
import struct
from pathlib import Path

import numpy as np
import pytest


def write_synthetic_run(run_dir: Path, columns=None, rows=None,
                        fields=None, done=True, manifest=None):
    """Build a run directory straight from the documented file layouts."""
    run_dir.mkdir(parents=True)
    (run_dir / "run.json").write_text(
        json.dumps(manifest or {"experiment": "synthetic", "verdict":
                                {"passed": True, "measured": {},
                                 "thresholds": {}}}, indent=2) + "\n")
    if columns:
        lines = [",".join(columns)]
        for row in rows:
            lines.append(",".join(format(v, ".17g") for v in row))
        (run_dir / "series.csv").write_text("\n".join(lines) + "\n")
    if fields:
        fdir = run_dir / "fields"
        fdir.mkdir()
        for n, (nx, ny, Lx, Ly, t, vals) in enumerate(fields):
            header = b"KPIF" + b"<" + b"\x00" * 3 + struct.pack(
                "=2q3d", nx, ny, Lx, Ly, t)
            (fdir / f"{n:04d}.bin").write_bytes(
                header + np.asarray(vals, dtype="<f8").tobytes(order="C"))
    if done:
        (run_dir / "DONE").write_text("")
    return run_dir


@pytest.fixture
def make_run(tmp_path):
    counter = [0]

    def factory(**kw):
        counter[0] += 1
        return write_synthetic_run(tmp_path / f"run{counter[0]}", **kw)

    return factory
