"""The five figure kinds rendered from completed run directories.

Rendering is read-only and deterministic: no timestamps are embedded, so
the same inputs produce the same image bytes.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .reader import Run, RunReadError, read_run, require_columns

KINDS = ("norm_series", "term_breakdown", "refinement", "spectrum",
         "weight_profile")


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    sources: tuple[Path, ...]
    output: Path

    def __post_init__(self):
        if self.kind not in KINDS:
            raise RunReadError(
                f"unknown figure kind {self.kind!r}; have {list(KINDS)}")
        if not self.sources:
            raise RunReadError("need at least one run directory")


def _label(run: Run, name: str, many: bool) -> str:
    return f"{run.label}:{name}" if many else name


def _norm_series(ax, runs: list[Run]):
    many = len(runs) > 1
    for run in runs:
        require_columns(run, ("t",), "norm_series")
        value_cols = [c for c in run.columns if c != "t"]
        if not value_cols:
            raise RunReadError(
                f"{run.path}: norm_series needs at least one value column "
                f"besides 't'; available: {sorted(run.series)}")
        for name in value_cols:
            ax.plot(run.series["t"], run.series[name],
                    label=_label(run, name, many))
    ax.set_xlabel("t")
    ax.set_yscale("log")
    ax.set_title("diagnostic series")


def _term_breakdown(ax, runs: list[Run]):
    many = len(runs) > 1
    needed = ("t", "dA", "B", "C", "D", "E")
    for run in runs:
        require_columns(run, needed, "term_breakdown")
        cols = [c for c in ("dA", "B", "C", "D", "E", "residual")
                if c in run.series]
        for name in cols:
            style = {"linestyle": "--", "color": "k"} if name == "residual" else {}
            ax.plot(run.series["t"], run.series[name],
                    label=_label(run, name, many), **style)
    ax.set_xlabel("t")
    ax.set_ylabel("identity terms")
    ax.axhline(0.0, color="0.8", linewidth=0.8, zorder=0)
    ax.set_title("energy-identity term breakdown")


def _refinement(ax, runs: list[Run]):
    many = len(runs) > 1
    for run in runs:
        require_columns(run, ("nx", "q0", "q1"), "refinement")
        nx = run.series["nx"]
        ax.plot(nx, run.series["q0"], "o-", label=_label(run, "q0", many))
        ax.plot(nx, run.series["q1"], "s-", label=_label(run, "q1", many))
        for extra in ("control_q0", "control_q1"):
            if extra in run.series:
                ax.plot(nx, run.series[extra], "--",
                        label=_label(run, extra, many))
    ax.set_xlabel("nx")
    ax.set_xscale("log", base=2)
    ax.set_yscale("log")
    ax.set_title("refinement study")


def _spectrum(ax, runs: list[Run]):
    many = len(runs) > 1
    drew = False
    for run in runs:
        if not run.fields:
            raise RunReadError(
                f"{run.path}: figure kind 'spectrum' needs fields/*.bin dumps")
        for dump in run.fields:
            coeffs = np.fft.fft(dump.values, axis=0) / dump.nx
            power = np.mean(np.abs(coeffs) ** 2, axis=1)
            xi = 2.0 * np.pi * np.fft.fftfreq(dump.nx,
                                              d=2.0 * dump.Lx / dump.nx)
            pos = xi > 0
            name = f"t={dump.t:g}"
            ax.plot(xi[pos], power[pos],
                    label=f"{run.label}:{name}" if many else name)
            drew = True
    assert drew
    ax.set_xlabel("xi")
    ax.set_ylabel("y-averaged power")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_title("x-spectrum")


def _weight_profile(ax, runs: list[Run]):
    many = len(runs) > 1
    for run in runs:
        require_columns(run, ("x", "f"), "weight_profile")
        x = run.series["x"]
        ax.plot(x, run.series["f"], label=_label(run, "f", many))
        for name in run.columns:
            if name in ("x", "f"):
                continue
            ax.plot(x, np.abs(run.series[name]), "--",
                    label=_label(run, f"|{name}|", many))
    ax.set_xlabel("x")
    ax.set_yscale("log")
    ax.set_title("weight profile")


_RENDERERS = {
    "norm_series": _norm_series,
    "term_breakdown": _term_breakdown,
    "refinement": _refinement,
    "spectrum": _spectrum,
    "weight_profile": _weight_profile,
}


def render(spec: FigureSpec) -> Path:
    runs = [read_run(p) for p in spec.sources]
    fig, ax = plt.subplots(figsize=(7.0, 4.5), dpi=120)
    try:
        _RENDERERS[spec.kind](ax, runs)
        ax.legend(loc="best", fontsize="small")
        fig.tight_layout()
        # Strip timestamp-like metadata so identical inputs give identical bytes.
        meta = {"Date": None} if spec.output.suffix == ".svg" else None
        fig.savefig(spec.output, metadata=meta)
    finally:
        plt.close(fig)
    if spec.output.stat().st_size == 0:
        raise RunReadError(f"{spec.output}: empty image written")
    return spec.output
