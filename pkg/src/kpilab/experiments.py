"""Experiment drivers: uniqueness, blow-up bound, linearized iteration,
persistence, and gain of regularity, each returning a pass/fail verdict
with the measured quantities and thresholds that produced it.

Concurrency: independent cells (seeds, amplitudes, resolutions) run on a
thread pool sized by the KPILAB_THREADS environment variable (default 1);
results are merged in configuration order, so verdicts and series are
identical at any thread count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .spectral import Field, Grid2D, deriv, inv_dx, make_grid, weighted_integral
from .weights import (WeightSpec, build_weight, validate_weight,
                      persistence_weight_family, WeightError)
from .norms import x_norm, zt_norm, multi_indices
from .dynamics import (SolverConfig, Trajectory, solve, linear_solve,
                       picard_iterate, rhs, initial_data, admissible_dt)

_OPS = {
    "<=": lambda a, b: a <= b,
    ">=": lambda a, b: a >= b,
    "finite": lambda a, b: math.isfinite(a),
}


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    nx: int
    ny: int
    Lx: float
    Ly: float
    data: dict
    solver: SolverConfig
    L: int = 2
    sigma: float = 0.5
    seeds: tuple[int, ...] = (0,)
    resolutions: tuple[int, ...] = ()
    n_iters: int = 4
    amplitudes: tuple[float, ...] = ()
    K: int = 3
    c_margin: float = 10.0
    t_min_frac: float = 0.1
    weight_window: float = 0.75

    def __post_init__(self):
        known = {"uniqueness", "blowup_bound", "picard", "persistence", "gain"}
        if self.name not in known:
            raise ValueError(f"unknown experiment {self.name!r}; have {sorted(known)}")
        if self.L < 2:
            raise ValueError("regularity index L must be >= 2")
        if self.n_iters < 1:
            raise ValueError("n_iters must be >= 1")

    def grid(self, nx: int | None = None) -> Grid2D:
        return make_grid(nx or self.nx, self.ny, self.Lx, self.Ly)

    def datum(self, grid: Grid2D, **overrides) -> Field:
        params = {**self.data, **overrides}
        kind = params.pop("kind")
        return initial_data(grid, kind, **params)


@dataclass(frozen=True)
class Verdict:
    name: str
    passed: bool
    measured: dict[str, float]
    thresholds: dict[str, tuple[str, float]]
    series: tuple[dict, ...] = ()
    artifact_path: str | None = None

    def __post_init__(self):
        ok = all(_OPS[op](self.measured[key], bound)
                 for key, (op, bound) in self.thresholds.items())
        if ok != self.passed:
            raise ValueError("passed flag inconsistent with measured/thresholds")


def _verdict(name: str, checks: dict[str, tuple[float, str, float]],
             extra: dict[str, float] | None = None,
             series: tuple[dict, ...] = ()) -> Verdict:
    measured = {k: v for k, (v, _, _) in checks.items()}
    thresholds = {k: (op, bound) for k, (_, op, bound) in checks.items()}
    passed = all(_OPS[op](v, bound) for v, op, bound in checks.values())
    if extra:
        measured.update(extra)
    return Verdict(name=name, passed=passed, measured=measured,
                   thresholds=thresholds, series=series)


def thread_count() -> int:
    return max(1, int(os.environ.get("KPILAB_THREADS", "1")))


def _map_ordered(fn, items):
    items = list(items)
    n = thread_count()
    if n == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _validated_weight(spec: WeightSpec, grid: Grid2D, window: float, T: float):
    w = build_weight(spec, grid, window)
    report = validate_weight(w, grid, T)
    if not report.ok:
        raise WeightError(f"weight {spec} failed validation: {report.violations}")
    return w


def _l2_diff(a: Field, b: Field) -> float:
    g = a.grid
    return float(np.sqrt(np.sum(np.abs(a.spec() - b.spec()) ** 2)
                         * g.cell / (g.nx * g.ny)))


# --- uniqueness -------------------------------------------------------------

def _twin_difference(phi: Field, config: SolverConfig) -> tuple[np.ndarray, np.ndarray, Trajectory, Trajectory]:
    """Same datum under dt and dt/2; squared L2 difference at shared times.

    The step is snapped to an exact divisor of T first, so the halved run
    records at exactly the same times and the difference measures the
    scheme, not a sampling offset.
    """
    n_steps = max(1, math.ceil(config.T / config.dt - 1e-9))
    coarse_cfg = replace(config, dt=config.T / n_steps)
    coarse = solve(phi, coarse_cfg)
    fine_cfg = replace(config, dt=config.T / (2 * n_steps),
                       record_every=2 * config.record_every)
    fine = solve(phi, fine_cfg)
    ts, e2 = [], []
    for a, b in zip(coarse.snapshots, fine.snapshots):
        if abs(a.time - b.time) > 1e-9 * max(config.T, 1.0):
            raise RuntimeError("twin snapshot times diverged")
        ts.append(a.time)
        e2.append(_l2_diff(a, b) ** 2)
    return np.array(ts), np.array(e2), coarse, fine


def _fit_growth_rate(ts: np.ndarray, e2: np.ndarray) -> float:
    """Log-linear least-squares slope over the second half of the run."""
    half = len(ts) // 2
    t, e = ts[half:], e2[half:]
    keep = e > 0
    if keep.sum() < 2:
        return 0.0
    return float(np.polyfit(t[keep], np.log(e[keep]), 1)[0])


def run_uniqueness(config: ExperimentConfig) -> Verdict:
    grid = config.grid()
    phi = config.datum(grid)
    ts, e2, coarse, fine = _twin_difference(phi, config.solver)
    series = tuple({"t": float(t), "w2": float(e)} for t, e in zip(ts, e2))

    if not np.any(e2 > 0):
        checks = {"max_w2": (0.0, "<=", 0.0)}
        return _verdict("uniqueness", checks, series=series)

    # Envelope from the first recorded divergence with the fitted rate.
    i1 = int(np.argmax(e2 > 0))
    t1, e1 = ts[i1], e2[i1]
    C_fit = _fit_growth_rate(ts, e2)
    # Smallest rate for which the anchored envelope holds at every snapshot;
    # finiteness of this rate is the Gronwall statement.
    later = e2[i1 + 1:] > 0
    slopes = (np.log(e2[i1 + 1:][later] / e1)) / (ts[i1 + 1:][later] - t1)
    C_env = float(np.max(slopes)) if slopes.size else 0.0
    envelope_ok = all(
        e <= e1 * math.exp(C_env * (t - t1)) * (1.0 + 1e-9)
        for t, e in zip(ts[i1:], e2[i1:]))

    # Rate against the solution-size structure: C ~ c (||u|| + ||v||).
    size = x_norm(coarse.final(), 0).value + x_norm(fine.final(), 0).value

    # Scheme order: e2 at final time under dt halving (Richardson).
    errs = []
    ref = solve(phi, replace(config.solver, dt=config.solver.dt / 8.0,
                             record_every=10 ** 9))
    for div in (1, 2, 4):
        tr = solve(phi, replace(config.solver, dt=config.solver.dt / div,
                                record_every=10 ** 9))
        errs.append(_l2_diff(tr.final(), ref.final()))
    order = float(np.log2(errs[0] / errs[1]) + np.log2(errs[1] / errs[2])) / 2.0

    checks = {
        "envelope_rate": (C_env, "finite", 0.0),
        "envelope_violations": (0.0 if envelope_ok else 1.0, "<=", 0.0),
        "scheme_order": (order, ">=", 3.5),
    }
    extra = {"fit_rate": C_fit, "solution_size": size,
             "rate_per_size": C_env / size if size > 0 else 0.0}
    return _verdict("uniqueness", checks, extra=extra, series=series)


def gronwall_scaling(config: ExperimentConfig,
                     base_scale: float = 1.0) -> dict[str, float]:
    """Fitted growth rates at the given datum scale and at twice it.

    The a priori structure puts the rate proportional to the solution
    size ||u|| + ||v||, so the returned quotient compares the rate ratio
    against the measured size ratio rather than the datum ratio (the
    doubled datum steepens, so its solution is more than twice as large).
    """
    grid = config.grid()
    base = config.datum(grid)

    def scaled(s: float) -> Field:
        return Field.from_spec(grid, s * base.spec(), time=base.time,
                               zero_x_mean=base.zero_x_mean)

    def one(scale: float) -> tuple[float, float]:
        phi = scaled(scale)
        # Headroom under the advective bound for nonlinear steepening.
        adm = admissible_dt(phi, config.solver.cfl_safety)
        solver = replace(config.solver, dt=min(config.solver.dt, 0.6 * adm))
        ts, e2, coarse, fine = _twin_difference(phi, solver)
        rate = _fit_growth_rate(ts, e2)
        size = max(x_norm(a, 0).value + x_norm(b, 0).value
                   for a, b in zip(coarse.snapshots, fine.snapshots))
        return rate, size

    (r1, s1), (r2, s2) = _map_ordered(one, (base_scale, 2.0 * base_scale))
    quotient = (r2 / r1) / (s2 / s1) if r1 > 0 and s1 > 0 else math.inf
    return {"rate_base": r1, "rate_doubled": r2, "size_base": s1,
            "size_doubled": s2, "scaling_quotient": quotient}


# --- blow-up bound ----------------------------------------------------------

def run_blowup_bound(config: ExperimentConfig) -> Verdict:
    grid = config.grid()
    phi = config.datum(grid)
    traj = solve(phi, config.solver)
    ts = np.array(traj.times)
    h = np.array([x_norm(s, 0).value ** 2 for s in traj.snapshots])
    series = tuple({"t": float(t), "h": float(v)} for t, v in zip(ts, h))

    if h[0] == 0.0:
        return _verdict("blowup_bound", {"c_fit": (0.0, "finite", 0.0)},
                        series=series)

    hp = np.gradient(h, ts)
    c_fit = max(0.0, float(np.max(hp / h ** 1.5)))
    lhs = h ** -0.5
    rhs = h[0] ** -0.5 - 0.5 * c_fit * ts
    worst = float(np.min(lhs - rhs))
    checks = {
        "c_fit": (c_fit, "finite", 0.0),
        "bound_margin": (-worst, "<=", 1e-12 * float(lhs[0])),
    }
    return _verdict("blowup_bound", checks, series=series)


# --- linearized iteration ---------------------------------------------------

def _iteration_errors(phi: Field, n_iters: int,
                      config: SolverConfig) -> tuple[list[float], float]:
    """sup-in-t L2 errors of the iterates against the nonlinear run, plus
    the discretization floor (error of iterating on the exact coefficient)."""
    cfg = replace(config, record_every=1)
    oracle = solve(phi, cfg)
    iterates = picard_iterate(phi, n_iters, cfg)

    def sup_err(traj: Trajectory) -> float:
        return max(_l2_diff(a, b)
                   for a, b in zip(traj.snapshots, oracle.snapshots))

    errs = [sup_err(tr) for tr in iterates]
    floor = sup_err(linear_solve(phi, oracle, cfg))
    return errs, floor


def _contracts(errs: list[float], floor: float, ratio: float = 0.5) -> bool:
    """Each step must shrink by the ratio or be at the discretization floor."""
    tol = 2.0 * floor
    return all(e_next <= max(ratio * e, tol)
               for e, e_next in zip(errs, errs[1:]))


def critical_time(phi: Field, n_iters: int, config: SolverConfig,
                  max_halvings: int = 6) -> float:
    """Largest horizon in the halving ladder where the iteration contracts."""
    T = config.T
    for _ in range(max_halvings + 1):
        errs, floor = _iteration_errors(phi, n_iters, replace(config, T=T))
        if _contracts(errs, floor):
            return T
        T /= 2.0
    return 0.0


def _smallest_admissible_c(phi: Field, v: Trajectory, w: Trajectory) -> float:
    """Empirical constant in the a priori bound
    ||v||^2_{Zt0} <= data terms + c t ||w||_{Zt0} ||v||^2_{Zt0}."""
    data = (weighted_integral(phi, phi)
            + weighted_integral(deriv(phi, (3, 0)), deriv(phi, (3, 0)))
            + weighted_integral(deriv(phi, (0, 2)), deriv(phi, (0, 2))))
    ut0 = rhs(phi)
    data += weighted_integral(ut0, ut0)
    v_norm = zt_norm(v, 0).value
    w_norm = zt_norm(w, 0).value
    t = v.times[-1]
    if t <= 0 or w_norm == 0 or v_norm == 0:
        return 0.0
    return max(0.0, (v_norm ** 2 - data) / (t * w_norm * v_norm ** 2))


def run_picard(config: ExperimentConfig) -> Verdict:
    grid = config.grid()
    amplitudes = config.amplitudes or (config.data.get("amplitude", 1e-3),)

    def one(amp: float):
        phi = config.datum(grid, amplitude=amp)
        errs, floor = _iteration_errors(phi, config.n_iters, config.solver)
        Tc = critical_time(phi, config.n_iters, config.solver)
        return errs, floor, Tc, phi

    cells = _map_ordered(one, amplitudes)
    errs0, floor0, Tc0, phi0 = cells[0]
    contracts = _contracts(errs0, floor0)

    tcs = [Tc for _, _, Tc, _ in cells]
    monotone = all(a >= b - 1e-12 for a, b in zip(tcs, tcs[1:]))

    cfg = replace(config.solver, record_every=1)
    iterates = picard_iterate(phi0, config.n_iters, cfg)
    c_min = _smallest_admissible_c(phi0, iterates[-1], iterates[-2]) \
        if config.n_iters >= 2 else 0.0

    series = tuple({"n": n + 1, "sup_error": float(e)}
                   for n, e in enumerate(errs0))
    checks = {
        "contraction_violations": (0.0 if contracts else 1.0, "<=", 0.0),
        "tc_monotone_violations": (0.0 if monotone else 1.0, "<=", 0.0),
    }
    extra = {"floor": floor0, "smallest_admissible_c": c_min}
    extra.update({f"critical_time_amp{amp:g}": tc
                  for amp, tc in zip(amplitudes, tcs)})
    return _verdict("picard", checks, extra=extra, series=series)


# --- persistence ------------------------------------------------------------

def run_persistence(config: ExperimentConfig) -> Verdict:
    grid = config.grid()
    phi = config.datum(grid)
    family = persistence_weight_family(config.K, grid, config.weight_window)
    for w in family:
        report = validate_weight(w, grid, max(config.solver.T, 1.0))
        if not report.ok:
            raise WeightError(f"persistence weight i={w.spec.i} invalid: "
                              f"{report.violations}")
    traj = solve(phi, config.solver)

    alphas = [(a1, a2) for a1, a2 in multi_indices(config.K) if a1 != 0]

    def monitor(snap: Field, a1: int, a2: int) -> float:
        du = deriv(snap, (a1, a2))
        return weighted_integral(du, du, family[a1], window=config.weight_window)

    series = []
    monitors = {a: [] for a in alphas}
    for snap in traj.snapshots:
        row = {"t": snap.time}
        for a1, a2 in alphas:
            m = monitor(snap, a1, a2)
            monitors[(a1, a2)].append(m)
            row[f"M_{a1}{a2}"] = m
        series.append(row)

    ts = np.array(traj.times)
    dissipation = {}
    for a1, a2 in alphas:
        vals = []
        for snap in traj.snapshots:
            dux = deriv(snap, (a1 + 1, a2))
            gx = 3.0 * family[a1].eval(grid.x, snap.time, 1)
            vals.append(weighted_integral(dux, dux, gx,
                                          window=config.weight_window))
        dissipation[(a1, a2)] = float(np.trapezoid(vals, ts))

    checks = {}
    for (a1, a2), vals in monitors.items():
        bound = config.c_margin * max(vals[0], 1.0)
        checks[f"max_M_{a1}{a2}"] = (float(max(vals)), "<=", bound)
    extra = {f"dissipation_{a1}{a2}": v for (a1, a2), v in dissipation.items()}
    return _verdict("persistence", checks, extra=extra, series=tuple(series))


# --- gain of regularity -----------------------------------------------------

def _gain_alpha(config: ExperimentConfig) -> tuple[int, int]:
    return (2 * config.L - 1, 0)


def _gain_weight_spec(config: ExperimentConfig, alpha: tuple[int, int]) -> WeightSpec:
    i = 2 * config.L - sum(alpha) - alpha[1]
    k = sum(alpha) - config.L
    if i < 1:
        raise ValueError(f"alpha={alpha} leaves no polynomial growth (i={i})")
    return WeightSpec(sigma=config.sigma, i=i, k=k)


def _gain_cell(config: ExperimentConfig, nx: int, smooth: bool) -> dict:
    grid = config.grid(nx)
    alpha = _gain_alpha(config)
    if smooth:
        phi = initial_data(grid, "gaussian", amplitude=0.1,
                           x_width=1.5, y_width=0.25 * config.Ly)
    else:
        params = dict(config.data)
        params.setdefault("mode_budget", (4 * max(config.resolutions), config.ny))
        phi = config.datum(grid, **{k: v for k, v in params.items() if k != "kind"})
    q0 = weighted_integral(deriv(phi, alpha), deriv(phi, alpha))

    f = _validated_weight(_gain_weight_spec(config, alpha), grid,
                          config.weight_window, config.solver.T)
    traj = solve(phi, config.solver)
    t_min = config.t_min_frac * config.solver.T
    sup_f = 0.0
    diss_vals, diss_ts = [], []
    for snap in traj.snapshots:
        du = deriv(snap, alpha)
        dux = deriv(snap, (alpha[0] + 1, alpha[1]))
        if snap.time >= t_min:
            sup_f = max(sup_f, weighted_integral(
                du, du, f, window=config.weight_window))
        gx = 3.0 * f.eval(grid.x, snap.time, 1)
        diss_vals.append(weighted_integral(dux, dux, gx,
                                           window=config.weight_window))
        diss_ts.append(snap.time)
    q1 = sup_f + float(np.trapezoid(diss_vals, diss_ts))
    return {"nx": nx, "q0": float(q0), "q1": float(q1)}


def run_gain(config: ExperimentConfig) -> Verdict:
    if len(config.resolutions) < 3:
        raise ValueError("gain study needs at least three resolutions")
    res = tuple(sorted(config.resolutions))

    smooth_cells = _map_ordered(lambda nx: _gain_cell(config, nx, True), res)
    s0 = [c["q0"] for c in smooth_cells]
    s1 = [c["q1"] for c in smooth_cells]
    control_drift = max(
        abs(s0[-1] / s0[-2] - 1.0) if s0[-2] else 0.0,
        abs(s1[-1] / s1[-2] - 1.0) if s1[-2] else 0.0)

    # Control must stabilize before the rough study means anything.
    if control_drift > 0.25:
        checks = {"control_drift": (control_drift, "<=", 0.25)}
        return _verdict("gain", checks)

    rough_cells = _map_ordered(lambda nx: _gain_cell(config, nx, False), res)
    q0 = [c["q0"] for c in rough_cells]
    q1 = [c["q1"] for c in rough_cells]
    growth = min(b / a for a, b in zip(q0, q0[1:]))
    q1_drift = abs(q1[-1] / q1[-2] - 1.0) if q1[-2] else math.inf

    series = tuple({"nx": c["nx"], "q0": c["q0"], "q1": c["q1"],
                    "control_q0": sc["q0"], "control_q1": sc["q1"]}
                   for c, sc in zip(rough_cells, smooth_cells))
    checks = {
        "control_drift": (control_drift, "<=", 0.25),
        "q0_growth_per_doubling": (growth, ">=", 4.0),
        "q1_drift": (q1_drift, "<=", 0.25),
    }
    return _verdict("gain", checks, series=series)


_RUNNERS = {
    "uniqueness": run_uniqueness,
    "blowup_bound": run_blowup_bound,
    "picard": run_picard,
    "persistence": run_persistence,
    "gain": run_gain,
}


def run_experiment(config: ExperimentConfig) -> Verdict:
    return _RUNNERS[config.name](config)
