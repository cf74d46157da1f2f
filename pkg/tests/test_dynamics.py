import math

import numpy as np
import pytest

from kpilab.spectral import (Field, make_grid, deriv, inv_dx,
                             NotInDomainError, project_zero_x_mean,
                             random_band_limited)
from kpilab.dynamics import (CFLError, MarginError, SolverConfig, Trajectory,
                             dispersion_symbol, rhs, step, solve, linear_solve,
                             picard_iterate, admissible_dt, line_soliton,
                             soliton_speed, gaussian, rough, initial_data)


@pytest.fixture(scope="module")
def grid():
    return make_grid(64, 32, 10.0, 10.0)


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(dt=-0.1, T=1.0)
    with pytest.raises(ValueError):
        SolverConfig(dt=0.5, T=0.1)
    with pytest.raises(ValueError):
        SolverConfig(dt=0.1, T=1.0, scheme="euler")
    with pytest.raises(ValueError):
        SolverConfig(dt=0.1, T=1.0, record_every=0)


def test_dispersion_symbol_values():
    assert dispersion_symbol(1.0, 0.0) == pytest.approx(0.0)
    assert dispersion_symbol(2.0, 0.0) == pytest.approx(6.0j)
    assert dispersion_symbol(1.0, 2.0) == pytest.approx(4.0j)
    assert dispersion_symbol(0.0, 3.0) == 0.0  # annihilated column
    sym = dispersion_symbol(np.array([0.0, 1.0, -1.0]), np.array(1.0))
    assert np.all(sym.real == 0.0)  # purely imaginary: unitary linear flow


def test_linear_flow_unitary(grid):
    u = random_band_limited(grid, np.random.default_rng(0))
    cfg = SolverConfig(dt=0.01, T=0.2, check_margin=False)

    def no_nonlin(spec, t):
        return np.zeros_like(spec)

    from kpilab.dynamics import _march
    traj = _march(u, cfg, nonlin=no_nonlin)
    assert traj.final().l2() == pytest.approx(u.l2(), rel=1e-12)


def test_rhs_zero_mean_invariance(grid):
    u = random_band_limited(grid, np.random.default_rng(1))
    r = rhs(u)
    assert np.max(np.abs(r.spec()[0, :])) == 0.0


def test_rhs_domain_check(grid):
    vals = np.ones((grid.nx, grid.ny)) * grid.y[None, :]  # x-mean varies in y
    u = Field.from_phys(grid, vals)
    with pytest.raises(NotInDomainError):
        rhs(u)


def test_cfl_enforced(grid):
    u = line_soliton(grid, c=1.0)
    adm = admissible_dt(u, 0.5)
    with pytest.raises(CFLError):
        step(u, 2.0 * adm)


def test_margin_error():
    grid = make_grid(64, 16, 5.0, 5.0)  # box too small for the soliton tail
    u = gaussian(grid, amplitude=0.5, x_width=2.5)
    cfg = SolverConfig(dt=0.005, T=0.4, margin_tol=1e-9)
    with pytest.raises(MarginError):
        solve(u, cfg)


def test_trajectory_invariants(grid):
    u = gaussian(grid, amplitude=0.1)
    cfg = SolverConfig(dt=0.01, T=0.05, check_margin=False)
    traj = solve(u, cfg)
    assert np.all(np.diff(traj.times) > 0)
    assert traj.final().time == pytest.approx(0.05)
    assert "l2_series" in traj.provenance
    with pytest.raises(ValueError):
        Trajectory(snapshots=(u.with_time(1.0), u.with_time(0.5)), config=cfg)


def test_soliton_travels_at_its_speed():
    grid = make_grid(512, 16, 40.0, 10.0)
    c = 1.0
    phi = line_soliton(grid, c=c, x0=-10.0)
    T = 1.0
    traj = solve(phi, SolverConfig(dt=2.5e-3, T=T, record_every=400))
    exact = line_soliton(grid, c=c, x0=-10.0 + soliton_speed(c) * T)
    err = np.max(np.abs(traj.final().phys() - exact.phys())) / np.max(phi.phys())
    assert err < 1e-6


def test_temporal_convergence_order():
    grid = make_grid(64, 32, 10.0, 10.0)
    phi = gaussian(grid, amplitude=0.5)
    T = 0.2
    ref = solve(phi, SolverConfig(dt=T / 256, T=T, record_every=10 ** 9,
                                  check_margin=False)).final()
    errs = []
    for n in (8, 16, 32):
        out = solve(phi, SolverConfig(dt=T / n, T=T, record_every=10 ** 9,
                                      check_margin=False)).final()
        errs.append(float(np.sqrt(np.mean((out.phys() - ref.phys()) ** 2))))
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert min(orders) >= 3.5


def test_linear_solve_matches_nonlinear_when_coeff_is_solution(grid):
    phi = gaussian(grid, amplitude=0.2)
    cfg = SolverConfig(dt=0.01, T=0.1, record_every=1, check_margin=False)
    oracle = solve(phi, cfg)
    relin = linear_solve(phi, oracle, cfg)
    err = max(np.max(np.abs(a.phys() - b.phys()))
              for a, b in zip(relin.snapshots, oracle.snapshots))
    assert err < 1e-5


def test_picard_iterates_converge(grid):
    phi = gaussian(grid, amplitude=1e-2)
    cfg = SolverConfig(dt=0.01, T=0.2, check_margin=False)
    oracle = solve(phi, cfg.__class__(dt=cfg.dt, T=cfg.T, record_every=1,
                                      check_margin=False))
    iterates = picard_iterate(phi, 3, cfg)
    errs = [max(np.max(np.abs(a.phys() - b.phys()))
                for a, b in zip(tr.snapshots, oracle.snapshots))
            for tr in iterates]
    assert errs[-1] <= errs[0]


def test_initial_data_catalog(grid):
    for kind, params in [("gaussian", {}), ("line_soliton", {"c": 0.5}),
                         ("rough", {"spectral_slope": 3.0, "seed": 0})]:
        u = initial_data(grid, kind, **params)
        assert u.grid == grid
    with pytest.raises(Exception):
        initial_data(grid, "nope")


def test_gaussian_zero_x_mean(grid):
    u = gaussian(grid, amplitude=1.0)
    assert u.zero_column_rel_energy() < 1e-20


def test_rough_reproducible_and_refinable():
    g1 = make_grid(64, 32, 20.0, 10.0)
    g2 = make_grid(128, 32, 20.0, 10.0)
    kw = dict(spectral_slope=3.0, seed=7, amplitude=0.1,
              mode_budget=(256, 32))
    a = rough(g1, **kw)
    b = rough(g1, **kw)
    assert np.array_equal(a.phys(), b.phys())
    c = rough(g2, **kw)
    assert np.max(np.abs(c.phys())) == pytest.approx(0.1, rel=1e-12)
    # refining keeps the low modes drawn from the shared budget lattice
    assert a.zero_column_rel_energy() < 1e-20
    assert c.zero_column_rel_energy() < 1e-20


def test_rough_amplitude_and_center():
    g = make_grid(128, 32, 40.0, 10.0)
    u = rough(g, spectral_slope=3.0, seed=1, amplitude=0.05, x_center=-15.0,
              envelope_width=3.0)
    vals = np.abs(u.phys())
    assert np.max(vals) == pytest.approx(0.05, rel=1e-12)
    ix = np.unravel_index(np.argmax(vals), vals.shape)[0]
    assert abs(g.x[ix] + 15.0) < 6.0
