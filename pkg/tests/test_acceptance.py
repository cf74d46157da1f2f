"""End-to-end acceptance suite: every numbered check pins one deliverable
behavior of the lab with explicit tolerances.

These run the real configurations (minutes, not seconds); module-level
fixtures share the expensive trajectories between checks.
"""

import math

import numpy as np
import pytest

from kpilab.spectral import (Field, make_grid, deriv, inv_dx,
                             project_zero_x_mean, random_band_limited)
from kpilab.weights import (WeightSpec, build_weight, validate_weight,
                            antiderivative_weight)
from kpilab.norms import linf_embedding_ratio, anisotropic_Ln_ratio
from kpilab.dynamics import (SolverConfig, Trajectory, solve, line_soliton,
                             soliton_speed, gaussian)
from kpilab.identities import (check_leibniz, leibniz_terms,
                               main_equality_terms, ibp_identity_check,
                               main_inequality_monitor)
from kpilab.experiments import (ExperimentConfig, run_experiment,
                                gronwall_scaling)
from kpilab.io import make_artifact, write_artifact


# --- 1. antiderivative inverts the x-derivative ------------------------------

def test_01_inv_dx_is_right_inverse():
    grid = make_grid(128, 128, 20.0, 20.0)
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(50):
        u = random_band_limited(grid, rng)
        back = deriv(inv_dx(u), (1, 0))
        forward = inv_dx(deriv(u, (1, 0)))
        scale = max(np.max(np.abs(u.phys())), 1e-300)
        worst = max(worst,
                    np.max(np.abs(back.phys() - u.phys())) / scale,
                    np.max(np.abs(forward.phys() - u.phys())) / scale)
    assert worst <= 1e-12


# --- 2. soliton propagation --------------------------------------------------

@pytest.fixture(scope="module")
def soliton_run():
    grid = make_grid(512, 16, 40.0, 10.0)
    phi = line_soliton(grid, c=1.0, x0=-10.0)
    traj = solve(phi, SolverConfig(dt=2.5e-3, T=1.0, record_every=40))
    return grid, phi, traj


def test_02_soliton_translates_exactly(soliton_run):
    grid, phi, traj = soliton_run
    exact = line_soliton(grid, c=1.0, x0=-10.0 + soliton_speed(1.0) * 1.0)
    diff = Field.from_phys(grid, traj.final().phys() - exact.phys())
    assert diff.l2() / phi.l2() <= 1e-6
    drift = abs(traj.final().l2() - phi.l2()) / phi.l2()
    assert drift <= 1e-8


# --- 3. temporal convergence order -------------------------------------------

def test_03_temporal_order():
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


# --- 4. Leibniz expansion ----------------------------------------------------

def test_04_leibniz_expansion():
    grid = make_grid(64, 64, 10.0, 10.0)
    rng = np.random.default_rng(4)
    alphas = [(a1, a2) for a1 in range(5) for a2 in range(5) if a1 + a2 <= 4]
    for _ in range(10):
        u = random_band_limited(grid, rng, band=0.25)
        for alpha in alphas:
            assert check_leibniz(u, alpha) <= 1e-10, alpha
    for alpha in alphas:
        terms = leibniz_terms(alpha)
        assert sum(t.coeff for t in terms) == 2 ** sum(alpha)


# --- 5. energy identity along trajectories + static IBP ----------------------

@pytest.fixture(scope="module")
def identity_run():
    grid = make_grid(1024, 16, 40.0, 10.0)
    phi = line_soliton(grid, c=1.0, x0=-10.0)
    traj = solve(phi, SolverConfig(dt=2.5e-3, T=0.5, record_every=10))
    return grid, traj


def _subsample(traj: Trajectory, stride: int) -> Trajectory:
    return Trajectory(snapshots=traj.snapshots[::stride], config=traj.config,
                      provenance=dict(traj.provenance))


@pytest.mark.parametrize("i_pow", [1, 2])
@pytest.mark.parametrize("alpha", [(1, 0), (2, 0)])
def test_05a_energy_identity_residual_and_order(identity_run, i_pow, alpha):
    grid, traj = identity_run
    f = build_weight(WeightSpec(1.0, i_pow, 0), grid, 0.75)

    def rel_residual(tr):
        terms = main_equality_terms(tr, f, alpha)
        scale = max(tb.largest for tb in terms)
        return max(abs(tb.residual) for tb in terms) / scale

    fine = rel_residual(traj)
    coarse = rel_residual(_subsample(traj, 2))
    assert fine <= 1e-3
    order = math.log2(coarse / fine)
    assert order >= 2.0


def test_05b_energy_identity_trivial_alpha(identity_run):
    # y-derivative of a y-independent solution: all terms vanish identically
    grid, traj = identity_run
    f = build_weight(WeightSpec(1.0, 1, 0), grid, 0.75)
    for tb in main_equality_terms(_subsample(traj, 5), f, (1, 1)):
        assert abs(tb.residual) <= 1e-20


def test_05c_inequality_monitor(identity_run):
    grid, traj = identity_run
    f = build_weight(WeightSpec(1.0, 1, 0), grid, 0.75)
    for alpha in [(1, 0), (2, 0)]:
        for rec in main_inequality_monitor(_subsample(traj, 5), f, alpha):
            assert rec.holds


def test_05d_static_ibp_identities():
    # identity 2 integrates against f_xxx, whose taper needs nx=2048 on
    # this box before the quadrature error falls below 1e-8
    grid = make_grid(2048, 64, 20.0, 10.0)
    rng = np.random.default_rng(5)
    u = random_band_limited(grid, rng, band=0.1)
    v = random_band_limited(grid, rng, band=0.1)
    f = build_weight(WeightSpec(1.0, 1, 0), grid, 0.75)
    for alpha in [(1, 0), (2, 0), (1, 1)]:
        assert ibp_identity_check(u, f, alpha, 1, v=v) <= 1e-8
        for which in (2, 3, 4, 5):
            assert ibp_identity_check(u, f, alpha, which) <= 1e-8, (alpha, which)


# --- 6. weight classes -------------------------------------------------------

def test_06_weight_class_matrix():
    grid = make_grid(256, 32, 20.0, 10.0)
    for sigma in (0.0, 0.5, 1.0):
        for i in range(5):
            for k in range(4):
                w = build_weight(WeightSpec(sigma, i, k), grid, 0.75)
                report = validate_weight(w, grid, 1.0)
                assert report.ok, (sigma, i, k, report.violations)
                if sigma > 0:
                    F = antiderivative_weight(w)
                    assert F.spec == WeightSpec(sigma, i + 1, k)
                    assert validate_weight(F, grid, 1.0).ok


# --- 7. uniqueness / twin-run divergence -------------------------------------

@pytest.fixture(scope="module")
def uniqueness_config():
    return ExperimentConfig(
        name="uniqueness", nx=512, ny=16, Lx=40.0, Ly=10.0,
        data={"kind": "line_soliton", "c": 1.0, "x0": -10.0},
        solver=SolverConfig(dt=0.01, T=1.0, record_every=4))


def test_07a_uniqueness_envelope(uniqueness_config):
    verdict = run_experiment(uniqueness_config)
    assert verdict.passed, verdict.measured
    assert verdict.measured["scheme_order"] >= 3.5
    assert math.isfinite(verdict.measured["envelope_rate"])
    assert verdict.measured["envelope_violations"] == 0.0


def test_07b_divergence_rate_scales_with_solution_size(uniqueness_config):
    out = gronwall_scaling(uniqueness_config, base_scale=1.2)
    assert out["rate_base"] > 0 and out["rate_doubled"] > 0
    assert 1.0 / 1.5 <= out["scaling_quotient"] <= 1.5, out


# --- 8. finite-time bound on the squared norm --------------------------------

def test_08_blowup_bound():
    config = ExperimentConfig(
        name="blowup_bound", nx=128, ny=32, Lx=20.0, Ly=10.0,
        data={"kind": "gaussian", "amplitude": 0.5},
        solver=SolverConfig(dt=0.005, T=0.5, record_every=10,
                            margin_tol=5e-2))
    verdict = run_experiment(config)
    assert verdict.passed, verdict.measured
    assert math.isfinite(verdict.measured["c_fit"])


# --- 9. linearized iteration contracts ---------------------------------------

@pytest.fixture(scope="module")
def picard_config():
    return ExperimentConfig(
        name="picard", nx=64, ny=64, Lx=16.0, Ly=16.0,
        data={"kind": "gaussian", "amplitude": 1e-3},
        solver=SolverConfig(dt=0.01, T=0.5, margin_tol=5e-2),
        amplitudes=(1e-3, 1e-2, 1e-1), n_iters=4)


@pytest.fixture(scope="module")
def picard_verdict(picard_config):
    return run_experiment(picard_config)


def test_09_picard_contraction(picard_verdict):
    v = picard_verdict
    assert v.passed, v.measured
    assert v.measured["contraction_violations"] == 0.0
    assert v.measured["tc_monotone_violations"] == 0.0
    assert math.isfinite(v.measured["smallest_admissible_c"])
    # contraction horizon does not grow with amplitude
    tcs = [v.measured[f"critical_time_amp{a:g}"] for a in (1e-3, 1e-2, 1e-1)]
    assert all(a >= b - 1e-12 for a, b in zip(tcs, tcs[1:]))


# --- 10. persistence of weighted derivative monitors -------------------------

def test_10_persistence():
    config = ExperimentConfig(
        name="persistence", nx=256, ny=32, Lx=20.0, Ly=10.0,
        data={"kind": "gaussian", "amplitude": 0.5},
        solver=SolverConfig(dt=0.005, T=1.0, record_every=20,
                            margin_tol=5e-2),
        K=3, c_margin=10.0)
    verdict = run_experiment(config)
    assert verdict.passed, verdict.measured
    # every dissipation integral is finite and recorded
    for key, value in verdict.measured.items():
        if key.startswith("dissipation_"):
            assert math.isfinite(value)


# --- 11. gain of regularity under refinement ---------------------------------

def test_11_gain_of_regularity():
    config = ExperimentConfig(
        name="gain", nx=512, ny=32, Lx=70.0, Ly=10.0,
        data={"kind": "rough", "spectral_slope": 3.0, "seed": 11,
              "amplitude": 0.1, "x_center": -30.0, "envelope_width": 4.0,
              "mode_budget": (2048, 32)},
        solver=SolverConfig(dt=0.005, T=0.15, record_every=1,
                            margin_tol=0.1),
        L=2, sigma=0.5, resolutions=(128, 256, 512),
        t_min_frac=0.1, weight_window=0.75)
    verdict = run_experiment(config)
    assert verdict.passed, verdict.measured
    assert verdict.measured["q0_growth_per_doubling"] >= 4.0
    assert verdict.measured["control_drift"] <= 0.25
    assert verdict.measured["q1_drift"] <= 0.25


# --- 12. embedding-constant stability over a random corpus -------------------

def _corpus_field(grid, rng, band=0.25):
    jx = np.abs(np.fft.fftfreq(grid.nx) * grid.nx)[:, None]
    jy = np.abs(np.fft.fftfreq(grid.ny) * grid.ny)[None, :]
    mask = (jx <= band * grid.nx / 2) & (jy <= band * grid.ny / 2)
    mod = np.where(mask, 1.0 / (1.0 + jx + jy), 0.0)
    coeffs = mod * (rng.standard_normal((grid.nx, grid.ny))
                    + 1j * rng.standard_normal((grid.nx, grid.ny)))
    u = Field.from_phys(grid, np.fft.ifft2(coeffs).real)
    return project_zero_x_mean(u)


def test_12_embedding_ratio_stability():
    grid = make_grid(128, 128, 20.0, 20.0)
    linf_maxima, l4_maxima = [], []
    for seed in range(5):
        rng = np.random.default_rng(seed)
        linf = l4 = 0.0
        for _ in range(100):
            u = _corpus_field(grid, rng)
            linf = max(linf, linf_embedding_ratio(u))
            l4 = max(l4, anisotropic_Ln_ratio(u, 4))
        linf_maxima.append(linf)
        l4_maxima.append(l4)
    for maxima in (linf_maxima, l4_maxima):
        spread = (max(maxima) - min(maxima)) / min(maxima)
        assert spread <= 0.10, maxima


# --- 13. determinism ---------------------------------------------------------

def test_13a_identical_series_bytes(picard_config, picard_verdict, tmp_path):
    again = run_experiment(picard_config)
    d1 = write_artifact(make_artifact("picard", {}, 0, picard_verdict),
                        tmp_path / "a")
    d2 = write_artifact(make_artifact("picard", {}, 0, again), tmp_path / "b")
    assert (d1 / "series.csv").read_bytes() == (d2 / "series.csv").read_bytes()


def test_13b_verdict_independent_of_thread_count(picard_config,
                                                 picard_verdict, monkeypatch):
    monkeypatch.setenv("KPILAB_THREADS", "4")
    threaded = run_experiment(picard_config)
    assert threaded.measured == picard_verdict.measured
    assert threaded.series == picard_verdict.series
    assert threaded.passed == picard_verdict.passed
