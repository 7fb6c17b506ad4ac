import numpy as np
import pytest

from ffchain.errors import NoOrbitError, StiffnessError
from ffchain.hopf import solve_hopf_point
from ffchain.network import ComplexResponse, PolyResponse, eval_gamma
from ffchain.reference import hopf_reference
from ffchain.sim import (
    integrate,
    measure_orbit,
    ode_residual,
    shift_trajectory,
    sweep_and_fit,
    sweep_orbits,
    worker_count,
)

ROTATION = ComplexResponse.from_terms(0, {(("Z0", 1),): 1j})


def test_zero_field_is_constant():
    f = PolyResponse.from_terms(2, 1, {(1, 0, 0, 0): 0.0})
    tr = integrate(f, [[1.0], [2.0], [3.0]], (0, 5))
    assert np.all(tr.states == tr.states[0])
    assert np.all(np.diff(tr.times) > 0)


def test_rotation_one_period():
    tr = integrate(ROTATION, [1.0 + 0j], (0, 2 * np.pi), tol=1e-12)
    assert abs(tr.complex_cells()[-1, 0] - 1.0) <= 1e-9
    assert tr.stats["steps"] > 0 and tr.stats["tol"] == 1e-12


def test_rotation_radius_drift():
    tr = integrate(ROTATION, [1.0 + 0j], (0, 2000 * np.pi), tol=1e-12, t_store=2000 * np.pi)
    assert abs(abs(tr.complex_cells()[-1, 0]) - 1.0) <= 1e-8


def test_single_cell_limit_cycle():
    f = hopf_reference(0, alpha=1.0)
    tr = integrate(f, [0.5 + 0j], (0, 2000), lam=0.01)
    assert abs(abs(tr.complex_cells()[-1, 0]) - 0.1) <= 1e-4


def test_dense_output():
    # cubic Hermite error scales like h**4; long steps need a step cap
    t = np.linspace(0, 10, 37)
    for max_step, bound in ((np.inf, 1e-5), (0.05, 5e-8), (0.01, 1e-10)):
        tr = integrate(ROTATION, [1.0 + 0j], (0, 10), tol=1e-12, max_step=max_step)
        y = tr.interpolate(t)[:, 0]
        assert np.max(np.abs(y[:, 0] + 1j * y[:, 1] - np.exp(1j * t))) <= bound


def test_methods_agree():
    f = hopf_reference(2)
    x0 = np.array([0.3, 0.1 + 0.2j, -0.1j])
    a = integrate(f, x0, (0, 20), lam=1e-2, method="dop853", t_store=20)
    b = integrate(f, x0, (0, 20), lam=1e-2, method="dopri5", t_store=20)
    assert np.max(np.abs(a.states[-1] - b.states[-1])) <= 1e-7


def test_tolerance_bounds_and_shapes():
    with pytest.raises(ValueError):
        integrate(ROTATION, [1.0 + 0j], (0, 1), tol=1e-14)
    with pytest.raises(ValueError):
        integrate(ROTATION, [1.0 + 0j], (0, 1), tol=1e-5)
    with pytest.raises(ValueError):
        integrate(ROTATION, [1.0, 2.0], (0, 1))


def test_stiffness_error():
    blowup = PolyResponse.from_terms(0, 1, {(2, 0): 1.0})
    with pytest.raises(StiffnessError, match="underflow"):
        integrate(blowup, [[1.0]], (0, 2))


def test_orbit_matches_solver():
    fc = hopf_reference(2)
    m = measure_orbit(fc, 1e-3)
    s = solve_hopf_point(fc, 1e-3)
    assert np.allclose(m.amplitudes[1:], np.abs(s.B), rtol=1e-2)
    assert abs(m.omega - s.omega) <= 1e-2 * s.omega
    assert m.amplitudes[0] == 0 and m.cell == 1


def test_r2_seed_keeps_leading_zero():
    m = measure_orbit(hopf_reference(2), 1e-3, r=2)
    assert m.amplitudes[1] <= 1e-8
    assert m.cell == 2


def test_wrong_side_raises():
    with pytest.raises(NoOrbitError):
        measure_orbit(hopf_reference(2), -1e-3)
    with pytest.raises(ValueError):
        measure_orbit(hopf_reference(2).to_real(), 1e-3)


def test_shift_trajectory_residual():
    fc = hopf_reference(3)
    x0 = np.array([0.0, 0.05, 0.2 + 0.1j, 0.3])
    tr = integrate(fc, x0, (0, 30), lam=1e-2, tol=1e-10)
    assert ode_residual(fc, tr, 1e-2) <= 1e-9
    sh = shift_trajectory(tr)
    assert ode_residual(fc, sh, 1e-2) <= 1e-9
    assert np.array_equal(sh.states[:, 1], tr.states[:, 0])
    # a trajectory of another system does not pass
    other = integrate(hopf_reference(3, beta=2.0), x0, (0, 30), lam=1e-2, tol=1e-10)
    assert ode_residual(fc, other, 1e-2) > 1e-6


def test_derivs_match_field():
    fc = hopf_reference(2)
    tr = integrate(fc, np.array([0.1, 0.2, 0.3j]), (0, 3), lam=1e-2)
    fr = fc.to_real()
    assert np.allclose(tr.derivs[-1], eval_gamma(fr, tr.states[-1], 1e-2), atol=1e-14)


def test_sweep_and_fit_steady_and_solver():
    from ffchain.fitting import log_grid
    from ffchain.reference import steady_reference

    fit = sweep_and_fit(steady_reference(), log_grid(1e-8, 1e-4, 10), which="steady")
    assert abs(fit.fits[2].slope - 0.5) <= 0.01
    fit = sweep_and_fit(hopf_reference(), log_grid(1e-10, 1e-4, 10), which="hopf-solver")
    assert abs(fit.fits[1].slope - 0.5) <= 0.01 and fit.theory[3] == pytest.approx(1 / 18)
    with pytest.raises(ValueError):
        sweep_and_fit(hopf_reference(), [1e-3], which="other")


def test_sweep_orbits_threads(monkeypatch):
    monkeypatch.setenv("FFCHAIN_THREADS", "2")
    assert worker_count() == 2
    table = sweep_orbits(hopf_reference(1), [1e-2, 2e-2], transient_factor=20)
    assert table.amplitudes.shape == (2, 2)
    assert np.all(table.periods > 0)
    assert table.as_array().shape[1] == len(table.header())
