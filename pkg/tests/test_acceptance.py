"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL`` line with the measured
figures, then asserts.
"""

import itertools
import time

import numpy as np
import pytest

from ffchain.fitting import fit_power_law, log_grid
from ffchain.hopf import (
    chain_state,
    extract_hopf_coefficients,
    hopf_branches,
    hopf_kappa,
    relative_equilibrium_residual,
    solve_hopf_point,
)
from ffchain.network import (
    PolyResponse,
    eval_gamma,
    gamma_jvp,
    grading_degree,
    shift_solution,
    sigma_bracket,
)
from ffchain.normform import almost_normal_form, check_decomposition, commutator, multiplicity_check
from ffchain.poly import Poly
from ffchain.reference import (
    hopf_perturbation,
    hopf_reference,
    steady_reference,
    well_conditioned_element,
    worked_example_n2,
)
from ffchain.ring import RingElement, homomorphism_residual
from ffchain.sim import integrate, measure_orbit, sweep_and_fit
from ffchain.steady import (
    shift_branch_residual,
    solve_steady_branches,
    steady_eigen_report,
)


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail, started):
        with capsys.disabled():
            status = "PASS" if ok else "FAIL"
            print(f"\ncriterion {number}: {status} ({time.perf_counter() - started:.1f} s) {detail}")
        return ok

    return emit


def test_criterion_1_ring_homomorphism(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(1000):
        n, d = int(rng.integers(0, 7)), int(rng.integers(1, 4))
        a, b = RingElement.random(rng, n, d), RingElement.random(rng, n, d)
        worst = max(worst, homomorphism_residual(a, b))
    ok = worst <= 1e-12
    assert report(1, ok, f"max relative residual {worst:.2e} over 1000 pairs", t0)


def test_criterion_2_worked_example(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst_sum = worst_comm = 0.0
    for _ in range(50):
        a = worked_example_n2(rng)
        dec = almost_normal_form(a)
        a0, a1, a2 = a.coeffs
        c = commutator(a0, dec.generators[0])
        worst_sum = max(
            worst_sum,
            float(np.max(np.abs(dec.abar.coeffs[1] - (a1 - c)))),
            float(np.max(np.abs(dec.abar.coeffs[2] - (a2 + c)))),
        )
        worst_comm = max(worst_comm, float(np.max(np.abs(commutator(a0, dec.abar.coeffs[1])))))
    ok = worst_sum <= 1e-12 and worst_comm <= 1e-10
    assert report(2, ok, f"coefficient identities {worst_sum:.2e}, [a0, abar_1] {worst_comm:.2e}", t0)


def test_criterion_3_sn_decomposition(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    worst = {"bracket_residual": 0.0, "nilpotency_residual": 0.0, "spectrum_distance": 0.0}
    mult_ok = True
    for n in range(1, 9):
        for _ in range(20):
            a = well_conditioned_element(rng, n, 2)
            chk = check_decomposition(a, almost_normal_form(a))
            for k in worst:
                worst[k] = max(worst[k], chk[k])
            mult_ok &= multiplicity_check(a).passed
    ok = (
        worst["bracket_residual"] <= 1e-10
        and worst["nilpotency_residual"] <= 1e-10
        and worst["spectrum_distance"] <= 1e-8
        and mult_ok
    )
    detail = ", ".join(f"{k} {v:.2e}" for k, v in worst.items()) + f", multiplicities {'ok' if mult_ok else 'FAIL'}"
    assert report(3, ok, detail, t0)


def _random_poly(rng, n, d, degree, terms=5):
    nv = (n + 1) * d + 1
    out = {}
    for _ in range(terms):
        e = [0] * nv
        for _ in range(int(rng.integers(1, degree + 1))):
            e[int(rng.integers(0, nv - 1))] += 1
        e[-1] = int(rng.integers(0, 2))
        out[tuple(e)] = rng.standard_normal(d)
    return PolyResponse(n, d, Poly(nv, d, out))


def _homogeneous_poly(rng, n, d, k, l, terms=3):
    nv = (n + 1) * d + 1
    out = {}
    for _ in range(terms):
        e = [0] * nv
        for _ in range(k + 1):
            e[int(rng.integers(0, nv - 1))] += 1
        e[-1] = l
        out[tuple(e)] = rng.standard_normal(d)
    return PolyResponse(n, d, Poly(nv, d, out))


def test_criterion_4_bracket_closure(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(100):
        n, d = int(rng.integers(1, 4)), int(rng.integers(1, 3))
        f, g = _random_poly(rng, n, d, 3), _random_poly(rng, n, d, 3)
        br = sigma_bracket(f, g)
        x = rng.standard_normal((100, n + 1, d))
        lam = rng.standard_normal()
        fg = gamma_jvp(f, x, eval_gamma(g, x, lam), lam)
        gf = gamma_jvp(g, x, eval_gamma(f, x, lam), lam)
        diff = np.abs(fg - gf - eval_gamma(br, x, lam)).reshape(100, -1).max(axis=1)
        scale = np.maximum(np.abs(fg).reshape(100, -1).max(axis=1), np.abs(gf).reshape(100, -1).max(axis=1))
        worst = max(worst, float(np.max(diff / np.maximum(scale, 1e-300))))
    grading_ok = True
    pairs = 0
    for (k1, l1), (k2, l2) in itertools.product(itertools.product(range(3), range(2)), repeat=2):
        for _ in range(3):
            n, d = int(rng.integers(1, 4)), int(rng.integers(1, 3))
            f = _homogeneous_poly(rng, n, d, k1, l1)
            g = _homogeneous_poly(rng, n, d, k2, l2)
            br = sigma_bracket(f, g)
            pairs += 1
            if len(br.poly):
                grading_ok &= grading_degree(br) == (k1 + k2, l1 + l2)
    ok = worst <= 1e-8 and grading_ok
    assert report(4, ok, f"closure {worst:.2e} relative over 100 pairs x 100 states, grading on {pairs} pairs "
                         f"{'exact' if grading_ok else 'FAIL'}", t0)


def test_criterion_5_steady_scaling(report):
    t0 = time.perf_counter()
    f = steady_reference()
    branches = solve_steady_branches(f, log_grid(1e-8, 1e-4, 20))
    r1 = next(b for b in branches if b.r == 1 and b.sign > 0)
    fits = r1.fit_exponents()
    slopes = [fits[j].slope for j in (1, 2, 3)]
    slopes_ok = all(abs(s - w) <= 0.02 * w for s, w in zip(slopes, (1.0, 0.5, 0.25)))
    nonzero = all(np.all(np.abs(b.eigenvalues) > 0) for b in branches)
    hyperbolic = all(steady_eigen_report(f, b).hyperbolic for b in branches)
    ok = len(branches) == 6 and slopes_ok and nonzero and hyperbolic
    detail = f"{len(branches)} branches, r=1 slopes {np.round(slopes, 5).tolist()}, eigenvalues nonzero {nonzero}"
    assert report(5, ok, detail, t0)


def test_criterion_6_hopf_scaling(report):
    t0 = time.perf_counter()
    fc = hopf_reference()
    branches = hopf_branches(fc, log_grid(1e-10, 1e-4, 20))
    fits = branches[0].fit_exponents()
    slopes = [fits[j].slope for j in (1, 2, 3)]
    slopes_ok = all(abs(s - hopf_kappa(j)) <= 0.02 * hopf_kappa(j) for j, s in enumerate(slopes))
    worst = max(s.residual for b in branches for s in b.samples)
    ok = len(branches) == 3 and slopes_ok and worst <= 1e-12
    detail = f"{len(branches)} branches, slopes {np.round(slopes, 5).tolist()}, max residual {worst:.2e}"
    assert report(6, ok, detail, t0)


def test_criterion_7_simulation(report):
    t0 = time.perf_counter()
    fc = hopf_reference()
    amp_err = omega_err = 0.0
    for lam in (1e-4, 1e-3):
        m = measure_orbit(fc, lam)
        s = solve_hopf_point(fc, lam)
        amp_err = max(amp_err, float(np.max(np.abs(m.amplitudes[1:] / np.abs(s.B) - 1))))
        omega_err = max(omega_err, abs(m.omega - s.omega))
    fit = sweep_and_fit(fc, log_grid(1e-5, 1e-2, 8), which="hopf", cells=[1, 2], transient_factor=10.0)
    slopes = [fit.fits[j].slope for j in (1, 2)]
    slopes_ok = all(abs(s - w) <= 0.05 * w for s, w in zip(slopes, (0.5, 1 / 6)))
    ok = amp_err <= 1e-2 and omega_err <= 1e-4 and slopes_ok
    detail = (f"amplitudes {amp_err:.2e} relative, omega {omega_err:.2e}, "
              f"simulated slopes {np.round(slopes, 5).tolist()}")
    assert report(7, ok, detail, t0)


def test_criterion_8_stability(report):
    t0 = time.perf_counter()
    fc = hopf_reference()
    co = extract_hopf_coefficients(fc)
    hurwitz = bool(np.all(np.linalg.eigvals(co.sum_a).real < 0))
    branches = hopf_branches(fc, log_grid(1e-8, 1e-2, 8))
    classified = [b.stable for b in branches]
    lam = 1e-2
    s = solve_hopf_point(fc, lam)
    period = 2 * np.pi / s.omega
    # r = 1: a 1% radial perturbation relaxes back within 0.1% after 100 periods
    tr = integrate(fc, 1.01 * chain_state(s.B, 1, 3), (0, 100 * period), lam=lam, t_store=100 * period)
    back = float(np.max(np.abs(np.abs(tr.complex_cells()[-1, 1:]) / np.abs(s.B) - 1)))
    # r = 2: a small cell-1 amplitude grows away from the branch
    x0 = chain_state(s.B, 2, 3)
    x0[1] = 0.01 * abs(s.B[0])
    tr = integrate(fc, x0, (0, 100 * period), lam=lam, t_store=100 * period)
    growth = float(abs(tr.complex_cells()[-1, 1]) / abs(x0[1]))
    ok = co.C.real < 0 and hurwitz and classified == [True, False, False] and back <= 1e-3 and growth > 10
    detail = (f"blocks say stable={classified}, r=1 perturbation back to {back:.1e}, "
              f"r=2 cell-1 growth x{growth:.0f}")
    assert report(8, ok, detail, t0)


def test_criterion_9_symmetry(report):
    t0 = time.perf_counter()
    f = steady_reference()
    steady = solve_steady_branches(f, log_grid(1e-8, 1e-4, 20))
    steady_res = max(shift_branch_residual(f, b) for b in steady if b.r < f.n)
    fc = hopf_reference()
    branches = hopf_branches(fc, log_grid(1e-10, 1e-4, 20))
    hopf_res = 0.0
    matches = True
    for b, nxt in zip(branches[:-1], branches[1:]):
        for s, t in zip(b.samples, nxt.samples):
            y = shift_solution(chain_state(s.B, b.r, fc.n), cell_axis=-1)
            hopf_res = max(hopf_res, float(np.max(np.abs(relative_equilibrium_residual(fc, y, s.omega, s.lam)))))
            matches &= bool(np.array_equal(y, chain_state(t.B, nxt.r, fc.n)))
    ok = steady_res <= 1e-10 and hopf_res <= 1e-10 and matches
    detail = f"steady {steady_res:.2e}, Hopf {hopf_res:.2e}, shifted Hopf samples equal branch r+1 {matches}"
    assert report(9, ok, detail, t0)


def test_criterion_10_persistence(report):
    t0 = time.perf_counter()
    fc = hopf_reference()
    co = extract_hopf_coefficients(fc)
    perturbed = fc + hopf_perturbation(eps=1e-3)
    worst = 0.0
    for lam in (1e-2, 1e-3):
        base = measure_orbit(fc, lam)
        seed = 1.1 * chain_state(solve_hopf_point(fc, lam).B, 1, fc.n)
        pert = measure_orbit(perturbed, lam, seed=seed, coeffs=co)
        worst = max(worst, float(np.max(np.abs(pert.amplitudes[1:3] / base.amplitudes[1:3] - 1))))
    ok = worst <= 1e-2
    assert report(10, ok, f"orbit found, cells 1-2 amplitude change {worst:.2e} relative", t0)
