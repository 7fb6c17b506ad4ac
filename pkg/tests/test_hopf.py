import numpy as np
import pytest

from ffchain.errors import GenericityError, InvarianceError, SideError
from ffchain.fitting import log_grid
from ffchain.hopf import (
    asymptotic_block,
    branch_family,
    chain_state,
    cubic_seed,
    extract_hopf_coefficients,
    hopf_branches,
    hopf_kappa,
    regauge,
    relative_equilibrium_residual,
    solve_hopf_branch,
    solve_hopf_point,
    stability_blocks,
)
from ffchain.network import ComplexResponse, shift_solution
from ffchain.reference import hopf_reference

GRID = log_grid(1e-10, 1e-4, 20)


def example_response(C=-(1 + 1j)):
    terms = {
        (("Z0", 1),): 1j,
        (("Z0", 1), ("lam", 1)): 1 + 1j,
        (("Z1", 1),): 1.0,
    }
    if C:
        terms[(("Z0", 2), ("Z0c", 1))] = C
    return ComplexResponse.from_terms(2, terms)


@pytest.fixture(scope="module")
def ref_branches():
    return hopf_branches(hopf_reference(), GRID)


def test_extract_example():
    co = extract_hopf_coefficients(example_response())
    assert co.omega0 == 1.0
    assert co.alpha == 1 + 1j and co.beta == 1 and co.C == -(1 + 1j)
    assert co.flags["rotation"] and co.flags["crossing"] and co.flags["nilpotency"]
    # the third derivative of Re f along Re X0 is 6 Re C
    assert co.d3_re == pytest.approx(6 * co.C.real)


def test_extract_failures():
    co = extract_hopf_coefficients(example_response(C=0))
    assert not co.flags["nonlinearity"] and not co.passed
    rot = ComplexResponse.from_terms(2, {(("Z0", 1),): 1j})
    co = extract_hopf_coefficients(rot)
    assert co.alpha == 0 and not co.flags["crossing"]
    assert any("crossing" in m for m in co.failures())
    with pytest.raises(GenericityError):
        solve_hopf_branch(rot, GRID)
    bad = example_response() + ComplexResponse.from_terms(2, {(("Z0", 2),): 1.0})
    with pytest.raises(InvarianceError):
        extract_hopf_coefficients(bad)


def test_leading_order_amplitude():
    fc = hopf_reference(omega0=1.0, alpha=1 + 1j, C=-1.0)
    s = solve_hopf_point(fc, 0.01)
    assert abs(s.B_truncated[0] - 0.1) <= 1e-12
    assert abs(abs(s.B[0]) - 0.1) <= 0.01 * 0.1


def test_cubic_seed():
    z = cubic_seed(-1.0, 1.0, 0.1)
    assert abs(z - 0.1 ** (1 / 3)) <= 1e-14 and abs(z.imag) <= 1e-15
    assert np.isclose(z * abs(z) ** 2, 0.1)
    rng = np.random.default_rng(0)
    for _ in range(10):
        C = complex(-abs(rng.normal()) - 0.1, rng.normal())
        beta, b = complex(*rng.normal(size=2)), complex(*rng.normal(size=2))
        z = cubic_seed(C, beta, b)
        assert abs(C * abs(z) ** 2 * z + beta * b) <= 1e-12


def test_frequency(ref_branches):
    s = solve_hopf_point(hopf_reference(), 0.01)
    assert abs(s.omega - 1.01) <= 2e-3
    assert abs(s.omega_truncated - 1.01) <= 1e-12
    slope, intercept, _ = ref_branches[0].fit_frequency()
    assert abs(intercept - 1.0) <= 1e-6
    assert abs(slope - 1.0) <= 0.05


def test_slopes_and_residuals(ref_branches):
    r1 = ref_branches[0]
    fits = r1.fit_exponents()
    for j in (1, 2, 3):
        want = hopf_kappa(j - 1)
        assert abs(fits[j].slope - want) <= 0.02 * want
    for s in r1.samples:
        assert s.residual <= 1e-12


def test_branch_family(ref_branches):
    assert len(ref_branches) == 3
    fc = hopf_reference()
    r1 = ref_branches[0]
    same = branch_family(fc, r1, 1)
    assert all(np.array_equal(a.B, b.B) for a, b in zip(same.samples, r1.samples))
    r3 = ref_branches[2]
    assert r3.amplitudes.shape[1] == 1
    fit = r3.fit_exponents()[3]
    assert abs(fit.slope - 0.5) <= 0.01
    for br in ref_branches:
        assert max(s.residual for s in br.samples) <= 1e-10
    with pytest.raises(ValueError):
        branch_family(fc, r1, 4)


def test_shift_maps_branches(ref_branches):
    fc = hopf_reference()
    r1 = ref_branches[0]
    for s in r1.samples:
        x = chain_state(s.B, 1, 3)
        y = shift_solution(x, cell_axis=-1)
        assert np.max(np.abs(relative_equilibrium_residual(fc, y, s.omega, s.lam))) <= 1e-10


def test_stability(ref_branches):
    assert ref_branches[0].stable is True
    assert all(b.stable is False for b in ref_branches[1:])
    fc = hopf_reference()
    rep = stability_blocks(fc, 2, ref_branches[1].samples[-1])
    # the repeated a_0 block has real part alpha_1 lam > 0
    assert np.all(np.real(rep.eigenvalues[1]) > 0)
    assert abs(rep.phase_mode) <= 1e-10


def test_asymptotic_block_formulas(ref_branches):
    C = -1.0 + 0.3j
    for B in (0.1, 0.2 + 0.05j, 1e-3j):
        m = asymptotic_block(C, B)
        eig = np.linalg.eigvals(m)
        assert abs(np.prod(eig).real - 3 * abs(C) ** 2 * abs(B) ** 4) <= 1e-10
        assert abs(np.sum(eig).real - 4 * C.real * abs(B) ** 2) <= 1e-10
    # the computed blocks of oscillating cells j >= 2 approach the asymptotic ones
    fc = hopf_reference()
    s = ref_branches[0].samples[0]
    rep = stability_blocks(fc, 1, s)
    for j in (2, 3):
        blk, asym = rep.blocks[j], rep.asymptotic_blocks[j - 1]
        assert np.max(np.abs(blk - asym)) <= 0.05 * np.max(np.abs(asym))


def test_gauge_invariance():
    fc = hopf_reference()
    s = solve_hopf_point(fc, 1e-4)
    rotated = s.B * np.exp(0.7j)
    assert np.allclose(regauge(rotated), s.B, atol=1e-15)
    x = chain_state(rotated, 1, 3)
    assert np.max(np.abs(relative_equilibrium_residual(fc, x, s.omega, s.lam))) <= 1e-12
    assert s.B[0].imag == 0 and s.B[0].real > 0


def test_side_error():
    fc = hopf_reference()
    with pytest.raises(SideError, match="wrong side"):
        solve_hopf_point(fc, -1e-3)
    flipped = hopf_reference(alpha=-1 + 1j)
    assert extract_hopf_coefficients(flipped).lambda_side() == -1
    br = solve_hopf_branch(flipped, log_grid(1e-8, 1e-5, 8))
    assert np.all(br.lams < 0)
