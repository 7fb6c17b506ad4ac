import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ffchain.errors import BracketOverflowError, InvarianceError, ShapeError
from ffchain.network import (
    ComplexResponse,
    PolyResponse,
    apply_A_sigma,
    compose_A_sigma,
    complexify,
    eval_gamma,
    gamma_jacobian,
    gamma_jvp,
    grading_degree,
    invariance_violations,
    lie_bracket_gamma,
    realify,
    require_s1_invariant,
    s1_invariance_defect,
    shift_solution,
    sigma,
    sigma_bracket,
    sigma_table,
)
from ffchain.poly import Poly
from ffchain.ring import RingElement, ring_bracket, to_matrix

seeds = st.integers(0, 2**32 - 1)


def random_response(rng, n, d, degree=3, terms=6, lam=True):
    """Random polynomial response with linear part plus a few higher monomials."""
    nv = (n + 1) * d + 1
    out = {}
    for _ in range(terms):
        e = [0] * nv
        for _ in range(int(rng.integers(1, degree + 1))):
            e[int(rng.integers(0, nv - 1))] += 1
        if lam:
            e[-1] = int(rng.integers(0, 2))
        out[tuple(e)] = rng.standard_normal(d)
    return PolyResponse(n, d, Poly(nv, d, out))


def test_sigma_examples():
    assert sigma(2, 1, 3) == 0
    assert sigma(1, 3, 3) == 2
    assert sigma(0, 2, 3) == 2
    assert sigma_table(2).tolist() == [[0, 0, 0], [1, 0, 0], [2, 1, 0]]
    with pytest.raises(ValueError):
        sigma(4, 0, 3)


def test_apply_A_sigma():
    X = np.arange(4.0)
    assert apply_A_sigma(1, X).tolist() == [1, 2, 3, 3]
    assert apply_A_sigma(3, X).tolist() == [3, 3, 3, 3]
    assert apply_A_sigma(0, X).tolist() == [0, 1, 2, 3]
    with pytest.raises(ValueError):
        apply_A_sigma(4, X)


def test_eval_gamma_linear_matches_matrix():
    rng = np.random.default_rng(0)
    a = RingElement.random(rng, 3, 2)
    f = PolyResponse.from_ring(a)
    x = rng.standard_normal((4, 2))
    assert np.allclose(eval_gamma(f, x).reshape(-1), to_matrix(a) @ x.reshape(-1), atol=1e-14)
    assert np.allclose(gamma_jacobian(f, x), to_matrix(a), atol=1e-14)


def test_jvp_matches_jacobian():
    rng = np.random.default_rng(6)
    f = random_response(rng, 3, 2)
    x, v = rng.standard_normal((2, 4, 2))
    assert np.allclose(gamma_jvp(f, x, v, 0.4).reshape(-1), gamma_jacobian(f, x, 0.4) @ v.reshape(-1))
    batch = rng.standard_normal((5, 4, 2))
    g = random_response(rng, 3, 2)
    both = lie_bracket_gamma(f, g, batch, 0.4)
    assert np.allclose(both[2], lie_bracket_gamma(f, g, batch[2], 0.4))


def test_eval_gamma_synchronous_state():
    rng = np.random.default_rng(1)
    f = random_response(rng, 3, 2)
    x0 = rng.standard_normal(2)
    x = np.tile(x0, (4, 1))
    out = eval_gamma(f, x, 0.3)
    expected = f(np.tile(x0, (4, 1)), 0.3)
    assert np.allclose(out, np.tile(expected, (4, 1)))


def test_eval_gamma_last_argument():
    # f = X_1 gives (x_0, x_0, x_1) for n = 2
    f = PolyResponse.from_terms(2, 1, {(0, 1, 0, 0): 1.0})
    x = np.array([[1.0], [2.0], [3.0]])
    assert eval_gamma(f, x)[:, 0].tolist() == [1.0, 1.0, 2.0]
    with pytest.raises(ShapeError):
        eval_gamma(f, np.zeros((4, 1)))


def test_compose_A_sigma():
    rng = np.random.default_rng(2)
    f = random_response(rng, 3, 1)
    X = rng.standard_normal((4, 1))
    for i in range(4):
        assert np.allclose(compose_A_sigma(f, i)(X, 0.2), f(apply_A_sigma(i, X), 0.2))


def test_bracket_linear_is_ring_bracket():
    rng = np.random.default_rng(3)
    F, G = RingElement.random(rng, 3, 2), RingElement.random(rng, 3, 2)
    br = sigma_bracket(PolyResponse.from_ring(F), PolyResponse.from_ring(G))
    assert np.allclose(br.linear_coeffs(), ring_bracket(F, G).coeffs, atol=1e-12)


def test_bracket_algebra():
    rng = np.random.default_rng(4)
    f, g, h = (random_response(rng, 2, 1, degree=2, terms=4) for _ in range(3))
    assert sigma_bracket(f, g).allclose(-sigma_bracket(g, f), 1e-12)
    assert sigma_bracket(f, f).allclose(PolyResponse(2, 1, Poly.zero(f.poly.nvars, 1)), 1e-12)
    lhs = sigma_bracket(f.scale(2.0) + h, g)
    rhs = sigma_bracket(f, g).scale(2.0) + sigma_bracket(h, g)
    assert lhs.allclose(rhs, 1e-10)
    jac = (
        sigma_bracket(f, sigma_bracket(g, h))
        + sigma_bracket(g, sigma_bracket(h, f))
        + sigma_bracket(h, sigma_bracket(f, g))
    )
    assert jac.poly.max_abs() <= 1e-10 * max(1.0, f.poly.max_abs() * g.poly.max_abs() * h.poly.max_abs())


def test_bracket_overflow():
    f = PolyResponse.from_terms(1, 1, {(4, 0, 0): 1.0})
    with pytest.raises(BracketOverflowError):
        sigma_bracket(f, f, degree_cap=6)
    with pytest.raises(ShapeError):
        sigma_bracket(f, PolyResponse.from_terms(2, 1, {(1, 0, 0, 0): 1.0}))


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(1, 4), st.integers(1, 2))
def test_bracket_closure(seed, n, d):
    rng = np.random.default_rng(seed)
    f = random_response(rng, n, d)
    g = random_response(rng, n, d)
    br = sigma_bracket(f, g)
    for _ in range(3):
        x = rng.standard_normal((n + 1, d))
        lam = rng.standard_normal()
        want = lie_bracket_gamma(f, g, x, lam)
        got = eval_gamma(br, x, lam)
        scale = max(1.0, np.abs(want).max())
        assert np.abs(got - want).max() <= 1e-8 * scale


def test_grading():
    f = PolyResponse.from_terms(1, 1, {(2, 0, 1): 1.0, (1, 1, 1): 2.0})
    assert grading_degree(f) == (1, 1)
    assert grading_degree(PolyResponse.from_terms(1, 1, {(1, 0, 0): 1.0, (2, 0, 0): 1.0})) == "mixed"
    assert grading_degree(PolyResponse.from_terms(1, 1, {(0, 0, 1): 1.0})) == "mixed"
    # brackets add degrees: (1, 1) + (2, 0) = (3, 1)
    h = PolyResponse.from_terms(1, 1, {(0, 3, 0): 1.0})
    assert grading_degree(sigma_bracket(f, h)) == (3, 1)


@settings(max_examples=20, deadline=None)
@given(seeds, st.integers(1, 4))
def test_shift_solution_is_equivariant(seed, n):
    rng = np.random.default_rng(seed)
    f = random_response(rng, n, 2)
    x = rng.standard_normal((n + 1, 2))
    x[-1] = x[-2] + 0.0
    lam = rng.standard_normal()
    shifted = shift_solution(x)
    # gamma_f commutes with the shift
    assert np.allclose(eval_gamma(f, shifted, lam), shift_solution(eval_gamma(f, x, lam)), atol=1e-10)


def test_shift_solution_shapes():
    x = np.arange(6.0).reshape(3, 2)
    assert shift_solution(x).tolist() == [[0, 1], [0, 1], [2, 3]]
    z = np.array([1 + 1j, 2, 3])
    assert shift_solution(z, cell_axis=-1).tolist() == [1 + 1j, 1 + 1j, 2]


def test_realify_complexify():
    p, q = 1 + 2j, -0.5 + 0.25j
    m = realify(p, q)
    v = 0.3 - 0.7j
    w = m @ np.array([v.real, v.imag])
    assert np.isclose(w[0] + 1j * w[1], p * v + q * np.conj(v))
    assert np.allclose(complexify(m), (p, q))


def hopf_like(n=2):
    return ComplexResponse.from_terms(
        n,
        {
            (("Z0", 1),): 1j,
            (("Z0", 1), ("lam", 1)): 1 + 1j,
            (("Z1", 1),): 1.0,
            (("Z0", 2), ("Z0c", 1)): -1.0,
            (("Z0", 1), ("Z1", 1), ("Z0c", 1)): 0.3,
        },
    )


def test_complex_real_round_trip():
    fc = hopf_like()
    fr = fc.to_real()
    rng = np.random.default_rng(5)
    Z = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    X = np.stack([Z.real, Z.imag], axis=-1)
    val = fr(X, 0.2)
    assert np.isclose(val[0] + 1j * val[1], fc(Z, 0.2))
    back = ComplexResponse.from_real(fr)
    assert np.isclose(back(Z, 0.2), fc(Z, 0.2))
    assert fc.coefficient({0: 2}, {0: 1}) == -1.0
    p, q = fc.linear_parts(0.5)
    assert np.isclose(p[0], 1j + 0.5 * (1 + 1j)) and np.isclose(p[1], 1.0) and np.all(q == 0)


def test_s1_invariance():
    fc = hopf_like()
    assert invariance_violations(fc) == []
    assert s1_invariance_defect(fc) <= 1e-12
    require_s1_invariant(fc)
    bad = fc + ComplexResponse.from_terms(2, {(("Z0", 2),): 1.0})
    assert invariance_violations(bad)
    assert s1_invariance_defect(bad) > 1e-3
    with pytest.raises(InvarianceError):
        require_s1_invariant(bad)
    # terms in the last argument are exempt
    tail = fc + ComplexResponse.from_terms(2, {(("Z2", 2),): 1.0})
    require_s1_invariant(tail)


def test_linear_coeffs_by_power():
    a0 = np.array([[0.0, -1.0], [1.0, 0.0]])
    f = PolyResponse.linear({0: [a0, np.eye(2)], 1: [np.eye(2), np.zeros((2, 2))]})
    assert np.allclose(f.linear_coeffs(0.5)[0], a0 + 0.5 * np.eye(2))
    by = f.linear_coeffs_by_power()
    assert set(by) == {0, 1} and np.allclose(by[1][0], np.eye(2))
    assert f.pins_origin()
    assert not PolyResponse.from_terms(1, 2, {(0, 0, 0, 0, 1): [1.0, 0.0]}).pins_origin()
    g = f.fix_lambda(2.0)
    assert np.allclose(g.linear_coeffs(123.0)[0], a0 + 2 * np.eye(2))
