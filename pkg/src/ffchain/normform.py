"""Linear almost normal form and SN-splitting of chain linearizations.

The linearization ``A = sum_i a_i sigma_i`` is conjugated by unipotent
elements ``exp(b_k mu_k)``, ``k = 1 .. n-1``, until every coefficient
``abar_1 .. abar_{n-1}`` commutes with ``a_0``.  The coefficient at
``sigma_n`` is left alone.  The result splits as

    Abar_S = a_0 sigma_0 + (abar_1 + ... + abar_n) sigma_n
    Abar_N = abar_1 mu_1 + ... + abar_{n-1} mu_{n-1}

with ``[Abar_S, Abar_N] = 0`` and ``Abar_N`` nilpotent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import NormFormError, SemisimplicityError, ShapeError
from .ring import (
    MuElement,
    RingElement,
    from_mu,
    ring_bracket,
    ring_exp_nilpotent,
    ring_mul,
    to_matrix,
    to_mu,
)

RANK_RTOL = 1e-10
CHECK_TOL = 1e-10
CLUSTER_TOL = 1e-8


def commutator(a, b):
    return a @ b - b @ a


def ad_operator(a0: np.ndarray) -> np.ndarray:
    """Matrix of ``X -> a0 X - X a0`` acting on row-major ``vec(X)``."""
    d = a0.shape[0]
    eye = np.eye(d)
    return np.kron(a0, eye) - np.kron(eye, a0.T)


def _numerical_rank(m, rtol=RANK_RTOL):
    s = np.linalg.svd(m, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def is_semisimple_ad(a0, rtol=RANK_RTOL) -> bool:
    """``ker ad ∩ im ad = 0``, tested as ``rank(ad) == rank(ad^2)``."""
    k = ad_operator(np.asarray(a0, dtype=float))
    return _numerical_rank(k, rtol) == _numerical_rank(k @ k, rtol)


def is_semisimple(m, tol=1e-8) -> bool:
    """Diagonalizability over C, tested through the eigenvector matrix rank.

    Only used for the informational ``semisimple_certified`` flag.
    """
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.shape[0] == 1:
        return True
    _, vecs = np.linalg.eig(m)
    s = np.linalg.svd(vecs, compute_uv=False)
    return bool(s[-1] > tol * s[0])


def commutant_decompose(a0, a):
    """Split ``a = a_ker + a_im`` along ``gl(V) = ker ad_a0 ⊕ im ad_a0``.

    Returns ``(a_ker, a_im, b)`` with ``ad_a0(b) = a_im`` and ``b`` of
    minimum norm.  Raises :class:`SemisimplicityError` when ``a0`` is not
    semisimple (the two subspaces fail to be complementary).
    """
    a0 = np.atleast_2d(np.asarray(a0, dtype=float))
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a0.shape != a.shape or a0.shape[0] != a0.shape[1]:
        raise ShapeError(f"commutant_decompose: shapes {a0.shape} and {a.shape}")
    d = a0.shape[0]
    k = ad_operator(a0)
    u, s, vt = np.linalg.svd(k)
    rank = 0 if s[0] == 0.0 else int(np.sum(s > RANK_RTOL * s[0]))
    if rank != _numerical_rank(k @ k):
        raise SemisimplicityError("a_0 is not semisimple: ker ad and im ad intersect")
    vec = a.reshape(-1)
    if rank == 0:
        return a.copy(), np.zeros_like(a), np.zeros_like(a)
    im_basis = u[:, :rank]
    ker_basis = vt[rank:].T
    split = np.hstack([im_basis, ker_basis])
    coords = np.linalg.solve(split, vec)
    a_im = (im_basis @ coords[:rank]).reshape(d, d)
    a_ker = a - a_im
    # one refinement pass: push the rounding residue of the kernel part into the image
    delta = (im_basis @ np.linalg.solve(split, a_ker.reshape(-1))[:rank]).reshape(d, d)
    a_ker = a_ker - delta
    a_im = a_im + delta
    b = (vt[:rank].T @ ((im_basis.T @ a_im.reshape(-1)) / s[:rank])).reshape(d, d)
    scale = max(1.0, float(np.max(np.abs(a))), float(np.max(np.abs(a0))))
    if np.max(np.abs(commutator(a0, a_ker))) > CHECK_TOL * scale**2:
        raise SemisimplicityError("kernel component does not commute with a_0")
    return a_ker, a_im, b


@dataclass
class SNDecomposition:
    abar: RingElement
    s_part: RingElement
    n_part: RingElement
    generators: list
    semisimple_certified: bool
    transform: RingElement = field(repr=False)
    commutator_residual: float = 0.0

    def transform_inverse(self) -> RingElement:
        """Inverse of :attr:`transform`, rebuilt from the generators."""
        n, d = self.abar.n, self.abar.d
        inv = RingElement.unit(n, d)
        for k, b in enumerate(self.generators, start=1):
            inv = ring_mul(inv, ring_exp_nilpotent(RingElement.mu(-b, k, n)))
        return inv


def _commutator_residual(a0, elem: RingElement, upto: int) -> float:
    res = 0.0
    for i in range(1, upto):
        res = max(res, float(np.max(np.abs(commutator(a0, elem.coeffs[i])))))
    return res


def _conjugate_mu(m, b, k):
    """mu-coordinates of ``exp(b mu_k) A exp(-b mu_k)``.

    ``sigma_n`` is annihilated by every ``mu_k`` (k >= 1), so its coordinate
    is untouched, and ``mu_i mu_j = mu_{i+j}`` (zero from ``n`` on) makes the
    rest a truncated power series: coefficient ``i`` gains
    ``ad_b^j(m_{i - jk}) / j!``.  Working here avoids the cancellation
    between large sigma coefficients.
    """
    n = m.shape[0] - 1
    out = m.copy()
    for i0 in range(n):
        term = m[i0]
        for j in range(1, (n - 1 - i0) // k + 1):
            term = commutator(b, term) / j
            out[i0 + j * k] = out[i0 + j * k] + term
    return out


def _check_scale(a0, elem):
    return CHECK_TOL * max(1.0, float(np.max(np.abs(a0))) * elem.scale())


def almost_normal_form(a: RingElement) -> SNDecomposition:
    """Normalize ``a_1 .. a_{n-1}`` into the commutant of ``a_0``."""
    n, d = a.n, a.d
    a0 = a.coeffs[0].copy()
    if not is_semisimple_ad(a0):
        raise SemisimplicityError("a_0 is not semisimple; the almost normal form needs it")
    m = to_mu(a).coeffs.copy()
    transform = RingElement.unit(n, d)
    generators = []
    for k in range(1, n):
        _, _, b = commutant_decompose(a0, m[k])
        m = _conjugate_mu(m, b, k)
        transform = ring_mul(ring_exp_nilpotent(RingElement.mu(b, k, n)), transform)
        generators.append(b)
    cur = from_mu(MuElement(m))
    residual = _commutator_residual(a0, cur, n)
    # measured against the input so that generator blow-up is not hidden
    if residual > _check_scale(a0, a):
        raise NormFormError(
            f"commutator residual {residual:.3e} after normalization exceeds tolerance"
        )
    s_part, n_part = sn_split(cur)
    certified = is_semisimple(a0) and is_semisimple(cur.augmentation())
    return SNDecomposition(cur, s_part, n_part, generators, certified, transform, residual)


def sn_split(abar: RingElement):
    """Return ``(Abar_S, Abar_N)`` for an element already in almost normal form."""
    n, d = abar.n, abar.d
    a0 = abar.coeffs[0]
    residual = _commutator_residual(a0, abar, n)
    if residual > _check_scale(a0, abar):
        raise NormFormError(
            f"sn_split precondition violated: max |[a_0, abar_i]| = {residual:.3e}"
        )
    s = np.zeros_like(abar.coeffs)
    s[0] = a0
    s[n] = abar.coeffs[1:].sum(axis=0)
    s_part = RingElement(s)
    nil = np.zeros_like(abar.coeffs)
    for i in range(1, n):
        nil[i] += abar.coeffs[i]
        nil[n] -= abar.coeffs[i]
    n_part = RingElement(nil)
    # mu_i (i < n) and sigma_n are "eigenvectors" of the semisimple part
    eye = np.eye(d)
    tol = _check_scale(a0, abar)
    for i in range(n):
        lhs = ring_mul(s_part, RingElement.mu(eye, i, n))
        if not lhs.allclose(RingElement.mu(a0, i, n), tol):
            raise NormFormError(f"Abar_S mu_{i} != a_0 mu_{i}")
    lhs = ring_mul(s_part, RingElement.monomial(eye, n, n))
    if not lhs.allclose(RingElement.monomial(abar.augmentation(), n, n), tol):
        raise NormFormError("Abar_S sigma_n != (a_0 + sum abar_i) sigma_n")
    return s_part, n_part


def block_spectrum(m: np.ndarray, d: int) -> np.ndarray:
    """Eigenvalues of a block lower-triangular matrix from its diagonal blocks.

    For defective block-triangular matrices the diagonal blocks give the
    characteristic polynomial exactly, whereas a dense eigensolver loses
    accuracy like ``eps**(1/k)`` on ``k``-dimensional Jordan blocks.
    """
    m = np.asarray(m)
    nb = m.shape[0] // d
    upper = max(
        (np.max(np.abs(m[j * d:(j + 1) * d, (j + 1) * d:])) for j in range(nb - 1)),
        default=0.0,
    )
    if upper > 0.0:
        raise ShapeError("matrix is not block lower-triangular")
    return np.concatenate(
        [np.linalg.eigvals(m[j * d:(j + 1) * d, j * d:(j + 1) * d]) for j in range(nb)]
    )


def cluster_eigenvalues(eigs, tol=CLUSTER_TOL):
    """Greedy clustering; returns a list of ``(representative, count)``."""
    clusters = []
    for z in sorted(np.asarray(eigs, dtype=complex), key=lambda z: (z.real, z.imag)):
        for c in clusters:
            if abs(z - c[0]) <= tol:
                c[1] += 1
                break
        else:
            clusters.append([z, 1])
    return [(complex(c[0]), c[1]) for c in clusters]


def spectrum_distance(e1, e2) -> float:
    """Largest distance under the optimal matching of two eigenvalue multisets."""
    e1 = np.asarray(e1, dtype=complex)
    e2 = np.asarray(e2, dtype=complex)
    if e1.shape != e2.shape:
        return float("inf")
    cost = np.abs(e1[:, None] - e2[None, :])
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].max(initial=0.0))


@dataclass
class MultiplicityReport:
    eigenvalues: np.ndarray
    clusters: list
    a0_eigenvalues: np.ndarray
    multiplicities: list
    required: int
    passed: bool


def multiplicity_check(a: RingElement, tol=CLUSTER_TOL) -> MultiplicityReport:
    """Each eigenvalue of ``a_0`` must occur at least ``n`` times in ``to_matrix(a)``."""
    eigs = block_spectrum(to_matrix(a), a.d)
    clusters = cluster_eigenvalues(eigs, tol)
    a0_eigs = np.linalg.eigvals(a.coeffs[0])
    mults = []
    for z in a0_eigs:
        mults.append(sum(c for rep, c in clusters if abs(rep - z) <= tol))
    passed = all(m >= a.n for m in mults)
    return MultiplicityReport(eigs, clusters, a0_eigs, mults, a.n, passed)


def similarity_residual(a: RingElement, dec: SNDecomposition) -> float:
    """``max |M(Abar) - P M(A) P^-1|`` with ``P`` the accumulated transform."""
    p = to_matrix(dec.transform)
    pinv = to_matrix(dec.transform_inverse())
    return float(np.max(np.abs(to_matrix(dec.abar) - p @ to_matrix(a) @ pinv)))


def check_decomposition(a: RingElement, dec: SNDecomposition) -> dict:
    """Numerical residuals of every SN-decomposition invariant."""
    n = a.n
    nmat = to_matrix(dec.n_part)
    npow = np.linalg.matrix_power(nmat, n) if n > 0 else np.zeros_like(nmat)
    return {
        "sum_residual": float(np.max(np.abs(dec.abar.coeffs - dec.s_part.coeffs - dec.n_part.coeffs))),
        "bracket_residual": ring_bracket(dec.s_part, dec.n_part).scale(),
        "nilpotency_residual": float(np.max(np.abs(npow), initial=0.0)),
        "commutator_residual": _commutator_residual(a.coeffs[0], dec.abar, n),
        "spectrum_distance": spectrum_distance(
            block_spectrum(to_matrix(dec.abar), a.d), block_spectrum(to_matrix(a), a.d)
        ),
        "similarity_residual": similarity_residual(a, dec),
        "trace_residual": float(
            np.max(np.abs(np.trace(dec.abar.coeffs, axis1=1, axis2=2) - np.trace(a.coeffs, axis1=1, axis2=2)))
        ),
    }
