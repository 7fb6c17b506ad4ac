"""Reference systems used by the tests, the acceptance suite and the CLI examples."""

from __future__ import annotations

import numpy as np

from .network import ComplexResponse, PolyResponse
from .ring import RingElement


def steady_reference(n=3, a=(None, 1.0, -1.0, -2.0), quadratic=-1.0) -> PolyResponse:
    """``f = lam X0 + a_1 X1 + ... + a_n Xn + quadratic * X0**2`` with scalar cells.

    The default is the three-step chain with ``a_1 = 1``, ``a_2 = -1``,
    ``a_3 = -2`` and ``X0**2`` coefficient ``-1``.
    """
    if len(a) != n + 1:
        raise ValueError("need one linear coefficient per argument (first one ignored)")
    terms = {((0, 1), ("lam", 1)): 1.0, ((0, 2),): quadratic}
    for i in range(1, n + 1):
        if a[i]:
            terms[((i, 1),)] = a[i]
    return PolyResponse.from_terms(n, 1, terms)


def hopf_reference(n=3, omega0=1.0, alpha=1 + 1j, beta=1.0, C=-1.0, tail=-3.0) -> ComplexResponse:
    """``(i w0 + alpha lam) Z0 + C |Z0|^2 Z0 + beta Z1 + tail Z_n``.

    The ``tail`` term only enters the fully synchronous cell; it makes
    ``a_0(0) + ... + a_n(0) = i w0 + beta + tail`` Hurwitz.
    """
    terms = {
        (("Z0", 1),): 1j * omega0,
        (("Z0", 1), ("lam", 1)): alpha,
        (("Z0", 2), ("Z0c", 1)): C,
    }
    if n >= 1:
        terms[(("Z1", 1),)] = beta
    if n >= 2 and tail:
        terms[((f"Z{n}", 1),)] = tail
    return ComplexResponse.from_terms(n, terms)


def hopf_perturbation(n=3, eps=1e-3) -> ComplexResponse:
    """A small term set that breaks the rotation symmetry of the normal form."""
    return ComplexResponse.from_terms(
        n,
        {
            (("Z0c", 2),): eps,
            (("Z0c", 1), ("Z1", 1)): eps,
            (("Z1c", 1),): eps,
        },
    )


def worked_example_n2(rng=None) -> RingElement:
    """Random ``a_0, a_1, a_2`` with ``a_0`` a well-conditioned diagonalizable 2x2 matrix."""
    rng = np.random.default_rng(0) if rng is None else rng
    return random_semisimple_element(rng, 2, 2)


def random_semisimple_element(rng, n, d, gap=0.5, cond_max=5.0, coupling_norm=None) -> RingElement:
    """Random ring element whose ``a_0`` is diagonalizable with separated eigenvalues.

    ``a_1 .. a_n`` have standard normal entries, rescaled to spectral norm
    ``coupling_norm`` when it is given.
    """
    while True:
        p = rng.standard_normal((d, d))
        s = np.linalg.svd(p, compute_uv=False)
        if s[-1] > 0 and s[0] / s[-1] <= cond_max:
            break
    if d == 2 and rng.random() < 0.5:
        # complex pair a +- i w
        w = rng.uniform(gap, 2.0)
        core = np.array([[rng.standard_normal(), -w], [w, 0.0]])
        core[1, 1] = core[0, 0]
    else:
        ev = np.cumsum(rng.uniform(gap, 2.0, size=d)) - d
        core = np.diag(ev)
    a0 = p @ core @ np.linalg.inv(p)
    c = rng.standard_normal((n + 1, d, d))
    c[0] = a0
    if coupling_norm is not None:
        for i in range(1, n + 1):
            c[i] *= coupling_norm / np.linalg.norm(c[i], 2)
    return RingElement(c)


def well_conditioned_element(rng, n, d) -> RingElement:
    """Random element with ``a_0`` eigenvalue gap >= 1, eigenvector condition <= 3 and unit-norm couplings.

    The normal-form generators grow roughly like ``(k |ad_{a_0}^{-1}| |a_i|)^k``;
    these bounds keep the coefficients of the normal form moderate up to
    ``n = 8`` so that absolute residual checks stay meaningful.
    """
    return random_semisimple_element(rng, n, d, gap=1.0, cond_max=3.0, coupling_norm=1.0)
