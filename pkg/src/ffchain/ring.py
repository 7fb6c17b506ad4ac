"""The semigroup ring gl(V)[Sigma] of the feed-forward chain.

An element ``sum_i a_i sigma_i`` is stored as an array of shape ``(n+1, d, d)``
holding the matrix coefficients ``a_0 ... a_n``.  The semigroup law is
``sigma_i sigma_j = sigma_{min(i+j, n)}``; ``sigma_0`` is the unit and
``sigma_n`` is absorbing.

Besides the sigma basis there is the nilpotent basis
``mu_i = sigma_i - sigma_n`` (``i < n``) completed by ``sigma_n``.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from .errors import PreconditionError, ShapeError

ZERO_RTOL = 1e-12


def _as_coeffs(coeffs) -> np.ndarray:
    arr = np.array(coeffs, dtype=float)
    if arr.ndim == 1:
        # scalar cells: a list of numbers
        arr = arr.reshape(-1, 1, 1)
    if arr.ndim != 3 or arr.shape[1] != arr.shape[2] or arr.shape[0] < 1:
        raise ShapeError(f"coefficients must have shape (n+1, d, d), got {arr.shape}")
    if arr.shape[1] < 1:
        raise ShapeError("cell dimension must be positive")
    if not np.all(np.isfinite(arr)):
        raise ValueError("ring coefficients must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class RingElement:
    """``sum_i coeffs[i] * sigma_i`` with ``coeffs`` of shape ``(n+1, d, d)``."""

    coeffs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coeffs", _as_coeffs(self.coeffs))

    @property
    def n(self) -> int:
        return self.coeffs.shape[0] - 1

    @property
    def d(self) -> int:
        return self.coeffs.shape[1]

    @classmethod
    def zero(cls, n, d):
        return cls(np.zeros((n + 1, d, d)))

    @classmethod
    def unit(cls, n, d):
        c = np.zeros((n + 1, d, d))
        c[0] = np.eye(d)
        return cls(c)

    @classmethod
    def monomial(cls, mat, i, n):
        """``mat * sigma_i``."""
        mat = np.atleast_2d(np.asarray(mat, dtype=float))
        c = np.zeros((n + 1,) + mat.shape)
        c[i] = mat
        return cls(c)

    @classmethod
    def mu(cls, mat, i, n):
        """``mat * mu_i = mat * (sigma_i - sigma_n)``; zero for ``i = n``."""
        mat = np.atleast_2d(np.asarray(mat, dtype=float))
        c = np.zeros((n + 1,) + mat.shape)
        if i < n:
            c[i] = mat
            c[n] = -mat
        return cls(c)

    @classmethod
    def random(cls, rng, n, d, min_degree=0, scale=1.0):
        c = scale * rng.standard_normal((n + 1, d, d))
        c[:min_degree] = 0.0
        return cls(c)

    def _check(self, other):
        if not isinstance(other, RingElement):
            raise TypeError(f"expected RingElement, got {type(other).__name__}")
        if other.coeffs.shape != self.coeffs.shape:
            raise ShapeError(
                f"ring shapes differ: (n={self.n}, d={self.d}) vs (n={other.n}, d={other.d})"
            )

    def __add__(self, other):
        self._check(other)
        return RingElement(self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check(other)
        return RingElement(self.coeffs - other.coeffs)

    def __neg__(self):
        return RingElement(-self.coeffs)

    def __mul__(self, other):
        if isinstance(other, RingElement):
            return ring_mul(self, other)
        return RingElement(self.coeffs * float(other))

    def __rmul__(self, other):
        return RingElement(self.coeffs * float(other))

    def __matmul__(self, other):
        return ring_mul(self, other)

    def scale(self) -> float:
        return float(np.max(np.abs(self.coeffs), initial=0.0))

    def degree(self, rtol=ZERO_RTOL) -> int:
        """Filtration degree: smallest ``i`` with a nonzero coefficient, ``n+1`` for 0."""
        cutoff = rtol * self.scale()
        for i, a in enumerate(self.coeffs):
            if np.max(np.abs(a)) > cutoff:
                return i
        return self.n + 1

    def is_zero(self, atol=0.0) -> bool:
        return self.scale() <= atol

    def allclose(self, other, atol=1e-12) -> bool:
        self._check(other)
        return bool(np.max(np.abs(self.coeffs - other.coeffs), initial=0.0) <= atol)

    def augmentation(self) -> np.ndarray:
        """Sum of all coefficients; the (0, 0) block of the matrix realization."""
        return self.coeffs.sum(axis=0)

    def to_matrix(self) -> np.ndarray:
        return to_matrix(self)

    def __repr__(self):
        return f"RingElement(n={self.n}, d={self.d}, coeffs={self.coeffs.tolist()!r})"


def ring_mul(a: RingElement, b: RingElement) -> RingElement:
    """Product ``sum_{i,j} (a_i b_j) sigma_{min(i+j, n)}``."""
    a._check(b)
    n = a.n
    prods = np.einsum("ikl,jlm->ijkm", a.coeffs, b.coeffs)
    out = np.zeros_like(a.coeffs)
    # i-major accumulation keeps cancellations in mu-powers exact
    for i in range(n + 1):
        for j in range(n + 1):
            out[min(i + j, n)] += prods[i, j]
    return RingElement(out)


def ring_bracket(a: RingElement, b: RingElement) -> RingElement:
    return RingElement(ring_mul(a, b).coeffs - ring_mul(b, a).coeffs)


def ring_power(a: RingElement, k: int) -> RingElement:
    out = RingElement.unit(a.n, a.d)
    for _ in range(k):
        out = ring_mul(out, a)
    return out


def to_matrix(a: RingElement) -> np.ndarray:
    """Block lower-triangular matrix of the linear chain vector field.

    Block ``(j, 0)`` is ``a_j + ... + a_n`` and block ``(j, k)`` for
    ``1 <= k <= j`` is ``a_{j-k}``.
    """
    n, d = a.n, a.d
    tails = np.cumsum(a.coeffs[::-1], axis=0)[::-1]
    m = np.zeros(((n + 1) * d, (n + 1) * d))
    for j in range(n + 1):
        m[j * d:(j + 1) * d, 0:d] = tails[j]
        for k in range(1, j + 1):
            m[j * d:(j + 1) * d, k * d:(k + 1) * d] = a.coeffs[j - k]
    return m


def from_matrix(m: np.ndarray, n: int, d: int) -> RingElement:
    """Inverse of :func:`to_matrix`; reads coefficients from the last block row."""
    m = np.asarray(m, dtype=float)
    if m.shape != ((n + 1) * d, (n + 1) * d):
        raise ShapeError(f"matrix shape {m.shape} does not fit n={n}, d={d}")
    c = np.zeros((n + 1, d, d))
    row = m[n * d:(n + 1) * d]
    for k in range(1, n + 1):
        c[n - k] = row[:, k * d:(k + 1) * d]
    c[n] = row[:, 0:d]
    return RingElement(c)


@dataclass(frozen=True, eq=False)
class MuElement:
    """Coordinates in the basis ``mu_0, ..., mu_{n-1}, sigma_n``.

    ``coeffs[i]`` multiplies ``mu_i`` for ``i < n`` and ``coeffs[n]``
    multiplies ``sigma_n``.
    """

    coeffs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coeffs", _as_coeffs(self.coeffs))

    @property
    def n(self) -> int:
        return self.coeffs.shape[0] - 1

    @property
    def d(self) -> int:
        return self.coeffs.shape[1]


def to_mu(a: RingElement) -> MuElement:
    c = a.coeffs.copy()
    c[a.n] = a.coeffs.sum(axis=0)
    return MuElement(c)


def from_mu(m: MuElement) -> RingElement:
    n = m.n
    c = m.coeffs.copy()
    c[n] = m.coeffs[n] - m.coeffs[:n].sum(axis=0)
    return RingElement(c)


def mu_convert(a):
    """Convert between the sigma and mu bases (direction chosen by type)."""
    if isinstance(a, RingElement):
        return to_mu(a)
    if isinstance(a, MuElement):
        return from_mu(a)
    raise TypeError(f"cannot convert {type(a).__name__}")


def is_mu_nilpotent(g: RingElement, rtol=ZERO_RTOL) -> bool:
    """True when ``g`` lies in the span of ``mu_1, ..., mu_{n-1}``."""
    mu = to_mu(g)
    cutoff = rtol * max(g.scale(), 1.0)
    return bool(
        np.max(np.abs(mu.coeffs[0])) <= cutoff and np.max(np.abs(mu.coeffs[g.n])) <= cutoff
    )


def ring_exp_nilpotent(g: RingElement) -> RingElement:
    """Exponential of a nilpotent ``g`` in ``span(mu_1 .. mu_{n-1})``.

    Since ``mu_i mu_j = mu_{min(i+j, n)}`` and ``mu_n = 0``, ``g**n = 0`` and
    the series stops after ``n`` terms.
    """
    if not is_mu_nilpotent(g):
        raise PreconditionError(
            "ring_exp_nilpotent needs g in span(mu_1, ..., mu_{n-1}): "
            "its mu_0 and sigma_n coordinates must vanish"
        )
    n, d = g.n, g.d
    out = RingElement.unit(n, d).coeffs.copy()
    term = RingElement.unit(n, d)
    for j in range(1, n):
        term = ring_mul(term, g)
        if term.scale() == 0.0:
            break
        out += term.coeffs / factorial(j)
    return RingElement(out)


def homomorphism_residual(a: RingElement, b: RingElement) -> float:
    """``max|M(ab) - M(a) M(b)|`` relative to ``max|M(a)| * max|M(b)| * (n+1) d``."""
    ma, mb = to_matrix(a), to_matrix(b)
    diff = np.max(np.abs(to_matrix(ring_mul(a, b)) - ma @ mb))
    scale = np.max(np.abs(ma)) * np.max(np.abs(mb)) * ma.shape[0]
    return float(diff / scale) if scale > 0 else float(diff)


def verify_homomorphism(rng, n, d, trials):
    """Largest :func:`homomorphism_residual` over ``trials`` random pairs."""
    worst = 0.0
    for _ in range(trials):
        a = RingElement.random(rng, n, d)
        b = RingElement.random(rng, n, d)
        worst = max(worst, homomorphism_residual(a, b))
    return worst
