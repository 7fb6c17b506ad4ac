"""Feed-forward chain vector fields built from a single response function.

Cell ``j`` of the chain evolves by ``f(x_{s_0(j)}, ..., x_{s_n(j)}; lam)`` with
``s_i(j) = max(j - i, 0)``.  Response functions are polynomials; the real
form :class:`PolyResponse` works over scalar state coordinates, the complex
form :class:`ComplexResponse` (two-dimensional cells only) over ``Z_j`` and
their conjugates.
"""

from __future__ import annotations

from functools import cached_property

import numpy as np

from .errors import BracketOverflowError, InvarianceError, ShapeError
from .poly import Poly
from .ring import RingElement

DEFAULT_DEGREE_CAP = 6


def sigma(i: int, j: int, n: int) -> int:
    """The semigroup map ``sigma_i(j) = max(j - i, 0)`` on ``{0..n}``."""
    if not (0 <= i <= n and 0 <= j <= n):
        raise ValueError(f"sigma indices out of range: i={i}, j={j}, n={n}")
    return max(j - i, 0)


def sigma_table(n: int) -> np.ndarray:
    """``table[j, i] = sigma_i(j)``."""
    return np.array([[max(j - i, 0) for i in range(n + 1)] for j in range(n + 1)], dtype=np.int64)


def apply_A_sigma(i: int, X):
    """``(A_{sigma_i} X)_j = X_{min(j + i, n)}`` on an argument tuple."""
    X = np.asarray(X)
    n = X.shape[0] - 1
    if not 0 <= i <= n:
        raise ValueError(f"A_sigma index {i} outside 0..{n}")
    return X[[min(j + i, n) for j in range(n + 1)]]


def chain_arguments(x) -> np.ndarray:
    """Argument tuples of every cell: ``out[..., j, i] = x[..., sigma_i(j)]``."""
    x = np.asarray(x)
    n = x.shape[-2] - 1 if x.ndim >= 2 else x.shape[-1] - 1
    return x[..., sigma_table(n), :] if x.ndim >= 2 else x[..., sigma_table(n)]


def shift_solution(x, cell_axis=-2):
    """``(x_0, x_1, ..., x_n) -> (x_0, x_0, x_1, ..., x_{n-1})`` along the cell axis.

    Real states have shape ``(..., n+1, d)`` (cell axis -2); complex cell
    states ``(..., n+1)`` need ``cell_axis=-1``.
    """
    x = np.asarray(x)
    idx = [0] + list(range(x.shape[cell_axis] - 1))
    return np.take(x, idx, axis=cell_axis)


class PolyResponse:
    """Real polynomial response ``f: V^{n+1} x R -> V`` with ``V = R^d``.

    Variables are ordered ``x_{i,c}`` at ``i*d + c`` followed by ``lam``.
    """

    def __init__(self, n: int, d: int, poly: Poly):
        if poly.nvars != (n + 1) * d + 1 or poly.width != d:
            raise ShapeError(
                f"polynomial with nvars={poly.nvars}, width={poly.width} does not fit n={n}, d={d}"
            )
        if poly.is_complex:
            raise ShapeError("PolyResponse needs real coefficients")
        self.n = n
        self.d = d
        self.poly = poly

    # construction ----------------------------------------------------------

    @property
    def nx(self):
        return (self.n + 1) * self.d

    @property
    def lam_var(self):
        return self.nx

    def var(self, i, c=0):
        return i * self.d + c

    @classmethod
    def from_terms(cls, n, d, terms):
        """``terms`` maps ``{(cell, comp): power, ..., 'lam': power}`` dicts or exponent tuples."""
        out = {}
        nv = (n + 1) * d + 1
        for key, c in terms.items():
            if isinstance(key, tuple) and len(key) == nv:
                exp = key
            else:
                e = [0] * nv
                for var, p in dict(key).items():
                    if var == "lam":
                        e[-1] += p
                    else:
                        i, comp = var if isinstance(var, tuple) else (var, 0)
                        e[i * d + comp] += p
                exp = tuple(e)
            out[exp] = out.get(exp, 0) + np.atleast_1d(np.asarray(c, dtype=float))
        return cls(n, d, Poly(nv, d, out))

    @classmethod
    def linear(cls, coeffs_by_power, n=None, d=None):
        """Build ``sum_i a_i(lam) X_i`` from ``{power: [a_0, ..., a_n]}`` matrix lists."""
        first = next(iter(coeffs_by_power.values()))
        n = len(first) - 1 if n is None else n
        d = np.atleast_2d(first[0]).shape[0] if d is None else d
        nv = (n + 1) * d + 1
        terms = {}
        for p, mats in coeffs_by_power.items():
            for i, m in enumerate(mats):
                m = np.atleast_2d(np.asarray(m, dtype=float))
                for c in range(d):
                    if np.any(m[:, c] != 0):
                        e = [0] * nv
                        e[i * d + c] = 1
                        e[-1] = p
                        terms[tuple(e)] = terms.get(tuple(e), 0) + m[:, c]
        return cls(n, d, Poly(nv, d, terms))

    @classmethod
    def from_ring(cls, a: RingElement):
        return cls.linear({0: list(a.coeffs)})

    def __add__(self, other):
        self._same(other)
        return PolyResponse(self.n, self.d, self.poly + other.poly)

    def __sub__(self, other):
        self._same(other)
        return PolyResponse(self.n, self.d, self.poly - other.poly)

    def __neg__(self):
        return PolyResponse(self.n, self.d, -self.poly)

    def scale(self, factor):
        return PolyResponse(self.n, self.d, self.poly.scale(float(factor)))

    def _same(self, other):
        if (self.n, self.d) != (other.n, other.d):
            raise ShapeError(f"response shapes differ: {(self.n, self.d)} vs {(other.n, other.d)}")

    def allclose(self, other, atol=1e-12):
        self._same(other)
        return self.poly.allclose(other.poly, atol)

    def __repr__(self):
        return f"PolyResponse(n={self.n}, d={self.d}, terms={len(self.poly)})"

    # inspection ------------------------------------------------------------

    def pins_origin(self) -> bool:
        """``f(0; lam) = 0`` for all ``lam``: no term is free of state variables."""
        return all(sum(k[:self.nx]) > 0 for k in self.poly.terms)

    def x_degrees(self):
        return self.poly.degrees(range(self.nx))

    def lam_degrees(self):
        return self.poly.degrees([self.lam_var])

    def linear_coeffs(self, lam=0.0):
        """Matrices ``a_i(lam) = D_i f(0; lam)`` for ``i = 0..n``."""
        a = np.zeros((self.n + 1, self.d, self.d))
        for k, c in self.poly.terms.items():
            if sum(k[:self.nx]) != 1:
                continue
            v = next(idx for idx in range(self.nx) if k[idx])
            i, comp = divmod(v, self.d)
            a[i][:, comp] += c * lam ** k[-1]
        return a

    def linear_coeffs_by_power(self):
        """``{p: array (n+1, d, d)}`` with ``a_i(lam) = sum_p lam**p * out[p][i]``."""
        out = {}
        for k, c in self.poly.terms.items():
            if sum(k[:self.nx]) != 1:
                continue
            v = next(idx for idx in range(self.nx) if k[idx])
            i, comp = divmod(v, self.d)
            p = k[-1]
            out.setdefault(p, np.zeros((self.n + 1, self.d, self.d)))[i][:, comp] += c
        return out

    def linearization(self, lam=0.0) -> RingElement:
        return RingElement(self.linear_coeffs(lam))

    @cached_property
    def partials(self):
        """``partials[i][c] = d f / d x_{i,c}`` as polynomials."""
        return [[self.poly.diff(self.var(i, c)) for c in range(self.d)] for i in range(self.n + 1)]

    # evaluation ------------------------------------------------------------

    def _points(self, X, lam):
        X = np.asarray(X, dtype=float)
        if X.shape[-2:] != (self.n + 1, self.d):
            raise ShapeError(f"argument tuple shape {X.shape[-2:]} != {(self.n + 1, self.d)}")
        flat = X.reshape(X.shape[:-2] + (self.nx,))
        lamcol = np.broadcast_to(np.asarray(lam, dtype=float), flat.shape[:-1])[..., None]
        return np.concatenate([flat, lamcol], axis=-1)

    def __call__(self, X, lam=0.0):
        """Evaluate at argument tuples of shape ``(..., n+1, d)``."""
        return self.poly(self._points(X, lam))

    def eval_partial(self, i, X, lam=0.0):
        """``D_i f(X; lam)`` as ``(..., d, d)`` matrices."""
        pts = self._points(X, lam)
        cols = [self.partials[i][c](pts) for c in range(self.d)]
        return np.stack(cols, axis=-1)

    def fix_lambda(self, lam):
        """Response with ``lam`` substituted; the lambda variable is kept at power 0."""
        out = {}
        for k, c in self.poly.terms.items():
            key = k[:-1] + (0,)
            out[key] = out.get(key, 0) + c * lam ** k[-1]
        return PolyResponse(self.n, self.d, Poly(self.poly.nvars, self.d, out))


def eval_gamma(f: PolyResponse, x, lam=0.0):
    """Chain vector field ``(gamma_f)_j(x) = f(x_{sigma_0(j)}, ..., x_{sigma_n(j)}; lam)``."""
    x = np.asarray(x, dtype=float)
    if x.shape[-2:] != (f.n + 1, f.d):
        raise ShapeError(f"state shape {x.shape[-2:]} != {(f.n + 1, f.d)}")
    return f(x[..., sigma_table(f.n), :], lam)


def gamma_jacobian(f: PolyResponse, x, lam=0.0):
    """Jacobian of ``gamma_f`` at a single state, shape ``((n+1)d, (n+1)d)``."""
    n, d = f.n, f.d
    x = np.asarray(x, dtype=float)
    args = x[sigma_table(n), :]
    jac = np.zeros(((n + 1) * d, (n + 1) * d))
    for j in range(n + 1):
        for i in range(n + 1):
            k = max(j - i, 0)
            jac[j * d:(j + 1) * d, k * d:(k + 1) * d] += f.eval_partial(i, args[j], lam)
    return jac


def gamma_jvp(f: PolyResponse, x, v, lam=0.0):
    """Directional derivative ``D gamma_f(x) v`` for states of shape ``(..., n+1, d)``."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    table = sigma_table(f.n)
    args = x[..., table, :]
    out = np.zeros(np.broadcast_shapes(x.shape, v.shape))
    for i in range(f.n + 1):
        out += np.einsum("...ab,...b->...a", f.eval_partial(i, args, lam), v[..., table[:, i], :])
    return out


def lie_bracket_gamma(f: PolyResponse, g: PolyResponse, x, lam=0.0):
    """``[gamma_f, gamma_g](x) = D gamma_f(x) gamma_g(x) - D gamma_g(x) gamma_f(x)``.

    ``x`` may hold a batch of states with shape ``(..., n+1, d)``.
    """
    x = np.asarray(x, dtype=float)
    return gamma_jvp(f, x, eval_gamma(g, x, lam), lam) - gamma_jvp(g, x, eval_gamma(f, x, lam), lam)


def _shift_map(f: PolyResponse, i: int):
    n, d = f.n, f.d
    mapping = [min(v // d + i, n) * d + v % d for v in range(f.nx)] + [f.lam_var]
    return mapping


def compose_A_sigma(f: PolyResponse, i: int) -> PolyResponse:
    """The response ``X -> f(A_{sigma_i} X)``."""
    return PolyResponse(f.n, f.d, f.poly.rename(_shift_map(f, i)))


def sigma_bracket(f: PolyResponse, g: PolyResponse, degree_cap=DEFAULT_DEGREE_CAP) -> PolyResponse:
    """``[f, g]_Sigma = sum_i D_i f . g(A_{sigma_i} X) - D_i g . f(A_{sigma_i} X)``."""
    f._same(g)
    deg = max(f.x_degrees(), default=0) + max(g.x_degrees(), default=0) - 1
    if deg > degree_cap:
        raise BracketOverflowError(
            f"bracket would reach state degree {deg}, above the cap {degree_cap}"
        )
    n, d = f.n, f.d
    total = Poly.zero(f.poly.nvars, d)
    for i in range(n + 1):
        g_shift = compose_A_sigma(g, i).poly
        f_shift = compose_A_sigma(f, i).poly
        for c in range(d):
            total = total + f.partials[i][c] * g_shift.component(c)
            total = total - g.partials[i][c] * f_shift.component(c)
    return PolyResponse(n, d, total.drop_small())


def grading_degree(f: PolyResponse):
    """``(k, l)`` when ``f`` is homogeneous of degree ``k+1`` in X and ``l`` in lam, else ``'mixed'``."""
    xs = f.x_degrees()
    ls = f.lam_degrees()
    if len(xs) != 1 or len(ls) != 1:
        return "mixed"
    (kx,) = xs
    (l,) = ls
    if kx == 0:
        return "mixed"
    return (kx - 1, l)


class ComplexResponse:
    """Complex view of a response with two-dimensional cells.

    Variables: ``Z_0..Z_n`` at ``0..n``, ``conj(Z_0)..conj(Z_n)`` at
    ``n+1..2n+1``, then ``lam``.  Coefficients are complex scalars and the
    value is ``f^1 + i f^2``.
    """

    def __init__(self, n: int, poly: Poly):
        if poly.nvars != 2 * (n + 1) + 1 or poly.width != 1:
            raise ShapeError(f"complex response polynomial does not fit n={n}")
        self.n = n
        self.poly = Poly(poly.nvars, 1, {k: v.astype(complex) for k, v in poly.terms.items()})

    @property
    def lam_var(self):
        return 2 * (self.n + 1)

    def zvar(self, j):
        return j

    def cvar(self, j):
        return self.n + 1 + j

    @classmethod
    def from_terms(cls, n, terms):
        """``terms`` maps ``{'Z0': a, 'Z0c': b, 'lam': l, ...}`` dicts (or exponent tuples) to complex coefficients."""
        nv = 2 * (n + 1) + 1
        out = {}
        for key, c in terms.items():
            if isinstance(key, tuple) and len(key) == nv:
                exp = key
            else:
                e = [0] * nv
                for var, p in dict(key).items():
                    if var == "lam":
                        e[-1] += p
                    elif var.endswith("c"):
                        e[n + 1 + int(var[1:-1])] += p
                    else:
                        e[int(var[1:])] += p
                exp = tuple(e)
            out[exp] = out.get(exp, 0) + np.atleast_1d(complex(c))
        return cls(n, Poly(nv, 1, out))

    def __add__(self, other):
        if other.n != self.n:
            raise ShapeError("complex responses of different chain length")
        return ComplexResponse(self.n, self.poly + other.poly)

    def __sub__(self, other):
        return self + ComplexResponse(other.n, -other.poly)

    def __repr__(self):
        return f"ComplexResponse(n={self.n}, terms={len(self.poly)})"

    def _points(self, Z, lam):
        Z = np.asarray(Z, dtype=complex)
        if Z.shape[-1] != self.n + 1:
            raise ShapeError(f"complex argument tuple needs {self.n + 1} cells")
        lamcol = np.broadcast_to(np.asarray(lam, dtype=complex), Z.shape[:-1])[..., None]
        return np.concatenate([Z, np.conj(Z), lamcol], axis=-1)

    def __call__(self, Z, lam=0.0):
        """Evaluate at complex argument tuples of shape ``(..., n+1)``; returns ``(...)``."""
        return self.poly(self._points(Z, lam))[..., 0]

    @cached_property
    def wirtinger(self):
        """``(d/dZ_i, d/dconj(Z_i))`` polynomials for each argument index."""
        return [(self.poly.diff(self.zvar(i)), self.poly.diff(self.cvar(i))) for i in range(self.n + 1)]

    def eval_wirtinger(self, i, Z, lam=0.0):
        pts = self._points(Z, lam)
        dz, dc = self.wirtinger[i]
        return dz(pts)[..., 0], dc(pts)[..., 0]

    def coefficient(self, z_exps=None, c_exps=None, lam_power=0):
        """Coefficient of ``prod Z_j^{z_j} conj(Z_j)^{c_j} lam^p``."""
        key = [0] * self.poly.nvars
        for j, p in (z_exps or {}).items():
            key[self.zvar(j)] = p
        for j, p in (c_exps or {}).items():
            key[self.cvar(j)] = p
        key[-1] = lam_power
        return complex(self.poly.coefficient(key)[0])

    def to_real(self) -> PolyResponse:
        """Expand ``Z_j = x_j + i y_j`` into a real ``PolyResponse`` with ``d = 2``."""
        n = self.n
        nv = 2 * (n + 1) + 1
        subs = []
        for j in range(n + 1):
            subs.append(Poly(nv, 1, {_unit(nv, 2 * j): [1.0], _unit(nv, 2 * j + 1): [1j]}))
        for j in range(n + 1):
            subs.append(Poly(nv, 1, {_unit(nv, 2 * j): [1.0], _unit(nv, 2 * j + 1): [-1j]}))
        subs.append(Poly.variable(nv, nv - 1).scale(1.0 + 0j))
        cplx = self.poly.compose(subs)
        terms = {k: np.array([v[0].real, v[0].imag]) for k, v in cplx.terms.items()}
        return PolyResponse(n, 2, Poly(nv, 2, terms).drop_small())

    @classmethod
    def from_real(cls, f: PolyResponse) -> "ComplexResponse":
        """Inverse of :meth:`to_real`: ``x = (Z + Zc)/2``, ``y = (Z - Zc)/(2i)``."""
        if f.d != 2:
            raise ShapeError("complex view needs two-dimensional cells")
        n = f.n
        nv = 2 * (n + 1) + 1
        subs = []
        for j in range(n + 1):
            zj, cj = _unit(nv, j), _unit(nv, n + 1 + j)
            subs.append(Poly(nv, 1, {zj: [0.5 + 0j], cj: [0.5 + 0j]}))
            subs.append(Poly(nv, 1, {zj: [-0.5j], cj: [0.5j]}))
        subs.append(Poly.variable(nv, nv - 1).scale(1.0 + 0j))
        out = Poly.zero(nv, 1)
        for k, c in f.poly.terms.items():
            mono = Poly(f.poly.nvars, 1, {k: [c[0] + 1j * c[1]]})
            out = out + mono.compose(subs)
        return cls(n, out.drop_small())

    def linear_parts(self, lam=0.0):
        """``(p_i(lam), q_i(lam))`` with ``a_i(lam) v = p_i v + q_i conj(v)``."""
        p = np.zeros(self.n + 1, dtype=complex)
        q = np.zeros(self.n + 1, dtype=complex)
        for k, c in self.poly.terms.items():
            if sum(k[:-1]) != 1:
                continue
            v = next(idx for idx in range(len(k) - 1) if k[idx])
            if v <= self.n:
                p[v] += c[0] * lam ** k[-1]
            else:
                q[v - self.n - 1] += c[0] * lam ** k[-1]
        return p, q


def _unit(nv, idx):
    e = [0] * nv
    e[idx] = 1
    return tuple(e)


def realify(p, q=0.0) -> np.ndarray:
    """Real 2x2 matrix of ``v -> p v + q conj(v)``."""
    p, q = complex(p), complex(q)
    return np.array(
        [[p.real + q.real, -p.imag + q.imag], [p.imag + q.imag, p.real - q.real]]
    )


def complexify(m) -> tuple:
    """Inverse of :func:`realify`."""
    (a, b), (c, e) = np.asarray(m, dtype=float)
    return complex((a + e) / 2, (c - b) / 2), complex((a - e) / 2, (c + b) / 2)


def invariance_violations(fc: ComplexResponse):
    """Monomials free of the last argument that break ``sum(Z-exps) - sum(Zc-exps) = 1``."""
    n = fc.n
    bad = []
    for k in fc.poly.terms:
        if k[n] or k[2 * n + 1]:
            continue
        if sum(k[:n]) - sum(k[n + 1:2 * n + 1]) != 1:
            bad.append(k)
    return bad


def s1_invariance_defect(fc: ComplexResponse, rng=None, trials=20, lam=None):
    """Max of ``|f(e^{is}X_0..e^{is}X_{n-1}, 0) - e^{is} f(X_0..X_{n-1}, 0)|`` on random draws."""
    rng = np.random.default_rng(0) if rng is None else rng
    n = fc.n
    worst = 0.0
    for _ in range(trials):
        Z = rng.standard_normal(n + 1) + 1j * rng.standard_normal(n + 1)
        Z[n] = 0.0
        s = rng.uniform(0, 2 * np.pi)
        lm = rng.standard_normal() if lam is None else lam
        rot = np.exp(1j * s)
        lhs = fc(rot * Z, lm)
        rhs = rot * fc(Z, lm)
        worst = max(worst, abs(lhs - rhs) / max(1.0, abs(rhs)))
    return worst


def require_s1_invariant(fc: ComplexResponse, tol=1e-10):
    bad = invariance_violations(fc)
    defect = s1_invariance_defect(fc)
    if bad or defect > tol:
        raise InvarianceError(
            f"response is not S^1-invariant in its first n arguments "
            f"({len(bad)} offending monomials, numerical defect {defect:.2e})"
        )
