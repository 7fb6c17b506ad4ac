"""Sparse multivariate polynomial maps with vector coefficients.

A :class:`Poly` is a finite sum ``sum_e c_e * v**e`` where ``e`` is an exponent
tuple over ``nvars`` variables and every ``c_e`` is a coefficient vector of
length ``width`` (real or complex).
"""

from __future__ import annotations

from functools import cached_property

import numpy as np

DROP_RTOL = 1e-14


class Poly:
    """Treated as immutable once built; :attr:`arrays` is cached."""

    def __init__(self, nvars, width, terms=None, dtype=None):
        self.nvars = int(nvars)
        self.width = int(width)
        clean = {}
        for key, c in (terms or {}).items():
            key = tuple(int(k) for k in key)
            if len(key) != self.nvars:
                raise ValueError(f"exponent {key} has wrong length (nvars={self.nvars})")
            if any(k < 0 for k in key):
                raise ValueError(f"negative exponent in {key}")
            c = np.asarray(c)
            c = np.array(c, dtype=dtype if dtype is not None else np.result_type(c.dtype, float))
            c = np.broadcast_to(c, (self.width,)).copy()
            if np.any(c != 0):
                if key in clean:
                    clean[key] = clean[key] + c
                else:
                    clean[key] = c
        self.terms = clean

    # construction ----------------------------------------------------------

    @classmethod
    def zero(cls, nvars, width):
        return cls(nvars, width)

    @classmethod
    def constant(cls, nvars, value):
        value = np.atleast_1d(value)
        return cls(nvars, value.size, {(0,) * nvars: value})

    @classmethod
    def variable(cls, nvars, index, coeff=1.0):
        key = [0] * nvars
        key[index] = 1
        return cls(nvars, 1, {tuple(key): np.atleast_1d(coeff)})

    def copy(self):
        return Poly(self.nvars, self.width, {k: v.copy() for k, v in self.terms.items()})

    @property
    def dtype(self):
        if not self.terms:
            return np.dtype(float)
        return np.result_type(*self.terms.values())

    @property
    def is_complex(self):
        return np.issubdtype(self.dtype, np.complexfloating)

    # arithmetic ------------------------------------------------------------

    def _like(self, other):
        if other.nvars != self.nvars:
            raise ValueError(f"variable count differs: {self.nvars} vs {other.nvars}")

    def __add__(self, other):
        self._like(other)
        width = max(self.width, other.width)
        out = {k: np.broadcast_to(v, (width,)).copy() for k, v in self.terms.items()}
        for k, v in other.terms.items():
            out[k] = out[k] + v if k in out else np.broadcast_to(v, (width,)).copy()
        return Poly(self.nvars, width, out)

    def __neg__(self):
        return Poly(self.nvars, self.width, {k: -v for k, v in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def scale(self, factor):
        return Poly(self.nvars, self.width, {k: v * factor for k, v in self.terms.items()})

    def __mul__(self, other):
        """Product with broadcasting over the coefficient width (1 x w or w x w)."""
        if not isinstance(other, Poly):
            return self.scale(other)
        self._like(other)
        if 1 not in (self.width, other.width) and self.width != other.width:
            raise ValueError(f"cannot multiply widths {self.width} and {other.width}")
        width = max(self.width, other.width)
        out = {}
        for k1, c1 in self.terms.items():
            for k2, c2 in other.terms.items():
                key = tuple(a + b for a, b in zip(k1, k2))
                c = c1 * c2
                out[key] = out[key] + c if key in out else c
        return Poly(self.nvars, width, out)

    __rmul__ = scale

    def __pow__(self, k):
        if k < 0 or int(k) != k:
            raise ValueError("only non-negative integer powers")
        out = Poly.constant(self.nvars, np.ones(self.width))
        for _ in range(int(k)):
            out = out * self
        return out

    def component(self, c):
        return Poly(self.nvars, 1, {k: v[c:c + 1] for k, v in self.terms.items()})

    def drop_small(self, rtol=DROP_RTOL):
        """Remove terms negligible relative to the largest coefficient."""
        if not self.terms:
            return self
        big = max(float(np.max(np.abs(v))) for v in self.terms.values())
        cut = rtol * big
        return Poly(
            self.nvars,
            self.width,
            {k: v for k, v in self.terms.items() if np.max(np.abs(v)) > cut},
        )

    # calculus and substitution ---------------------------------------------

    def diff(self, var):
        out = {}
        for k, c in self.terms.items():
            p = k[var]
            if p == 0:
                continue
            key = list(k)
            key[var] = p - 1
            out[tuple(key)] = c * p
        return Poly(self.nvars, self.width, out)

    def rename(self, mapping, nvars=None):
        """Substitute ``v_i -> v_{mapping[i]}`` (exponents of merged variables add)."""
        nvars = self.nvars if nvars is None else nvars
        out = {}
        for k, c in self.terms.items():
            key = [0] * nvars
            for i, p in enumerate(k):
                if p:
                    key[mapping[i]] += p
            key = tuple(key)
            out[key] = out[key] + c if key in out else c
        return Poly(nvars, self.width, out)

    def compose(self, subs):
        """Substitute each variable by a scalar (width-1) polynomial."""
        if len(subs) != self.nvars:
            raise ValueError("need one substitution per variable")
        nv = subs[0].nvars
        one = Poly.constant(nv, np.ones(1, dtype=np.result_type(*(s.dtype for s in subs))))
        powers = [[one] for _ in subs]
        out = Poly.zero(nv, self.width)
        for k, c in self.terms.items():
            m = one
            for i, p in enumerate(k):
                if p == 0:
                    continue
                while len(powers[i]) <= p:
                    powers[i].append(powers[i][-1] * subs[i])
                m = m * powers[i][p]
            out = out + m * Poly.constant(nv, c)
        return out

    # inspection ------------------------------------------------------------

    def degrees(self, variables=None):
        """Set of total degrees of all terms, optionally restricted to some vars."""
        if variables is None:
            variables = range(self.nvars)
        variables = list(variables)
        return {sum(k[v] for v in variables) for k in self.terms}

    def max_degree(self, variables=None):
        return max(self.degrees(variables), default=0)

    def coefficient(self, key):
        c = self.terms.get(tuple(key))
        return np.zeros(self.width, dtype=self.dtype) if c is None else c.copy()

    def max_abs(self):
        return max((float(np.max(np.abs(v))) for v in self.terms.values()), default=0.0)

    def allclose(self, other, atol=1e-12):
        return (self - other).max_abs() <= atol

    def __eq__(self, other):
        if not isinstance(other, Poly):
            return NotImplemented
        return (
            self.nvars == other.nvars
            and self.width == other.width
            and self.terms.keys() == other.terms.keys()
            and all(np.array_equal(v, other.terms[k]) for k, v in self.terms.items())
        )

    __hash__ = None

    def __len__(self):
        return len(self.terms)

    def __repr__(self):
        return f"Poly(nvars={self.nvars}, width={self.width}, terms={len(self.terms)})"

    # evaluation ------------------------------------------------------------

    @cached_property
    def arrays(self):
        """Dense ``(exponents, coefficients)`` arrays; ``(T, nvars)`` and ``(T, width)``."""
        keys = sorted(self.terms)
        exps = np.array(keys, dtype=np.int64).reshape(len(keys), self.nvars)
        coefs = np.array([self.terms[k] for k in keys], dtype=self.dtype).reshape(
            len(keys), self.width
        )
        return exps, coefs

    def __call__(self, points):
        """Evaluate at ``points`` of shape ``(..., nvars)``; returns ``(..., width)``."""
        points = np.asarray(points)
        exps, coefs = self.arrays
        if exps.shape[0] == 0:
            return np.zeros(points.shape[:-1] + (self.width,), dtype=np.result_type(points, float))
        mono = np.prod(points[..., None, :] ** exps, axis=-1)
        return mono @ coefs
