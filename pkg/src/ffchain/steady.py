"""Steady-state branches of scalar feed-forward chains.

For a scalar chain with ``a_0(0) = 0`` there are ``2n`` branches of
nontrivial equilibria.  On branch ``r`` the cells ``0 .. r-1`` stay at zero,
cell ``r`` grows linearly in ``lam`` and every further cell is the square
root of the previous one to leading order, so cell ``r+m`` scales like
``|lam|**(1/2**m)``.

The cells are solved one after the other.  Each solve is a scalar Newton
iteration on the equation of that cell, seeded from the leading-order
balance and judged in the variable rescaled by ``|lam|**kappa``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BranchError, GenericityError
from .fitting import fit_power_law
from .network import PolyResponse, eval_gamma, shift_solution, sigma_table

GENERIC_TOL = 1e-10
NEWTON_TOL = 1e-12
NEWTON_MAXIT = 50
TRUST_FACTOR = 10.0


def steady_kappa(m: int) -> float:
    """Exponent of the ``m``-th cell past the first nonzero one: ``1/2**m``."""
    return 0.5**m


@dataclass
class GenericityReport1D:
    sum_a: float
    da0: float
    a1: float
    C: float
    a0_at_zero: float
    problems: list = field(default_factory=list)

    @property
    def flags(self):
        return {
            "sum_nonzero": abs(self.sum_a) > GENERIC_TOL,
            "crossing": abs(self.da0) > GENERIC_TOL,
            "coupling": abs(self.a1) > GENERIC_TOL,
            "quadratic": abs(self.C) > GENERIC_TOL,
        }

    @property
    def passed(self) -> bool:
        return not self.problems and all(self.flags.values())

    @property
    def quadratic_coefficient(self) -> float:
        """Taylor coefficient of ``X0**2``, half the second derivative."""
        return 0.5 * self.C

    def failures(self):
        msgs = list(self.problems)
        names = {
            "sum_nonzero": "a_0(0) + ... + a_n(0) vanishes",
            "crossing": "d a_0 / d lam (0) vanishes",
            "coupling": "a_1(0) vanishes",
            "quadratic": "d^2 f / d X_0^2 (0; 0) vanishes",
        }
        msgs += [names[k] for k, ok in self.flags.items() if not ok]
        return msgs

    def to_dict(self):
        return {
            "sum_a": self.sum_a,
            "da0": self.da0,
            "a1": self.a1,
            "C": self.C,
            "flags": self.flags,
            "problems": list(self.problems),
            "passed": self.passed,
        }


def genericity_check_1d(f: PolyResponse) -> GenericityReport1D:
    """The four nondegeneracy scalars of the scalar steady-state problem."""
    problems = []
    if f.d != 1:
        problems.append(f"cells must be scalar, got d={f.d}")
        return GenericityReport1D(np.nan, np.nan, np.nan, np.nan, np.nan, problems)
    if not f.pins_origin():
        problems.append("f(0; lam) is not identically zero")
    n = f.n
    by_power = f.linear_coeffs_by_power()
    zero = np.zeros((n + 1, 1, 1))
    a_at0 = by_power.get(0, zero)[:, 0, 0]
    da = by_power.get(1, zero)[:, 0, 0]
    if abs(a_at0[0]) > GENERIC_TOL:
        problems.append(f"a_0(0) = {a_at0[0]:.3g} is not zero")
    key = [0] * f.poly.nvars
    key[0] = 2
    C = 2.0 * float(f.poly.coefficient(key)[0])
    a1 = float(a_at0[1]) if n >= 1 else 0.0
    return GenericityReport1D(float(a_at0.sum()), float(da[0]), a1, C, float(a_at0[0]), problems)


@dataclass
class SteadySample:
    lam: float
    x: np.ndarray
    eigenvalues: np.ndarray
    residual: float


@dataclass
class SteadyBranch:
    r: int
    sign: int
    lambda_side: int
    n: int
    samples: list = field(default_factory=list)
    kappa_fit: dict = field(default_factory=dict)

    @property
    def kappa_theory(self):
        return [steady_kappa(m) for m in range(self.n - self.r + 1)]

    @property
    def lams(self):
        return np.array([s.lam for s in self.samples])

    @property
    def states(self):
        return np.array([s.x for s in self.samples])

    @property
    def eigenvalues(self):
        return np.array([s.eigenvalues for s in self.samples])

    @property
    def label(self):
        return f"r{self.r}_{'p' if self.sign > 0 else 'm'}"

    def fit_exponents(self):
        """Fit ``|x_{r+m}|`` against ``|lam|`` for every nonzero cell."""
        xs = self.states
        self.kappa_fit = {}
        for m in range(self.n - self.r + 1):
            self.kappa_fit[self.r + m] = fit_power_law(self.lams, xs[:, self.r + m])
        return self.kappa_fit


def _newton_cell(f, args, j, lam, seed, scale, divide):
    """Solve cell ``j``'s equation for ``x_j`` (which sits in argument slot 0).

    ``divide`` removes the trivial root ``x_j = 0``.  Returns ``(x, ok)``;
    ``ok`` is False when the iterate leaves the trust ball around the seed.
    """
    args = np.array(args, dtype=float)
    x = float(seed)
    radius = TRUST_FACTOR * abs(seed)
    for _ in range(NEWTON_MAXIT):
        args[0, 0] = x
        F = float(f(args, lam)[0])
        dF = float(f.eval_partial(0, args, lam)[0, 0])
        if divide:
            G, dG = F / x, (dF * x - F) / (x * x)
            res = abs(G) / scale
        else:
            G, dG = F, dF
            res = abs(G) / scale**2
        if res <= NEWTON_TOL:
            return x, True
        if dG == 0.0:
            return x, False
        x = x - G / dG
        if not np.isfinite(x) or abs(x - seed) > radius or (divide and x == 0.0):
            return x, False
    raise BranchError(f"Newton did not converge for cell {j} at lam={lam:.3e}")


def cell_arguments(x, j):
    """Argument tuple of cell ``j`` as an ``(n+1, d)`` array."""
    x = np.asarray(x)
    n = x.shape[0] - 1
    return x[sigma_table(n)[j]]


def steady_eigenvalues(f: PolyResponse, x, lam):
    """Diagonal entries of the lower-triangular linearization at ``x``."""
    n = f.n
    out = np.empty(n + 1)
    out[0] = sum(float(f.eval_partial(i, cell_arguments(x, 0), lam)[0, 0]) for i in range(n + 1))
    for j in range(1, n + 1):
        out[j] = float(f.eval_partial(0, cell_arguments(x, j), lam)[0, 0])
    return out


def solve_branch_point(f, r, lam, sign, report=None):
    """One equilibrium of branch ``(r, sign)`` at signed ``lam``.

    Raises :class:`BranchError` on Newton failure; returns ``None`` when the
    requested sign is infeasible.
    """
    report = genericity_check_1d(f) if report is None else report
    n = f.n
    q = report.quadratic_coefficient
    a1 = report.a1
    x = np.zeros((n + 1, 1))
    mag = abs(lam)
    inner = -np.sign(a1 / q) if n > r else 1.0
    for m in range(n - r + 1):
        j = r + m
        scale = mag ** steady_kappa(m)
        if m == 0:
            seed = -report.da0 * lam / q
        else:
            s = sign if j == n else inner
            y2 = -a1 * x[j - 1, 0] / q
            if y2 <= 0:
                return None
            seed = s * np.sqrt(y2)
        xj, ok = _newton_cell(f, cell_arguments(x, j), j, lam, seed, scale, divide=(m == 0))
        if not ok:
            return None
        x[j, 0] = xj
    return x


def branch_side(report: GenericityReport1D, r: int, n: int, sign: int) -> int:
    """Side of ``lam = 0`` on which branch ``(r, sign)`` lives."""
    if r < n:
        return int(np.sign(report.da0 * report.a1))
    return int(sign)


def solve_steady_branches(f: PolyResponse, lam_grid, report=None) -> list:
    """All ``2n`` nontrivial branches sampled at the magnitudes in ``lam_grid``."""
    report = genericity_check_1d(f) if report is None else report
    if not report.passed:
        raise GenericityError("genericity conditions fail: " + "; ".join(report.failures()))
    lam_grid = np.abs(np.asarray(lam_grid, dtype=float))
    n = f.n
    branches = []
    for r in range(1, n + 1):
        for sign in (1, -1):
            side = branch_side(report, r, n, sign)
            br = SteadyBranch(r=r, sign=sign, lambda_side=side, n=n)
            for mag in lam_grid:
                lam = side * mag
                x = solve_branch_point(f, r, lam, sign, report)
                if x is None:
                    raise BranchError(f"branch r={r} sign={sign:+d} infeasible at lam={lam:.3e}")
                res = float(np.max(np.abs(eval_gamma(f, x, lam))))
                br.samples.append(SteadySample(lam, x[:, 0].copy(), steady_eigenvalues(f, x, lam), res))
            branches.append(br)
    return branches


def discarded_sign_feasible(f: PolyResponse, r: int, lam: float, report=None) -> bool:
    """Whether the intermediate sign the theory discards still gives an equilibrium.

    Cell ``r+1`` is put on its other root and the solve of cell ``r+2`` is
    attempted from the magnitude of the (now imaginary) leading-order seed.
    Needs ``r <= n - 2``.  ``False`` is the expected outcome.
    """
    report = genericity_check_1d(f) if report is None else report
    n = f.n
    if r > n - 2:
        raise ValueError("the discarded sign only exists for r <= n - 2")
    q, a1 = report.quadratic_coefficient, report.a1
    x = solve_branch_point(f, r, lam, 1, report)
    if x is None:
        return False
    j = r + 1
    xj, ok = _newton_cell(f, cell_arguments(x, j), j, lam, -x[j, 0], abs(lam) ** 0.5, divide=False)
    if not ok or np.sign(xj) == np.sign(x[j, 0]):
        return False
    x[j, 0] = xj
    y2 = -a1 * xj / q
    if y2 > 0:
        return True
    try:
        _, ok = _newton_cell(
            f, cell_arguments(x, j + 1), j + 1, lam, np.sqrt(-y2), abs(lam) ** 0.25, divide=False
        )
    except BranchError:
        return False
    return bool(ok)


@dataclass
class SteadyEigenReport:
    slopes: dict
    theory: dict
    hyperbolic: bool
    passed: bool
    rtol: float


def steady_eigen_report(f: PolyResponse, branch: SteadyBranch, rtol=0.05) -> SteadyEigenReport:
    """Check that ``|b_m(lam)| ~ |lam|**(1/2**m)`` along the branch and that no eigenvalue vanishes."""
    eig = branch.eigenvalues
    slopes = {}
    theory = {}
    for m in range(branch.n - branch.r + 1):
        j = branch.r + m
        slopes[j] = fit_power_law(branch.lams, eig[:, j])
        theory[j] = steady_kappa(m)
    hyper = bool(np.all(np.abs(eig) > 0))
    ok = hyper and all(abs(slopes[j].slope - theory[j]) <= rtol * theory[j] for j in slopes)
    return SteadyEigenReport(slopes, theory, hyper, ok, rtol)


def shift_branch_residual(f: PolyResponse, branch: SteadyBranch) -> float:
    """Largest equilibrium residual of the shifted samples (they belong to branch ``r+1``)."""
    worst = 0.0
    for s in branch.samples:
        y = shift_solution(s.x[:, None])
        worst = max(worst, float(np.max(np.abs(eval_gamma(f, y, s.lam)))))
    return worst


def stable_branches(branches, r=1):
    """Branches with index ``r`` whose every eigenvalue is negative at every sample."""
    return [b for b in branches if b.r == r and np.all(b.eigenvalues < 0)]
