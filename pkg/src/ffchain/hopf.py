"""Amplified Hopf branches of feed-forward chains with two-dimensional cells.

The response is given in complex form as a rotation-invariant normal form.
Periodic solutions are relative equilibria ``x_j(t) = B_j exp(i w t)``,
which turns the chain equations into the algebraic system

    f(B_j, B_{j-1}, ..., B_1, 0, ..., 0; lam) = i w B_j,   j = 1 .. n.

The system is triangular: cell 1 gives ``|B_1|`` and ``w``, then each
further cell is one complex equation for ``B_{j+1}``.  Amplitudes scale
like ``|B_j| ~ |lam|**(1/2 * 3**-(j-1))``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BranchError, GenericityError, SideError
from .fitting import fit_linear, fit_power_law
from .network import ComplexResponse, realify, require_s1_invariant, sigma_table

GENERIC_TOL = 1e-10
NEWTON_TOL = 1e-12
NEWTON_MAXIT = 50
HYPERBOLIC_TOL = 1e-13


def hopf_kappa(m: int) -> float:
    """Amplitude exponent of the ``m``-th oscillating cell (``m = 0`` first)."""
    return 0.5 / 3**m


@dataclass
class HopfCoefficients:
    omega0: float
    alpha: complex
    beta: complex
    C: complex
    sum_a: np.ndarray
    d3_re: float
    problems: list = field(default_factory=list)

    @property
    def flags(self):
        return {
            "rotation": abs(self.omega0) > GENERIC_TOL,
            "persistence": abs(np.linalg.det(self.sum_a)) > GENERIC_TOL,
            "crossing": abs(self.alpha.real) > GENERIC_TOL,
            "nilpotency": abs(self.beta.real) > GENERIC_TOL,
            "nonlinearity": abs(self.C.real) > GENERIC_TOL,
        }

    @property
    def passed(self):
        return not self.problems and all(self.flags.values())

    def failures(self):
        names = {
            "rotation": "a_0(0) has no nonzero imaginary eigenvalue pair (omega0 = 0)",
            "persistence": "persistence of the steady state fails: a_0(0) + ... + a_n(0) is singular",
            "crossing": "eigenvalue crossing fails: d/dlam tr a_0(lam) vanishes at 0",
            "nilpotency": "nilpotency condition fails: tr a_1(0) = 0",
            "nonlinearity": "nonlinearity condition fails: Re C = 0",
        }
        return list(self.problems) + [names[k] for k, ok in self.flags.items() if not ok]

    def lambda_side(self) -> int:
        """Sign of ``lam`` with ``alpha_1 lam / Re C < 0``."""
        return int(np.sign(-self.C.real / self.alpha.real))

    def to_dict(self):
        return {
            "omega0": self.omega0,
            "alpha": [self.alpha.real, self.alpha.imag],
            "beta": [self.beta.real, self.beta.imag],
            "C": [self.C.real, self.C.imag],
            "sum_a": self.sum_a.tolist(),
            "d3_re": self.d3_re,
            "flags": self.flags,
            "problems": list(self.problems),
            "passed": self.passed,
        }


def extract_hopf_coefficients(fc: ComplexResponse, check_invariance=True) -> HopfCoefficients:
    """Read ``omega0, alpha, beta, C`` off a rotation-invariant complex response."""
    if check_invariance:
        require_s1_invariant(fc)
    n = fc.n
    problems = []
    p0, q0 = fc.linear_parts(0.0)
    if abs(p0[0].real) > GENERIC_TOL or abs(q0[0]) > GENERIC_TOL:
        problems.append("a_0(0) is not in rotation form i*omega0")
    omega0 = float(p0[0].imag)
    alpha = fc.coefficient({0: 1}, lam_power=1)
    beta = fc.coefficient({1: 1}) if n >= 1 else 0j
    C = fc.coefficient({0: 2}, {0: 1})
    sum_a = realify(p0.sum(), q0.sum())
    fr = fc.to_real()
    d3 = fr.poly.component(0).diff(0).diff(0).diff(0)
    d3_re = float(d3(np.zeros(fr.poly.nvars))[0])
    if n < 1:
        problems.append("a chain needs at least two cells")
    return HopfCoefficients(omega0, complex(alpha), complex(beta), complex(C), sum_a, d3_re, problems)


# relative equilibrium equations --------------------------------------------


def chain_state(B, r, n):
    """Cells ``0 .. r-1`` at zero, then ``B_1 .. B_{n-r+1}``."""
    x = np.zeros(n + 1, dtype=complex)
    x[r:] = np.asarray(B, dtype=complex)[: n - r + 1]
    return x


def relative_equilibrium_residual(fc: ComplexResponse, x, omega, lam):
    """Per-cell ``f(args_j) - i w x_j`` for a complex chain state ``x``."""
    x = np.asarray(x, dtype=complex)
    args = x[sigma_table(fc.n)]
    return fc(args, lam) - 1j * omega * x


def _cell_args(B_full, j, n):
    return B_full[sigma_table(n)[j]]


def _regauge(B):
    B = np.asarray(B, dtype=complex)
    if abs(B[0]) == 0:
        return B.copy()
    return B * (abs(B[0]) / B[0])


def regauge(B):
    """Rotate a set of cell amplitudes so that the first one is real and positive."""
    return _regauge(B)


def _solve_first_cell(fc, lam, seed):
    """Real ``|B_1|`` from ``Re f(s, 0, ..; lam) / s = 0``; returns ``(s, omega)``."""
    n = fc.n
    s = float(seed)
    scale = abs(lam)
    z = np.zeros(n + 1, dtype=complex)
    for _ in range(NEWTON_MAXIT):
        z[0] = s
        F = complex(fc(z, lam))
        dz, dc = fc.eval_wirtinger(0, z, lam)
        dF = complex(dz + dc)  # derivative along the real direction
        G = F / s
        dG = (dF * s - F) / s**2
        if abs(G.real) / scale <= NEWTON_TOL:
            return s, float(G.imag)
        step = G.real / dG.real
        s -= step
        if not np.isfinite(s) or s <= 0 or abs(s - seed) > 10 * abs(seed):
            break
    raise BranchError(f"first-cell amplitude solve failed at lam={lam:.3e}")


def _solve_next_cell(fc, B_full, j, omega, lam, seed, scale):
    """Complex Newton for ``B_j`` in ``f(args_j) = i w B_j`` (realified Jacobian)."""
    n = fc.n
    z = complex(seed)
    B_full = B_full.copy()
    for _ in range(NEWTON_MAXIT):
        B_full[j] = z
        args = _cell_args(B_full, j, n)
        h = complex(fc(args, lam)) - 1j * omega * z
        if abs(h) / scale**3 <= NEWTON_TOL:
            return z
        dz, dc = fc.eval_wirtinger(0, args, lam)
        jac = realify(complex(dz) - 1j * omega, complex(dc))
        try:
            dv = np.linalg.solve(jac, [h.real, h.imag])
        except np.linalg.LinAlgError:
            break
        z -= complex(dv[0], dv[1])
        if not np.isfinite(z) or abs(z - seed) > 10 * abs(seed):
            break
    raise BranchError(f"Newton failed for cell {j} at lam={lam:.3e}")


def cubic_seed(C, beta, Bj):
    """The unique root of ``C |z|^2 z + beta B_j = 0``."""
    w = -beta * Bj / C
    return abs(w) ** (1.0 / 3.0) * np.exp(1j * np.angle(w))


def _consecutive(fc, coeffs, lam):
    n = fc.n
    s0 = np.sqrt(abs(coeffs.alpha.real * lam / coeffs.C.real))
    s, omega = _solve_first_cell(fc, lam, s0)
    B_full = np.zeros(n + 1, dtype=complex)
    B_full[1] = s
    for j in range(1, n):
        seed = cubic_seed(coeffs.C, coeffs.beta, B_full[j])
        B_full[j + 1] = _solve_next_cell(fc, B_full, j + 1, omega, lam, seed, abs(lam) ** hopf_kappa(j))
    return B_full, omega


def truncated_solution(coeffs: HopfCoefficients, n, lam):
    """Solution of the leading-order cell equations only.

    ``|B_1|^2 = -alpha_1 lam / Re C``, ``w = w0 + alpha_2 lam + Im C |B_1|^2`` and
    ``i w B_{j+1} = (i w0 + alpha lam + C |B_{j+1}|^2) B_{j+1} + beta B_j``.
    """
    trunc = ComplexResponse.from_terms(
        n,
        {
            (("Z0", 1),): 1j * coeffs.omega0,
            (("Z0", 1), ("lam", 1)): coeffs.alpha,
            (("Z0", 2), ("Z0c", 1)): coeffs.C,
            (("Z1", 1),): coeffs.beta,
        },
    )
    B, omega = _consecutive(trunc, coeffs, lam)
    return B[1:], omega


def _polish(fc, B_full, omega, lam, iters=8):
    """Global Newton on all cells with unknowns ``(|B_1|, w, B_2 .. B_n)``."""
    n = fc.n
    # cell 1: amplitude equation ~ |lam|, frequency equation ~ 1;
    # cell j > 1: both components ~ |lam|**kappa_{j-1}
    scales = np.ones(2 * n)
    scales[0] = abs(lam)
    for m in range(1, n):
        scales[2 * m:2 * m + 2] = abs(lam) ** hopf_kappa(m - 1)

    def residual(Bf, w):
        out = np.empty(2 * n)
        for j in range(1, n + 1):
            r = complex(fc(_cell_args(Bf, j, n), lam)) - 1j * w * Bf[j]
            if j == 1:
                r /= Bf[1]
            out[2 * (j - 1)] = r.real
            out[2 * j - 1] = r.imag
        return out / scales

    def jacobian(Bf, w):
        jac = np.zeros((2 * n, 2 * n))
        for j in range(1, n + 1):
            args = _cell_args(Bf, j, n)
            F = complex(fc(args, lam))
            cols = {}
            for i in range(n + 1):
                k = max(j - i, 0)
                if k == 0:
                    continue
                dz, dc = fc.eval_wirtinger(i, args, lam)
                du, dv = complex(dz + dc), complex(1j * (dz - dc))
                cu, cv = cols.get(k, (0j, 0j))
                cols[k] = (cu + du, cv + dv)
            rows = slice(2 * (j - 1), 2 * j)
            for k, (du, dv) in cols.items():
                if k == j:
                    du -= 1j * w
                    dv -= 1j * w * 1j
                if j == 1:
                    # r = F / s - i w, with s = B_1 real
                    du = (du + 1j * w) / Bf[1] - F / Bf[1] ** 2
                if k == 1:
                    jac[rows, 0] = [du.real, du.imag]
                else:
                    jac[rows, 2 * (k - 1)] = [du.real, du.imag]
                    jac[rows, 2 * k - 1] = [dv.real, dv.imag]
            dw = -1j if j == 1 else -1j * Bf[j]
            jac[rows, 1] = [dw.real, dw.imag]
        return jac / scales[:, None]

    Bf = B_full.copy()
    w = omega
    for _ in range(iters):
        res = residual(Bf, w)
        if np.max(np.abs(res)) <= 1e-15:
            break
        step = np.linalg.lstsq(jacobian(Bf, w), -res, rcond=None)[0]
        Bf[1] += step[0]
        w += step[1]
        for k in range(2, n + 1):
            Bf[k] += complex(step[2 * (k - 1)], step[2 * k - 1])
    return Bf, w, float(np.max(np.abs(residual(Bf, w))))


@dataclass
class HopfSample:
    lam: float
    omega: float
    B: np.ndarray
    residual: float
    scaled_residual: float
    B_truncated: np.ndarray
    omega_truncated: float
    block_eigenvalues: list = field(default_factory=list)


@dataclass
class HopfBranch:
    r: int
    lambda_side: int
    n: int
    coeffs: HopfCoefficients
    samples: list = field(default_factory=list)
    kappa_fit: dict = field(default_factory=dict)
    stable: bool | None = None

    @property
    def kappa_theory(self):
        return [hopf_kappa(m) for m in range(self.n - self.r + 1)]

    @property
    def lams(self):
        return np.array([s.lam for s in self.samples])

    @property
    def amplitudes(self):
        return np.abs(np.array([s.B for s in self.samples]))

    @property
    def omegas(self):
        return np.array([s.omega for s in self.samples])

    def states(self):
        return np.array([chain_state(s.B, self.r, self.n) for s in self.samples])

    def fit_exponents(self):
        amps = self.amplitudes
        self.kappa_fit = {
            self.r + m: fit_power_law(self.lams, amps[:, m]) for m in range(self.n - self.r + 1)
        }
        return self.kappa_fit

    def fit_frequency(self):
        """``(slope, intercept, stderr)`` of ``w`` against ``lam``."""
        return fit_linear(self.lams, self.omegas)


def solve_hopf_point(fc: ComplexResponse, lam: float, coeffs=None, polish=True) -> HopfSample:
    """Relative equilibrium of the ``r = 1`` branch at signed ``lam``."""
    coeffs = extract_hopf_coefficients(fc) if coeffs is None else coeffs
    if lam == 0 or np.sign(lam) != coeffs.lambda_side():
        raise SideError(
            f"lam={lam:.3e} is on the wrong side: need alpha_1 lam / Re C < 0 "
            f"(alpha_1={coeffs.alpha.real:g}, Re C={coeffs.C.real:g})"
        )
    n = fc.n
    B_full, omega = _consecutive(fc, coeffs, lam)
    B_tr, w_tr = truncated_solution(coeffs, n, lam)
    scaled = 0.0
    if polish:
        B_full, omega, scaled = _polish(fc, B_full, omega, lam)
        B_full = np.concatenate([[0j], _regauge(B_full[1:])])
    res = float(np.max(np.abs(relative_equilibrium_residual(fc, B_full, omega, lam))))
    return HopfSample(float(lam), float(omega), B_full[1:].copy(), res, scaled, B_tr, w_tr)


def solve_hopf_branch(fc: ComplexResponse, lam_grid, coeffs=None, polish=True) -> HopfBranch:
    """The ``r = 1`` branch at the magnitudes in ``lam_grid`` on the admissible side."""
    coeffs = extract_hopf_coefficients(fc) if coeffs is None else coeffs
    if not coeffs.passed:
        raise GenericityError("; ".join(coeffs.failures()))
    side = coeffs.lambda_side()
    br = HopfBranch(r=1, lambda_side=side, n=fc.n, coeffs=coeffs)
    for mag in np.abs(np.asarray(lam_grid, dtype=float)):
        br.samples.append(solve_hopf_point(fc, side * mag, coeffs, polish))
    annotate_stability(fc, br)
    return br


def branch_family(fc: ComplexResponse, branch: HopfBranch, r: int) -> HopfBranch:
    """Branch ``r``: ``r - 1`` more leading cells at zero, amplitudes truncated to fit."""
    n = branch.n
    if not 1 <= r <= n:
        raise ValueError(f"synchrony index must be in 1..{n}")
    keep = n - r + 1
    out = HopfBranch(r=r, lambda_side=branch.lambda_side, n=n, coeffs=branch.coeffs)
    for s in branch.samples:
        out.samples.append(
            HopfSample(
                s.lam, s.omega, s.B[:keep].copy(), 0.0, s.scaled_residual,
                s.B_truncated[:keep].copy(), s.omega_truncated,
            )
        )
        x = chain_state(s.B, r, n)
        out.samples[-1].residual = float(
            np.max(np.abs(relative_equilibrium_residual(fc, x, s.omega, s.lam)))
        )
    annotate_stability(fc, out)
    return out


def hopf_branches(fc: ComplexResponse, lam_grid, coeffs=None) -> list:
    """All ``n`` branches ``r = 1 .. n``."""
    first = solve_hopf_branch(fc, lam_grid, coeffs)
    return [first] + [branch_family(fc, first, r) for r in range(2, fc.n + 1)]


# stability -------------------------------------------------------------------


@dataclass
class StabilityReport:
    blocks: list
    eigenvalues: list
    phase_mode: complex
    asymptotic_blocks: list
    classification: str

    @property
    def stable(self):
        return self.classification == "stable"

    @property
    def hyperbolic(self):
        return self.classification != "nonhyperbolic"


def asymptotic_block(C, B):
    """Leading-order block ``v -> 2 C |B|^2 v + C B^2 conj(v)``, realified."""
    return realify(2 * C * abs(B) ** 2, C * B**2)


def stability_blocks(fc: ComplexResponse, r: int, sample: HopfSample) -> StabilityReport:
    """Diagonal blocks of the linearization around the branch-``r`` relative equilibrium.

    Non-oscillating cells are linearized in the fixed frame, oscillating ones
    in the frame rotating with ``w``.  The rotational symmetry gives the
    first oscillating block a zero eigenvalue along ``i B_1``; it is the
    neutral phase of the orbit and left out of the classification.
    """
    n = fc.n
    lam, w = sample.lam, sample.omega
    x = chain_state(sample.B, r, n)
    p, q = fc.linear_parts(lam)
    blocks = [realify(p.sum(), q.sum())]
    blocks += [realify(p[0], q[0])] * (r - 1)
    C = fc.coefficient({0: 2}, {0: 1})
    asym = []
    for j in range(r, n + 1):
        args = x[sigma_table(n)[j]]
        dz, dc = fc.eval_wirtinger(0, args, lam)
        blocks.append(realify(complex(dz) - 1j * w, complex(dc)))
        asym.append(asymptotic_block(C, x[j]))
    eigs = [np.linalg.eigvals(b) for b in blocks]
    # drop the phase eigenvalue of the first oscillating block
    first = eigs[r]
    k = int(np.argmin(np.abs(first)))
    phase = complex(first[k])
    kept = [e for i, e in enumerate(eigs) if i != r] + [np.delete(first, k)]
    re = np.concatenate([np.real(e) for e in kept])
    tol = HYPERBOLIC_TOL * max(1.0, float(np.max(np.abs(np.concatenate(kept)))))
    if np.any(np.abs(re) <= tol):
        cls = "nonhyperbolic"
    elif np.all(re < 0):
        cls = "stable"
    else:
        cls = "unstable"
    return StabilityReport(blocks, eigs, phase, asym, cls)


def annotate_stability(fc, branch: HopfBranch):
    reports = [stability_blocks(fc, branch.r, s) for s in branch.samples]
    for s, rep in zip(branch.samples, reports):
        s.block_eigenvalues = rep.eigenvalues
    branch.stable = bool(reports) and all(rep.stable for rep in reports)
    return reports
