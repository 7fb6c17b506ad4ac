"""Direct integration of chain ODEs and measurement of periodic orbits.

The integrators are explicit embedded Runge-Kutta pairs (Dormand-Prince
8(5,3) by default, 5(4) on request) with PI step-size control, compiled with
numba.  A polynomial response is flattened at a fixed
``lam`` into term arrays (CSR layout over the factors of every monomial),
and cell ``j`` reads argument ``i`` from cell ``max(j - i, 0)``.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.optimize import brentq

from .errors import NoOrbitError, StiffnessError
from .fitting import fit_power_law
from .network import ComplexResponse, PolyResponse, eval_gamma, sigma_table

TOL_MIN, TOL_MAX = 1e-13, 1e-6
TRANSIENT_FACTOR = 50.0
TRANSIENT_CAP = 1e7
CHUNK = 4096



@dataclass(frozen=True)
class Tableau:
    """Explicit embedded pair; ``E`` (and ``E2`` for DOP853) act on ``s + 1`` stages.

    Stage ``s`` is the derivative at the new point, which is reused as the
    first stage of the next step.
    """

    name: str
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    E: np.ndarray
    E2: np.ndarray
    exponent_order: int
    fsal: bool


def _dopri5():
    A = np.zeros((7, 7))
    A[1, :1] = [1 / 5]
    A[2, :2] = [3 / 40, 9 / 40]
    A[3, :3] = [44 / 45, -56 / 15, 32 / 9]
    A[4, :4] = [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]
    A[5, :5] = [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]
    A[6, :6] = [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]
    B = np.append(A[6, :6], 0.0)
    B4 = np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
    # seven stages computed; the seventh sits at the new point (FSAL)
    E = np.append(B - B4, 0.0)
    C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
    return Tableau("dopri5", A, B, C, E, np.zeros(8), 5, True)


def _dop853():
    from scipy.integrate._ivp import dop853_coefficients as dc

    s = dc.N_STAGES
    return Tableau(
        "dop853", dc.A[:s, :s].copy(), dc.B.copy(), dc.C[:s].copy(), dc.E5.copy(), dc.E3.copy(), 8, False
    )


TABLEAUS = {"dopri5": _dopri5(), "dop853": _dop853()}


@dataclass
class CompiledField:
    """Term arrays of a response at fixed ``lam``."""

    n: int
    d: int
    ptr: np.ndarray
    var: np.ndarray
    pw: np.ndarray
    coef: np.ndarray
    S: np.ndarray


def compile_field(f, lam) -> CompiledField:
    """Flatten a :class:`PolyResponse` (or complex response) at parameter ``lam``."""
    if isinstance(f, ComplexResponse):
        f = f.to_real()
    f = f.fix_lambda(lam)
    nx = f.nx
    ptr, var, pw, coef = [0], [], [], []
    for key, c in sorted(f.poly.terms.items()):
        for v in range(nx):
            if key[v]:
                var.append(v)
                pw.append(key[v])
        ptr.append(len(var))
        coef.append(np.asarray(c, dtype=float))
    coef = np.array(coef, dtype=float).reshape(len(coef), f.d)
    return CompiledField(
        f.n,
        f.d,
        np.array(ptr, dtype=np.int64),
        np.array(var, dtype=np.int64),
        np.array(pw, dtype=np.int64),
        coef,
        sigma_table(f.n),
    )


@numba.njit(cache=True, nogil=True)
def _rhs(y, out, ptr, var, pw, coef, S, n, d):
    out[:] = 0.0
    nt = ptr.shape[0] - 1
    for j in range(n + 1):
        for t in range(nt):
            m = 1.0
            for k in range(ptr[t], ptr[t + 1]):
                v = var[k]
                i = v // d
                c = v - i * d
                xv = y[S[j, i] * d + c]
                p = pw[k]
                if p == 1:
                    m *= xv
                elif p == 2:
                    m *= xv * xv
                else:
                    m *= xv**p
            for c in range(d):
                out[j * d + c] += coef[t, c] * m


@numba.njit(cache=True, nogil=True)
def _rk_chunk(t, y, f0, h, t_end, t_store, tol, hmax, ptr, var, pw, coef, S, n, d,
              A, B, E, E2, korder, fsal, out_t, out_y, out_f):
    """Advance until ``t_end`` or until the store buffers are full.

    Returns ``(t, h, stored, steps, rejected, status)`` with status 0 (done),
    1 (buffers full) or 2 (step size underflow).  ``y`` and ``f0`` are updated
    in place.  With a nonzero ``E2`` the DOP853 blend of the fifth and third
    order estimates is used.
    """
    m = y.shape[0]
    ns = B.shape[0]
    K = np.zeros((ns + 1, m))
    ytmp = np.empty(m)
    ynew = np.empty(m)
    cap = out_t.shape[0]
    stored = 0
    steps = 0
    rejected = 0
    err_old = 1e-4
    beta1 = 0.7 / korder
    beta2 = 0.4 / korder
    blend = False
    for s in range(E2.shape[0]):
        if E2[s] != 0.0:
            blend = True
    K[0, :] = f0
    while t < t_end:
        if stored >= cap:
            for q in range(m):
                f0[q] = K[0, q]
            return t, h, stored, steps, rejected, 1
        if h > hmax:
            h = hmax
        last = False
        if t + h >= t_end:
            h = t_end - t
            last = True
        if h <= 1e-14 * max(1.0, abs(t)):
            for q in range(m):
                f0[q] = K[0, q]
            return t, h, stored, steps, rejected, 2
        for s in range(1, ns):
            for q in range(m):
                acc = 0.0
                for r in range(s):
                    acc += A[s, r] * K[r, q]
                ytmp[q] = y[q] + h * acc
            _rhs(ytmp, K[s], ptr, var, pw, coef, S, n, d)
        for q in range(m):
            acc = 0.0
            for r in range(ns):
                acc += B[r] * K[r, q]
            ynew[q] = y[q] + h * acc
        if fsal:
            for q in range(m):
                K[ns, q] = K[ns - 1, q]
        else:
            _rhs(ynew, K[ns], ptr, var, pw, coef, S, n, d)
        e1 = 0.0
        e2 = 0.0
        for q in range(m):
            sc = tol + tol * max(abs(y[q]), abs(ynew[q]))
            a1 = 0.0
            a2 = 0.0
            for s in range(ns + 1):
                a1 += E[s] * K[s, q]
                a2 += E2[s] * K[s, q]
            e1 += (a1 / sc) ** 2
            e2 += (a2 / sc) ** 2
        if blend:
            den = e1 + 0.01 * e2
            err = abs(h) * e1 / np.sqrt(den * m) if den > 0 else 0.0
        else:
            err = abs(h) * np.sqrt(e1 / m)
        steps += 1
        if err <= 1.0:
            t = t_end if last else t + h
            for q in range(m):
                y[q] = ynew[q]
                K[0, q] = K[ns, q]
            if t >= t_store:
                out_t[stored] = t
                for q in range(m):
                    out_y[stored, q] = y[q]
                    out_f[stored, q] = K[0, q]
                stored += 1
            if err == 0.0:
                fac = 5.0
            else:
                fac = min(5.0, max(0.2, 0.9 * err ** (-beta1) * err_old**beta2))
            err_old = max(err, 1e-4)
            h = h * fac
        else:
            rejected += 1
            if np.isfinite(err):
                h = h * max(0.2, 0.9 * err ** (-1.0 / korder))
            else:
                h = h * 0.2
    for q in range(m):
        f0[q] = K[0, q]
    return t, h, stored, steps, rejected, 0


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    derivs: np.ndarray
    stats: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.states.shape[1:]

    def interpolate(self, t):
        """Cubic Hermite dense output at times inside the stored range."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        ts = self.times
        k = np.clip(np.searchsorted(ts, t) - 1, 0, len(ts) - 2)
        h = ts[k + 1] - ts[k]
        s = ((t - ts[k]) / h).reshape((-1,) + (1,) * (self.states.ndim - 1))
        hh = h.reshape(s.shape)
        y0, y1 = self.states[k], self.states[k + 1]
        f0, f1 = self.derivs[k], self.derivs[k + 1]
        h00 = 2 * s**3 - 3 * s**2 + 1
        h10 = s**3 - 2 * s**2 + s
        h01 = -2 * s**3 + 3 * s**2
        h11 = s**3 - s**2
        return h00 * y0 + h10 * hh * f0 + h01 * y1 + h11 * hh * f1

    def complex_cells(self):
        """``x_j = x_{j,0} + i x_{j,1}`` for two-dimensional cells."""
        return self.states[..., 0] + 1j * self.states[..., 1]


def _as_real_state(x0, d):
    x0 = np.asarray(x0)
    if np.iscomplexobj(x0) or (d == 2 and x0.ndim == 1):
        x0 = np.stack([np.real(x0), np.imag(x0)], axis=-1)
    return np.array(x0, dtype=float)


def integrate(f, x0, t_span, tol=1e-10, lam=0.0, t_store=None, max_step=np.inf, h0=None,
              method="dop853") -> Trajectory:
    """Integrate ``x' = gamma_f(x; lam)`` adaptively.

    ``f`` is a :class:`PolyResponse` or :class:`ComplexResponse` (integrated
    in real coordinates); complex initial states are accepted for the latter.
    Only steps ending at or after ``t_store`` are stored (plus the start when
    ``t_store`` is the initial time).
    """
    if not (TOL_MIN <= tol <= TOL_MAX):
        raise ValueError(f"tol must lie in [{TOL_MIN:g}, {TOL_MAX:g}]")
    tab = TABLEAUS[method]
    cf = f if isinstance(f, CompiledField) else compile_field(f, lam)
    n, d = cf.n, cf.d
    x0 = _as_real_state(x0, d)
    if x0.shape != (n + 1, d):
        raise ValueError(f"initial state shape {x0.shape} != {(n + 1, d)}")
    t0, t1 = map(float, t_span)
    t_store = t0 if t_store is None else float(t_store)
    y = x0.reshape(-1).copy()
    m = y.size
    f0 = np.empty(m)
    _rhs(y, f0, cf.ptr, cf.var, cf.pw, cf.coef, cf.S, n, d)
    if h0 is None:
        scale = np.max(np.abs(f0)) / (1.0 + np.max(np.abs(y)))
        h0 = 0.01 * tol ** 0.2 / scale if scale > 0 else 0.1
        h0 = min(h0, 0.1, max(t1 - t0, 1e-12))
    times = [np.array([t0])] if t_store <= t0 else []
    ys = [y.copy()[None]] if t_store <= t0 else []
    fs = [f0.copy()[None]] if t_store <= t0 else []
    t, h = t0, float(h0)
    steps = rejected = 0
    while True:
        out_t = np.empty(CHUNK)
        out_y = np.empty((CHUNK, m))
        out_f = np.empty((CHUNK, m))
        t, h, k, s, rj, status = _rk_chunk(
            t, y, f0, h, t1, t_store, tol, float(max_step), cf.ptr, cf.var, cf.pw, cf.coef,
            cf.S, n, d, tab.A, tab.B, tab.E, tab.E2, tab.exponent_order, tab.fsal,
            out_t, out_y, out_f,
        )
        steps += s
        rejected += rj
        times.append(out_t[:k])
        ys.append(out_y[:k])
        fs.append(out_f[:k])
        if status == 2:
            raise StiffnessError(f"step size underflow at t={t:.6g} (h={h:.3g})")
        if status == 0:
            break
    stats = {"steps": steps, "rejected": rejected, "tol": tol, "method": method}
    return Trajectory(
        np.concatenate(times),
        np.concatenate(ys).reshape(-1, n + 1, d),
        np.concatenate(fs).reshape(-1, n + 1, d),
        stats,
    )


def _reference_flow(f, y, h, lam, substeps=16):
    """Classical RK4 over ``h`` (vectorized over leading axes) with fine substeps."""
    dt = h / substeps
    dt = dt.reshape(dt.shape + (1,) * (y.ndim - dt.ndim))
    for _ in range(substeps):
        k1 = eval_gamma(f, y, lam)
        k2 = eval_gamma(f, y + 0.5 * dt * k1, lam)
        k3 = eval_gamma(f, y + 0.5 * dt * k2, lam)
        k4 = eval_gamma(f, y + dt * k3, lam)
        y = y + dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6
    return y


def ode_residual(f, traj: Trajectory, lam=0.0, substeps=16) -> float:
    """Largest local defect of the stored steps against an accurate reference flow.

    Each stored point is advanced to the next stored time with fine RK4 and
    compared to the stored value, scaled by ``1 + |x|``.  Small for any true
    solution, regardless of which integrator produced it.
    """
    if isinstance(f, ComplexResponse):
        f = f.to_real()
    y0 = traj.states[:-1]
    h = np.diff(traj.times)
    y1 = _reference_flow(f, y0, h, lam, substeps)
    err = np.abs(y1 - traj.states[1:]).reshape(len(h), -1).max(axis=1)
    size = 1.0 + np.abs(traj.states[1:]).reshape(len(h), -1).max(axis=1)
    return float(np.max(err / size, initial=0.0))


def shift_trajectory(traj: Trajectory) -> Trajectory:
    """Apply the chain shift ``(x_0, .., x_n) -> (x_0, x_0, .., x_{n-1})`` at every time."""
    idx = [0] + list(range(traj.states.shape[1] - 1))
    return Trajectory(traj.times, traj.states[:, idx], traj.derivs[:, idx], dict(traj.stats))


# orbit measurement ------------------------------------------------------------


@dataclass
class OrbitMeasurement:
    lam: float
    amplitudes: np.ndarray
    half_peak_to_peak: np.ndarray
    period: float
    t_transient: float
    cell: int
    stats: dict = field(default_factory=dict)

    @property
    def omega(self):
        return 2 * np.pi / self.period


def _upward_crossings(traj, comp_index):
    """Refined upward zero crossings of one real coordinate on the dense output."""
    n1, d = traj.states.shape[1:]
    j, c = divmod(comp_index, d)
    u = traj.states[:, j, c]
    idx = np.nonzero((u[:-1] < 0) & (u[1:] >= 0))[0]
    out = []
    for k in idx:
        a, b = traj.times[k], traj.times[k + 1]

        def g(t):
            return float(traj.interpolate(t)[0, j, c])

        ga, gb = g(a), g(b)
        if ga == 0.0:
            out.append(a)
        elif ga * gb > 0:
            continue
        else:
            out.append(brentq(g, a, b, xtol=1e-14, rtol=1e-15))
    return np.array(out)


def measure_orbit(f, lam, seed=None, coeffs=None, r=1, periods=10, tol=1e-10,
                  transient=None, transient_factor=TRANSIENT_FACTOR, seed_scale=1.1,
                  samples_per_period=64, method="dop853") -> OrbitMeasurement:
    """Integrate onto the periodic orbit and measure per-cell amplitudes.

    By default the simulation starts from the normal-form prediction scaled
    by ``seed_scale`` and discards ``transient_factor / |alpha_1 lam|`` time
    units (capped).  Amplitude of cell ``j`` is the time average of ``|x_j|``
    over the last ``periods`` periods.
    """
    from .hopf import chain_state, extract_hopf_coefficients, solve_hopf_point

    if coeffs is None and isinstance(f, ComplexResponse):
        coeffs = extract_hopf_coefficients(f, check_invariance=False)
    n = f.n
    omega_est = coeffs.omega0 if coeffs is not None else 1.0
    if seed is None:
        if not isinstance(f, ComplexResponse) or coeffs is None:
            raise ValueError("a seed is needed unless f is a complex normal form")
        side = coeffs.lambda_side()
        # the prediction always comes from the admissible side
        pred = solve_hopf_point(f, side * abs(lam), coeffs)
        seed = seed_scale * chain_state(pred.B, r, n)
        omega_est = pred.omega
    seed = np.asarray(seed)
    if transient is None:
        a1 = abs(coeffs.alpha.real) if coeffs is not None else 1.0
        transient = min(transient_factor / (a1 * abs(lam)), TRANSIENT_CAP)
    period_est = 2 * np.pi / abs(omega_est)
    window = (periods + 2) * period_est
    x_start = _as_real_state(seed, 2)
    stats = {}
    if transient > 0:
        pre = integrate(f, x_start, (0.0, transient), tol=tol, lam=lam, t_store=transient, method=method)
        x_start = pre.states[-1]
        stats["transient_steps"] = pre.stats["steps"]
    # short steps in the window keep the Hermite dense output accurate
    traj = integrate(f, x_start, (0.0, window), tol=tol, lam=lam, max_step=period_est / 64, method=method)
    traj.times += transient
    z = np.abs(traj.complex_cells()) if traj.states.shape[2] == 2 else np.abs(traj.states[..., 0])
    seed_real = _as_real_state(seed, 2)
    seed_amp = np.sqrt(np.sum(seed_real**2, axis=-1))
    peak = z.max(axis=0)
    ref = max(float(np.max(seed_amp)), 1e-300)
    active = np.nonzero(peak > 1e-6 * ref)[0]
    if active.size == 0:
        raise NoOrbitError(f"orbit decayed at lam={lam:.3e}: all cells below 1e-6 of the seed amplitude")
    k = int(active[0])
    cr = _upward_crossings(traj, k * traj.states.shape[2])
    if cr.size < periods + 1:
        raise NoOrbitError(f"only {cr.size} upward zero crossings of cell {k} at lam={lam:.3e}")
    period = (cr[-1] - cr[-1 - periods]) / periods
    ts = np.linspace(cr[-1 - periods], cr[-1], periods * samples_per_period, endpoint=False)
    dense = traj.interpolate(ts)
    mod = np.sqrt(np.sum(dense**2, axis=-1))
    amps = mod.mean(axis=0)
    if amps[k] < 1e-6 * seed_amp[k]:
        raise NoOrbitError(f"orbit amplitude of cell {k} decayed at lam={lam:.3e}")
    re = dense[..., 0]
    hpp = 0.5 * (re.max(axis=0) - re.min(axis=0))
    stats.update(traj.stats)
    return OrbitMeasurement(float(lam), amps, hpp, float(period), float(transient), k, stats)


def worker_count(default=None):
    env = os.environ.get("FFCHAIN_THREADS")
    cpu = os.cpu_count() or 1
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return default if default is not None else cpu


# sweeps ---------------------------------------------------------------------------


@dataclass
class AmplitudeTable:
    rows: list

    @property
    def lams(self):
        return np.array([r.lam for r in self.rows])

    @property
    def amplitudes(self):
        return np.array([r.amplitudes for r in self.rows])

    @property
    def periods(self):
        return np.array([r.period for r in self.rows])

    def fits(self, cells):
        return {j: fit_power_law(self.lams, self.amplitudes[:, j]) for j in cells}

    def header(self):
        n1 = len(self.rows[0].amplitudes) if self.rows else 0
        return ["lambda"] + [f"a{j}" for j in range(n1)] + [f"hpp{j}" for j in range(n1)] + ["period", "t_transient"]

    def as_array(self):
        return np.array(
            [[r.lam, *r.amplitudes, *r.half_peak_to_peak, r.period, r.t_transient] for r in self.rows]
        )


def sweep_orbits(f, lam_grid, workers=None, **kwargs) -> AmplitudeTable:
    """``measure_orbit`` at every ``lam`` (threads; the integrator releases the GIL)."""
    lam_grid = list(np.asarray(lam_grid, dtype=float))
    workers = min(worker_count(workers), len(lam_grid)) or 1
    if workers == 1:
        rows = [measure_orbit(f, lam, **kwargs) for lam in lam_grid]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(lambda lam: measure_orbit(f, lam, **kwargs), lam_grid))
    return AmplitudeTable(rows)


@dataclass
class SweepFit:
    which: str
    lams: np.ndarray
    values: np.ndarray
    fits: dict
    theory: dict

    def to_dict(self):
        return {
            "which": self.which,
            "fits": {str(k): v.to_dict() for k, v in self.fits.items()},
            "theory": {str(k): v for k, v in self.theory.items()},
        }


def sweep_and_fit(f, lam_grid, which="hopf", cells=None, r=1, **kwargs) -> SweepFit:
    """Fit power laws of per-cell amplitudes along a sweep.

    ``which='hopf'`` measures orbits by simulation; ``which='steady'`` takes
    the equilibria of the steady branch ``(r, +)``; ``which='hopf-solver'``
    uses the relative-equilibrium solver.
    """
    from .hopf import hopf_kappa, solve_hopf_branch
    from .steady import solve_steady_branches, steady_kappa

    lam_grid = np.abs(np.asarray(lam_grid, dtype=float))
    n = f.n
    if which == "hopf":
        table = sweep_orbits(f, lam_grid, r=r, **kwargs)
        lams, values = table.lams, table.amplitudes
        kap = hopf_kappa
    elif which == "hopf-solver":
        br = solve_hopf_branch(f, lam_grid)
        lams = br.lams
        values = np.zeros((len(lams), n + 1))
        values[:, 1:] = br.amplitudes
        kap = hopf_kappa
    elif which == "steady":
        brs = solve_steady_branches(f, lam_grid)
        br = next(b for b in brs if b.r == r and b.sign > 0)
        lams, values = br.lams, np.abs(br.states)
        kap = steady_kappa
    else:
        raise ValueError(f"unknown sweep kind {which!r}")
    cells = list(range(r, n + 1)) if cells is None else list(cells)
    fits = {j: fit_power_law(lams, values[:, j]) for j in cells}
    theory = {j: kap(j - r) for j in cells}
    return SweepFit(which, lams, values, fits, theory)
