"""Command line entry point ``ffchain``.

Every subcommand writes its CSV/JSON results plus ``manifest.json`` into the
output directory.  CSV numbers use 17 significant digits, JSON numbers the
shortest decimal that round-trips, so identical inputs give identical
result files.  Errors exit with the code carried by the exception class:
1 for input problems, 2 for failed genericity conditions, 3 for solver
failures, 4 for integrator failures and 5 for fit failures.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import platform
import sys
import time
from dataclasses import replace

import numpy as np

from . import __version__
from .config import RunConfig, RunSettings, build_response, load_config
from .errors import ConfigError, FFChainError, FitError, SemisimplicityError
from .fitting import fit_power_law

DEFAULT_OUT = "ffchain_out"


# serialization ---------------------------------------------------------------


def jsonable(obj):
    """Plain Python structure with floats, lists and dicts only.

    Complex numbers become ``[re, im]``; non-finite floats become ``None``.
    """
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [jsonable(float(obj.real)), jsonable(float(obj.imag))]
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if np.isfinite(x) else None
    if hasattr(obj, "to_dict"):
        return jsonable(obj.to_dict())
    return obj


def dumps(obj) -> str:
    return json.dumps(jsonable(obj), sort_keys=True, indent=2) + "\n"


def format_number(x) -> str:
    return "%.17g" % float(x)


class Output:
    """Collects the files written by one command."""

    def __init__(self, directory):
        self.directory = directory
        self.files = []

    def path(self, name):
        os.makedirs(self.directory, exist_ok=True)
        return os.path.join(self.directory, name)

    def json(self, name, obj):
        with open(self.path(name), "w", encoding="utf-8") as fh:
            fh.write(dumps(obj))
        self.files.append(name)

    def csv(self, name, header, rows):
        with open(self.path(name), "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([format_number(v) for v in row])
        self.files.append(name)


def versions():
    import numba
    import scipy

    return {
        "ffchain": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
    }


# command implementations ------------------------------------------------------


def _require_config(args):
    if args.cfg is None:
        raise ConfigError(f"{args.command} needs --config")
    return args.cfg


def _signed_grid(settings: RunSettings, side):
    return side * settings.grid()


def cmd_verify_ring(args, out, log):
    from .ring import verify_homomorphism

    rng = np.random.default_rng(args.seed)
    worst = verify_homomorphism(rng, args.n, args.dim, args.trials)
    result = {
        "n": args.n,
        "dim": args.dim,
        "trials": args.trials,
        "seed": args.seed,
        "max_homomorphism_residual": worst,
        "passed": worst <= 1e-12,
    }
    out.json("verify_ring.json", result)
    if not args.quiet:
        sys.stdout.write(dumps(result))
    return result


def _linearization(cfg: RunConfig):
    f = build_response(cfg)
    if cfg.form == "complex":
        f = f.to_real()
    return f.linearization(0.0)


def cmd_normal_form(args, out, log):
    from .normform import almost_normal_form, check_decomposition, multiplicity_check
    from .reference import random_semisimple_element

    if args.cfg is not None:
        a = _linearization(args.cfg)
        source = "config"
    else:
        a = random_semisimple_element(np.random.default_rng(args.seed), args.n, args.dim)
        source = "random"
    dec = almost_normal_form(a)
    mult = multiplicity_check(a)
    result = {
        "source": source,
        "n": a.n,
        "d": a.d,
        "input": a.coeffs,
        "abar": dec.abar.coeffs,
        "s_part": dec.s_part.coeffs,
        "n_part": dec.n_part.coeffs,
        "generators": dec.generators,
        "semisimple_certified": dec.semisimple_certified,
        "checks": check_decomposition(a, dec),
        "multiplicity": {
            "a0_eigenvalues": mult.a0_eigenvalues,
            "multiplicities": mult.multiplicities,
            "required": mult.required,
            "passed": mult.passed,
        },
    }
    out.json("normal_form.json", result)
    log(f"almost normal form: n={a.n} d={a.d}, max check residual "
        f"{max(result['checks'].values()):.3e}")
    return result


def cmd_steady(args, out, log):
    from .steady import (
        genericity_check_1d,
        shift_branch_residual,
        solve_steady_branches,
        stable_branches,
        steady_eigen_report,
    )

    cfg = _require_config(args)
    if cfg.form != "real":
        raise ConfigError("the steady pipeline needs form = real")
    f = build_response(cfg)
    report = genericity_check_1d(f)
    branches = solve_steady_branches(f, cfg.run.grid(), report)
    n = cfg.n
    stable = {b.label for b in stable_branches(branches, r=1)}
    summary = {"genericity": report.to_dict(), "branches": []}
    for b in branches:
        header = (["lambda"] + [f"x{j}" for j in range(n + 1)]
                  + [f"eig_re_{j}" for j in range(n + 1)] + [f"eig_im_{j}" for j in range(n + 1)])
        rows = [[s.lam, *s.x, *s.eigenvalues, *np.zeros(n + 1)] for s in b.samples]
        out.csv(f"steady_{b.label}.csv", header, rows)
        entry = {
            "label": b.label,
            "r": b.r,
            "sign": b.sign,
            "lambda_side": b.lambda_side,
            "kappa_theory": b.kappa_theory,
            "max_residual": max(s.residual for s in b.samples),
            "shift_residual": shift_branch_residual(f, b),
            "all_eigenvalues_negative": b.label in stable,
            "hyperbolic": bool(np.all(b.eigenvalues != 0)),
        }
        try:
            entry["kappa_fit"] = {str(j): v for j, v in b.fit_exponents().items()}
            eig = steady_eigen_report(f, b)
            entry["eigenvalue_slopes"] = {str(j): v for j, v in eig.slopes.items()}
        except FitError as exc:
            entry["kappa_fit"] = None
            entry["fit_error"] = str(exc)
        summary["branches"].append(entry)
    out.json("steady_summary.json", summary)
    log(f"steady: {len(branches)} branches written to {out.directory}")
    return summary


def cmd_hopf(args, out, log):
    from .hopf import extract_hopf_coefficients, hopf_branches

    cfg = _require_config(args)
    if cfg.form != "complex":
        raise ConfigError("the hopf pipeline needs form = complex")
    fc = build_response(cfg)
    coeffs = extract_hopf_coefficients(fc)
    branches = hopf_branches(fc, cfg.run.grid(), coeffs)
    n = cfg.n
    summary = {"coefficients": coeffs.to_dict(), "branches": []}
    for b in branches:
        cells = range(b.r, n + 1)
        header = ["lambda", "omega"]
        header += [f"B{j}_{p}" for j in cells for p in ("re", "im")]
        header += ["omega_tr"] + [f"B{j}_tr_{p}" for j in cells for p in ("re", "im")]
        block_sizes = [len(e) for e in b.samples[0].block_eigenvalues]
        header += [f"eig{k}_{i}_{p}" for k, m in enumerate(block_sizes) for i in range(m) for p in ("re", "im")]
        rows = []
        for s in b.samples:
            row = [s.lam, s.omega]
            row += [v for z in s.B for v in (z.real, z.imag)]
            row += [s.omega_truncated] + [v for z in s.B_truncated for v in (z.real, z.imag)]
            row += [v for e in s.block_eigenvalues for z in e for v in (complex(z).real, complex(z).imag)]
            rows.append(row)
        out.csv(f"hopf_r{b.r}.csv", header, rows)
        entry = {
            "r": b.r,
            "lambda_side": b.lambda_side,
            "kappa_theory": b.kappa_theory,
            "stable": b.stable,
            "max_residual": max(s.residual for s in b.samples),
        }
        try:
            entry["kappa_fit"] = {str(j): v for j, v in b.fit_exponents().items()}
        except FitError as exc:
            entry["kappa_fit"] = None
            entry["fit_error"] = str(exc)
        if b.r == 1 and len(b.samples) >= 2:
            slope, intercept, stderr = b.fit_frequency()
            entry["frequency_fit"] = {"slope": slope, "intercept": intercept, "stderr": stderr}
        summary["branches"].append(entry)
    out.json("hopf_summary.json", summary)
    log(f"hopf: {len(branches)} branches written to {out.directory}")
    return summary


def cmd_simulate(args, out, log):
    from .hopf import chain_state, extract_hopf_coefficients, solve_hopf_point
    from .sim import sweep_orbits

    cfg = _require_config(args)
    if cfg.form != "complex":
        raise ConfigError("the simulate pipeline needs form = complex")
    fc = build_response(cfg)
    coeffs = extract_hopf_coefficients(fc, check_invariance=False)
    run = cfg.run
    r = run.branch
    lams = _signed_grid(run, coeffs.lambda_side())
    table = sweep_orbits(
        fc, lams, coeffs=coeffs, r=r, tol=run.tol, periods=run.periods,
        transient_factor=run.transient_factor, method=run.method,
    )
    out.csv("simulate_amplitudes.csv", table.header(), table.as_array())
    comparison = []
    for row in table.rows:
        pred = solve_hopf_point(fc, row.lam, coeffs)
        amp = np.abs(chain_state(pred.B, r, cfg.n))
        rel = [abs(row.amplitudes[j] - amp[j]) / amp[j] for j in range(r, cfg.n + 1)]
        comparison.append({"lambda": row.lam, "relative_amplitude_error": rel,
                           "omega_error": row.omega - pred.omega})
    result = {"branch": r, "comparison": comparison}
    try:
        result["fits"] = {str(j): v for j, v in table.fits(range(r, cfg.n + 1)).items()}
    except FitError as exc:
        result["fits"] = None
        result["fit_error"] = str(exc)
    out.json("simulate_fit.json", result)
    log(f"simulate: {len(table.rows)} orbits measured")
    return result


def _read_csv(path):
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    if not rows:
        raise ConfigError(f"{path} is empty")
    header = rows[0]
    try:
        data = np.array([[float(v) for v in row] for row in rows[1:]])
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return header, data.reshape(len(rows) - 1, len(header))


def cmd_fit(args, out, log):
    from .sim import sweep_and_fit

    if args.input:
        header, data = _read_csv(args.input)
        if "lambda" not in header:
            raise ConfigError(f"{args.input} has no lambda column")
        lam = data[:, header.index("lambda")]
        columns = args.columns.split(",") if args.columns else [h for h in header if h != "lambda"]
        fits = {}
        for name in columns:
            if name not in header:
                raise ConfigError(f"{args.input} has no column {name!r}")
            fits[name] = fit_power_law(lam, data[:, header.index(name)])
        result = {"input": os.path.basename(args.input), "fits": fits}
    else:
        cfg = _require_config(args)
        f = build_response(cfg)
        which = "steady" if cfg.form == "real" else "hopf-solver"
        result = sweep_and_fit(f, cfg.run.grid(), which=which, r=cfg.run.branch).to_dict()
    out.json("fit.json", result)
    for name, fit in result["fits"].items():
        log(f"fit {name}: slope {jsonable(fit)['slope']:.6g}")
    return result


def cmd_report(args, out, log):
    from .hopf import extract_hopf_coefficients
    from .network import s1_invariance_defect
    from .normform import almost_normal_form, check_decomposition, multiplicity_check
    from .steady import genericity_check_1d

    cfg = _require_config(args)
    f = build_response(cfg)
    result = {"n": cfg.n, "d": cfg.d, "form": cfg.form}
    if cfg.form == "real":
        if cfg.d == 1:
            result["steady_genericity"] = genericity_check_1d(f).to_dict()
    else:
        result["hopf_coefficients"] = extract_hopf_coefficients(f, check_invariance=False).to_dict()
        result["rotation_invariance_defect"] = s1_invariance_defect(f, rng=np.random.default_rng(cfg.run.seed))
    a = _linearization(cfg)
    mult = multiplicity_check(a)
    result["multiplicity_passed"] = mult.passed
    try:
        dec = almost_normal_form(a)
        result["normal_form_checks"] = check_decomposition(a, dec)
    except SemisimplicityError as exc:
        result["normal_form_checks"] = None
        result["normal_form_error"] = str(exc)
    out.json("report.json", result)
    log(f"report written to {out.directory}")
    return result


COMMANDS = {
    "verify-ring": cmd_verify_ring,
    "normal-form": cmd_normal_form,
    "steady": cmd_steady,
    "hopf": cmd_hopf,
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "report": cmd_report,
}


# argument handling -------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(ConfigError.exit_code, f"{self.prog}: error: {message}\n")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="configuration file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--lambda-min", type=float, dest="lambda_min")
    common.add_argument("--lambda-max", type=float, dest="lambda_max")
    common.add_argument("--lambda-points", type=int, dest="points")
    common.add_argument("--tol", type=float, help="integrator tolerance")
    common.add_argument("--json", action="store_true", help="print the result JSON on stdout")
    common.add_argument("--quiet", action="store_true", help="suppress progress messages")

    p = _Parser(prog="ffchain", description="Bifurcations of feed-forward chain networks.")
    p.add_argument("--version", action="version", version=f"ffchain {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    vr = sub.add_parser("verify-ring", parents=[common], help="check the matrix realization of the ring")
    vr.add_argument("--n", type=int, default=4)
    vr.add_argument("--dim", type=int, default=2)
    vr.add_argument("--trials", type=int, default=1000)
    nf = sub.add_parser("normal-form", parents=[common], help="almost normal form of the linearization")
    nf.add_argument("--n", type=int, default=2)
    nf.add_argument("--dim", type=int, default=2)
    sub.add_parser("steady", parents=[common], help="steady-state branches (scalar cells)")
    sub.add_parser("hopf", parents=[common], help="Hopf branches of a rotation-invariant normal form")
    sub.add_parser("simulate", parents=[common], help="measure periodic orbits by direct integration")
    ft = sub.add_parser("fit", parents=[common], help="power-law fits")
    ft.add_argument("--input", help="CSV with a lambda column to fit instead of running a sweep")
    ft.add_argument("--columns", help="comma separated column names (default: all but lambda)")
    sub.add_parser("report", parents=[common], help="genericity and normal-form diagnostics")
    return p


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    changes = {}
    for key in ("lambda_min", "lambda_max", "points", "tol", "seed"):
        v = getattr(args, key)
        if v is not None:
            changes[key] = v
    if changes:
        cfg = replace(cfg, run=replace(cfg.run, **changes))
    return cfg


def run(argv=None) -> int:
    """Run one command; returns the exit status."""
    args = build_parser().parse_args(argv)
    t0 = time.perf_counter()

    def log(msg):
        if not args.quiet:
            print(msg, file=sys.stderr)

    text = None
    try:
        args.cfg = None
        if args.config:
            try:
                cfg, text = load_config(args.config)
            except OSError as exc:
                raise ConfigError(f"cannot read {args.config}: {exc.strerror}") from None
            args.cfg = _apply_overrides(cfg, args)
        if args.seed is None:
            args.seed = args.cfg.run.seed if args.cfg is not None else 0
        out_dir = args.out or (args.cfg.run.out if args.cfg is not None else None) or DEFAULT_OUT
        out = Output(out_dir)
        result = COMMANDS[args.command](args, out, log)
    except FFChainError as exc:
        print(f"ffchain {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    manifest = {
        "command": args.command,
        "argv": list(sys.argv[1:] if argv is None else argv),
        "config_sha256": hashlib.sha256(text.encode("utf-8")).hexdigest() if text is not None else None,
        "seed": args.seed,
        "versions": versions(),
        "wall_time_s": time.perf_counter() - t0,
        "outputs": out.files,
    }
    out.json("manifest.json", manifest)
    if args.json and args.command != "verify-ring":
        sys.stdout.write(dumps(result))
    return 0


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
