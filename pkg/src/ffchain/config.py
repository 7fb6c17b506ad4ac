"""Text configuration of a chain system and a run.

The format is line based::

    # comments start with '#'
    [system]
    n = 3
    d = 1
    form = real          # or: complex (cells are complex numbers, d = 2)

    [linear.0]           # a_0(lam) = L0 + L1 lam + L2 lam^2
    L1 = 1.0
    [linear.1]
    L0 = 1.0             # d x d matrices: rows split by ';', entries by ','

    [nonlinear]          # one monomial per line, coefficient vector after ':'
    X0^2 : (-1.0)        # d > 1 uses X<cell>_<component>, e.g. X0_1^2
                         # complex form uses Z0^2 Z0c^1 L^1 : (re, im)
    [run]
    pipeline = steady
    lambda_min = 1e-08
    lambda_max = 0.0001
    points = 20

Printing uses ``repr`` for every float, so ``parse_config(print_config(c))``
reproduces ``c`` exactly.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import ConfigError
from .fitting import log_grid
from .network import ComplexResponse, PolyResponse, complexify

PIPELINES = ("verify-ring", "normal-form", "steady", "hopf", "simulate", "fit", "report")
SPACINGS = ("log", "linear")
FORMS = ("real", "complex")
METHODS = ("dop853", "dopri5")
MAX_LAMBDA_POWER = 2

_HEADER = re.compile(r"^\[\s*([A-Za-z_][\w.]*)\s*\]$")
_TOKEN = re.compile(r"\S+")


@dataclass(frozen=True)
class RunSettings:
    pipeline: str | None = None
    lambda_min: float = 1e-8
    lambda_max: float = 1e-4
    points: int = 20
    spacing: str = "log"
    tol: float = 1e-10
    seed: int = 0
    out: str | None = None
    branch: int = 1
    method: str = "dop853"
    transient_factor: float = 50.0
    periods: int = 10

    def grid(self):
        """Positive lambda magnitudes described by the grid settings."""
        if self.spacing == "log":
            return log_grid(self.lambda_min, self.lambda_max, self.points)
        return np.linspace(self.lambda_min, self.lambda_max, self.points)


@dataclass(frozen=True)
class RunConfig:
    """Parsed configuration.

    ``linear`` holds ``(cell, lam_power, matrix)`` with the matrix as a tuple
    of row tuples, sorted by cell then power.  ``nonlinear`` holds
    ``(exponents, values)`` in file order; exponents follow the variable
    layout of :class:`PolyResponse` (real form) or :class:`ComplexResponse`
    (complex form) with the lambda power last, values are ``d`` floats
    (real form) or ``(re, im)`` (complex form).
    """

    n: int
    d: int
    form: str = "real"
    linear: tuple = ()
    nonlinear: tuple = ()
    run: RunSettings = field(default_factory=RunSettings)

    @property
    def nvars(self):
        return (self.n + 1) * self.d + 1 if self.form == "real" else 2 * (self.n + 1) + 1

    def linear_matrix(self, cell, power):
        for i, p, m in self.linear:
            if i == cell and p == power:
                return np.array(m, dtype=float)
        return np.zeros((self.d, self.d))


# parsing ----------------------------------------------------------------------


def _strip_comment(line):
    k = line.find("#")
    return line if k < 0 else line[:k]


def _parse_float(text, line, col):
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"expected a number, got {text!r}", line, col) from None


def _parse_int(text, line, col):
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"expected an integer, got {text!r}", line, col) from None


def _parse_matrix(text, line, col):
    rows = []
    offset = col
    for row_text in text.split(";"):
        row = []
        pos = offset
        for entry in row_text.split(","):
            stripped = entry.strip()
            ecol = pos + (len(entry) - len(entry.lstrip()))
            if not stripped:
                raise ConfigError("empty matrix entry", line, ecol)
            row.append(_parse_float(stripped, line, ecol))
            pos += len(entry) + 1
        rows.append(tuple(row))
        offset += len(row_text) + 1
    if len({len(r) for r in rows}) != 1:
        raise ConfigError("matrix rows have different lengths", line, col)
    return tuple(rows)


def _parse_vector(text, line, col):
    s = text.strip()
    if not (s.startswith("(") and s.endswith(")")):
        raise ConfigError("coefficient must be written as (v1, v2, ...)", line, col)
    inner = s[1:-1]
    start = col + (len(text) - len(text.lstrip())) + 1
    out = []
    pos = start
    for entry in inner.split(","):
        stripped = entry.strip()
        ecol = pos + (len(entry) - len(entry.lstrip()))
        if not stripped:
            raise ConfigError("empty coefficient entry", line, ecol)
        out.append(_parse_float(stripped, line, ecol))
        pos += len(entry) + 1
    return tuple(out)


_REAL_VAR = re.compile(r"^X(\d+)(?:_(\d+))?$")
_COMPLEX_VAR = re.compile(r"^Z(\d+)(c?)$")


def _parse_monomial(text, line, col, n, d, form):
    nv = (n + 1) * d + 1 if form == "real" else 2 * (n + 1) + 1
    exp = [0] * nv
    for m in _TOKEN.finditer(text):
        tok = m.group(0)
        tcol = col + m.start()
        name, sep, power_text = tok.partition("^")
        if sep:
            if not re.fullmatch(r"\d+", power_text):
                raise ConfigError(f"malformed exponent in {tok!r}", line, tcol + len(name) + 1)
            power = int(power_text)
        else:
            power = 1
        if name == "L":
            if power > MAX_LAMBDA_POWER:
                raise ConfigError(f"lambda power {power} exceeds {MAX_LAMBDA_POWER}", line, tcol)
            exp[-1] += power
            continue
        if form == "real":
            mv = _REAL_VAR.match(name)
            if not mv:
                raise ConfigError(f"unknown variable {name!r} (expected X<cell> or X<cell>_<comp>)", line, tcol)
            cell = int(mv.group(1))
            comp = int(mv.group(2)) if mv.group(2) is not None else None
            if comp is None:
                if d != 1:
                    raise ConfigError(f"{name!r} needs a component index when d = {d}", line, tcol)
                comp = 0
            if comp >= d:
                raise ConfigError(f"component {comp} out of range 0..{d - 1}", line, tcol)
            idx = cell * d + comp
        else:
            mv = _COMPLEX_VAR.match(name)
            if not mv:
                raise ConfigError(f"unknown variable {name!r} (expected Z<cell> or Z<cell>c)", line, tcol)
            cell = int(mv.group(1))
            idx = cell + (n + 1 if mv.group(2) else 0)
        if cell > n:
            raise ConfigError(f"cell index {cell} out of range 0..{n}", line, tcol)
        exp[idx] += power
    if exp[-1] > MAX_LAMBDA_POWER:
        raise ConfigError(f"lambda power {exp[-1]} exceeds {MAX_LAMBDA_POWER}", line, col)
    if sum(exp[:-1]) < 2:
        raise ConfigError("nonlinear terms need total degree >= 2 in the cell variables; "
                          "put linear terms in [linear.i]", line, col)
    return tuple(exp)


_RUN_TYPES = {f.name: f.type for f in fields(RunSettings)}


def _run_value(key, value, line, col):
    kind = _RUN_TYPES[key]
    if "int" in kind:
        v = _parse_int(value, line, col)
    elif "float" in kind:
        v = _parse_float(value, line, col)
    else:
        v = value
    choices = {"pipeline": PIPELINES, "spacing": SPACINGS, "method": METHODS}.get(key)
    if choices and v not in choices:
        raise ConfigError(f"{key} must be one of {', '.join(choices)}", line, col)
    return v


def parse_config(text: str) -> RunConfig:
    """Parse configuration text; errors carry line and column (both 1-based)."""
    section = None
    section_line = {}
    system = {}
    linear_raw = []
    nonlinear_raw = []
    run = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        body = _strip_comment(raw).rstrip()
        if not body.strip():
            continue
        col0 = len(body) - len(body.lstrip()) + 1
        body_s = body.strip()
        hm = _HEADER.match(body_s)
        if hm:
            name = hm.group(1)
            if name in ("system", "nonlinear", "run"):
                section = name
            elif name.startswith("linear."):
                idx = name.split(".", 1)[1]
                if not idx.isdigit():
                    raise ConfigError(f"bad linear section index {idx!r}", ln, col0)
                section = ("linear", int(idx))
            else:
                raise ConfigError(f"unknown section [{name}]", ln, col0)
            if section in section_line:
                raise ConfigError(f"section [{name}] appears twice", ln, col0)
            section_line[section] = ln
            continue
        if body_s.startswith("["):
            raise ConfigError("malformed section header", ln, col0)
        if section is None:
            raise ConfigError("content before the first section", ln, col0)
        if section == "nonlinear":
            k = body.find(":")
            if k < 0:
                raise ConfigError("expected 'monomial : (coefficients)'", ln, col0)
            nonlinear_raw.append((body[:k], ln, 1, body[k + 1:], k + 2))
            continue
        k = body.find("=")
        if k < 0:
            raise ConfigError("expected 'key = value'", ln, col0)
        key = body[:k].strip()
        value = body[k + 1:]
        vcol = k + 2 + (len(value) - len(value.lstrip()))
        value = value.strip()
        if not value:
            raise ConfigError(f"missing value for {key!r}", ln, vcol)
        if section == "system":
            if key not in ("n", "d", "form"):
                raise ConfigError(f"unknown [system] key {key!r}", ln, col0)
            if key in system:
                raise ConfigError(f"duplicate key {key!r}", ln, col0)
            system[key] = (value, ln, vcol)
        elif section == "run":
            if key not in _RUN_TYPES:
                raise ConfigError(f"unknown [run] key {key!r}", ln, col0)
            if key in run:
                raise ConfigError(f"duplicate key {key!r}", ln, col0)
            run[key] = _run_value(key, value, ln, vcol)
        else:
            if not re.fullmatch(r"L\d+", key):
                raise ConfigError(f"linear keys are L0, L1, L2; got {key!r}", ln, col0)
            power = int(key[1:])
            if power > MAX_LAMBDA_POWER:
                raise ConfigError(f"lambda power {power} exceeds {MAX_LAMBDA_POWER}", ln, col0)
            linear_raw.append((section[1], power, value, ln, vcol))

    if "system" not in section_line:
        raise ConfigError("missing [system] section")
    for key in ("n",):
        if key not in system:
            raise ConfigError(f"[system] needs {key!r}", section_line["system"])
    form_text = system.get("form", ("real", None, None))
    form = form_text[0]
    if form not in FORMS:
        raise ConfigError("form must be real or complex", form_text[1], form_text[2])
    n = _parse_int(*system["n"])
    if n < 0:
        raise ConfigError("n must be >= 0", system["n"][1], system["n"][2])
    if "d" in system:
        d = _parse_int(*system["d"])
    else:
        d = 2 if form == "complex" else 1
    dline = system["d"][1:] if "d" in system else (section_line["system"], None)
    if d < 1:
        raise ConfigError("d must be >= 1", *dline)
    if form == "complex" and d != 2:
        raise ConfigError("complex form needs d = 2", *dline)

    linear = {}
    for cell, power, value, ln, vcol in linear_raw:
        if cell > n:
            raise ConfigError(f"linear cell index {cell} out of range 0..{n}", ln, 1)
        if (cell, power) in linear:
            raise ConfigError(f"duplicate L{power} in [linear.{cell}]", ln, 1)
        m = _parse_matrix(value, ln, vcol)
        if len(m) != d or len(m[0]) != d:
            raise ConfigError(f"matrix must be {d}x{d}, got {len(m)}x{len(m[0])}", ln, vcol)
        linear[(cell, power)] = m

    nonlinear = []
    seen = set()
    width = d if form == "real" else 2
    for mono, ln, mcol, value, vcol in nonlinear_raw:
        exp = _parse_monomial(mono, ln, mcol, n, d, form)
        if exp in seen:
            raise ConfigError("duplicate nonlinear term", ln, mcol)
        seen.add(exp)
        vec = _parse_vector(value, ln, vcol)
        if len(vec) != width:
            raise ConfigError(f"coefficient needs {width} entries, got {len(vec)}", ln, vcol)
        nonlinear.append((exp, vec))

    settings = RunSettings(**run)
    if "branch" in run and not 1 <= settings.branch <= max(n, 1):
        raise ConfigError(f"branch must be in 1..{max(n, 1)}")
    if settings.points < 1:
        raise ConfigError("points must be >= 1")
    return RunConfig(
        n=n,
        d=d,
        form=form,
        linear=tuple((c, p, linear[(c, p)]) for c, p in sorted(linear)),
        nonlinear=tuple(nonlinear),
        run=settings,
    )


# printing ---------------------------------------------------------------------


def _fmt(x):
    return repr(float(x))


def _monomial_text(cfg: RunConfig, exp):
    n, d = cfg.n, cfg.d
    parts = []
    for idx, p in enumerate(exp[:-1]):
        if not p:
            continue
        if cfg.form == "real":
            cell, comp = divmod(idx, d)
            name = f"X{cell}" if d == 1 else f"X{cell}_{comp}"
        else:
            name = f"Z{idx}" if idx <= n else f"Z{idx - n - 1}c"
        parts.append(f"{name}^{p}")
    if exp[-1]:
        parts.append(f"L^{exp[-1]}")
    return " ".join(parts)


def print_config(cfg: RunConfig) -> str:
    """Canonical text of ``cfg``; the inverse of :func:`parse_config`."""
    lines = ["[system]", f"n = {cfg.n}", f"d = {cfg.d}", f"form = {cfg.form}"]
    current = None
    for cell, power, m in cfg.linear:
        if cell != current:
            lines += ["", f"[linear.{cell}]"]
            current = cell
        lines.append(f"L{power} = " + "; ".join(", ".join(_fmt(v) for v in row) for row in m))
    if cfg.nonlinear:
        lines += ["", "[nonlinear]"]
        for exp, vec in cfg.nonlinear:
            lines.append(f"{_monomial_text(cfg, exp)} : (" + ", ".join(_fmt(v) for v in vec) + ")")
    lines += ["", "[run]"]
    for f in fields(RunSettings):
        v = getattr(cfg.run, f.name)
        if v is None:
            continue
        lines.append(f"{f.name} = {_fmt(v) if isinstance(v, float) else v}")
    return "\n".join(lines) + "\n"


# building the response function ----------------------------------------------


def build_response(cfg: RunConfig):
    """:class:`PolyResponse` (real form) or :class:`ComplexResponse` (complex form)."""
    n, d = cfg.n, cfg.d
    if cfg.form == "real":
        nv = cfg.nvars
        terms = {}
        for cell, power, m in cfg.linear:
            m = np.array(m, dtype=float)
            for c in range(d):
                if not np.any(m[:, c]):
                    continue
                e = [0] * nv
                e[cell * d + c] = 1
                e[-1] = power
                key = tuple(e)
                terms[key] = terms.get(key, 0) + m[:, c]
        for exp, vec in cfg.nonlinear:
            terms[exp] = terms.get(exp, 0) + np.array(vec, dtype=float)
        return PolyResponse.from_terms(n, d, terms)
    nv = cfg.nvars
    terms = {}
    for cell, power, m in cfg.linear:
        p, q = complexify(m)
        for idx, c in ((cell, p), (n + 1 + cell, q)):
            if c == 0:
                continue
            e = [0] * nv
            e[idx] = 1
            e[-1] = power
            key = tuple(e)
            terms[key] = terms.get(key, 0) + c
    for exp, (re_, im_) in cfg.nonlinear:
        terms[exp] = terms.get(exp, 0) + complex(re_, im_)
    return ComplexResponse.from_terms(n, terms)


def load_config(path) -> tuple:
    """Read a config file; returns ``(RunConfig, text)``."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_config(text), text
