"""Log-log power-law fits of amplitudes against the bifurcation parameter."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

from .errors import FitError

MIN_POINTS = 8
MIN_DECADES = 3.0
CLEAN_R2 = 0.999


@dataclass(frozen=True)
class PowerLawFit:
    slope: float
    intercept: float
    r2: float
    stderr: float
    points: int

    @property
    def clean(self) -> bool:
        return self.r2 >= CLEAN_R2

    def prefactor(self) -> float:
        return float(np.exp(self.intercept))

    def to_dict(self):
        d = asdict(self)
        d["clean"] = self.clean
        return d


def fit_power_law(lams, values, min_points=MIN_POINTS, min_decades=MIN_DECADES) -> PowerLawFit:
    """Least-squares fit of ``log|values| = slope * log|lams| + intercept``."""
    lams = np.abs(np.asarray(lams, dtype=float))
    values = np.abs(np.asarray(values, dtype=float))
    if lams.shape != values.shape:
        raise FitError(f"fit needs matching arrays, got {lams.shape} and {values.shape}")
    if lams.size < min_points:
        raise FitError(f"fit needs at least {min_points} points, got {lams.size}")
    if np.any(lams <= 0) or np.any(values <= 0) or not np.all(np.isfinite(values)):
        raise FitError("power-law fit needs positive finite data")
    span = np.log10(lams.max() / lams.min())
    if span < min_decades - 1e-9:
        raise FitError(f"fit needs at least {min_decades:g} decades of lambda, got {span:.2f}")
    res = stats.linregress(np.log(lams), np.log(values))
    return PowerLawFit(float(res.slope), float(res.intercept), float(res.rvalue**2), float(res.stderr), int(lams.size))


def fit_linear(x, y):
    """Ordinary least squares ``y = slope * x + intercept``; returns ``(slope, intercept, stderr)``."""
    res = stats.linregress(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    return float(res.slope), float(res.intercept), float(res.stderr)


def log_grid(lo, hi, points):
    if not (0 < lo < hi):
        raise ValueError("log grid needs 0 < lo < hi")
    grid = np.logspace(np.log10(lo), np.log10(hi), int(points))
    # logspace rounds the endpoints; keep them exactly as given
    grid[0], grid[-1] = lo, hi
    return grid
