import numpy as np
import pytest

from ffchain.errors import FitError
from ffchain.fitting import fit_linear, fit_power_law, log_grid


def test_exact_power_law():
    lams = log_grid(1e-10, 1e-4, 12)
    fit = fit_power_law(lams, lams ** (1 / 6))
    assert abs(fit.slope - 1 / 6) <= 1e-12
    assert fit.r2 == pytest.approx(1.0, abs=1e-14) and fit.clean
    assert fit.prefactor() == pytest.approx(1.0)
    fit = fit_power_law(-lams, -3 * lams**0.5)
    assert abs(fit.slope - 0.5) <= 1e-12 and fit.prefactor() == pytest.approx(3.0)


def test_fit_errors():
    lams = log_grid(1e-6, 1e-3, 7)
    with pytest.raises(FitError, match="8 points"):
        fit_power_law(lams, lams)
    lams = log_grid(1e-6, 1e-4, 10)
    with pytest.raises(FitError, match="decades"):
        fit_power_law(lams, lams)
    lams = log_grid(1e-6, 1e-2, 10)
    vals = lams.copy()
    vals[3] = 0
    with pytest.raises(FitError):
        fit_power_law(lams, vals)
    with pytest.raises(FitError):
        fit_power_law(lams, lams[:-1])


def test_noisy_fit_is_not_clean():
    rng = np.random.default_rng(0)
    lams = log_grid(1e-6, 1e-2, 10)
    fit = fit_power_law(lams, lams**0.5 * np.exp(rng.normal(0, 1.0, 10)))
    assert not fit.clean
    assert set(fit.to_dict()) >= {"slope", "r2", "stderr", "clean"}


def test_fit_linear_and_grid():
    s, i, _ = fit_linear([0, 1, 2], [1, 3, 5])
    assert s == pytest.approx(2) and i == pytest.approx(1)
    with pytest.raises(ValueError):
        log_grid(1e-2, 1e-3, 5)
