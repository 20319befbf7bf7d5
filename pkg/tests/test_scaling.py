import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from kzquench.scaling import (ISING_MU, POTTS_MU, KZExponentEstimator, PowerLawRegressor,
                              detect_kz_window, fit_power_law, theory_mu)


def kz_curve(rates, mu, a=0.2, plateau=0.5):
    """Power law in the KZ window, saturating at a plateau for fast sweeps."""
    return np.minimum(a * rates**mu, plateau)


def test_theory_values():
    assert theory_mu(1.0, 1.0) == ISING_MU
    assert theory_mu(5 / 6, 1.0) == pytest.approx(POTTS_MU)
    assert POTTS_MU == pytest.approx(0.4545, abs=1e-4)
    with pytest.raises(ValueError):
        theory_mu(0.0, 1.0)


def test_exact_power_law_recovered():
    rates = np.geomspace(0.01, 1, 8)
    fit = fit_power_law(rates, 0.3 * rates**0.5, theory=0.5)
    assert fit.mu_hat == pytest.approx(0.5, abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0) and fit.stderr < 1e-10
    assert fit.relative_error < 1e-10


def test_window_and_order_handling():
    rates = np.geomspace(0.01, 1, 8)
    dens = 0.3 * rates ** (5 / 11)
    perm = np.random.default_rng(0).permutation(8)
    a = fit_power_law(rates, dens, window=(2, 6))
    b = fit_power_law(rates[perm], dens[perm], window=(2, 6))
    assert a.mu_hat == pytest.approx(b.mu_hat) and a.excluded == [0, 1, 7]
    with pytest.raises(ValueError):
        fit_power_law(rates, dens, window=(5, 9))
    with pytest.raises(ValueError):
        fit_power_law(rates[:2], dens[:2])
    with pytest.raises(ValueError):
        fit_power_law(rates, np.r_[dens[:-1], 0.0])


@settings(max_examples=30, deadline=None)
@given(mu=st.floats(0.2, 1.0), a=st.floats(1e-3, 1e3), c=st.floats(1e-2, 1e2))
def test_fit_invariances(mu, a, c):
    # prefactor scaling leaves mu alone; rescaling rates leaves mu alone
    rates = np.geomspace(0.02, 2, 7)
    noise = np.exp(0.01 * np.sin(np.arange(7)))
    base = fit_power_law(rates, rates**mu * noise).mu_hat
    assert fit_power_law(rates, a * rates**mu * noise).mu_hat == pytest.approx(base, abs=1e-9)
    assert fit_power_law(c * rates, rates**mu * noise).mu_hat == pytest.approx(base, abs=1e-9)


def test_slope_sign_is_magnitude():
    rates = np.geomspace(0.1, 1, 5)
    fit = fit_power_law(rates, rates**-0.5)
    assert fit.slope == pytest.approx(-0.5) and fit.mu_hat == pytest.approx(0.5)


def test_detector_skips_plateaus():
    rates = np.geomspace(0.005, 10, 16)
    dens = kz_curve(rates, 0.5)
    dens[:3] = 1e-12  # adiabatic plateau
    win = detect_kz_window(rates, dens)
    assert win.found
    x = rates[win.start:win.stop + 1]
    assert x[0] > rates[2] and np.all(0.2 * x**0.5 < 0.5 + 1e-12)
    assert fit_power_law(rates, dens, window=win.indices).mu_hat == pytest.approx(0.5, abs=1e-6)


def test_detector_invariant_to_appended_saturated_rows():
    rates = np.geomspace(0.01, 1, 10)
    dens = kz_curve(rates, 5 / 11, plateau=1.0)
    base = detect_kz_window(rates, dens)
    more_r = np.r_[rates, [5, 10, 20]]
    more_d = np.r_[dens, [0.6, 0.6, 0.6]]
    ext = detect_kz_window(more_r, more_d)
    assert ext.indices == base.indices


def test_detector_reports_failure():
    rates = np.geomspace(0.1, 1, 4)
    assert not detect_kz_window(rates, rates**0.5).found
    flat = detect_kz_window(np.geomspace(0.1, 1, 8), np.full(8, 0.5))
    assert not flat.found and "consistent slope" in flat.reason


# ------------------------------------------------------------ estimator API


def test_power_law_regressor():
    X = np.geomspace(0.01, 1, 6)[:, None]
    y = 2.0 * X[:, 0] ** 0.5
    est = PowerLawRegressor().fit(X, y)
    assert est.exponent_ == pytest.approx(0.5) and est.prefactor_ == pytest.approx(2.0)
    assert np.allclose(est.predict(X), y)
    assert est.score(X, y) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        PowerLawRegressor().fit(np.c_[X, X], y)


def test_kz_estimator_auto_and_fixed_window():
    rates = np.geomspace(0.005, 10, 16)
    dens = kz_curve(rates, 0.5)
    est = KZExponentEstimator(theory_mu=0.5).fit(rates[:, None], dens)
    assert est.mu_ == pytest.approx(0.5, abs=1e-6)
    assert est.fit_.relative_error < 1e-5
    fixed = clone(est).set_params(window=est.window_).fit(rates[:, None], dens)
    assert fixed.mu_ == pytest.approx(est.mu_)
    assert est.get_params()["min_points"] == 5
    with pytest.raises(ValueError):
        KZExponentEstimator(window="manual").fit(rates[:, None], dens)
    with pytest.raises(ValueError):
        KZExponentEstimator().fit(rates[:4, None], np.full(4, 0.5))
