"""Power-law fits of kink density versus sweep rate.

The Kibble-Zurek exponent is the magnitude of the log-log slope,
``n_k ~ s**mu`` with ``s = |dh/dt|``, and ``mu = nu / (1 + nu z)`` in
theory (1/2 for Ising, 5/11 for 3-state Potts in one dimension).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

ISING_MU = 0.5
POTTS_MU = 5.0 / 11.0


def theory_mu(nu, z):
    """Kibble-Zurek exponent ``nu / (1 + nu z)``."""
    if not (nu > 0 and z > 0):
        raise ValueError("nu and z must be positive")
    return nu / (1.0 + nu * z)


@dataclass
class PowerLawFit:
    mu_hat: float
    stderr: float
    r_squared: float
    window: tuple
    n_points: int
    slope: float
    intercept: float
    theory_mu: float = None
    relative_error: float = None
    excluded: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


@dataclass
class KZWindow:
    """Result of :func:`detect_kz_window`; ``start``/``stop`` are inclusive."""

    found: bool
    start: int = None
    stop: int = None
    mean_slope: float = None
    local_slopes: list = field(default_factory=list)
    reason: str = ""

    @property
    def indices(self):
        return (self.start, self.stop) if self.found else None


def _arrays(table_or_rates, densities=None, kind=None):
    if densities is None:
        if kind is None:
            raise ValueError("observable kind required when fitting a scan table")
        rates = table_or_rates.rates
        densities = table_or_rates.densities(kind)
    else:
        rates = table_or_rates
    rates = np.asarray(rates, dtype=float).ravel()
    densities = np.asarray(densities, dtype=float).ravel()
    if rates.shape != densities.shape:
        raise ValueError("rates and densities differ in length")
    order = np.argsort(rates, kind="stable")
    return rates[order], densities[order]


def _ols(x, y):
    n = x.size
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    if sxx == 0:
        raise ValueError("rates must not all coincide")
    slope = np.sum((x - xm) * (y - ym)) / sxx
    intercept = ym - slope * xm
    resid = y - (intercept + slope * x)
    ssr = float(np.sum(resid**2))
    sst = float(np.sum((y - ym) ** 2))
    stderr = float(np.sqrt(ssr / (n - 2) / sxx)) if n > 2 else float("nan")
    r2 = 1.0 - ssr / sst if sst > 0 else 1.0
    return float(slope), float(intercept), stderr, float(min(max(r2, 0.0), 1.0))


def fit_power_law(table_or_rates, densities=None, kind=None, window=None, theory=None):
    """Least-squares fit of ``ln n`` against ``ln s``.

    Rows are sorted by rate first; ``window`` is an inclusive index range into
    the sorted rows (default: all).
    """
    rates, dens = _arrays(table_or_rates, densities, kind)
    n = rates.size
    start, stop = (0, n - 1) if window is None else (int(window[0]), int(window[1]))
    if not 0 <= start <= stop < n:
        raise ValueError(f"window {window} out of range for {n} rows")
    x, y = rates[start:stop + 1], dens[start:stop + 1]
    if x.size < 3:
        raise ValueError("a power-law fit needs at least 3 points")
    if np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise ValueError("densities in the fit window must be positive and finite")
    slope, intercept, stderr, r2 = _ols(np.log(x), np.log(y))
    fit = PowerLawFit(abs(slope), stderr, r2, (start, stop), int(x.size), slope, intercept,
                      excluded=[i for i in range(n) if not start <= i <= stop])
    if theory is not None:
        fit.theory_mu = float(theory)
        fit.relative_error = abs(fit.mu_hat - theory) / theory
    return fit


def detect_kz_window(table_or_rates, densities=None, kind=None, min_points=5, slope_tol=0.1,
                     min_slope=0.1, zero_density=1e-8):
    """Longest run of rows whose local log-log slopes agree.

    Rows with density ``<= zero_density`` are dropped (adiabatic plateau), as
    are local slopes below ``min_slope`` (saturated plateau).  Within a
    candidate run every local slope must lie within ``slope_tol`` of the run's
    mean slope.  Ties in length go to the run with the larger fit ``R^2``.
    """
    rates, dens = _arrays(table_or_rates, densities, kind)
    n = rates.size
    if n < min_points:
        return KZWindow(False, reason=f"only {n} rows; need at least {min_points}")
    with np.errstate(divide="ignore", invalid="ignore"):
        logn = np.where(dens > zero_density, np.log(np.where(dens > 0, dens, 1.0)), np.nan)
        slopes = np.diff(logn) / np.diff(np.log(rates))
    usable = np.isfinite(slopes) & (slopes >= min_slope)

    best = None
    for i in range(n - 1):
        if not usable[i]:
            continue
        for j in range(i + min_points - 1, n):
            seg = slopes[i:j]
            if not np.all(usable[i:j]):
                break
            if np.max(np.abs(seg - seg.mean())) >= slope_tol:
                continue
            r2 = fit_power_law(rates, dens, window=(i, j)).r_squared
            key = (j - i + 1, r2)
            if best is None or key > best[0]:
                best = (key, i, j, float(seg.mean()))
    if best is None:
        return KZWindow(False, local_slopes=slopes.tolist(),
                        reason=f"no run of {min_points} rows with consistent slope "
                               f"(tolerance {slope_tol})")
    _, i, j, mean = best
    return KZWindow(True, i, j, mean, slopes.tolist())


def discard_fraction_scan(table, fractions, kind="standard", window=None, theory=None):
    """Refit the exponent from central-window densities for each discard fraction.

    ``table`` must carry final profiles (a scan produced in this session).
    Returns ``{fraction: PowerLawFit}``.
    """
    out = {}
    for f in fractions:
        dens = table.densities(kind, fraction=f)
        out[f] = fit_power_law(table.rates, dens, window=window, theory=theory)
    return out


# ------------------------------------------------------------ estimator API


class PowerLawRegressor(RegressorMixin, BaseEstimator):
    """``y = prefactor * x**exponent`` fitted by OLS in log-log space."""

    def fit(self, X, y):
        X, y = check_X_y(X, y, ensure_min_samples=3)
        if X.shape[1] != 1:
            raise ValueError("PowerLawRegressor expects a single feature (the sweep rate)")
        if np.any(X <= 0) or np.any(y <= 0):
            raise ValueError("rates and densities must be positive")
        slope, intercept, stderr, r2 = _ols(np.log(X[:, 0]), np.log(y))
        self.exponent_ = slope
        self.prefactor_ = float(np.exp(intercept))
        self.stderr_ = stderr
        self.r_squared_ = r2
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "exponent_")
        X = check_array(X)
        return self.prefactor_ * X[:, 0] ** self.exponent_


class KZExponentEstimator(RegressorMixin, BaseEstimator):
    """Detect the Kibble-Zurek window in a rate scan and fit the exponent.

    Parameters
    ----------
    window : "auto" or (int, int)
        Inclusive row range (sorted by rate) or automatic detection.
    min_points, slope_tol, min_slope : detector settings.
    theory_mu : float, optional
        Reference exponent for ``relative_error_``.

    Attributes
    ----------
    mu_ : fitted exponent (magnitude of the log-log slope)
    window_ : inclusive row range used
    fit_ : :class:`PowerLawFit`
    """

    def __init__(self, window="auto", min_points=5, slope_tol=0.1, min_slope=0.1, theory_mu=None):
        self.window = window
        self.min_points = min_points
        self.slope_tol = slope_tol
        self.min_slope = min_slope
        self.theory_mu = theory_mu

    def fit(self, X, y):
        X, y = check_X_y(X, y, ensure_min_samples=3)
        rates = X[:, 0]
        if isinstance(self.window, str):
            if self.window != "auto":
                raise ValueError(f"window must be 'auto' or an index pair, got {self.window!r}")
            found = detect_kz_window(rates, y, min_points=self.min_points,
                                     slope_tol=self.slope_tol, min_slope=self.min_slope)
            if not found.found:
                raise ValueError(f"no Kibble-Zurek window found: {found.reason}")
            window = found.indices
            self.detection_ = found
        else:
            window = tuple(self.window)
        self.fit_ = fit_power_law(rates, y, window=window, theory=self.theory_mu)
        self.window_ = self.fit_.window
        self.mu_ = self.fit_.mu_hat
        self.stderr_ = self.fit_.stderr
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "fit_")
        X = check_array(X)
        return np.exp(self.fit_.intercept) * X[:, 0] ** self.fit_.slope
