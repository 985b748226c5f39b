"""Power-law fit E(N) = E_min + C N^a of energy against degrees of freedom."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import least_squares, minimize_scalar
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y


class FitError(ValueError):
    """Invalid input data or a fit that failed to converge."""

    def __init__(self, message: str, trace=()):
        trace = list(trace)
        if trace:
            message += f"; residual trace {['%.3e' % t for t in trace[-5:]]}"
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class PowerLawFit:
    e_min: float
    c_fit: float
    a_fit: float
    rms_residual: float

    def predict(self, n) -> np.ndarray:
        return self.e_min + self.c_fit * np.asarray(n, dtype=float) ** self.a_fit

    def to_dict(self) -> dict:
        return asdict(self)


def _loglinear(n, e, e_min):
    """Closed-form (C, a) for fixed E_min from a line fit in log-log space."""
    a, log_c = np.polyfit(np.log(n), np.log(e - e_min), 1)
    return float(np.exp(log_c)), float(a)


def _rms(n, e, params):
    e_min, c, a = params
    return float(np.sqrt(np.mean((e_min + c * n**a - e) ** 2)))


def _validate(n, e, strict: bool):
    n = np.asarray(n, dtype=float).ravel()
    e = np.asarray(e, dtype=float).ravel()
    if n.shape != e.shape:
        raise FitError("N and E must have the same length")
    if len(n) < 3:
        raise FitError("need at least 3 points for three parameters")
    if not (np.all(np.isfinite(n)) and np.all(np.isfinite(e))):
        raise FitError("non-finite input")
    if np.any(n <= 0):
        raise FitError("N must be positive")
    if np.any(np.diff(n) <= 0):
        raise FitError("N must be strictly increasing")
    if strict and np.any(np.diff(e) >= 0):
        raise FitError("E must be strictly decreasing in N")
    return n, e


def _fit(n, e) -> tuple[tuple[float, float, float], list[float]]:
    # scale everything so the search works on O(1) numbers
    e_ref = float(e.min())
    span = float(e.max() - e.min()) or abs(e_ref) or 1.0
    n_ref = float(n[0])
    x = n / n_ref
    y = (e - e_ref) / span          # min(y) = 0; E_min maps to -delta
    trace: list[float] = []

    def profile(log_delta):
        delta = np.exp(log_delta)
        c, a = _loglinear(x, y, -delta)
        r = _rms(x, y, (-delta, c, a))
        trace.append(r)
        return r

    grid = np.linspace(np.log(1e-9), np.log(1e4), 261)
    vals = np.array([profile(g) for g in grid])
    k = int(np.argmin(vals))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    best = minimize_scalar(profile, bounds=(lo, hi), method="bounded",
                           options={"xatol": 1e-12})
    log_delta = best.x if best.fun <= vals[k] else grid[k]
    delta = float(np.exp(log_delta))
    c0, a0 = _loglinear(x, y, -delta)

    # polish all three parameters on the original least-squares objective
    def resid(p):
        return -np.exp(p[0]) + np.exp(p[1]) * x ** p[2] - y

    sol = least_squares(resid, [np.log(delta), np.log(c0), a0], method="lm",
                        xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=20000)
    cand = [(-delta, c0, a0)]
    if sol.success and np.all(np.isfinite(sol.x)):
        cand.append((-float(np.exp(sol.x[0])), float(np.exp(sol.x[1])), float(sol.x[2])))
    d_min, c_s, a = min(cand, key=lambda p: _rms(x, y, p))
    trace.append(_rms(x, y, (d_min, c_s, a)))
    if not np.isfinite([d_min, c_s, a]).all():
        raise FitError("power-law fit did not converge", trace)
    # undo the scaling: E = e_ref + span * (d_min + c_s (N / n_ref)^a)
    return (e_ref + span * d_min, span * c_s * n_ref ** (-a), a), trace


def fit_power_law(points, strict: bool = True) -> PowerLawFit:
    """Least-squares fit of E = E_min + C N^a to (N, E) pairs.

    The optimum over E_min is bracketed by profiling the closed-form
    log-linear fit of (C, a) on a logarithmic grid of E_min offsets below
    min(E), refined by bounded scalar search, and finally polished jointly
    in the original residual by Levenberg-Marquardt.

    Parameters
    ----------
    points : sequence of (N, E)
        N strictly increasing; with ``strict`` E must strictly decrease.
    strict : bool
        Reject data whose energy is not strictly decreasing.

    Raises
    ------
    FitError
        On invalid input or when the optimiser fails.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise FitError("points must be a sequence of (N, E) pairs")
    n, e = _validate(pts[:, 0], pts[:, 1], strict)
    (e_min, c, a), _ = _fit(n, e)
    return PowerLawFit(e_min=e_min, c_fit=c, a_fit=a, rms_residual=_rms(n, e, (e_min, c, a)))


class PowerLawRegressor(RegressorMixin, BaseEstimator):
    """Scikit-learn estimator around :func:`fit_power_law`.

    ``X`` is a single column of DOF counts, ``y`` the energies. After
    ``fit`` the attributes ``e_min_``, ``c_``, ``a_`` and
    ``rms_residual_`` hold the result.

    Examples
    --------
    >>> import numpy as np
    >>> n = np.array([[10.0], [100.0], [1000.0]])
    >>> reg = PowerLawRegressor().fit(n, 2.0 + 1.0 / n.ravel())
    >>> round(reg.a_, 8)
    -1.0
    """

    def __init__(self, strict: bool = True):
        self.strict = strict

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        if X.shape[1] != 1:
            raise ValueError("X must have exactly one feature (the DOF count)")
        order = np.argsort(X[:, 0], kind="stable")
        result = fit_power_law(np.column_stack([X[order, 0], y[order]]), strict=self.strict)
        self.e_min_ = result.e_min
        self.c_ = result.c_fit
        self.a_ = result.a_fit
        self.rms_residual_ = result.rms_residual
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "a_")
        X = check_array(X)
        if X.shape[1] != 1:
            raise ValueError("X must have exactly one feature (the DOF count)")
        return self.e_min_ + self.c_ * X[:, 0] ** self.a_

    @property
    def result_(self) -> PowerLawFit:
        check_is_fitted(self, "a_")
        return PowerLawFit(self.e_min_, self.c_, self.a_, self.rms_residual_)
