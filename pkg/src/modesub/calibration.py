"""Realistic-subtractor weights from herald rate versus probe intensity.

A realistic subtractor heralds nothing (weight ``w0``), one photon (``w1``)
or two photons (``w2``). For a coherent probe with mean photon number ``x``
the herald rate is ``kappa * (w0 + w1 p0 x + w2 p0^2 x^2)``.
"""

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import nnls
from scipy.special import gammaln
from sklearn.base import BaseEstimator

from ._validation import check_int, check_is_fitted, check_scalar, frozen
from .exceptions import (ConvergenceWarning, InvalidInputError,
                         ModelMismatchError, NoSignalError)

DEFAULT_GRID = (0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 90.0)
W2_RESOLUTION = 1e-3
FLAG_W2 = "w2_unidentifiable"


@dataclass(frozen=True)
class RealisticWeights:
    w0: float
    w1: float
    w2: float = 0.0

    def __post_init__(self):
        for name in ("w0", "w1", "w2"):
            check_scalar(getattr(self, name), name, min_val=0.0, max_val=1.0)
        total = self.w0 + self.w1 + self.w2
        if abs(total - 1.0) > 1e-10:
            raise InvalidInputError(f"weights must sum to 1, got {total:.12g}")

    def as_array(self):
        return np.array([self.w0, self.w1, self.w2])


@dataclass(frozen=True, eq=False)
class CalibrationCurve:
    """Herald counts at strictly increasing probe intensities."""

    mean_photons: np.ndarray
    counts: np.ndarray
    shots: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.mean_photons, dtype=float).ravel()
        k = np.asarray(self.counts, dtype=float).ravel()
        s = np.broadcast_to(np.asarray(self.shots, dtype=float), x.shape).copy()
        if k.shape != x.shape:
            raise InvalidInputError("counts and mean_photons differ in length")
        if x.size < 4:
            raise InvalidInputError("a calibration curve needs >= 4 points")
        if not np.all(np.isfinite(x)) or np.any(x < 0):
            raise InvalidInputError("mean_photons must be finite and >= 0")
        if np.any(np.diff(x) <= 0):
            raise InvalidInputError("mean_photons must be strictly increasing")
        if np.any(k < 0) or not np.all(np.isfinite(k)):
            raise InvalidInputError("counts must be finite and >= 0")
        if np.any(s < 1):
            raise InvalidInputError("shots must be >= 1")
        for name, arr in (("mean_photons", x), ("counts", k), ("shots", s)):
            object.__setattr__(self, name, frozen(arr))

    @classmethod
    def from_points(cls, points):
        arr = np.asarray(points, dtype=float)
        return cls(arr[:, 0], arr[:, 1], arr[:, 2])

    def __len__(self):
        return self.mean_photons.shape[0]


def _features(x, p0):
    x = np.asarray(x, dtype=float)
    return np.stack([np.ones_like(x), p0 * x, (p0 * x) ** 2], axis=-1)


def herald_rate(w: RealisticWeights, p0, mean_photons, kappa=1.0):
    """``kappa * (w0 + w1 p0 x + w2 p0^2 x^2)``; accepts array ``x``."""
    check_scalar(p0, "p0", min_val=0.0, max_val=1.0)
    check_scalar(kappa, "kappa", min_val=0.0)
    x = np.asarray(mean_photons, dtype=float)
    if np.any(x < 0):
        raise InvalidInputError("mean_photons must be >= 0")
    out = kappa * (_features(x, p0) @ w.as_array())
    return float(out) if out.ndim == 0 else out


def simulate_curve(w: RealisticWeights, p0, kappa, mean_photons=DEFAULT_GRID,
                   shots=1, seed=0, noiseless=False):
    """Poisson herald counts; point ``m`` draws from the stream ``(seed, m)``."""
    x = np.asarray(mean_photons, dtype=float)
    mu = herald_rate(w, p0, x, kappa) * shots
    if noiseless:
        counts = np.asarray(mu, dtype=float)
    else:
        check_int(seed, "seed", min_val=0)
        counts = np.array([np.random.default_rng([seed, m]).poisson(v)
                           for m, v in enumerate(np.atleast_1d(mu))], dtype=float)
    return CalibrationCurve(x, counts, np.full(x.shape, shots, dtype=float))


def _nll(theta, F, k, s):
    mu = s * (F @ theta)
    pos = k > 0
    if np.any(mu[pos] <= 0):
        return np.inf
    return float(np.sum(mu) - np.sum(k[pos] * np.log(mu[pos])))


def _projected_newton(theta, F, k, s, max_iters, tol):
    """Minimize the Poisson NLL over ``theta >= 0`` (convex, 3 variables)."""
    f = _nll(theta, F, k, s)
    for it in range(1, max_iters + 1):
        mu = np.maximum(s * (F @ theta), 1e-300)
        g = F.T @ (s * (1 - k / mu))
        H = (F * (s ** 2 * k / mu ** 2)[:, None]).T @ F
        free = (theta > 0) | (g < 0)
        step = np.zeros_like(theta)
        if free.any():
            Hf = H[np.ix_(free, free)] + 1e-14 * np.trace(H) * np.eye(free.sum())
            step[free] = -np.linalg.solve(Hf, g[free])
        t = 1.0
        while True:
            cand = np.maximum(theta + t * step, 0.0)
            fc = _nll(cand, F, k, s)
            if fc <= f + 1e-4 * (g @ (cand - theta)) or t < 1e-12:
                break
            t *= 0.5
        delta = np.max(np.abs(cand - theta) / np.maximum(np.abs(cand), 1e-300 + tol))
        theta, f_old, f = cand, f, min(fc, f)
        if delta < tol or abs(f_old - f) <= tol * max(1.0, abs(f)) * 1e-3:
            return theta, it, True
    return theta, max_iters, False


class WeightCalibrator(BaseEstimator):
    """Constrained Poisson maximum-likelihood fit of ``(w0, w1, w2, kappa)``.

    The fit runs over ``theta = kappa * w >= 0``; ``kappa = sum(theta)`` and
    ``w = theta / kappa`` then lie on the simplex by construction.

    Parameters
    ----------
    p0 : float
        Mode selectivity from a prior tomography run; held fixed.
    w2_resolution : float
        ``w2`` is flagged unidentifiable when its standard error exceeds
        this value.
    """

    def __init__(self, p0=0.9, w2_resolution=W2_RESOLUTION, max_iters=200,
                 tol=1e-13):
        self.p0 = p0
        self.w2_resolution = w2_resolution
        self.max_iters = max_iters
        self.tol = tol

    def fit(self, x, counts, shots=1):
        p0 = check_scalar(self.p0, "p0", min_val=0.0, max_val=1.0)
        if p0 == 0:
            raise InvalidInputError("p0 must be positive to separate w1 from w0")
        curve = CalibrationCurve(x, counts, shots)
        x, k, s = curve.mean_photons, curve.counts, curve.shots
        positive = x[x > 0]
        if positive.size == 0 or x.max() < 10 * positive.min():
            raise InvalidInputError("curve must span at least a factor 10 in x")
        if k.sum() == 0:
            raise NoSignalError("all calibration counts are zero")
        r = k / s
        slope = np.polyfit(x, r, 1, w=np.sqrt(s / np.maximum(r, 1.0 / s)))[0]
        if slope < 0:
            raise ModelMismatchError("herald rate decreases with intensity")
        F = _features(x, p0)
        sw = np.sqrt(s / np.maximum(r, 1.0 / s))
        theta0, _ = nnls(F * sw[:, None], r * sw)
        if not np.any(theta0 > 0):
            theta0 = np.array([r.mean(), 0.0, 0.0])
        theta0 = np.maximum(theta0, 1e-6 * theta0.max())
        theta, n_iter, ok = _projected_newton(theta0, F, k, s,
                                              int(self.max_iters), float(self.tol))
        if not ok:
            warnings.warn("calibration fit did not converge", ConvergenceWarning)
        kappa = float(theta.sum())
        w = theta / kappa
        w = w / w.sum()
        self.weights_ = RealisticWeights(*(float(v) for v in w))
        self.kappa_ = kappa
        self.n_iter_ = n_iter
        self.converged_ = ok
        mu = s * (F @ theta)
        info = (F * (s ** 2 * k / np.maximum(mu, 1e-300) ** 2)[:, None]).T @ F
        cov_theta = np.linalg.pinv(info)
        J = (np.eye(3) - w[:, None]) / kappa
        cov_w = J @ cov_theta @ J.T
        if np.linalg.matrix_rank(info) < 3:
            self.stderr_ = np.full(3, np.inf)
        else:
            self.stderr_ = np.sqrt(np.clip(np.diag(cov_w), 0, None))
        self.kappa_stderr_ = float(np.sqrt(max(np.sum(cov_theta), 0.0)))
        self.flags_ = []
        if not self.stderr_[2] <= self.w2_resolution:
            self.flags_.append(FLAG_W2)
        self.nll_ = float(np.sum(mu - k * np.log(np.maximum(mu, 1e-300))
                                 + gammaln(k + 1)))
        self.residuals_ = k - mu
        return self

    def fit_curve(self, curve: CalibrationCurve):
        return self.fit(curve.mean_photons, curve.counts, curve.shots)

    def predict(self, x, shots=1):
        """Expected herald counts at intensities ``x``."""
        check_is_fitted(self, "weights_")
        return np.asarray(shots) * herald_rate(self.weights_, self.p0,
                                               np.asarray(x, float), self.kappa_)


class WeightFit(NamedTuple):
    weights: RealisticWeights
    kappa_hat: float
    stderr: dict
    flags: list


def fit_weights(curve: CalibrationCurve, p0, w2_resolution=W2_RESOLUTION):
    """Fit the realistic-subtractor weights and scale to a calibration curve.

    Raises
    ------
    ModelMismatchError
        If counts fall with intensity.
    """
    est = WeightCalibrator(p0=p0, w2_resolution=w2_resolution).fit_curve(curve)
    se = dict(zip(("w0", "w1", "w2"), (float(v) for v in est.stderr_)))
    se["kappa"] = est.kappa_stderr_
    return WeightFit(est.weights_, est.kappa_, se, list(est.flags_))
