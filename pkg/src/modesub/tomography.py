"""Coherent-state process tomography of single-photon subtraction.

A coherent probe ``|beta b_0>|beta b_1>...`` is unchanged by subtraction, so
only the herald rate is recorded. With acquisition scale ``kappa`` and a
known dark rate, the expected counts for ``shots`` windows are::

    mu = shots * (kappa * |beta|^2 * sum_ij chi_ij b_i conj(b_j) + dark_rate)
"""

import warnings
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import gammaln
from sklearn.base import BaseEstimator

from ._validation import (check_int, check_is_fitted, check_scalar,
                          check_unit_vector, frozen)
from .chi import SubtractionMatrix, project_to_physical
from .exceptions import (ConvergenceWarning, IncompleteProbeSetError,
                         InvalidInputError, NoSignalError)

MAX_EXPECTED_COUNTS = 1e9
_PROBE_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class ProbeSpec:
    """Unit mode-amplitude vector ``b`` and total mean photon number."""

    b: np.ndarray
    mean_photons: float

    def __post_init__(self):
        object.__setattr__(self, "b", frozen(check_unit_vector(self.b, "b")))
        object.__setattr__(self, "mean_photons", check_scalar(
            self.mean_photons, "mean_photons", min_val=0.0))

    @property
    def dim(self):
        return self.b.shape[0]

    @property
    def amplitude(self):
        """Coherent amplitude vector ``beta * b`` (``beta`` real)."""
        return np.sqrt(self.mean_photons) * self.b


@dataclass(frozen=True)
class TomographySettings:
    kappa: float = 1.0
    dark_rate: float = 0.0
    shots: int = 1
    seed: int = 0

    def __post_init__(self):
        # kappa = 0 is allowed to simulate a blocked subtractor
        check_scalar(self.kappa, "kappa", min_val=0.0)
        check_scalar(self.dark_rate, "dark_rate", min_val=0.0)
        check_int(self.shots, "shots", min_val=1)
        check_int(self.seed, "seed", min_val=0)


@dataclass(frozen=True, eq=False)
class CountRecord:
    """Observed counts for one probe; ``counts`` may be fractional for
    noiseless synthetic data."""

    probe: ProbeSpec
    counts: float
    shots: int = 1

    def __post_init__(self):
        check_scalar(self.counts, "counts", min_val=0.0)
        check_int(self.shots, "shots", min_val=1)


def standard_probe_set(d, mean_photons=1.0):
    """The ``d**2`` probes: ``e_i``, then ``(e_i + e_j)/sqrt2`` and
    ``(e_i + 1j e_j)/sqrt2`` for each pair ``i < j``."""
    d = check_int(d, "d", min_val=1)
    eye = np.eye(d, dtype=complex)
    probes = [ProbeSpec(eye[i], mean_photons) for i in range(d)]
    for i in range(d):
        for j in range(i + 1, d):
            probes.append(ProbeSpec((eye[i] + eye[j]) / np.sqrt(2), mean_photons))
            probes.append(ProbeSpec((eye[i] + 1j * eye[j]) / np.sqrt(2),
                                    mean_photons))
    return probes


def _chi_entries(chi):
    return chi.entries if isinstance(chi, SubtractionMatrix) else np.asarray(chi)


def _quadratic_forms(chi, B):
    # q_m = sum_ij B_mi chi_ij conj(B_mj)
    return np.real(np.einsum("mi,ij,mj->m", B, chi, B.conj()))


def expected_rate(chi, probe: ProbeSpec, settings: TomographySettings):
    """Expected counts for one probe (always >= ``shots * dark_rate``)."""
    m = _chi_entries(chi)
    q = max(float(_quadratic_forms(m, probe.b[None, :])[0]), 0.0)
    return settings.shots * (settings.kappa * probe.mean_photons * q
                             + settings.dark_rate)


def simulate_counts(chi, probes: Sequence[ProbeSpec], settings: TomographySettings,
                    noiseless=False):
    """Poisson-sampled records, one independent RNG stream per probe index.

    The stream for probe ``m`` is seeded by ``(settings.seed, m)``, so results
    do not depend on evaluation order. With ``noiseless=True`` the counts
    equal the expected values.
    """
    records = [None] * len(probes)
    for m, probe in enumerate(probes):
        mu = expected_rate(chi, probe, settings)
        if mu > MAX_EXPECTED_COUNTS:
            raise InvalidInputError(
                f"probe {m}: expected counts {mu:.3g} exceed {MAX_EXPECTED_COUNTS:g}")
        if noiseless:
            k = mu
        else:
            rng = np.random.default_rng([settings.seed, m])
            k = int(rng.poisson(mu))
        records[m] = CountRecord(probe, k, settings.shots)
    return records


def design_matrix(probes):
    """Real matrix mapping Hermitian parameters of ``chi`` to quadratic forms.

    Parameters are ordered as the ``d`` diagonal entries, then
    ``(Re chi_ij, Im chi_ij)`` for each pair ``i < j``.
    """
    B = np.stack([p.b if isinstance(p, ProbeSpec) else np.asarray(p)
                  for p in probes])
    d = B.shape[1]
    cols = [np.abs(B[:, i]) ** 2 for i in range(d)]
    for i in range(d):
        for j in range(i + 1, d):
            cross = B[:, i] * B[:, j].conj()
            cols.append(2 * cross.real)
            cols.append(-2 * cross.imag)
    return np.column_stack(cols)


def _params_to_hermitian(theta, d):
    m = np.diag(theta[:d]).astype(complex)
    k = d
    for i in range(d):
        for j in range(i + 1, d):
            m[i, j] = theta[k] + 1j * theta[k + 1]
            m[j, i] = theta[k] - 1j * theta[k + 1]
            k += 2
    return m


def _net_rates(records, dark_rate):
    return np.array([r.counts / r.shots - dark_rate for r in records])


def _classify(probe):
    """Return ('diag', i), ('re', i, j), ('im', i, j) or None."""
    b = probe.b
    support = np.flatnonzero(np.abs(b) > _PROBE_TOL)
    if support.size == 1:
        return ("diag", int(support[0]))
    if support.size == 2:
        i, j = (int(s) for s in support)
        if (abs(abs(b[i]) - 2 ** -0.5) < _PROBE_TOL
                and abs(abs(b[j]) - 2 ** -0.5) < _PROBE_TOL):
            ratio = b[j] / b[i]
            if abs(ratio - 1) < _PROBE_TOL:
                return ("re", i, j)
            if abs(ratio - 1j) < _PROBE_TOL:
                return ("im", i, j)
    return None


class LinearInversion(NamedTuple):
    raw: np.ndarray
    kappa_hat: float


def linear_inversion(records, dark_rate=0.0):
    """Closed-form estimate from the standard probe set.

    ``kappa_hat = sum_i rate(e_i) / |beta|^2`` uses the unit trace; the
    off-diagonal real and imaginary parts follow from the in-phase and
    quadrature probes. The raw matrix may not be positive semidefinite.

    Raises
    ------
    IncompleteProbeSetError
        If any standard probe is missing.
    NoSignalError
        If ``kappa_hat <= 0``.
    """
    if not records:
        raise IncompleteProbeSetError("no records")
    d = records[0].probe.dim
    rates = _net_rates(records, dark_rate)
    found = {}
    for r, rate in zip(records, rates):
        if r.probe.dim != d:
            raise InvalidInputError("records mix probe dimensions")
        key = _classify(r.probe)
        if key is not None and r.probe.mean_photons > 0:
            # repeated probes are averaged
            found.setdefault(key, []).append(rate / r.probe.mean_photons)
    found = {k: float(np.mean(v)) for k, v in found.items()}
    missing = [("diag", i) for i in range(d) if ("diag", i) not in found]
    missing += [(t, i, j) for i in range(d) for j in range(i + 1, d)
                for t in ("re", "im") if (t, i, j) not in found]
    if missing:
        raise IncompleteProbeSetError(
            f"{len(missing)} standard probes missing, e.g. {missing[:3]}")
    diag = np.array([found[("diag", i)] for i in range(d)])
    kappa = float(diag.sum())
    if kappa <= 0:
        raise NoSignalError("no signal above the dark level")
    raw = np.diag(diag / kappa).astype(complex)
    for i in range(d):
        for j in range(i + 1, d):
            half = 0.5 * (raw[i, i].real + raw[j, j].real)
            re = found[("re", i, j)] / kappa - half
            im = found[("im", i, j)] / kappa - half
            raw[i, j] = re + 1j * im
            raw[j, i] = re - 1j * im
    return LinearInversion(raw, kappa)


def lstsq_inversion(records, dark_rate=0.0):
    """Least-squares inversion for an arbitrary informationally complete set."""
    A = design_matrix([r.probe for r in records])
    n = np.array([r.probe.mean_photons for r in records])
    rates = _net_rates(records, dark_rate)
    d = records[0].probe.dim
    if np.linalg.matrix_rank(A * n[:, None]) < d * d:
        raise IncompleteProbeSetError("probe set is not informationally complete")
    theta, *_ = np.linalg.lstsq(A * n[:, None], rates, rcond=None)
    m = _params_to_hermitian(theta, d)
    kappa = float(np.trace(m).real)
    if kappa <= 0:
        raise NoSignalError("no signal above the dark level")
    return LinearInversion(m / kappa, kappa)


def _records_to_arrays(records):
    X = np.stack([r.probe.amplitude for r in records])
    y = np.array([float(r.counts) for r in records])
    shots = np.array([r.shots for r in records], dtype=float)
    return X, y, shots


def _lower_to_params(L):
    d = L.shape[0]
    il = np.tril_indices(d, -1)
    return np.concatenate([np.real(np.diag(L)), L[il].real, L[il].imag])


def _params_to_lower(theta, d):
    il = np.tril_indices(d, -1)
    n_off = il[0].size
    L = np.diag(theta[:d]).astype(complex)
    L[il] = theta[d:d + n_off] + 1j * theta[d + n_off:]
    return L


def _cholesky_like(M):
    """Lower-triangular ``L`` with ``L L^H = M`` for PSD (possibly singular) M."""
    w, V = np.linalg.eigh(0.5 * (M + M.conj().T))
    A = V * np.sqrt(np.clip(w, 0, None))
    _, R = np.linalg.qr(A.conj().T)
    L = R.conj().T
    # make the diagonal real non-negative
    ph = np.diag(L).copy()
    ph = np.where(np.abs(ph) > 0, ph / np.abs(ph), 1.0)
    return L * ph.conj()[None, :]


class _PoissonObjective:
    """Poisson deviance of ``M = scale * A A^H`` and its gradient in ``A``.

    The deviance equals the negative log-likelihood ``sum(mu - k ln mu)`` up
    to a data-only constant, so both share minimizers; it is used because it
    vanishes at a perfect fit and keeps full floating-point resolution.
    """

    def __init__(self, X, y, shots, dark, scale):
        self.X, self.Xc, self.y, self.shots = X, X.conj(), y, shots
        self.dark, self.scale = dark, scale
        self.pos = y > 0
        yp = y[self.pos]
        # -sum(k ln mu - mu) = deviance - offset
        self.offset = float(np.sum(yp * np.log(yp) - yp))

    def __call__(self, A):
        M = self.scale * (A @ A.conj().T)
        q = np.real(np.sum((self.X @ M) * self.Xc, axis=1))
        mu = self.shots * (np.clip(q, 0, None) + self.dark)
        mu_safe = np.maximum(mu, 1e-300)
        y, pos = self.y, self.pos
        f = np.sum(mu) - np.sum(y[pos]) - np.sum(y[pos] * np.log(mu_safe[pos] / y[pos]))
        w = self.shots * (1 - np.where(pos, y / mu_safe, 0.0))
        W = self.Xc.T @ (w[:, None] * self.X)
        return float(f), 2 * self.scale * (W @ A)

    def minimize(self, A0, triangular, max_iters, rel_tol, history=None):
        """L-BFGS over a lower-triangular (``d**2`` reals) or full factor.

        Stops when the objective drops by at most ``rel_tol`` times the
        magnitude of the log-likelihood on two consecutive iterations.
        """
        d, r = A0.shape
        if triangular:
            il = np.tril_indices(d, -1)

            def pack(A):
                return np.concatenate([np.real(np.diag(A)), A[il].real, A[il].imag])

            def unpack(t):
                return _params_to_lower(t, d)
        else:
            def pack(A):
                return np.concatenate([A.real.ravel(), A.imag.ravel()])

            def unpack(t):
                n = d * r
                return (t[:n] + 1j * t[n:]).reshape(d, r)

        def fun(t):
            f, G = self(unpack(t))
            return f, pack(G)

        history = [] if history is None else history
        start = len(history)
        history.append(fun(pack(A0))[0])
        state = {"quiet": 0, "stopped": False}

        def callback(intermediate_result):
            f = float(intermediate_result.fun)
            scale = max(1.0, abs(f - self.offset))
            quiet = history[-1] - f <= rel_tol * scale
            history.append(f)
            state["quiet"] = state["quiet"] + 1 if quiet else 0
            if state["quiet"] >= 2:
                state["stopped"] = True
                raise StopIteration

        res = minimize(fun, pack(A0), jac=True, method="L-BFGS-B",
                       callback=callback,
                       options={"maxiter": max_iters, "ftol": 0.0, "gtol": 0.0,
                                "maxcor": 30})
        best = unpack(res.x)
        f_best = fun(res.x)[0]
        if f_best > history[-1]:
            history.append(f_best)
        ok = state["stopped"] or (res.nit < max_iters and np.isfinite(f_best))
        return best, len(history) - start - 1, ok, history

    def polish(self, A, max_iters, rel_tol, history):
        """Refit low-rank truncations of the current estimate.

        Near a rank-deficient optimum the surplus directions of a full factor
        decay slowly. Each candidate rank is refit as a ``d x r`` factor and
        kept only if it lowers the objective, so accepted iterates stay
        monotone.
        """
        M = A @ A.conj().T
        w, V = np.linalg.eigh(0.5 * (M + M.conj().T))
        w, V = w[::-1], V[:, ::-1]
        d = w.shape[0]
        ranks = sorted({int(np.sum(w > 10.0 ** -j * w[0])) for j in range(2, 9)})
        best, f_best, iters = A, history[-1], 0
        for r in ranks:
            if r >= d or r < 1:
                continue
            A_r = V[:, :r] * np.sqrt(np.clip(w[:r], 0, None))
            trial_hist = []
            A_r, n, _, trial_hist = self.minimize(A_r, False, max_iters,
                                                  rel_tol * 1e-3, trial_hist)
            iters += n
            if trial_hist[-1] < f_best:
                best, f_best = A_r, trial_hist[-1]
        if f_best < history[-1]:
            history.append(f_best)
        return best, iters


class SubtractionTomography(BaseEstimator):
    """Maximum-likelihood subtraction-matrix estimator.

    ``chi`` is parameterized as ``L L^H / tr(L L^H)`` with ``L`` complex
    lower-triangular; the acquisition scale is fitted jointly by leaving the
    trace of ``L L^H`` free. The Poisson negative log-likelihood is minimized
    with L-BFGS starting from the clipped linear-inversion estimate.

    Parameters
    ----------
    dark_rate : float
        Known dark counts per acquisition window.
    max_iters : int
        Iteration cap for the quasi-Newton solver.
    rel_tol : float
        Relative objective tolerance.
    init_mixing : float
        Weight of ``I/d`` mixed into the starting point so rank-deficient
        initial estimates do not pin the solver to a face of the PSD cone.

    Attributes
    ----------
    chi_ : SubtractionMatrix
    kappa_ : float
    n_iter_ : int
    nll_ : float
        Final Poisson negative log-likelihood (including ``log k!``).
    nll_history_ : ndarray
    nll_monotone_ : bool
    converged_ : bool
    """

    def __init__(self, dark_rate=0.0, max_iters=2000, rel_tol=1e-10,
                 init_mixing=1e-2, basis=None):
        self.dark_rate = dark_rate
        self.max_iters = max_iters
        self.rel_tol = rel_tol
        self.init_mixing = init_mixing
        self.basis = basis

    def _validate(self, X, y, shots):
        X = np.asarray(X, dtype=complex)
        if X.ndim != 2 or X.shape[0] == 0:
            raise InvalidInputError(f"X must be 2-D (n_probes, d), got {X.shape}")
        y = np.asarray(y, dtype=float)
        if y.shape != (X.shape[0],):
            raise InvalidInputError("y must hold one count per probe")
        if np.any(y < 0) or not np.all(np.isfinite(y)):
            raise InvalidInputError("counts must be finite and non-negative")
        shots = np.broadcast_to(np.asarray(shots, dtype=float), y.shape).copy()
        if np.any(shots < 1):
            raise InvalidInputError("shots must be >= 1")
        return X, y, shots

    def _records(self, X, y, shots):
        recs = []
        for x, k, s in zip(X, y, shots):
            n = float(np.vdot(x, x).real)
            b = x / np.sqrt(n) if n > 0 else np.eye(x.shape[0])[0]
            recs.append(CountRecord(ProbeSpec(b / np.linalg.norm(b), n), float(k),
                                    int(s)))
        return recs

    def _initial_estimate(self, records):
        try:
            inv = linear_inversion(records, self.dark_rate)
        except IncompleteProbeSetError:
            inv = lstsq_inversion(records, self.dark_rate)
        return inv

    def fit(self, X, y, shots=1):
        """Fit from probe amplitudes ``X[m] = beta_m * b_m`` and counts ``y``."""
        check_scalar(self.dark_rate, "dark_rate", min_val=0.0)
        check_int(self.max_iters, "max_iters", min_val=1)
        check_scalar(self.rel_tol, "rel_tol", min_val=0.0)
        X, y, shots = self._validate(X, y, shots)
        d = X.shape[1]
        if np.sum(y) == 0:
            raise NoSignalError("all counts are zero")
        init = self._initial_estimate(self._records(X, y, shots))
        chi0 = project_to_physical(init.raw).entries
        eps = float(self.init_mixing)
        chi0 = (1 - eps) * chi0 + eps * np.eye(d) / d
        obj = _PoissonObjective(X, y, shots, float(self.dark_rate), init.kappa_hat)

        A, nit, ok, history = obj.minimize(_cholesky_like(chi0), True,
                                           int(self.max_iters), float(self.rel_tol))
        A, extra = obj.polish(A, int(self.max_iters), float(self.rel_tol), history)
        nit += extra
        M = obj.scale * (A @ A.conj().T)
        kappa = float(np.trace(M).real)
        if not np.isfinite(history[-1]) or not kappa > 0:
            warnings.warn("likelihood optimization degenerated; returning the "
                          "clipped linear-inversion estimate", ConvergenceWarning)
            self.chi_ = project_to_physical(init.raw, self.basis)
            self.kappa_ = init.kappa_hat
            self.converged_ = False
            M = self.kappa_ * self.chi_.entries
        else:
            self.chi_ = SubtractionMatrix(0.5 * (M + M.conj().T) / kappa, self.basis)
            self.kappa_ = kappa
            self.converged_ = ok
            if not ok:
                warnings.warn(f"MLE stopped at max_iters={self.max_iters} before "
                              "meeting rel_tol", ConvergenceWarning)
        hist = np.array(history)
        self.nll_history_ = hist
        self.nll_monotone_ = bool(np.all(np.diff(hist) <= 1e-12 * np.maximum(
            1.0, np.abs(hist[:-1]))))
        self.n_iter_ = int(nit)
        mu = shots * (np.real(np.sum((X @ M) * X.conj(), axis=1)) + self.dark_rate)
        self.nll_ = float(np.sum(mu - y * np.log(np.maximum(mu, 1e-300))
                                 + gammaln(y + 1)))
        return self

    def fit_records(self, records):
        X, y, shots = _records_to_arrays(records)
        return self.fit(X, y, shots)

    def predict(self, X, shots=1):
        """Expected counts for probe amplitudes ``X`` under the fitted model."""
        check_is_fitted(self, "chi_")
        X = np.asarray(X, dtype=complex)
        q = np.real(np.sum((X @ self.chi_.entries) * X.conj(), axis=1))
        return np.asarray(shots) * (self.kappa_ * q + self.dark_rate)

    def score(self, X, y, shots=1):
        """Mean Poisson log-likelihood per probe."""
        mu = np.maximum(self.predict(X, shots), 1e-300)
        y = np.asarray(y, dtype=float)
        return float(np.mean(y * np.log(mu) - mu - gammaln(y + 1)))

    @property
    def diagnostics_(self):
        check_is_fitted(self, "chi_")
        return {"iterations": self.n_iter_, "nll": self.nll_,
                "nll_monotone": self.nll_monotone_, "converged": self.converged_,
                "kappa": self.kappa_}


class MLEResult(NamedTuple):
    chi: SubtractionMatrix
    kappa_hat: float
    diagnostics: dict


def mle_reconstruct(records, max_iters=2000, rel_tol=1e-10, dark_rate=0.0,
                    basis=None):
    """Maximum-likelihood subtraction matrix from count records."""
    est = SubtractionTomography(dark_rate=dark_rate, max_iters=max_iters,
                                rel_tol=rel_tol, basis=basis).fit_records(records)
    return MLEResult(est.chi_, est.kappa_, est.diagnostics_)
