"""Wavelength grids, spectral modes and orthonormal mode bases.

All modes live on a :class:`FrequencyGrid` that is uniform in wavelength.
The inner product is the Riemann sum ``sum(conj(a) * b) * step``.

An annihilation operator with coefficient vector ``c`` in a basis ``{phi_i}``
is ``sum_i c_i a_i`` with ``a_i = integral(conj(phi_i) a(lambda))``.
"""

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.special import eval_hermite, gammaln

from ._validation import check_int, check_scalar, frozen
from .exceptions import (BasisCoverageError, InvalidInputError, LeakageWarning,
                         ResolutionError, TruncationError)

ORTHONORMAL_TOL = 1e-8
EDGE_TOL = 1e-6
DEFAULT_LEAKAGE_THRESHOLD = 0.05

# intensity FWHM -> 1/e half width of the amplitude envelope
_FWHM_TO_WIDTH = 1.0 / (2.0 * np.sqrt(np.log(2.0)))


@dataclass(frozen=True)
class FrequencyGrid:
    """Uniform wavelength grid, symmetric about ``center_wavelength``.

    Parameters
    ----------
    center_wavelength : float
        Grid center in nm.
    span : float
        Distance between first and last sample in nm.
    n_points : int
        Number of samples (>= 2).
    """

    center_wavelength: float
    span: float
    n_points: int

    def __post_init__(self):
        check_scalar(self.center_wavelength, "center_wavelength")
        check_scalar(self.span, "span", min_val=0.0, include_min=False)
        check_int(self.n_points, "n_points", min_val=2)
        if self.center_wavelength - self.span / 2 <= 0:
            raise InvalidInputError("grid wavelengths must be strictly positive")

    @property
    def wavelengths(self):
        half = self.span / 2
        return self.center_wavelength + np.linspace(-half, half, self.n_points)

    @property
    def step(self):
        return self.span / (self.n_points - 1)

    @property
    def bounds(self):
        return (self.center_wavelength - self.span / 2,
                self.center_wavelength + self.span / 2)

    def to_dict(self):
        return {"center": self.center_wavelength, "span": self.span,
                "n": self.n_points}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["center"]), float(d["span"]), int(d["n"]))


DEFAULT_INPUT_GRID = FrequencyGrid(795.0, 40.0, 2048)


@dataclass(frozen=True, eq=False)
class SpectralMode:
    """A unit-norm complex amplitude sampled on a grid."""

    grid: FrequencyGrid
    amplitude: np.ndarray
    label: str = ""

    def __post_init__(self):
        amp = np.asarray(self.amplitude, dtype=complex)
        if amp.shape != (self.grid.n_points,):
            raise InvalidInputError(
                f"amplitude must have shape ({self.grid.n_points},), "
                f"got {amp.shape}")
        norm2 = np.sum(np.abs(amp) ** 2) * self.grid.step
        if abs(norm2 - 1.0) > 1e-10:
            raise InvalidInputError(
                f"spectral mode must be unit-norm on its grid, got {norm2:.12g}")
        object.__setattr__(self, "amplitude", frozen(amp))

    @classmethod
    def from_samples(cls, grid, samples, label=""):
        """Build a mode from arbitrary samples, normalizing on ``grid``."""
        samples = np.asarray(samples, dtype=complex)
        if samples.shape != (grid.n_points,):
            raise InvalidInputError(
                f"samples must have shape ({grid.n_points},), got {samples.shape}")
        norm2 = np.sum(np.abs(samples) ** 2) * grid.step
        if not norm2 > 0:
            raise InvalidInputError("cannot normalize an all-zero mode")
        return cls(grid, samples / np.sqrt(norm2), label)

    def __call__(self, wavelengths):
        """Linearly interpolate the amplitude, zero outside the grid."""
        lam = self.grid.wavelengths
        re = np.interp(wavelengths, lam, self.amplitude.real, left=0.0, right=0.0)
        im = np.interp(wavelengths, lam, self.amplitude.imag, left=0.0, right=0.0)
        return re + 1j * im


@dataclass(frozen=True, eq=False)
class ModeBasis:
    """Ordered orthonormal set of modes sharing one grid."""

    kind: str
    modes: tuple
    labels: tuple = field(default=())

    KINDS = ("hermite_gauss", "wavelength_band", "custom")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise InvalidInputError(f"unknown basis kind {self.kind!r}")
        modes = tuple(self.modes)
        if not modes:
            raise InvalidInputError("a mode basis needs at least one mode")
        grid = modes[0].grid
        if any(m.grid != grid for m in modes):
            raise InvalidInputError("all modes of a basis must share one grid")
        labels = tuple(self.labels) or tuple(
            m.label or str(i) for i, m in enumerate(modes))
        if len(labels) != len(modes):
            raise InvalidInputError("labels and modes differ in length")
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "labels", labels)
        err = np.max(np.abs(gram_matrix(modes, modes) - np.eye(len(modes))))
        if err > ORTHONORMAL_TOL:
            raise InvalidInputError(
                f"basis is not orthonormal (max Gram deviation {err:.3g})")

    @property
    def grid(self):
        return self.modes[0].grid

    @property
    def dim(self):
        return len(self.modes)

    def __len__(self):
        return len(self.modes)

    def matrix(self):
        """Mode amplitudes stacked as rows, shape ``(d, n_points)``."""
        return np.stack([m.amplitude for m in self.modes])


def _hermite_gauss(order, x):
    # orthonormal w.r.t. dx: H_n(x) exp(-x^2/2) / sqrt(2^n n! sqrt(pi))
    log_norm = 0.5 * (order * np.log(2.0) + gammaln(order + 1)
                      + 0.5 * np.log(np.pi))
    return eval_hermite(order, x) * np.exp(-x ** 2 / 2 - log_norm)


def hg_amplitude(order, center, fwhm_hg0, wavelengths):
    """Analytic Hermite-Gaussian amplitude, unit-normalized in nm."""
    width = fwhm_hg0 * _FWHM_TO_WIDTH
    x = (np.asarray(wavelengths, dtype=float) - center) / width
    return _hermite_gauss(order, x) / np.sqrt(width)


def make_hg_mode(order, center, fwhm_hg0, grid):
    """Hermite-Gaussian mode of the given order on ``grid``.

    The order-0 mode has intensity FWHM ``fwhm_hg0``; higher orders share its
    Gaussian waist.

    Raises
    ------
    TruncationError
        If the amplitude at either grid edge exceeds 1e-6 of the peak.
    """
    order = check_int(order, "order", min_val=0)
    check_scalar(center, "center")
    fwhm_hg0 = check_scalar(fwhm_hg0, "fwhm_hg0", min_val=0.0, include_min=False)
    amp = hg_amplitude(order, center, fwhm_hg0, grid.wavelengths)
    peak = np.max(np.abs(amp))
    edge = max(abs(amp[0]), abs(amp[-1]))
    if not peak > 0 or edge > EDGE_TOL * peak:
        raise TruncationError(
            f"grid {grid.bounds} too narrow for HG{order} "
            f"(edge/peak = {edge / peak if peak else np.inf:.3g})")
    return SpectralMode.from_samples(grid, amp, label=f"HG{order}")


def make_hg_basis(d, center, fwhm_hg0, grid):
    d = check_int(d, "d", min_val=1)
    modes = [make_hg_mode(n, center, fwhm_hg0, grid) for n in range(d)]
    return ModeBasis("hermite_gauss", modes)


def make_band_basis(d, lambda_min, lambda_max, grid):
    """``d`` equal-width, non-overlapping boxcar modes covering the range.

    Samples are assigned to half-open bands ``[lo, hi)``; the last band also
    takes ``lambda_max``.
    """
    d = check_int(d, "d", min_val=1)
    lambda_min = check_scalar(lambda_min, "lambda_min")
    lambda_max = check_scalar(lambda_max, "lambda_max")
    lo, hi = grid.bounds
    if not lambda_min < lambda_max:
        raise InvalidInputError("lambda_min must be < lambda_max")
    if lambda_min < lo or lambda_max > hi:
        raise InvalidInputError(
            f"band range [{lambda_min}, {lambda_max}] outside grid {grid.bounds}")
    lam = grid.wavelengths
    edges = np.linspace(lambda_min, lambda_max, d + 1)
    idx = np.searchsorted(edges, lam, side="right") - 1
    idx[lam == lambda_max] = d - 1
    idx[(lam < lambda_min) | (lam > lambda_max)] = -1
    modes, labels = [], []
    for j in range(d):
        mask = idx == j
        if mask.sum() < 2:
            raise ResolutionError(
                f"band {j} ({edges[j]:.4g}-{edges[j + 1]:.4g} nm) holds "
                f"{mask.sum()} grid samples; need at least 2")
        label = f"{0.5 * (edges[j] + edges[j + 1]):.2f}nm"
        modes.append(SpectralMode.from_samples(grid, mask.astype(float), label))
        labels.append(label)
    return ModeBasis("wavelength_band", modes, labels)


def overlap(a, b):
    """Discrete inner product ``<a, b>`` (conjugate-linear in ``a``)."""
    if a.grid != b.grid:
        raise InvalidInputError("modes live on different grids")
    return complex(np.vdot(a.amplitude, b.amplitude) * a.grid.step)


def gram_matrix(rows: Sequence[SpectralMode], cols: Sequence[SpectralMode]):
    """Matrix of overlaps ``G[a, i] = <rows[a], cols[i]>``."""
    grid = rows[0].grid
    if any(m.grid != grid for m in list(rows) + list(cols)):
        raise InvalidInputError("modes live on different grids")
    A = np.stack([m.amplitude for m in rows])
    B = np.stack([m.amplitude for m in cols])
    return A.conj() @ B.T * grid.step


def operator_coefficients(mode, basis):
    """Coefficients of the annihilation operator of ``mode`` in ``basis``.

    Returns ``(c, captured)`` where ``captured = sum |c_i|^2`` is the weight
    of the mode inside the basis span (unnormalized ``c``).
    """
    c = np.conj(gram_matrix(basis.modes, [mode])[:, 0])
    return c, float(np.sum(np.abs(c) ** 2))


class BasisChange(NamedTuple):
    chi: "object"
    leakage: float
    exceeds_threshold: bool


def change_basis(chi, to, threshold=DEFAULT_LEAKAGE_THRESHOLD):
    """Express a subtraction matrix in another orthonormal mode basis.

    Parameters
    ----------
    chi : SubtractionMatrix
        Matrix attached to a :class:`ModeBasis`.
    to : ModeBasis
        Target basis on the same grid.
    threshold : float
        Leakage above which a :class:`LeakageWarning` is emitted and
        ``exceeds_threshold`` is set.

    Returns
    -------
    BasisChange
        ``(chi, leakage, exceeds_threshold)``; the new matrix is renormalized
        to unit trace, ``leakage = 1 - tr`` before renormalization.
    """
    from .chi import SubtractionMatrix

    src = chi.basis
    if not isinstance(src, ModeBasis) or not isinstance(to, ModeBasis):
        raise InvalidInputError("change_basis needs mode bases on both sides")
    if src.grid != to.grid:
        raise InvalidInputError("source and target bases use different grids")
    U = gram_matrix(to.modes, src.modes)
    # operator coefficients transform with conj(U); see module docstring
    V = U.conj()
    projected = V @ chi.entries @ V.conj().T
    captured = float(np.trace(projected).real)
    leakage = float(min(max(1.0 - captured, 0.0), 1.0))
    if captured < 1e-12:
        raise BasisCoverageError(
            "subtraction matrix has no support in the target basis "
            f"(leakage {leakage:.3g})")
    exceeds = leakage > threshold
    if exceeds:
        warnings.warn(f"{leakage:.3g} of the subtraction weight leaks out of "
                      "the target basis", LeakageWarning, stacklevel=2)
    new = SubtractionMatrix(_hermitize(projected) / captured, basis=to)
    return BasisChange(new, leakage, exceeds)


def _hermitize(m):
    return 0.5 * (m + m.conj().T)


def basis_from_spec(spec, grid: Optional[FrequencyGrid] = None):
    """Build a basis from a config mapping (see the CLI config schema)."""
    grid = grid or DEFAULT_INPUT_GRID
    kind = spec.get("kind", "hermite_gauss")
    if kind == "hermite_gauss":
        return make_hg_basis(int(spec.get("d", 7)), float(spec.get("center", 795.0)),
                             float(spec.get("fwhm", 4.0)), grid)
    if kind == "wavelength_band":
        return make_band_basis(int(spec.get("d", 25)),
                               float(spec.get("lambda_min", 786.0)),
                               float(spec.get("lambda_max", 804.0)), grid)
    raise InvalidInputError(f"cannot build a {kind!r} basis from a config spec")
