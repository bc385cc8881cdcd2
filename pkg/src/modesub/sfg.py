"""Sum-frequency-generation subtractor model.

The heralding kernel couples an input photon at ``lambda_in`` to an
up-converted photon at ``lambda_up``::

    T(lambda_in, lambda_up) ~ G(lambda_gate) * Phi(lambda_up) * F(lambda_up)

where energy conservation fixes ``1/lambda_gate = 1/lambda_up - 1/lambda_in``,
``G`` is the gate amplitude, ``Phi`` a Gaussian phase-matching envelope
(group-velocity matched, so it depends on the up-converted wavelength only)
and ``F`` a Gaussian bandpass. Detecting an up-converted photon in mode ``u``
subtracts with annihilation amplitude ``g(lambda_in) = int conj(u) T``.
"""

import warnings
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from ._validation import check_int, check_scalar, frozen
from .chi import AnnihilationOp, OperatorMixture, chi_from_mixture
from .exceptions import (BasisCoverageError, InvalidInputError, ResolutionError,
                         TruncationError)
from .modes import (DEFAULT_INPUT_GRID, FrequencyGrid, ModeBasis, SpectralMode,
                    _FWHM_TO_WIDTH, make_hg_mode, operator_coefficients, overlap)

DEFAULT_UP_GRID = FrequencyGrid(397.5, 3.0, 512)
MIN_FILTER_SAMPLES = 8
SCHMIDT_RESIDUAL_TOL = 0.01
DOMINANT_LEAKAGE_TOL = 0.05
ENVELOPE_EDGE_TOL = 1e-3


@dataclass(frozen=True, eq=False)
class SfgConfig:
    """Gate superposition, filtering and sampling of the SFG subtractor.

    Parameters
    ----------
    gate : sequence of (complex, SpectralMode)
        Gate amplitude ``sum_k c_k mode_k``; ``sum |c_k|^2`` must be 1.
    filter_fwhm : float
        Intensity FWHM of the up-converted bandpass in nm.
    pm_fwhm : float
        Effective intensity FWHM of phase matching along ``lambda_up`` in nm.
    up_center : float
        Center of filter and phase matching in nm.
    """

    gate: Tuple[Tuple[complex, SpectralMode], ...]
    filter_fwhm: float = 0.4
    pm_fwhm: float = 1.0
    up_center: float = 397.5
    in_grid: FrequencyGrid = DEFAULT_INPUT_GRID
    up_grid: FrequencyGrid = DEFAULT_UP_GRID

    def __post_init__(self):
        gate = tuple((complex(c), m) for c, m in self.gate)
        if not gate:
            raise InvalidInputError("the gate needs at least one mode")
        norm2 = sum(abs(c) ** 2 for c, _ in gate)
        if abs(norm2 - 1.0) > 1e-10:
            raise InvalidInputError(
                f"gate coefficients must have unit norm, got {norm2:.12g}")
        if any(m.grid != self.in_grid for _, m in gate):
            raise InvalidInputError("gate modes must live on in_grid")
        check_scalar(self.filter_fwhm, "filter_fwhm", min_val=0, include_min=False)
        check_scalar(self.pm_fwhm, "pm_fwhm", min_val=0, include_min=False)
        check_scalar(self.up_center, "up_center", min_val=0, include_min=False)
        object.__setattr__(self, "gate", gate)

    def gate_amplitude(self, wavelengths):
        return sum(c * m(wavelengths) for c, m in self.gate)


def hg_gate(coeffs, center=795.0, fwhm=4.0, grid=DEFAULT_INPUT_GRID):
    """Gate tuple from a ``{order: coefficient}`` mapping or a sequence."""
    if not isinstance(coeffs, dict):
        coeffs = dict(enumerate(coeffs))
    return tuple((complex(c), make_hg_mode(int(n), center, fwhm, grid))
                 for n, c in coeffs.items() if c != 0)


def default_config(coeffs=(1.0,), **kwargs):
    """HG-gate configuration with the reference parameters (4 nm gate)."""
    grid = kwargs.get("in_grid", DEFAULT_INPUT_GRID)
    return SfgConfig(hg_gate(coeffs, grid=grid), **kwargs)


@dataclass(frozen=True, eq=False)
class TransferFunction:
    values: np.ndarray
    in_grid: FrequencyGrid
    up_grid: FrequencyGrid

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != (self.in_grid.n_points, self.up_grid.n_points):
            raise InvalidInputError("transfer values do not match the grids")
        norm = np.sum(np.abs(v) ** 2) * self.in_grid.step * self.up_grid.step
        if abs(norm - 1) > 1e-8:
            raise InvalidInputError(f"transfer function not normalized ({norm})")
        object.__setattr__(self, "values", frozen(v))

    @classmethod
    def from_values(cls, values, in_grid, up_grid):
        v = np.asarray(values, dtype=complex)
        norm = np.sum(np.abs(v) ** 2) * in_grid.step * up_grid.step
        if not norm > 0:
            raise InvalidInputError("transfer function is identically zero")
        return cls(v / np.sqrt(norm), in_grid, up_grid)

    def input_marginal(self):
        return np.sum(np.abs(self.values) ** 2, axis=1) * self.up_grid.step


def _gaussian_envelope(lam, center, fwhm):
    return np.exp(-0.5 * ((lam - center) / (fwhm * _FWHM_TO_WIDTH)) ** 2)


def build_transfer(cfg: SfgConfig):
    """Discretized SFG kernel on ``in_grid x up_grid``.

    Raises
    ------
    ResolutionError
        If the up grid samples the filter FWHM fewer than 8 times.
    TruncationError
        If the up-converted envelope is not negligible at the up-grid edges.
    """
    up = cfg.up_grid
    if cfg.filter_fwhm / up.step < MIN_FILTER_SAMPLES:
        raise ResolutionError(
            f"up grid step {up.step:.3g} nm under-resolves the "
            f"{cfg.filter_fwhm} nm filter (need >= {MIN_FILTER_SAMPLES} samples)")
    lam_in = cfg.in_grid.wavelengths
    lam_up = up.wavelengths
    envelope = (_gaussian_envelope(lam_up, cfg.up_center, cfg.pm_fwhm)
                * _gaussian_envelope(lam_up, cfg.up_center, cfg.filter_fwhm))
    if max(envelope[0], envelope[-1]) > ENVELOPE_EDGE_TOL * envelope.max():
        raise TruncationError("up grid too narrow for the filter/phase-matching "
                              "envelope")
    with np.errstate(divide="ignore"):
        inv_gate = 1.0 / lam_up[None, :] - 1.0 / lam_in[:, None]
    lam_gate = np.where(inv_gate > 0, 1.0 / np.where(inv_gate > 0, inv_gate, 1.0),
                        np.inf)
    values = cfg.gate_amplitude(lam_gate) * envelope[None, :]
    return TransferFunction.from_values(values, cfg.in_grid, up)


@dataclass(frozen=True, eq=False)
class SchmidtDecomposition:
    """Leading Schmidt terms of a transfer function.

    ``input_modes`` are mode functions, i.e. the complex conjugate of the
    annihilation amplitude ``int conj(u_n) T``; ``up_modes`` are phased so
    that their largest sample is real positive.
    """

    weights: np.ndarray
    input_modes: Tuple[SpectralMode, ...]
    up_modes: Tuple[SpectralMode, ...]
    residual: float

    @property
    def p0(self):
        return float(self.weights[0])


def schmidt_decompose(tf: TransferFunction, n_keep=10):
    """SVD of the grid-weighted kernel ``T * sqrt(d_in * d_up)``.

    Weights are squared singular values normalized to sum 1 over the full
    spectrum; the first ``n_keep`` terms are kept and ``residual`` records
    the discarded weight. A warning is emitted when it exceeds 0.01.
    """
    n_keep = check_int(n_keep, "n_keep", min_val=1)
    d_in, d_up = tf.in_grid.step, tf.up_grid.step
    M = tf.values * np.sqrt(d_in * d_up)
    U, s, Vh = scipy.linalg.svd(M, full_matrices=False, lapack_driver="gesdd")
    all_weights = s ** 2 / np.sum(s ** 2)
    n_keep = min(n_keep, s.shape[0])
    residual = float(max(1.0 - all_weights[:n_keep].sum(), 0.0))
    if residual > SCHMIDT_RESIDUAL_TOL:
        warnings.warn(f"Schmidt truncation at {n_keep} terms drops "
                      f"{residual:.3g} of the weight", UserWarning, stacklevel=2)
    inputs, ups = [], []
    for k in range(n_keep):
        v = Vh[k]
        j = int(np.argmax(np.abs(v)))
        ph = v[j] / abs(v[j])
        g = U[:, k] * ph / np.sqrt(d_in)
        u = v * np.conj(ph) / np.sqrt(d_up)
        inputs.append(SpectralMode.from_samples(tf.in_grid, np.conj(g), f"in{k}"))
        ups.append(SpectralMode.from_samples(tf.up_grid, u, f"up{k}"))
    return SchmidtDecomposition(frozen(all_weights[:n_keep]), tuple(inputs),
                                tuple(ups), residual)


class InducedSubtraction(NamedTuple):
    chi: object
    p0: float
    leakages: np.ndarray
    schmidt: SchmidtDecomposition


def induced_subtraction(cfg: SfgConfig, basis: ModeBasis, n_keep=10):
    """Subtraction matrix heralded by the SFG subtractor, in ``basis``.

    Each kept Schmidt input mode is projected onto the basis, renormalized
    and weighted by its (renormalized) Schmidt weight.

    Raises
    ------
    BasisCoverageError
        If more than 5% of the dominant mode leaks out of the basis.
    """
    if basis.grid != cfg.in_grid:
        raise InvalidInputError("basis must live on the configuration's in_grid")
    sd = schmidt_decompose(build_transfer(cfg), n_keep)
    terms, leakages = [], []
    for k, (p, mode) in enumerate(zip(sd.weights, sd.input_modes)):
        c, captured = operator_coefficients(mode, basis)
        leakages.append(1.0 - captured)
        if k == 0 and 1.0 - captured > DOMINANT_LEAKAGE_TOL:
            raise BasisCoverageError(
                f"{1 - captured:.3g} of the dominant subtraction mode lies "
                "outside the basis")
        if captured > 1e-12:
            terms.append((p, c / np.sqrt(captured)))
    total = sum(p for p, _ in terms)
    mix = OperatorMixture(tuple((p / total, AnnihilationOp(c, basis))
                                for p, c in terms))
    return InducedSubtraction(chi_from_mixture(mix, basis), sd.p0,
                              np.array(leakages), sd)


def ideal_operator(cfg: SfgConfig, basis: ModeBasis):
    """Operator of a perfectly selective subtractor, expressed in ``basis``.

    It subtracts from the gate amplitude mirrored through energy conservation
    at the filter center; for HG gates this gives ``sum (-1)^i c_i a_i``.
    """
    lam_in = cfg.in_grid.wavelengths
    lam_gate = 1.0 / (1.0 / cfg.up_center - 1.0 / lam_in)
    g = cfg.gate_amplitude(lam_gate)
    mode = SpectralMode.from_samples(cfg.in_grid, np.conj(g))
    c, captured = operator_coefficients(mode, basis)
    if captured < 1e-12:
        raise BasisCoverageError("ideal operator has no support in the basis")
    return AnnihilationOp(c / np.sqrt(captured), basis)


def sign_rule_check(order, cfg: Optional[SfgConfig] = None, center=795.0,
                    fwhm=4.0):
    """Overlap of the dominant Schmidt input mode with ``(-1)^n HG_n``.

    With an HG_n gate this is close to +1 when the subtraction mode carries
    the sign picked up by the wavelength inversion. ``cfg`` only supplies
    the filter/phase-matching/grid settings; its gate is replaced.
    """
    order = check_int(order, "order", min_val=0)
    base = cfg or default_config()
    hg = make_hg_mode(order, center, fwhm, base.in_grid)
    trial = SfgConfig(((1.0, hg),), base.filter_fwhm, base.pm_fwhm,
                      base.up_center, base.in_grid, base.up_grid)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        sd = schmidt_decompose(build_transfer(trial), n_keep=1)
    return float(np.real(overlap(sd.input_modes[0], hg))) * (-1) ** order
