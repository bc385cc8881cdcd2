"""Subtraction-matrix algebra.

A single-photon subtraction ``S[rho] = sum_n p_n A_n rho A_n^H`` with
``A_n = sum_i c_ni a_i`` is fully described by the Hermitian, positive
semidefinite, unit-trace matrix ``chi_ij = sum_n p_n c_ni conj(c_nj)``.
"""

from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np

from ._validation import (NORM_TOL, check_density_like, check_scalar,
                          check_square, check_unit_vector, frozen)
from .exceptions import DegenerateInputError, InvalidInputError

DEGENERACY_GAP = 1e-9


@dataclass(frozen=True, eq=False)
class AnnihilationOp:
    """Unit-norm linear combination of basis annihilation operators."""

    coeffs: np.ndarray
    basis: Optional[object] = None

    def __post_init__(self):
        c = check_unit_vector(self.coeffs, "coeffs")
        if self.basis is not None and len(self.basis) != c.shape[0]:
            raise InvalidInputError("coefficient length does not match basis")
        object.__setattr__(self, "coeffs", frozen(c))

    @property
    def dim(self):
        return self.coeffs.shape[0]


@dataclass(frozen=True, eq=False)
class OperatorMixture:
    """Probabilistic mixture ``{(p_n, A_n)}`` of annihilation operators."""

    terms: Tuple[Tuple[float, AnnihilationOp], ...]

    def __post_init__(self):
        terms = tuple((float(p), op) for p, op in self.terms)
        if not terms:
            raise InvalidInputError("a mixture needs at least one term")
        weights = np.array([p for p, _ in terms])
        if np.any(weights < 0) or np.any(weights > 1):
            raise InvalidInputError("mixture weights must lie in [0, 1]")
        if abs(weights.sum() - 1.0) > 1e-10:
            raise InvalidInputError(
                f"mixture weights must sum to 1, got {weights.sum():.12g}")
        dims = {op.dim for _, op in terms}
        if len(dims) != 1:
            raise InvalidInputError("all operators must share one dimension")
        object.__setattr__(self, "terms", terms)

    @property
    def weights(self):
        return np.array([p for p, _ in self.terms])


@dataclass(frozen=True, eq=False)
class SubtractionMatrix:
    """Validated subtraction matrix, optionally tied to a mode basis."""

    entries: np.ndarray
    basis: Optional[object] = None

    def __post_init__(self):
        m = check_density_like(self.entries, "subtraction matrix")
        if self.basis is not None and len(self.basis) != m.shape[0]:
            raise InvalidInputError("matrix dimension does not match basis")
        object.__setattr__(self, "entries", frozen(m))

    @property
    def dim(self):
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


def _as_matrix(chi):
    if isinstance(chi, SubtractionMatrix):
        return chi.entries
    return check_square(chi, "chi")


def projector(v, basis=None):
    """Rank-1 subtraction matrix ``v v^H`` of a unit vector."""
    v = check_unit_vector(v, "v")
    return SubtractionMatrix(np.outer(v, v.conj()), basis)


def chi_from_mixture(mix: OperatorMixture, basis=None):
    """``chi_ij = sum_n p_n c_ni conj(c_nj)``."""
    C = np.stack([op.coeffs for _, op in mix.terms])
    chi = (C.T * mix.weights) @ C.conj()
    if basis is None:
        basis = mix.terms[0][1].basis
    return SubtractionMatrix(0.5 * (chi + chi.conj().T), basis)


def purity(chi):
    """``tr(chi^2)``, between ``1/d`` and 1."""
    m = _as_matrix(chi)
    return float(np.sum(np.abs(m) ** 2))


def effective_mode_count(chi):
    """Effective number of orthogonal modes, ``1 / tr(chi^2)``."""
    return 1.0 / purity(chi)


class DominantMode(NamedTuple):
    p0: float
    op: AnnihilationOp
    degenerate: bool


def fix_phase(v):
    """Rotate ``v`` so its largest-magnitude entry is real and positive."""
    v = np.asarray(v, dtype=complex)
    k = int(np.argmax(np.abs(v)))
    if abs(v[k]) == 0:
        return v
    return v * (abs(v[k]) / v[k])


def dominant_mode(chi):
    """Largest eigenvalue (mode selectivity) and its eigen-operator.

    The global phase is fixed so the largest-magnitude coefficient is real
    positive. When the top eigenvalue is degenerate (gap < 1e-9) the result
    is flagged and the operator is the normalized projection of ``e_k`` onto
    the top eigenspace, where ``k`` is the lowest index of the largest
    diagonal entry.
    """
    m = _as_matrix(chi)
    w, V = np.linalg.eigh(m)
    p0 = float(w[-1])
    top = np.abs(w - p0) < DEGENERACY_GAP
    degenerate = bool(top.sum() > 1)
    if degenerate:
        P = V[:, top] @ V[:, top].conj().T
        diag = np.real(np.diag(m))
        k = int(np.flatnonzero(diag >= diag.max() - DEGENERACY_GAP)[0])
        v = P[:, k]
        if np.linalg.norm(v) < 1e-12:
            v = V[:, -1]
        v = v / np.linalg.norm(v)
    else:
        v = V[:, -1]
    basis = chi.basis if isinstance(chi, SubtractionMatrix) else None
    return DominantMode(p0, AnnihilationOp(fix_phase(v), basis), degenerate)


def _psd_sqrt(m):
    w, V = np.linalg.eigh(0.5 * (m + m.conj().T))
    w = np.clip(w, 0.0, None)
    return (V * np.sqrt(w)) @ V.conj().T


def fidelity(chi, mu):
    """Uhlmann fidelity ``(tr sqrt(sqrt(chi) mu sqrt(chi)))^2``."""
    if (isinstance(chi, SubtractionMatrix) and isinstance(mu, SubtractionMatrix)
            and chi.basis is not None and mu.basis is not None
            and chi.basis is not mu.basis):
        raise InvalidInputError("fidelity needs both matrices in one basis")
    a, b = _as_matrix(chi), _as_matrix(mu)
    if a.shape != b.shape:
        raise InvalidInputError(f"dimension mismatch {a.shape} vs {b.shape}")
    s = _psd_sqrt(a)
    inner = s @ b @ s
    w = np.clip(np.linalg.eigvalsh(0.5 * (inner + inner.conj().T)), 0.0, None)
    return float(min(np.sum(np.sqrt(w)) ** 2, 1.0))


def success_probability(chi, b, mean_photons):
    """Herald probability (up to a constant) for a coherent probe.

    Returns ``|beta|^2 sum_ij chi_ij b_i conj(b_j)`` for a probe with unit
    amplitude vector ``b`` and mean photon number ``|beta|^2``.
    """
    m = _as_matrix(chi)
    b = check_unit_vector(b, "b", tol=NORM_TOL, length=m.shape[0])
    mean_photons = check_scalar(mean_photons, "mean_photons", min_val=0.0)
    q = np.real(b @ m @ b.conj())
    return float(mean_photons * max(q, 0.0))


def project_to_physical(raw, basis=None):
    """Nearest physical matrix by eigenvalue clipping.

    Hermitize, clip negative eigenvalues to zero and rescale to unit trace.
    """
    m = check_square(raw, "raw")
    m = 0.5 * (m + m.conj().T)
    w, V = np.linalg.eigh(m)
    w = np.clip(w, 0.0, None)
    total = w.sum()
    if total <= 1e-300:
        raise DegenerateInputError("no positive eigenvalue left after clipping")
    out = (V * (w / total)) @ V.conj().T
    return SubtractionMatrix(0.5 * (out + out.conj().T), basis)


def mixture_from_eigs(chi, tol=1e-12):
    """Spectral decomposition of ``chi`` as an :class:`OperatorMixture`."""
    m = _as_matrix(chi)
    w, V = np.linalg.eigh(m)
    keep = w > tol
    w = w[keep][::-1]
    V = V[:, keep][:, ::-1]
    basis = chi.basis if isinstance(chi, SubtractionMatrix) else None
    terms = [(float(p), AnnihilationOp(fix_phase(V[:, k]), basis))
             for k, p in enumerate(w / w.sum())]
    return OperatorMixture(tuple(terms))


def ideal_chi(coeffs: Sequence[complex], basis=None):
    """Pure subtraction matrix of a single (normalized) operator."""
    c = np.asarray(coeffs, dtype=complex)
    n = np.linalg.norm(c)
    if n == 0:
        raise InvalidInputError("operator coefficients are all zero")
    return projector(c / n, basis)
