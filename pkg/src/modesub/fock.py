"""Truncated single-mode Fock-space simulation.

Wigner functions use quadratures ``x = a + a^H`` and ``p = -i(a - a^H)``, so
the vacuum has unit quadrature variance, ``W_vac(0, 0) = 1/2pi`` and a single
photon reaches ``-1/2pi`` at the origin.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import comb, eval_genlaguerre, gammaln

from ._validation import check_int, check_scalar, check_square, frozen
from .exceptions import HeraldError, InvalidInputError, TruncationError

TAIL_TOL = 1e-6
DB_TO_R = np.log(10.0) / 20.0
MAX_TWO_MODE_DIM = 4096


@dataclass(frozen=True, eq=False)
class FockDensity:
    """Density matrix on levels ``0..n_max``; trace may be below 1."""

    matrix: np.ndarray

    def __post_init__(self):
        m = check_square(self.matrix, "matrix")
        if np.max(np.abs(m - m.conj().T)) > 1e-10:
            raise InvalidInputError("density matrix is not Hermitian")
        m = 0.5 * (m + m.conj().T)
        tr = np.trace(m).real
        if not 0 < tr <= 1 + 1e-10:
            raise InvalidInputError(f"density trace must be in (0, 1], got {tr}")
        if np.linalg.eigvalsh(m)[0] < -1e-9:
            raise InvalidInputError("density matrix is not positive semidefinite")
        object.__setattr__(self, "matrix", frozen(m))

    @property
    def n_max(self):
        return self.matrix.shape[0] - 1

    @property
    def trace(self):
        return float(np.trace(self.matrix).real)

    @property
    def populations(self):
        return np.real(np.diag(self.matrix)).copy()

    def normalized(self):
        return FockDensity(self.matrix / self.trace)

    @classmethod
    def fock(cls, n, n_max):
        m = np.zeros((n_max + 1, n_max + 1), dtype=complex)
        m[n, n] = 1.0
        return cls(m)


@dataclass(frozen=True)
class SqueezeParams:
    squeezing_db: float
    phase: float = 0.0

    def __post_init__(self):
        check_scalar(self.squeezing_db, "squeezing_db", min_val=0.0)
        check_scalar(self.phase, "phase")

    @property
    def r(self):
        return self.squeezing_db * DB_TO_R


@dataclass(frozen=True)
class LossChain:
    """Initial and final transmittances; the overall value is derived."""

    t_in: float
    t_fi: float

    def __post_init__(self):
        check_scalar(self.t_in, "t_in", min_val=0.0, max_val=1.0)
        check_scalar(self.t_fi, "t_fi", min_val=0.0, max_val=1.0)

    @property
    def t_ovr(self):
        return self.t_in * self.t_fi


def _annihilation(n_max):
    return np.diag(np.sqrt(np.arange(1, n_max + 1, dtype=float)), k=1)


def squeezed_vacuum(params: SqueezeParams, n_max=30):
    """Pure squeezed vacuum truncated at ``n_max`` and renormalized.

    Raises
    ------
    TruncationError
        If more than 1e-6 of the norm lies above ``n_max``.
    """
    n_max = check_int(n_max, "n_max", min_val=1)
    r = params.r
    psi = np.zeros(n_max + 1, dtype=complex)
    m = np.arange(n_max // 2 + 1)
    if r == 0:
        psi[0] = 1.0
    else:
        t = np.tanh(r)
        log_mag = (m * np.log(t) + 0.5 * gammaln(2 * m + 1)
                   - m * np.log(2.0) - gammaln(m + 1) - 0.5 * np.log(np.cosh(r)))
        phase = (-np.exp(1j * params.phase)) ** m
        psi[2 * m] = phase * np.exp(log_mag)
    tail = 1.0 - float(np.sum(np.abs(psi) ** 2))
    if tail > TAIL_TOL:
        raise TruncationError(
            f"n_max={n_max} discards {tail:.3g} of the squeezed-vacuum norm")
    psi /= np.linalg.norm(psi)
    return FockDensity(np.outer(psi, psi.conj()))


def mean_photons(rho: FockDensity):
    n = np.arange(rho.n_max + 1)
    return float(np.dot(n, rho.populations) / rho.trace)


def loss_kraus(t, n_max):
    """Kraus operators ``E_k`` of the pure-loss channel, ``k = 0..n_max``."""
    t = check_scalar(t, "t", min_val=0.0, max_val=1.0)
    n = np.arange(n_max + 1)
    ops = []
    for k in range(n_max + 1):
        E = np.zeros((n_max + 1, n_max + 1))
        src = n[k:]
        with np.errstate(divide="ignore", invalid="ignore"):
            amp = np.sqrt(comb(src, k) * t ** (src - k) * (1 - t) ** k)
        E[src - k, src] = np.nan_to_num(amp)
        ops.append(E)
    return ops


def loss_channel(rho: FockDensity, t):
    """Mix with vacuum on a beam splitter of transmittance ``t``."""
    ops = loss_kraus(t, rho.n_max)
    out = sum(E @ rho.matrix @ E.T for E in ops)
    return FockDensity(out)


class Subtracted(NamedTuple):
    state: FockDensity
    norm: float


def subtract_photon(rho: FockDensity):
    """Photon-subtracted state ``a rho a^H / norm`` and ``norm = tr(a rho a^H)``.

    ``norm`` equals ``mean_photons(rho) * tr(rho)``; multiply the returned
    state by it to recover the unnormalized branch.

    Raises
    ------
    HeraldError
        If the norm is below 1e-12 (nothing to subtract).
    """
    out, norm = _subtract(rho.matrix)
    if norm < 1e-12:
        raise HeraldError("photon subtraction from (near) vacuum never heralds")
    return Subtracted(FockDensity(out / norm), norm)


def _subtract(matrix):
    a = _annihilation(matrix.shape[0] - 1)
    out = a @ matrix @ a.T
    return out, float(np.trace(out).real)


class HeraldedState(NamedTuple):
    state: FockDensity
    r_false: float
    r_corr: float


def herald_ratios(w1, p0, t_in, nbar):
    """Fractions of false and correct heralds in the dominant mode."""
    denom = (1 - w1) + w1 * t_in * nbar
    if denom < 1e-15:
        raise HeraldError("herald probability vanishes (vacuum input, w1 = 1)")
    r_corr = w1 * p0 * t_in * nbar / denom
    r_false = ((1 - w1) + w1 * (1 - p0) * t_in * nbar) / denom
    return r_false, r_corr


def heralded_state(params: SqueezeParams, w1, p0, chain: LossChain, n_max=30):
    """State in the dominant mode after loss, realistic herald, loss.

    Two-photon heralds are neglected. The result is the mixture
    ``r_false * sigma' + r_corr * a sigma' a^H / tr(.)`` with ``sigma'`` the
    squeezed vacuum after the overall transmittance.
    """
    w1 = check_scalar(w1, "w1", min_val=0.0, max_val=1.0)
    p0 = check_scalar(p0, "p0", min_val=0.0, max_val=1.0)
    sigma = squeezed_vacuum(params, n_max)
    nbar = mean_photons(sigma)
    r_false, r_corr = herald_ratios(w1, p0, chain.t_in, nbar)
    lossy = loss_channel(sigma, chain.t_ovr).matrix
    out = r_false * lossy
    if r_corr > 0:
        sub, norm = _subtract(lossy)
        if norm > 1e-300:
            out = out + r_corr * sub / norm
        else:
            # nothing survives the overall loss: the subtracted branch is vacuum
            vac = np.zeros_like(out)
            vac[0, 0] = 1.0
            out = out + r_corr * vac
    return HeraldedState(FockDensity(out), r_false, r_corr)


def parity(rho: FockDensity):
    signs = (-1.0) ** np.arange(rho.n_max + 1)
    return float(np.dot(signs, rho.populations) / rho.trace)


def _check_tail(rho):
    if rho.populations[-1] > TAIL_TOL * rho.trace:
        raise TruncationError(
            f"population of the top level {rho.n_max} exceeds {TAIL_TOL} "
            "of the trace; raise n_max")


def wigner_origin(rho: FockDensity):
    """``W(0, 0) = parity / 2pi`` for the normalized state."""
    _check_tail(rho)
    return parity(rho) / (2 * np.pi)


def wigner_grid(rho: FockDensity, xs, ps):
    """Wigner function on the grid ``xs`` x ``ps``.

    Returns an array of shape ``(len(ps), len(xs))`` normalized so that it
    integrates to ``tr(rho)`` over the plane. Evaluated with the closed-form
    Laguerre expansion of the displaced parity operator.
    """
    _check_tail(rho)
    xs = np.asarray(xs, dtype=float)
    ps = np.asarray(ps, dtype=float)
    X, P = np.meshgrid(xs, ps)
    alpha = (X + 1j * P) / 2
    B = 4 * np.abs(alpha) ** 2
    rho_m = rho.matrix
    N = rho.n_max + 1
    W = np.zeros_like(B)
    for m in range(N):
        if rho_m[m, m] != 0:
            W += np.real(rho_m[m, m]) * (-1) ** m * eval_genlaguerre(m, 0, B)
        for n in range(m + 1, N):
            if rho_m[m, n] == 0:
                continue
            k = n - m
            coef = (-1) ** m * np.exp(0.5 * (gammaln(m + 1) - gammaln(n + 1)))
            W += 2 * np.real(rho_m[m, n] * coef * (2 * alpha) ** k
                             * eval_genlaguerre(m, k, B))
    return W * np.exp(-B / 2) / (2 * np.pi)


def _apply_two_mode(rho4, ops, mode):
    # rho4[a, b, a', b']; apply sum_k E_k (.) E_k^H on one mode
    out = np.zeros_like(rho4)
    for E in ops:
        if mode == 0:
            out += np.einsum("ia,abcd,jc->ibjd", E, rho4, E.conj(), optimize=True)
        else:
            out += np.einsum("ib,abcd,jd->aicj", E, rho4, E.conj(), optimize=True)
    return out


def brute_force_two_mode_check(params: SqueezeParams, w1, p0, chain: LossChain,
                               n_max=15):
    """Trace distance between :func:`heralded_state` and a two-mode model.

    The oracle propagates ``sigma (x) sigma`` through per-mode initial loss,
    the realistic herald ``(1 - w1) rho + w1 S[rho]`` with
    ``chi = diag(p0, 1 - p0)``, per-mode final loss, and traces out the
    bystander mode.
    """
    n_max = check_int(n_max, "n_max", min_val=1)
    if (n_max + 1) ** 2 > MAX_TWO_MODE_DIM:
        raise InvalidInputError(
            f"two-mode dimension {(n_max + 1) ** 2} exceeds {MAX_TWO_MODE_DIM}")
    w1 = check_scalar(w1, "w1", min_val=0.0, max_val=1.0)
    p0 = check_scalar(p0, "p0", min_val=0.0, max_val=1.0)
    sigma = squeezed_vacuum(params, n_max).matrix
    rho4 = np.einsum("ac,bd->abcd", sigma, sigma)
    k_in = loss_kraus(chain.t_in, n_max)
    rho4 = _apply_two_mode(_apply_two_mode(rho4, k_in, 0), k_in, 1)
    a = _annihilation(n_max)
    sub0 = _apply_two_mode(rho4, [a], 0)
    sub1 = _apply_two_mode(rho4, [a], 1)
    rho4 = (1 - w1) * rho4 + w1 * (p0 * sub0 + (1 - p0) * sub1)
    k_fi = loss_kraus(chain.t_fi, n_max)
    rho4 = _apply_two_mode(_apply_two_mode(rho4, k_fi, 0), k_fi, 1)
    reduced = np.einsum("abcb->ac", rho4)
    reduced /= np.trace(reduced).real
    target = heralded_state(params, w1, p0, chain, n_max).state.matrix
    return trace_distance(reduced, target)


def trace_distance(a, b):
    d = np.asarray(a) - np.asarray(b)
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(0.5 * (d + d.conj().T)))))
