import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import factorial

from modesub.exceptions import HeraldError, InvalidInputError, TruncationError
from modesub.fock import (FockDensity, LossChain, SqueezeParams,
                          brute_force_two_mode_check, heralded_state,
                          loss_channel, mean_photons, parity,
                          squeezed_vacuum, subtract_photon, trace_distance,
                          wigner_grid, wigner_origin)

SQ4 = SqueezeParams(4.0)
CHAIN = LossChain(0.9, 0.9)


def _coherent(alpha, n_max=40):
    n = np.arange(n_max + 1)
    psi = np.exp(-abs(alpha) ** 2 / 2) * alpha ** n / np.sqrt(factorial(n))
    return FockDensity(np.outer(psi, psi.conj()) / np.vdot(psi, psi).real)


def test_squeeze_conversion():
    assert SQ4.r == pytest.approx(0.4605, abs=1e-4)
    with pytest.raises(InvalidInputError):
        SqueezeParams(-1.0)


def test_zero_squeezing_is_vacuum():
    rho = squeezed_vacuum(SqueezeParams(0.0), 10)
    assert rho.populations[0] == pytest.approx(1.0)


def test_squeezed_vacuum_populations():
    rho = squeezed_vacuum(SQ4, 30)
    r = SQ4.r
    assert mean_photons(rho) == pytest.approx(np.sinh(r) ** 2, abs=1e-8)
    assert mean_photons(rho) == pytest.approx(0.2275, abs=1e-4)
    pops = rho.populations
    assert np.max(pops[1::2]) < 1e-15
    m = np.arange(16)
    oracle = factorial(2 * m) / (2 ** m * factorial(m)) ** 2 * np.tanh(r) ** (2 * m) / np.cosh(r)
    np.testing.assert_allclose(pops[::2], oracle, atol=1e-12)
    assert rho.trace == pytest.approx(1.0, abs=1e-12)


def test_squeezed_vacuum_truncation():
    with pytest.raises(TruncationError):
        squeezed_vacuum(SqueezeParams(15.0), 10)


def test_loss_examples():
    one = FockDensity.fock(1, 5)
    np.testing.assert_allclose(loss_channel(one, 1.0).matrix, one.matrix, atol=1e-15)
    vac = loss_channel(one, 0.0).populations
    assert vac[0] == pytest.approx(1.0)
    out = loss_channel(one, 0.9).populations
    np.testing.assert_allclose(out[:2], [0.1, 0.9], atol=1e-14)


def test_loss_on_coherent_state_shrinks_amplitude():
    out = loss_channel(_coherent(1.2 + 0.5j), 0.64)
    target = _coherent(0.8 * (1.2 + 0.5j))
    assert trace_distance(out.matrix, target.matrix) < 1e-9


@given(t1=st.floats(0, 1), t2=st.floats(0, 1), db=st.floats(0, 6))
def test_loss_composes_and_preserves_trace(t1, t2, db):
    rho = squeezed_vacuum(SqueezeParams(db), 30)
    once = loss_channel(loss_channel(rho, t1), t2)
    both = loss_channel(rho, t1 * t2)
    assert np.max(np.abs(once.matrix - both.matrix)) < 1e-9
    assert once.trace == pytest.approx(1.0, abs=1e-10)


def test_subtract_photon_examples():
    res = subtract_photon(FockDensity.fock(2, 5))
    assert res.norm == pytest.approx(2.0)
    assert res.state.populations[1] == pytest.approx(1.0)
    sq = squeezed_vacuum(SQ4, 30)
    res = subtract_photon(sq)
    assert res.norm == pytest.approx(mean_photons(sq), abs=1e-12)
    assert parity(res.state) == pytest.approx(-1.0, abs=1e-12)
    with pytest.raises(HeraldError):
        subtract_photon(FockDensity.fock(0, 5))


def test_heralded_state_limits():
    # no correct heralds: the lossy squeezed vacuum
    res = heralded_state(SQ4, 0.0, 0.9, CHAIN)
    target = loss_channel(squeezed_vacuum(SQ4), CHAIN.t_ovr)
    assert res.r_corr == 0 and trace_distance(res.state.matrix, target.matrix) < 1e-12
    # perfect heralds and no loss: an odd cat-like state
    res = heralded_state(SQ4, 1.0, 1.0, LossChain(1.0, 1.0))
    assert res.r_false == pytest.approx(0.0, abs=1e-15)
    assert parity(res.state) == pytest.approx(-1.0, abs=1e-12)
    with pytest.raises(HeraldError):
        heralded_state(SqueezeParams(0.0), 1.0, 1.0, CHAIN)


def test_heralded_state_reference_scenario():
    res = heralded_state(SQ4, 0.99, 0.9, CHAIN)
    assert res.r_corr == pytest.approx(0.858, abs=1e-3)
    assert res.state.trace == pytest.approx(1.0, abs=1e-12)


@given(w1=st.floats(0, 1), p0=st.floats(0, 1), t_in=st.floats(0.05, 1),
       t_fi=st.floats(0, 1), db=st.floats(0.5, 6))
def test_heralded_ratios_sum_to_one(w1, p0, t_in, t_fi, db):
    res = heralded_state(SqueezeParams(db), w1, p0, LossChain(t_in, t_fi))
    assert res.r_corr + res.r_false == pytest.approx(1.0, abs=1e-12)
    assert res.state.trace == pytest.approx(1.0, abs=1e-10)
    assert -1 / (2 * np.pi) - 1e-12 <= wigner_origin(res.state) <= 1 / (2 * np.pi) + 1e-12


def test_wigner_origin_examples():
    assert wigner_origin(FockDensity.fock(0, 5)) == pytest.approx(1 / (2 * np.pi))
    assert wigner_origin(FockDensity.fock(1, 5)) == pytest.approx(-1 / (2 * np.pi))
    rho = heralded_state(SQ4, 0.99, 0.9, CHAIN).state
    assert 2 * np.pi * wigner_origin(rho) == pytest.approx(-0.3036, abs=1e-3)
    with pytest.raises(TruncationError):
        wigner_origin(FockDensity.fock(5, 5))


def test_wigner_grid_single_photon_closed_form():
    xs = np.linspace(-4, 4, 41)
    X, P = np.meshgrid(xs, xs)
    R2 = X ** 2 + P ** 2
    oracle = (R2 - 1) * np.exp(-R2 / 2) / (2 * np.pi)
    W = wigner_grid(FockDensity.fock(1, 6), xs, xs)
    np.testing.assert_allclose(W, oracle, atol=1e-14)


def test_wigner_grid_coherent_peak_and_normalization():
    alpha = 0.7 - 0.4j
    xs = np.linspace(-7, 7, 141)
    W = wigner_grid(_coherent(alpha), xs, xs)
    i, j = np.unravel_index(np.argmax(W), W.shape)
    assert xs[j] == pytest.approx(2 * alpha.real, abs=xs[1] - xs[0])
    assert xs[i] == pytest.approx(2 * alpha.imag, abs=xs[1] - xs[0])
    assert W.max() == pytest.approx(1 / (2 * np.pi), abs=1e-3)
    assert W.sum() * (xs[1] - xs[0]) ** 2 == pytest.approx(1.0, abs=1e-3)


def test_wigner_grid_minimum_at_origin_for_reference_state():
    rho = heralded_state(SQ4, 0.99, 0.9, CHAIN).state
    xs = np.linspace(-3, 3, 121)
    W = wigner_grid(rho, xs, xs)
    assert W.min() == pytest.approx(wigner_origin(rho), abs=1e-6)
    assert W[60, 60] == pytest.approx(wigner_origin(rho), abs=1e-12)


def test_brute_force_two_mode_agreement():
    assert brute_force_two_mode_check(SQ4, 1.0, 1.0, CHAIN) < 1e-10
    assert brute_force_two_mode_check(SQ4, 0.0, 0.9, CHAIN) < 1e-10
    assert brute_force_two_mode_check(SQ4, 0.99, 0.9, CHAIN) < 1e-6


def test_brute_force_memory_guard():
    with pytest.raises(InvalidInputError):
        brute_force_two_mode_check(SQ4, 0.99, 0.9, CHAIN, n_max=80)


def test_fock_density_validation():
    with pytest.raises(InvalidInputError):
        FockDensity(np.diag([0.5, 0.7]))
    with pytest.raises(InvalidInputError):
        FockDensity(np.diag([1.2, -0.2]))
    with pytest.raises(InvalidInputError):
        FockDensity(np.array([[0.5, 0.1], [0.3, 0.5]]))
