import numpy as np
import pytest

from modesub.chi import dominant_mode, fidelity, projector, purity
from modesub.exceptions import (BasisCoverageError, InvalidInputError,
                                ResolutionError)
from modesub.modes import (DEFAULT_INPUT_GRID, FrequencyGrid, gram_matrix,
                           make_band_basis, make_hg_mode)
from modesub.sfg import (DEFAULT_UP_GRID, SfgConfig, TransferFunction,
                         build_transfer, default_config, hg_gate,
                         ideal_operator, induced_subtraction,
                         schmidt_decompose, sign_rule_check)

NARROWEST = 8 * DEFAULT_UP_GRID.step
S2 = 1 / np.sqrt(2)


@pytest.fixture(scope="module")
def default_sd():
    return schmidt_decompose(build_transfer(default_config()))


@pytest.fixture(scope="module")
def induced(hg7):
    gates = {"hg0": (1.0,), "hg1": (0.0, 1.0), "sum": (S2, S2), "quad": (S2, 1j * S2)}
    return {k: induced_subtraction(default_config(v), hg7) for k, v in gates.items()}


def test_config_invariants():
    hg0 = make_hg_mode(0, 795.0, 4.0, DEFAULT_INPUT_GRID)
    with pytest.raises(InvalidInputError):
        SfgConfig(((0.9, hg0),))
    with pytest.raises(InvalidInputError):
        SfgConfig(((1.0, hg0),), filter_fwhm=0.0)
    with pytest.raises(InvalidInputError):
        SfgConfig(((1.0, hg0),), pm_fwhm=-1.0)
    with pytest.raises(InvalidInputError):
        SfgConfig(())
    other = make_hg_mode(0, 795.0, 4.0, FrequencyGrid(795.0, 40.0, 512))
    with pytest.raises(InvalidInputError):
        SfgConfig(((1.0, other),))


def test_hg_gate_accepts_mapping_and_sequence():
    a = hg_gate({1: 1.0})
    b = hg_gate([0, 1.0])
    assert len(a) == len(b) == 1 and a[0][1].label == b[0][1].label == "HG1"


def test_transfer_normalized():
    tf = build_transfer(default_config())
    norm = np.sum(np.abs(tf.values) ** 2) * tf.in_grid.step * tf.up_grid.step
    assert norm == pytest.approx(1.0, abs=1e-8)


def test_transfer_resolution_error():
    coarse = FrequencyGrid(397.5, 3.0, 16)
    with pytest.raises(ResolutionError):
        build_transfer(default_config(up_grid=coarse))


def test_transfer_invariant_checked():
    g = FrequencyGrid(795.0, 2.0, 4)
    with pytest.raises(InvalidInputError):
        TransferFunction(np.ones((4, 4)), g, g)


def test_narrowest_filter_is_nearly_separable():
    sd = schmidt_decompose(build_transfer(default_config(filter_fwhm=NARROWEST)), n_keep=3)
    assert sd.p0 > 0.999


@pytest.mark.parametrize("filter_fwhm,depth", [(0.4, 0.25), (NARROWEST, 0.01)])
def test_hg1_marginal_node_at_center(filter_fwhm, depth):
    cfg = default_config({1: 1.0}, filter_fwhm=filter_fwhm)
    marginal = build_transfer(cfg).input_marginal()
    lam = cfg.in_grid.wavelengths
    window = (lam > 793) & (lam < 797)
    k = np.argmin(marginal[window])
    assert lam[window][k] == pytest.approx(795.0, abs=cfg.in_grid.step)
    assert marginal[window][k] < depth * marginal.max()


def _separable(a, b):
    return TransferFunction.from_values(np.outer(a, b), DEFAULT_INPUT_GRID, DEFAULT_UP_GRID)


def test_schmidt_of_separable_kernel():
    a = make_hg_mode(0, 795.0, 4.0, DEFAULT_INPUT_GRID).amplitude
    b = np.exp(-((DEFAULT_UP_GRID.wavelengths - 397.5) / 0.3) ** 2)
    sd = schmidt_decompose(_separable(a, b), n_keep=3)
    np.testing.assert_allclose(sd.weights, [1, 0, 0], atol=1e-12)


def test_schmidt_of_equal_rank_two_kernel():
    a0 = make_hg_mode(0, 795.0, 4.0, DEFAULT_INPUT_GRID).amplitude
    a1 = make_hg_mode(1, 795.0, 4.0, DEFAULT_INPUT_GRID).amplitude
    x = (DEFAULT_UP_GRID.wavelengths - 397.5) / 0.3
    b0, b1 = np.exp(-x ** 2 / 2), x * np.exp(-x ** 2 / 2)
    b0, b1 = b0 / np.linalg.norm(b0), b1 / np.linalg.norm(b1)
    tf = TransferFunction.from_values(np.outer(a0, b0) + np.outer(a1, b1),
                                      DEFAULT_INPUT_GRID, DEFAULT_UP_GRID)
    sd = schmidt_decompose(tf, n_keep=2)
    np.testing.assert_allclose(sd.weights, [0.5, 0.5], atol=1e-8)


def test_schmidt_structure(default_sd):
    w = default_sd.weights
    assert np.all(w >= 0) and np.all(np.diff(w) <= 0)
    assert w.sum() + default_sd.residual == pytest.approx(1.0, abs=1e-8)
    assert default_sd.residual < 1e-8
    for modes in (default_sd.input_modes, default_sd.up_modes):
        G = gram_matrix(modes, modes)
        assert np.max(np.abs(G - np.eye(len(modes)))) < 1e-8


def test_default_selectivity(default_sd):
    assert default_sd.p0 >= 0.9


def test_schmidt_truncation_warning():
    tf = build_transfer(default_config())
    with pytest.warns(UserWarning, match="Schmidt"):
        sd = schmidt_decompose(tf, n_keep=1)
    assert sd.residual > 0.01
    with pytest.raises(InvalidInputError):
        schmidt_decompose(tf, n_keep=0)


def test_selectivity_monotone_in_filter_width():
    p0 = [schmidt_decompose(build_transfer(default_config(filter_fwhm=f)), n_keep=4).p0
          for f in (0.1, 0.2, 0.3, 0.4, 0.6)]
    assert all(a >= b - 1e-12 for a, b in zip(p0, p0[1:]))


def test_hg1_gate_dominant_operator(induced):
    dm = dominant_mode(induced["hg1"].chi)
    assert abs(dm.op.coeffs[1]) ** 2 > 0.99


def test_in_phase_gate_gives_difference_operator(induced):
    dm = dominant_mode(induced["sum"].chi)
    target = np.zeros(7, complex)
    target[:2] = [S2, -S2]
    assert abs(np.vdot(target, dm.op.coeffs)) ** 2 > 0.99
    assert induced["sum"].chi.entries[0, 1].real < -0.4


def test_quadrature_gate_gives_minus_i_operator(induced):
    chi = induced["quad"].chi
    dm = dominant_mode(chi)
    target = np.zeros(7, complex)
    target[:2] = [S2, -1j * S2]
    assert abs(np.vdot(target, dm.op.coeffs)) ** 2 > 0.99
    # chi_01 = c0 conj(c1) = +i/2 for c = (1, -i)/sqrt2, scaled by p0
    assert chi.entries[0, 1].imag == pytest.approx(0.5 * induced["quad"].p0, abs=0.02)
    assert abs(chi.entries[0, 1].real) < 0.02


def test_fidelity_to_ideal_operator(induced, hg7):
    for key, coeffs in (("sum", (S2, S2)), ("quad", (S2, 1j * S2))):
        ideal = projector(ideal_operator(default_config(coeffs), hg7).coeffs, hg7)
        assert fidelity(induced[key].chi, ideal) >= 0.9


def test_purity_lower_bound(induced):
    n_keep = 10
    for res in induced.values():
        p0 = res.p0
        assert purity(res.chi) >= p0 ** 2 + (1 - p0) ** 2 / (n_keep - 1) - 1e-9


def test_up_converted_mode_independent_of_gate(induced):
    u0 = induced["hg0"].schmidt.up_modes[0]
    u1 = induced["hg1"].schmidt.up_modes[0]
    assert abs(gram_matrix([u0], [u1])[0, 0]) >= 0.99


@pytest.mark.parametrize("order", [0, 1, 2, 3])
def test_sign_rule(order):
    assert sign_rule_check(order) >= 0.95


def test_sign_rule_raw_overlap_for_hg1():
    # without the (-1)^n factor the HG1 overlap is negative
    assert -sign_rule_check(1) <= -0.95


def test_basis_coverage_error():
    far = make_band_basis(3, 776.0, 779.0, DEFAULT_INPUT_GRID)
    with pytest.raises(BasisCoverageError):
        induced_subtraction(default_config(), far, n_keep=2)
