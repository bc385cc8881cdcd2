import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.base import clone

from modesub.calibration import (DEFAULT_GRID, FLAG_W2, CalibrationCurve,
                                 RealisticWeights, WeightCalibrator,
                                 fit_weights, herald_rate, simulate_curve)
from modesub.exceptions import (InvalidInputError, ModelMismatchError,
                                NoSignalError, NotFittedError)

TRUE = RealisticWeights(0.01, 0.9899, 1e-4)
NARROW = (0.1, 0.2, 0.3, 0.5, 1.0)


def test_weights_validation():
    with pytest.raises(InvalidInputError):
        RealisticWeights(0.5, 0.4, 0.0)
    with pytest.raises(InvalidInputError):
        RealisticWeights(-0.1, 1.1, 0.0)


def test_herald_rate_examples():
    w = RealisticWeights(0.2, 0.5, 0.3)
    assert herald_rate(w, 0.7, 0.0, 3.0) == pytest.approx(0.6)
    x = np.array([0.0, 0.5, 2.0, 90.0])
    np.testing.assert_allclose(herald_rate(RealisticWeights(0, 1, 0), 1.0, x, 2.0), 2 * x)
    assert herald_rate(RealisticWeights(0.01, 0.99, 0.0), 0.9, 1.0, 1.0) == pytest.approx(0.901)


@given(w0=st.floats(0, 1), frac=st.floats(0, 1), p0=st.floats(0, 1))
def test_herald_rate_monotone_and_convex(w0, frac, p0):
    w1 = (1 - w0) * frac
    w = RealisticWeights(w0, w1, 1 - w0 - w1)
    x = np.linspace(0, 90, 61)
    r = herald_rate(w, p0, x)
    assert np.all(np.diff(r) >= -1e-12)
    assert np.all(np.diff(r, 2) >= -1e-9)


def test_curve_validation():
    with pytest.raises(InvalidInputError):
        CalibrationCurve([0.1, 1, 10], [1, 2, 3], 1)
    with pytest.raises(InvalidInputError):
        CalibrationCurve([0.1, 1, 1, 10], [1, 2, 3, 4], 1)
    with pytest.raises(InvalidInputError):
        CalibrationCurve([0.1, 1, 3, 10], [1, -2, 3, 4], 1)
    with pytest.raises(InvalidInputError):
        CalibrationCurve([0.1, 1, 3, 10], [1, 2, 3], 1)


def test_fit_requires_span_and_signal():
    with pytest.raises(InvalidInputError):
        WeightCalibrator().fit([1, 2, 3, 5], [10, 20, 30, 50])
    with pytest.raises(NoSignalError):
        WeightCalibrator().fit([0.1, 1, 10, 90], [0, 0, 0, 0])


def test_noiseless_exact_recovery():
    w = RealisticWeights(0.01, 0.99, 0.0)
    fit = fit_weights(simulate_curve(w, 0.9, 1e4, noiseless=True), 0.9)
    np.testing.assert_allclose(fit.weights.as_array(), w.as_array(), atol=1e-8)
    assert fit.kappa_hat == pytest.approx(1e4, rel=1e-8)


@given(w0=st.floats(0.001, 0.3), w2=st.floats(0, 0.05), p0=st.floats(0.5, 1))
def test_noiseless_recovery_property(w0, w2, p0):
    w = RealisticWeights(w0, 1 - w0 - w2, w2)
    est = WeightCalibrator(p0=p0).fit_curve(simulate_curve(w, p0, 1e3, noiseless=True))
    np.testing.assert_allclose(est.weights_.as_array(), w.as_array(), atol=1e-6)
    weights = est.weights_.as_array()
    assert np.all(weights >= 0) and abs(weights.sum() - 1) <= 4e-16


def test_poisson_fit_bounds():
    fits = [fit_weights(simulate_curve(TRUE, 0.9, 1.2e4, seed=s), 0.9) for s in range(20)]
    w = np.array([f.weights.as_array() for f in fits])
    med = np.median(w, axis=0)
    assert abs(med[0] - 0.01) <= 0.003 and med[1] >= 0.98 and med[2] < 1e-3
    assert all(FLAG_W2 not in f.flags for f in fits)
    # exact simplex, not approximate
    assert all(abs(row.sum() - 1) < 1e-15 for row in w)


def test_narrow_curve_flags_w2():
    fit = fit_weights(simulate_curve(TRUE, 0.9, 1.2e4, mean_photons=NARROW, seed=0), 0.9)
    assert FLAG_W2 in fit.flags
    assert fit.stderr["w2"] > 1e-3


def test_negative_slope_is_model_mismatch():
    x = np.array([0.1, 1, 10, 90])
    with pytest.raises(ModelMismatchError):
        WeightCalibrator().fit(x, [900, 700, 400, 100])


def test_refit_self_consistency():
    z = []
    for seed in range(20):
        first = WeightCalibrator().fit_curve(simulate_curve(TRUE, 0.9, 1.2e4, seed=seed))
        regen = simulate_curve(first.weights_, 0.9, first.kappa_, seed=1000 + seed)
        second = WeightCalibrator().fit_curve(regen)
        dev = np.abs(second.weights_.as_array() - first.weights_.as_array())
        z.append(dev / first.stderr_)
    assert np.all(np.median(z, axis=0) <= 2)


def test_estimator_api():
    est = WeightCalibrator(p0=0.8)
    assert clone(est).get_params()["p0"] == 0.8
    with pytest.raises(NotFittedError):
        est.predict([1.0])
    curve = simulate_curve(TRUE, 0.8, 1e4, seed=3)
    est.fit_curve(curve)
    assert est.predict(DEFAULT_GRID).shape == (len(DEFAULT_GRID),)
    np.testing.assert_allclose(est.residuals_, curve.counts - est.predict(DEFAULT_GRID))
    assert est.converged_ and np.isfinite(est.nll_)
