import numpy as np
import pytest

from modesub import io
from modesub.calibration import RealisticWeights, simulate_curve
from modesub.chi import SubtractionMatrix
from modesub.exceptions import InvalidInputError
from modesub.modes import FrequencyGrid, make_hg_basis
from modesub.tomography import (TomographySettings, simulate_counts,
                                standard_probe_set)

from conftest import random_chi


def test_chi_json_and_csv_roundtrip(tmp_path):
    chi = SubtractionMatrix(random_chi(np.random.default_rng(0), 4))
    d = io.chi_to_dict(chi, "hg4")
    io.write_json(tmp_path / "chi.json", d, schema="chi")
    back = io.chi_from_dict(io.read_json(tmp_path / "chi.json"))
    np.testing.assert_array_equal(back.entries, chi.entries)
    io.write_chi_csv(tmp_path / "chi.csv", chi)
    np.testing.assert_array_equal(io.read_chi_csv(tmp_path / "chi.csv").entries, chi.entries)


def test_basis_roundtrip():
    basis = make_hg_basis(3, 795.0, 4.0, FrequencyGrid(795.0, 40.0, 256))
    back = io.basis_from_dict(io.basis_to_dict(basis))
    assert back.labels == basis.labels and back.kind == basis.kind
    np.testing.assert_array_equal(back.matrix(), basis.matrix())


def test_records_roundtrip(tmp_path):
    chi = random_chi(np.random.default_rng(1), 3)
    recs = simulate_counts(chi, standard_probe_set(3, 2.0), TomographySettings(50.0, 1.0, 3, 7))
    io.write_records_csv(tmp_path / "r.csv", recs)
    back = io.read_records_csv(tmp_path / "r.csv")
    assert [r.counts for r in back] == [r.counts for r in recs]
    for a, b in zip(back, recs):
        np.testing.assert_array_equal(a.probe.b, b.probe.b)
        assert a.shots == b.shots and a.probe.mean_photons == b.probe.mean_photons


def test_curve_roundtrip(tmp_path):
    curve = simulate_curve(RealisticWeights(0.01, 0.99, 0.0), 0.9, 1e3, seed=2)
    io.write_curve_csv(tmp_path / "c.csv", curve)
    back = io.read_curve_csv(tmp_path / "c.csv")
    np.testing.assert_array_equal(back.counts, curve.counts)
    np.testing.assert_array_equal(back.mean_photons, curve.mean_photons)


def test_malformed_inputs(tmp_path):
    (tmp_path / "bad.csv").write_text("probe_id,d\n0,2\n")
    with pytest.raises(InvalidInputError):
        io.read_records_csv(tmp_path / "bad.csv")
    (tmp_path / "bad.json").write_text("{nope")
    with pytest.raises(InvalidInputError):
        io.read_json(tmp_path / "bad.json")
    with pytest.raises(InvalidInputError):
        io.chi_from_dict({"re": [[1]]})
    with pytest.raises(InvalidInputError):
        io.read_curve_csv(tmp_path / "missing.csv")


def test_parse_complex():
    assert io.parse_complex(0.5) == 0.5
    assert io.parse_complex([0.5, -1]) == 0.5 - 1j
    with pytest.raises(InvalidInputError):
        io.parse_complex([1, 2, 3])
