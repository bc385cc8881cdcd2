"""CSV and JSON artifacts.

CSV headers (stable):

=================  =====================================================
records            probe_id, d, b_re0..b_re{d-1}, b_im0..b_im{d-1},
                   mean_photons, shots, counts
curve              mean_photons, counts, shots
chi                i, j, label_i, label_j, re, im
transfer           lambda_in, lambda_up, re, im
schmidt            index, weight
dominant_op        index, label, probability, phase
residuals          mean_photons, counts, shots, expected, residual
wigner             x, p, W
=================  =====================================================
"""

import csv
import json
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .calibration import CalibrationCurve
from .chi import SubtractionMatrix
from .exceptions import InvalidInputError
from .modes import FrequencyGrid, ModeBasis, SpectralMode
from .tomography import CountRecord, ProbeSpec


def load_schema(name):
    text = resources.files("modesub").joinpath("schemas", f"{name}.json").read_text()
    return json.loads(text)


def validate(obj, schema_name):
    """Validate ``obj`` against a shipped schema, raising InvalidInputError."""
    try:
        jsonschema.validate(obj, load_schema(schema_name))
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise InvalidInputError(f"{schema_name}: {path}: {exc.message}") from None


def write_json(path, obj, schema=None):
    if schema is not None:
        validate(obj, schema)
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path, schema=None):
    try:
        obj = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidInputError(f"cannot read {path}: {exc}") from None
    if schema is not None:
        validate(obj, schema)
    return obj


def write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_rows(path):
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            return reader.fieldnames or [], list(reader)
    except OSError as exc:
        raise InvalidInputError(f"cannot read {path}: {exc}") from None


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


# complex numbers in JSON are either plain reals or [re, im] pairs
def parse_complex(v):
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise InvalidInputError(f"complex value must be [re, im], got {v!r}")
        return complex(float(v[0]), float(v[1]))
    return complex(float(v))


def basis_to_dict(basis: ModeBasis):
    return {"kind": basis.kind, "grid": basis.grid.to_dict(),
            "labels": list(basis.labels),
            "modes": [[m.amplitude.real.tolist(), m.amplitude.imag.tolist()]
                      for m in basis.modes]}


def basis_from_dict(d):
    validate(d, "basis")
    grid = FrequencyGrid.from_dict(d["grid"])
    modes = tuple(SpectralMode(grid, np.asarray(re) + 1j * np.asarray(im), lab)
                  for (re, im), lab in zip(d["modes"], d["labels"]))
    return ModeBasis(d["kind"], modes, tuple(d["labels"]))


def chi_to_dict(chi: SubtractionMatrix, basis_ref="", labels=None):
    m = chi.entries
    if labels is None:
        labels = (list(chi.basis.labels) if chi.basis is not None
                  else [str(i) for i in range(chi.dim)])
    return {"basis_ref": basis_ref, "labels": list(labels),
            "re": m.real.tolist(), "im": m.imag.tolist()}


def chi_from_dict(d, basis=None):
    validate(d, "chi")
    m = np.asarray(d["re"], dtype=float) + 1j * np.asarray(d["im"], dtype=float)
    return SubtractionMatrix(m, basis)


def write_chi_csv(path, chi: SubtractionMatrix, labels=None):
    d = chi.dim
    labels = labels or (chi.basis.labels if chi.basis is not None
                        else [str(i) for i in range(d)])
    rows = [(i, j, labels[i], labels[j], chi.entries[i, j].real,
             chi.entries[i, j].imag) for i in range(d) for j in range(d)]
    write_rows(path, ["i", "j", "label_i", "label_j", "re", "im"], rows)


def read_chi_csv(path, basis=None):
    _, rows = read_rows(path)
    d = int(round(np.sqrt(len(rows))))
    if d * d != len(rows) or d == 0:
        raise InvalidInputError(f"{path}: expected d^2 rows, got {len(rows)}")
    m = np.zeros((d, d), dtype=complex)
    for r in rows:
        m[int(r["i"]), int(r["j"])] = float(r["re"]) + 1j * float(r["im"])
    return SubtractionMatrix(m, basis)


def records_header(d):
    return (["probe_id", "d"] + [f"b_re{i}" for i in range(d)]
            + [f"b_im{i}" for i in range(d)] + ["mean_photons", "shots", "counts"])


def write_records_csv(path, records):
    d = records[0].probe.dim
    rows = []
    for n, r in enumerate(records):
        b = r.probe.b
        rows.append([n, d, *b.real.tolist(), *b.imag.tolist(),
                     r.probe.mean_photons, r.shots, _count_repr(r.counts)])
    write_rows(path, records_header(d), rows)


def _count_repr(k):
    return int(k) if float(k).is_integer() else float(k)


def read_records_csv(path):
    fields, rows = read_rows(path)
    if not rows:
        raise InvalidInputError(f"{path}: no records")
    try:
        d = int(rows[0]["d"])
        missing = set(records_header(d)) - set(fields)
        if missing:
            raise InvalidInputError(f"{path}: missing columns {sorted(missing)}")
        out = []
        for r in rows:
            b = np.array([float(r[f"b_re{i}"]) + 1j * float(r[f"b_im{i}"])
                          for i in range(d)])
            out.append(CountRecord(ProbeSpec(b, float(r["mean_photons"])),
                                   float(r["counts"]), int(float(r["shots"]))))
    except (KeyError, ValueError) as exc:
        raise InvalidInputError(f"{path}: malformed record ({exc})") from None
    return out


def write_curve_csv(path, curve: CalibrationCurve):
    rows = zip(curve.mean_photons, (_count_repr(k) for k in curve.counts),
               (int(s) for s in curve.shots))
    write_rows(path, ["mean_photons", "counts", "shots"], rows)


def read_curve_csv(path):
    _, rows = read_rows(path)
    try:
        pts = [(float(r["mean_photons"]), float(r["counts"]), float(r["shots"]))
               for r in rows]
    except (KeyError, ValueError) as exc:
        raise InvalidInputError(f"{path}: malformed curve ({exc})") from None
    if not pts:
        raise InvalidInputError(f"{path}: empty curve")
    return CalibrationCurve.from_points(pts)


def write_transfer_csv(path, tf, stride=8):
    """Heatmap samples of the transfer function, every ``stride``-th point."""
    lin = tf.in_grid.wavelengths[::stride]
    lup = tf.up_grid.wavelengths[::stride]
    vals = tf.values[::stride, ::stride]
    rows = ((lin[i], lup[j], vals[i, j].real, vals[i, j].imag)
            for i in range(lin.size) for j in range(lup.size))
    write_rows(path, ["lambda_in", "lambda_up", "re", "im"], rows)
