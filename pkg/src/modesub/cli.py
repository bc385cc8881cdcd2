"""``modesub`` command-line front end.

Exit codes: 0 success, 2 config/schema/input error, 3 numerical failure or
non-convergence, 4 resolution or truncation error.
"""

import argparse
import os
import sys
import warnings
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import io
from .calibration import (DEFAULT_GRID, RealisticWeights, WeightCalibrator,
                          simulate_curve)
from .chi import (SubtractionMatrix, dominant_mode, effective_mode_count,
                  fidelity, ideal_chi, projector, purity)
from .exceptions import (BasisCoverageError, ConvergenceWarning,
                         IncompleteProbeSetError, InvalidInputError,
                         ModesubError, ResolutionError, TruncationError)
from .fock import (LossChain, SqueezeParams, heralded_state,
                   mean_photons, squeezed_vacuum, wigner_grid, wigner_origin)
from .modes import (DEFAULT_INPUT_GRID, FrequencyGrid, SpectralMode,
                    basis_from_spec, make_hg_mode)
from .sfg import (DEFAULT_UP_GRID, SfgConfig, build_transfer, hg_gate,
                  ideal_operator, induced_subtraction)
from .tomography import (SubtractionTomography, TomographySettings,
                         simulate_counts, standard_probe_set)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_RESOLUTION = 0, 2, 3, 4


class NumericalFailure(ModesubError):
    pass


def exit_code_for(exc):
    if isinstance(exc, (ResolutionError, TruncationError, BasisCoverageError)):
        return EXIT_RESOLUTION
    if isinstance(exc, (InvalidInputError, IncompleteProbeSetError)):
        return EXIT_CONFIG
    return EXIT_NUMERICAL


def _sfg_config(cfg):
    in_grid = FrequencyGrid.from_dict(cfg["in_grid"]) if "in_grid" in cfg else DEFAULT_INPUT_GRID
    up_grid = FrequencyGrid.from_dict(cfg["up_grid"]) if "up_grid" in cfg else DEFAULT_UP_GRID
    modes = _gate_modes(cfg["gate"], in_grid)
    kw = {k: float(cfg[k]) for k in ("filter_fwhm", "pm_fwhm", "up_center") if k in cfg}
    sfg = SfgConfig(modes, in_grid=in_grid, up_grid=up_grid, **kw)
    basis = basis_from_spec(cfg.get("basis", {"kind": "hermite_gauss", "d": 7}), in_grid)
    return sfg, basis


def _gate_modes(gate, grid):
    """Gate from ``{"coeffs": ...}`` or a list of ``{"mode", "re", "im"}``."""
    if isinstance(gate, dict):
        coeffs = gate["coeffs"]
        if isinstance(coeffs, dict):
            coeffs = {int(k): io.parse_complex(v) for k, v in coeffs.items()}
        else:
            coeffs = [io.parse_complex(v) for v in coeffs]
        return hg_gate(coeffs, center=gate.get("center", 795.0),
                       fwhm=gate.get("fwhm", 4.0), grid=grid)
    terms = []
    for t in gate:
        c = complex(t.get("re", 0.0), t.get("im", 0.0))
        mode = t["mode"]
        if "hg" in mode:
            m = make_hg_mode(mode["hg"], 795.0, 4.0, grid)
        else:
            amp = np.asarray(mode["custom"]["re"], float)
            if "im" in mode["custom"]:
                amp = amp + 1j * np.asarray(mode["custom"]["im"], float)
            if amp.shape != (grid.n_points,):
                raise InvalidInputError("custom gate mode must be sampled on in_grid")
            m = SpectralMode.from_samples(grid, amp)
        terms.append((c, m))
    return tuple(terms)


def _basis_ref(spec):
    spec = spec or {"kind": "hermite_gauss", "d": 7}
    return ",".join(f"{k}={spec[k]}" for k in sorted(spec))


def _metrics(chi, ideal=None):
    dm = dominant_mode(chi)
    return {"p0": dm.p0, "purity": purity(chi),
            "effective_modes": effective_mode_count(chi),
            "fidelity_to_ideal": None if ideal is None else fidelity(chi, ideal),
            "dominant_degenerate": dm.degenerate, "dim": chi.dim}, dm


def _dominant_rows(dm, labels):
    c = dm.op.coeffs
    return [(i, labels[i], abs(c[i]) ** 2, float(np.angle(c[i])) if abs(c[i]) > 0 else 0.0)
            for i in range(c.shape[0])]


def _write_chi(out, name, chi, fmt, basis_ref, labels=None):
    if fmt == "csv":
        io.write_chi_csv(out / f"{name}.csv", chi, labels)
    else:
        io.write_json(out / f"{name}.json", io.chi_to_dict(chi, basis_ref, labels), "chi")


def cmd_sfg(cfg, out, fmt, seed):
    sfg, basis = _sfg_config(cfg)
    res = induced_subtraction(sfg, basis, int(cfg.get("n_keep", 10)))
    ideal = projector(ideal_operator(sfg, basis).coeffs, basis)
    io.write_transfer_csv(out / "transfer.csv", build_transfer(sfg),
                          int(cfg.get("heatmap_stride", 8)))
    io.write_rows(out / "schmidt.csv", ["index", "weight"],
                  enumerate(res.schmidt.weights))
    ref = _basis_ref(cfg.get("basis"))
    _write_chi(out, "chi", res.chi, fmt, ref)
    metrics, dm = _metrics(res.chi, ideal)
    metrics.update(schmidt_p0=res.p0, schmidt_residual=res.schmidt.residual,
                   dominant_leakage=float(res.leakages[0]))
    io.write_json(out / "metrics.json", metrics, "metrics")
    io.write_rows(out / "dominant_op.csv", ["index", "label", "probability", "phase"],
                  _dominant_rows(dm, basis.labels))
    return EXIT_OK


def _true_chi(spec, basis):
    kind = spec["kind"]
    if kind == "projector":
        return ideal_chi([io.parse_complex(v) for v in spec["coeffs"]], basis)
    if kind == "identity":
        d = basis.dim if basis is not None else int(spec["d"])
        return SubtractionMatrix(np.eye(d) / d, basis)
    if kind == "matrix":
        m = np.asarray(spec["re"], float) + 1j * np.asarray(spec.get("im", 0.0), float)
        return SubtractionMatrix(m, basis)
    if kind == "file":
        return io.chi_from_dict(io.read_json(spec["path"]), basis)
    if kind == "sfg":
        sfg, b = _sfg_config(spec["sfg"])
        return induced_subtraction(sfg, b).chi
    raise InvalidInputError(f"unknown chi kind {kind!r}")


def _tomo_settings(cfg, d, seed):
    n = float(cfg.get("mean_photons", 1.0))
    shots = int(cfg.get("shots", 1))
    if "kappa" in cfg:
        kappa = float(cfg["kappa"])
    else:
        # mean expected signal per diagonal probe is counts_per_diagonal
        per = float(cfg.get("counts_per_diagonal", 1e4))
        kappa = per * d / (max(n, 1e-300) * shots)
    if "dark_rate" in cfg:
        dark = float(cfg["dark_rate"])
    else:
        dark = float(cfg.get("dark_fraction", 0.01)) * kappa * n / d
    return TomographySettings(kappa=kappa, dark_rate=dark, shots=shots, seed=seed), n


def _reconstruct(records, cfg, dark, out, fmt, basis, ref, truth=None):
    est = SubtractionTomography(dark_rate=dark, max_iters=int(cfg.get("max_iters", 2000)),
                                rel_tol=float(cfg.get("rel_tol", 1e-10)), basis=basis)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        est.fit_records(records)
    labels = list(basis.labels) if basis is not None else None
    _write_chi(out, "chi_hat", est.chi_, fmt, ref, labels)
    metrics, dm = _metrics(est.chi_)
    report = dict(est.diagnostics_, purity=metrics["purity"], p0=metrics["p0"],
                  n_records=len(records),
                  fidelity=None if truth is None else fidelity(truth, est.chi_))
    io.write_json(out / "report.json", report, "tomo_report")
    io.write_rows(out / "dominant_op.csv", ["index", "label", "probability", "phase"],
                  _dominant_rows(dm, labels or [str(i) for i in range(est.chi_.dim)]))
    if not est.converged_:
        raise NumericalFailure("maximum-likelihood reconstruction did not converge")
    return report


def cmd_tomo(cfg, out, fmt, seed, mode):
    basis = basis_from_spec(cfg["basis"]) if "basis" in cfg else None
    ref = _basis_ref(cfg.get("basis"))
    if mode == "reconstruct":
        if "records" not in cfg:
            raise InvalidInputError("reconstruct needs 'records' (a records CSV path)")
        records = io.read_records_csv(cfg["records"])
        d = records[0].probe.dim
        if basis is not None and basis.dim != d:
            raise InvalidInputError("basis dimension does not match the records")
        _reconstruct(records, cfg, float(cfg.get("dark_rate", 0.0)), out, fmt,
                     basis, ref)
        return EXIT_OK
    if "chi" not in cfg:
        raise InvalidInputError(f"{mode} needs a 'chi' source")
    truth = _true_chi(cfg["chi"], basis)
    if basis is not None and truth.basis is not basis:
        truth = SubtractionMatrix(truth.entries, basis)
    settings, n = _tomo_settings(cfg, truth.dim, seed)
    records = simulate_counts(truth, standard_probe_set(truth.dim, n), settings,
                              noiseless=bool(cfg.get("noiseless", False)))
    io.write_records_csv(out / "records.csv", records)
    _write_chi(out, "chi_true", truth, fmt, ref)
    if mode == "roundtrip":
        _reconstruct(records, cfg, settings.dark_rate, out, fmt, basis, ref, truth)
    return EXIT_OK


def cmd_calibrate(cfg, out, fmt, seed):
    p0 = float(cfg["p0"])
    if "curve" in cfg:
        curve = io.read_curve_csv(cfg["curve"])
    else:
        w = cfg.get("weights", {"w0": 0.01, "w1": 0.9899, "w2": 1e-4})
        curve = simulate_curve(RealisticWeights(w["w0"], w["w1"], w["w2"]), p0,
                               float(cfg.get("kappa", 1.2e4)),
                               cfg.get("grid", DEFAULT_GRID), int(cfg.get("shots", 1)),
                               seed, bool(cfg.get("noiseless", False)))
        io.write_curve_csv(out / "curve.csv", curve)
    est = WeightCalibrator(p0=p0, w2_resolution=float(cfg.get("w2_resolution", 1e-3)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        est.fit_curve(curve)
    se = [None if not np.isfinite(v) else float(v)
          for v in (*est.stderr_, est.kappa_stderr_)]
    w = est.weights_
    fit = {"w0": w.w0, "w1": w.w1, "w2": w.w2, "kappa": est.kappa_, "p0": p0,
           "converged": est.converged_, "flags": list(est.flags_),
           "stderr": dict(zip(("w0", "w1", "w2", "kappa"), se))}
    io.write_json(out / "fit.json", fit, "fit")
    expected = est.predict(curve.mean_photons, curve.shots)
    io.write_rows(out / "residuals.csv",
                  ["mean_photons", "counts", "shots", "expected", "residual"],
                  zip(curve.mean_photons, curve.counts, curve.shots, expected,
                      curve.counts - expected))
    if not est.converged_:
        raise NumericalFailure("calibration fit did not converge")
    return EXIT_OK


def cmd_negativity(cfg, out, fmt, seed):
    params = SqueezeParams(float(cfg.get("squeezing_db", 4.0)), float(cfg.get("phase", 0.0)))
    chain = LossChain(float(cfg.get("t_in", 0.9)), float(cfg.get("t_fi", 0.9)))
    n_max = int(cfg.get("n_max", 30))
    h = heralded_state(params, float(cfg.get("w1", 0.99)), float(cfg.get("p0", 0.9)),
                       chain, n_max)
    w00 = wigner_origin(h.state)
    report = {"r_false": h.r_false, "r_corr": h.r_corr, "W00": w00,
              "W00_times_2pi": w00 * 2 * np.pi, "n_max": n_max,
              "mean_photons_input": mean_photons(squeezed_vacuum(params, n_max))}
    io.write_json(out / "negativity.json", report, "negativity")
    if "wigner_grid" in cfg:
        g = cfg["wigner_grid"]
        xs = np.linspace(g["x_min"], g["x_max"], int(g["n"]))
        W = wigner_grid(h.state, xs, xs)
        io.write_rows(out / "wigner.csv", ["x", "p", "W"],
                      ((xs[i], xs[j], W[j, i]) for j in range(xs.size)
                       for i in range(xs.size)))
    return EXIT_OK


def _load_chi(path):
    if str(path).endswith(".csv"):
        return io.read_chi_csv(path)
    return io.chi_from_dict(io.read_json(path))


def cmd_metrics(cfg, out, fmt, seed):
    chi = _load_chi(cfg["chi"])
    ref = _load_chi(cfg["reference"]) if "reference" in cfg else None
    metrics, dm = _metrics(chi, ref)
    io.write_json(out / "metrics.json", metrics, "metrics")
    io.write_rows(out / "dominant_op.csv", ["index", "label", "probability", "phase"],
                  _dominant_rows(dm, [str(i) for i in range(chi.dim)]))
    return EXIT_OK


COMMANDS = {"sfg": cmd_sfg, "calibrate": cmd_calibrate,
            "negativity": cmd_negativity, "metrics": cmd_metrics}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (defaults if omitted)")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--out", default="modesub_out", help="output directory")
    common.add_argument("--format", choices=("json", "csv"), default="json",
                        help="format of matrix outputs")
    ap = argparse.ArgumentParser(prog="modesub",
                                 description="Multimode photon-subtraction toolkit")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("sfg", parents=[common], help="simulate the SFG subtractor")
    tomo = sub.add_parser("tomo", parents=[common], help="process tomography")
    tomo.add_argument("mode", choices=("synth", "reconstruct", "roundtrip"))
    sub.add_parser("calibrate", parents=[common], help="fit realistic weights")
    sub.add_parser("negativity", parents=[common], help="heralded-state W(0,0)")
    sub.add_parser("metrics", parents=[common], help="metrics of a chi file")
    return ap


def _default_config(command):
    if command == "sfg":
        return {"gate": {"coeffs": [1.0]}}
    if command == "tomo":
        d = 7
        return {"chi": {"kind": "projector",
                        "coeffs": [(-1) ** i / np.sqrt(d) for i in range(d)]}}
    if command == "calibrate":
        return {"p0": 0.9}
    return {}


def run(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = (io.read_json(args.config) if args.config
               else _default_config(args.command))
        io.validate(cfg, f"{args.command}_config")
        seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
        if seed < 0:
            raise InvalidInputError("seed must be non-negative")
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "tomo":
            return cmd_tomo(cfg, out, args.format, seed, args.mode)
        return COMMANDS[args.command](cfg, out, args.format, seed)
    except ModesubError as exc:
        print(f"modesub {args.command}: error: {exc}", file=sys.stderr)
        return exit_code_for(exc)
    except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"modesub {args.command}: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def main(argv=None):
    threads = os.environ.get("MODESUB_THREADS")
    limit = int(threads) if threads and threads.isdigit() and int(threads) > 0 else None
    with threadpool_limits(limits=limit):
        return run(argv)


if __name__ == "__main__":
    sys.exit(main())
