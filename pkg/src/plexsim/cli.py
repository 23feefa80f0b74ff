"""Command-line entry point.

Subcommands:

    run        execute one scene file (reference + total runs)
    sweep      run a scene over a list of parameter values
    analyze    peak/Rabi/coupling/criteria/anticrossing/scaling reports
    mie        exact Mie cross sections to a spectrum file
    reproduce  the full reference-results pipeline with pass/fail table

Exit codes: 0 success, 1 usage or configuration error, 2 numerical
failure, 3 reproduction-gate failure.  PLEXSIM_THREADS caps the compute
thread count.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .constants import EV_NM
from .materials import gold_fit
from .mie import mie_cross_sections
from .monitors import SpectrumData, read_spectrum, write_spectrum
from .plexciton import (fit_anticrossing, fit_scaling_law, find_spectrum_peaks,
                        g_from_splitting, rabi_from_peaks, sqrtN_scale,
                        strong_coupling_check, DetuningPoint)
from .scene_config import ConfigError, bundled_scene_path, load_config, save_config
from .runner import run_scene, run_sweep

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_ACCEPTANCE = 0, 1, 2, 3


def _setup_threads():
    n = os.environ.get("PLEXSIM_THREADS")
    if n:
        try:
            import numba
            numba.set_num_threads(max(1, int(n)))
        except (ImportError, ValueError):
            pass


def _scene_path(arg):
    p = Path(arg)
    if p.exists():
        return p
    try:
        return bundled_scene_path(arg)
    except FileNotFoundError:
        raise ConfigError(f"scene {arg!r}: no such file or bundled scene")


def cmd_run(args):
    path = _scene_path(args.scene)
    cfg = load_config(path)
    if args.cell_nm:
        cfg.setdefault("grid", {})["cell_nm"] = args.cell_nm
    out = Path(args.out or cfg.get("outputs", {}).get("dir", f"runs/{cfg['name']}"))
    products = run_scene(cfg, out, base_dir=path.parent, quiet=args.quiet,
                         use_cache=not args.no_cache)
    peaks = find_spectrum_peaks(products.spectrum.wavelength_nm,
                                products.spectrum.sigma_scatt)
    print(f"run {cfg['name']}: wrote {products.out_dir}")
    for p in peaks:
        print(f"  sigma_scatt peak {p.wavelength_nm:.1f} nm  "
              f"height {p.height:.4g} nm^2  hwhm {p.hwhm_mev:.1f} meV")
    if products.mode_volume:
        for wl, rec in products.mode_volume.items():
            print(f"  mode volume @{wl} nm: {rec['v_m_nm3']:.0f} nm^3 "
                  f"({rec['definition']})")
    for w in products.manifest.get("warnings", []):
        print(f"  warning: {w}")
    return EXIT_OK


def cmd_sweep(args):
    path = _scene_path(args.scene)
    cfg = load_config(path)
    values = [float(v) for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigError("empty sweep value list")
    out = Path(args.out or f"runs/{cfg['name']}_sweep")
    result = run_sweep(cfg, args.parameter, values, out, base_dir=path.parent,
                       workers=args.workers, use_cache=not args.no_cache,
                       quiet=args.quiet)
    print(f"sweep over {args.parameter}: table {result.table_path}")
    failures = 0
    for row in result.rows:
        if "error" in row:
            failures += 1
            print(f"  {row['value']:g}: FAILED {row['error']}")
        else:
            pk = ", ".join(f"{w:.1f}" for w in row["peaks_nm"])
            print(f"  {row['value']:g}: peaks [{pk}] nm")
    if failures:
        print(f"  {failures}/{len(result.rows)} runs failed")
        return EXIT_NUMERICAL
    return EXIT_OK


def _require(args, names):
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        raise ConfigError(f"mode {args.mode!r} requires --" +
                          ", --".join(m.replace('_', '-') for m in missing))


def cmd_analyze(args):
    spectra = [read_spectrum(p) for p in args.spectra]
    report = {"mode": args.mode}
    echo = {k: getattr(args, k) for k in
            ("gamma_ex_mev", "gamma_lsp_mev", "n_emitters") if getattr(args, k) is not None}
    report["inputs"] = echo

    if args.mode == "peaks":
        for path, spec in zip(args.spectra, spectra):
            peaks = find_spectrum_peaks(spec.wavelength_nm, spec.sigma_scatt,
                                        prominence_frac=args.prominence)
            report.setdefault("files", {})[str(path)] = [
                {"wavelength_nm": p.wavelength_nm, "height": p.height,
                 "hwhm_mev": p.hwhm_mev} for p in peaks]
    elif args.mode in ("rabi", "g", "criteria"):
        spec = spectra[0]
        peaks = find_spectrum_peaks(spec.wavelength_nm, spec.sigma_scatt,
                                    prominence_frac=args.prominence)
        if len(peaks) < 2:
            raise ConfigError(f"mode {args.mode!r}: two peaks required, found "
                              f"{len(peaks)}")
        lam1, lam2 = peaks[0].wavelength_nm, peaks[-1].wavelength_nm
        rabi = rabi_from_peaks(lam1, lam2)
        report["peaks_nm"] = [lam1, lam2]
        report["rabi_mev"] = rabi
        if args.mode in ("g", "criteria"):
            _require(args, ["gamma_ex_mev", "gamma_lsp_mev"])
            g = g_from_splitting(rabi, args.gamma_ex_mev, args.gamma_lsp_mev)
            report["g_mev"] = g
            n = args.n_emitters or 1
            report["g1_mev"] = sqrtN_scale(g, n)
            if args.mode == "criteria":
                v = strong_coupling_check(report["g1_mev"], args.gamma_ex_mev,
                                          args.gamma_lsp_mev)
                report["criteria"] = {
                    "exceeds_linewidth_difference": v.exceeds_linewidth_difference,
                    "exceeds_combined_loss": v.exceeds_combined_loss,
                    "strong_coupling": v.strong,
                    "thresholds_mev": [v.threshold_difference_mev,
                                       v.threshold_combined_mev],
                }
    elif args.mode == "anticrossing":
        _require(args, ["gamma_ex_mev", "gamma_lsp_mev", "exciton_nm", "table",
                        "bare_table"])
        hybrid = np.genfromtxt(args.table, names=True)
        bare = np.genfromtxt(args.bare_table, names=True)
        e_ex = EV_NM / args.exciton_nm
        points = []
        for row in np.atleast_1d(hybrid):
            if not (np.isfinite(row["peak1_nm"]) and np.isfinite(row["peak2_nm"])):
                continue
            match = np.atleast_1d(bare)[np.atleast_1d(bare)["value"] == row["value"]]
            if match.size == 0 or not np.isfinite(match[0]["peak1_nm"]):
                continue
            delta = (EV_NM / match[0]["peak1_nm"] - e_ex) * 1e3
            points.append(DetuningPoint(delta_mev=float(delta),
                                        lambda1_nm=float(row["peak1_nm"]),
                                        lambda2_nm=float(row["peak2_nm"])))
        n = args.n_emitters or 1
        fit = fit_anticrossing(points, n, args.gamma_ex_mev, args.gamma_lsp_mev)
        report["anticrossing"] = {
            "n_points": len(points), "g_mev": fit.g_mev, "e_ex_ev": fit.e_ex_ev,
            "rms_residual_mev": fit.rms_residual_mev,
            "min_splitting_mev": fit.min_splitting_mev,
            "min_splitting_delta_mev": fit.min_splitting_delta_mev,
        }
    elif args.mode == "scaling":
        table = np.genfromtxt(args.table, names=True) if args.table else None
        if table is None:
            raise ConfigError("mode 'scaling' requires --table from a sweep")
        fit = fit_scaling_law(table["value"], table["peak1_nm"])
        report["scaling"] = {"lambda0_nm": fit.lambda0_nm, "l0_nm": fit.l0_nm,
                             "alpha": fit.alpha, "r_squared": fit.r_squared}
    else:
        raise ConfigError(f"unknown analyze mode {args.mode!r}")

    text = json.dumps(report, indent=1, default=float)
    print(text)
    if args.json:
        Path(args.json).write_text(text)
    return EXIT_OK


def cmd_mie(args):
    gold = gold_fit().model
    wls = np.linspace(args.min_nm, args.max_nm, args.count)
    res = mie_cross_sections(args.radius_nm, gold, args.medium_index, wls)
    spec = SpectrumData(wavelength_nm=wls, sigma_scatt=res.sigma_scatt,
                        sigma_abs=res.sigma_abs, sigma_ext=res.sigma_ext)
    write_spectrum(args.out, spec)
    print(f"mie: wrote {args.out} (fitted-Au sphere r={args.radius_nm} nm)")
    return EXIT_OK


def cmd_reproduce(args):
    from .reproduce import run_reproduction
    ok = run_reproduction(skip_fdtd=args.skip_fdtd, cell_nm=args.resolution,
                          out_dir=Path(args.out), quiet=args.quiet)
    return EXIT_OK if ok else EXIT_ACCEPTANCE


def main(argv=None):
    _setup_threads()
    ap = argparse.ArgumentParser(prog="plexsim",
                                 description="FDTD nanophotonics scattering and "
                                             "plasmon-exciton coupling analysis")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute one scene file")
    p.add_argument("scene", help="scene YAML path or bundled scene name")
    p.add_argument("--out", help="output directory")
    p.add_argument("--cell-nm", type=float, dest="cell_nm")
    p.add_argument("--no-cache", action="store_true")
    p.add_argument("--quiet", action="store_true", default=False)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="sweep a scene parameter")
    p.add_argument("scene")
    p.add_argument("parameter", help="dotted config path, e.g. shapes.0.length_nm")
    p.add_argument("values", help="comma-separated values")
    p.add_argument("--out")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--no-cache", action="store_true")
    p.add_argument("--quiet", action="store_true", default=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("analyze", help="spectrum analysis chain")
    p.add_argument("mode", choices=["peaks", "rabi", "g", "criteria",
                                    "anticrossing", "scaling"])
    p.add_argument("spectra", nargs="*", help="spectrum files")
    p.add_argument("--gamma-ex-mev", type=float, dest="gamma_ex_mev")
    p.add_argument("--gamma-lsp-mev", type=float, dest="gamma_lsp_mev")
    p.add_argument("--n-emitters", type=int, dest="n_emitters")
    p.add_argument("--exciton-nm", type=float, dest="exciton_nm")
    p.add_argument("--prominence", type=float, default=0.05)
    p.add_argument("--table", help="sweep dispersion table (scaling/anticrossing)")
    p.add_argument("--bare-table", dest="bare_table",
                   help="bare-particle dispersion table (anticrossing detunings)")
    p.add_argument("--json", help="also write the report as JSON")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("mie", help="Mie oracle spectrum for a fitted-Au sphere")
    p.add_argument("radius_nm", type=float)
    p.add_argument("out")
    p.add_argument("--medium-index", type=float, default=1.0, dest="medium_index")
    p.add_argument("--min-nm", type=float, default=500.0, dest="min_nm")
    p.add_argument("--max-nm", type=float, default=800.0, dest="max_nm")
    p.add_argument("--count", type=int, default=151)
    p.set_defaults(func=cmd_mie)

    p = sub.add_parser("reproduce", help="reference-results pipeline")
    p.add_argument("--skip-fdtd", action="store_true", dest="skip_fdtd")
    p.add_argument("--resolution", type=float, default=2.0,
                   help="FDTD cell size in nm (2 is the reference; coarser "
                        "values are flagged)")
    p.add_argument("--out", default="runs/reproduce")
    p.add_argument("--quiet", action="store_true", default=True)
    p.set_defaults(func=cmd_reproduce)

    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # numerical/runtime failures
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
