"""Run orchestration: scene execution, output files, manifests, caching,
and parameter sweeps with shared reference runs.

Each run writes into its output directory:

    spectrum.tsv        cross sections (monitors.write_spectrum format)
    maps_<key>.npz      |E|/|E0| enhancement maps per recorded plane
    mode_volume.json    mode-volume result (when enabled)
    manifest.json       full config, grid, versions, timings, warnings

Runs are content-addressed: re-running an identical configuration reuses
the cached outputs (delete the directory to force a rerun).
"""

from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .constants import nm_to_ev
from .fdtd import PlaneWaveSource, run_scattering
from .monitors import (SpectrumData, cross_sections_from_run, enhancement_map,
                       mode_volume, read_spectrum, write_spectrum)
from .plexciton import find_spectrum_peaks
from .scene_config import build_scene, monitor_wavelengths, set_by_path, validate_config


def config_hash(cfg):
    blob = json.dumps(cfg, sort_keys=True).encode() + __version__.encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def version_string(cfg):
    return f"plexsim-{__version__}+cfg.{config_hash(cfg)[:7]}"


@dataclass
class RunProducts:
    spectrum: SpectrumData
    manifest: dict
    out_dir: Path

    def map_path(self, key):
        return self.out_dir / f"maps_{key.replace('@', '_')}.npz"

    def load_map(self, key, which="ratio"):
        with np.load(self.map_path(key)) as data:
            return {k: data[k] for k in data.files}[which]

    @property
    def mode_volume(self):
        path = self.out_dir / "mode_volume.json"
        if not path.exists():
            return None
        return json.loads(path.read_text())


def _stop_params(cfg):
    stop = cfg.get("stop", {})
    return dict(max_steps=int(stop.get("max_steps", 200_000)),
                decay_threshold=float(stop.get("decay_threshold", 1e-6)))


def _grid_params(cfg):
    g = cfg.get("grid", {})
    return dict(cell_nm=float(g.get("cell_nm", 2.0)),
                courant=float(g.get("courant", 0.9)),
                cpml_cells=int(g.get("cpml_cells", 8)),
                dft_stride=int(g.get("dft_stride", 8)))


def _source(cfg):
    s = cfg.get("source", {})
    return PlaneWaveSource(
        polarization=tuple(s.get("polarization", (1.0, 0.0, 0.0))),
        propagation=tuple(s.get("propagation", (0.0, 0.0, -1.0))),
        center_nm=float(s.get("center_nm", 640.0)),
        band_nm=tuple(s.get("band_nm", (500.0, 800.0))))


def run_scene(cfg, out_dir, *, base_dir=".", reference_data=None,
              domain_nm=None, monitor_bounds_nm=None, use_cache=True,
              quiet=True):
    """Execute one scene configuration (reference + total) and persist
    results; returns the cached products when the manifest matches."""
    cfg = validate_config(cfg)
    out_dir = Path(out_dir)
    h = config_hash(cfg)
    manifest_path = out_dir / "manifest.json"
    if use_cache and manifest_path.exists():
        try:
            manifest = json.loads(manifest_path.read_text())
        except json.JSONDecodeError:
            manifest = {}
        if manifest.get("config_hash") == h and (out_dir / "spectrum.tsv").exists():
            return RunProducts(spectrum=read_spectrum(out_dir / "spectrum.tsv"),
                               manifest=manifest, out_dir=out_dir)

    scene = build_scene(cfg, base_dir=base_dir)
    wavelengths = monitor_wavelengths(cfg)
    mon = cfg["monitors"]
    maps = [(m["plane"], float(m["offset_nm"])) for m in mon.get("maps", [])]
    map_wls = tuple(mon.get("map_wavelengths_nm", (640.0,)))
    grid = _grid_params(cfg)
    t0 = time.perf_counter()
    run = run_scattering(
        scene, _source(cfg), grid["cell_nm"], wavelengths,
        courant=grid["courant"], cpml_cells=grid["cpml_cells"],
        dft_stride=grid["dft_stride"],
        monitor_margin_nm=float(mon.get("monitor_margin_nm", 12.0)),
        source_gap_nm=float(mon.get("source_gap_nm", 8.0)),
        map_planes=maps, map_wavelengths_nm=map_wls,
        volume_monitor=bool(mon.get("mode_volume", False)),
        domain_nm=domain_nm, monitor_bounds_nm=monitor_bounds_nm,
        reference_data=reference_data, quiet=quiet, **_stop_params(cfg))
    spectrum = cross_sections_from_run(run, meta={"name": cfg["name"]})

    out_dir.mkdir(parents=True, exist_ok=True)
    write_spectrum(out_dir / "spectrum.tsv", spectrum)
    for plane, off in maps:
        key = f"{plane}@{off:g}"
        per_wl = {}
        for wl in map_wls:
            m = enhancement_map(run, key, wl)
            per_wl[f"ratio_{wl:g}"] = m.ratio
            per_wl["axis0_nm"] = m.axes_nm[0]
            per_wl["axis1_nm"] = m.axes_nm[1]
        per_wl["ratio"] = per_wl[f"ratio_{map_wls[0]:g}"]
        np.savez_compressed(out_dir / f"maps_{plane}_{off:g}.npz", **per_wl)
    vm_payload = None
    if mon.get("mode_volume"):
        vm_payload = {}
        for wl in map_wls:
            mv = mode_volume(run, wl)
            vm_payload[f"{wl:g}"] = {
                "v_m_nm3": mv.v_m_nm3, "definition": mv.definition,
                "max_location_nm": list(mv.max_location_nm),
                "max_on_boundary": mv.max_on_boundary,
            }
        (out_dir / "mode_volume.json").write_text(json.dumps(vm_payload, indent=1))

    warnings = [w for w in (run.stats_total.warning, run.stats_ref.warning) if w]
    manifest = {
        "name": cfg["name"], "config": cfg, "config_hash": h,
        "version": version_string(cfg),
        "grid": {k: (list(v) if isinstance(v, tuple) else v)
                 for k, v in run.sim_meta.items()},
        "steps_total": run.stats_total.steps, "steps_reference": run.stats_ref.steps,
        "terminated": run.stats_total.terminated_by,
        "decay_ratio": run.stats_total.decay_ratio,
        "wall_seconds": round(time.perf_counter() - t0, 2),
        "warnings": warnings,
    }
    manifest_path.write_text(json.dumps(manifest, indent=1))
    products = RunProducts(spectrum=spectrum, manifest=manifest, out_dir=out_dir)
    products._run = run   # in-process reuse (sweeps share the reference)
    return products


def _sweep_domains(cfg, parameter, values, base_dir):
    """One domain/monitor box covering every sweep value, so a single
    reference run serves the whole sweep."""
    from .fdtd.engine import _auto_domain
    mon = cfg["monitors"]
    grid = _grid_params(cfg)
    pml_nm = grid["cpml_cells"] * grid["cell_nm"]
    lo = None
    hi = None
    for v in values:
        scene = build_scene(set_by_path(cfg, parameter, v), base_dir=base_dir)
        b = scene.bounds()
        lo = b[0] if lo is None else np.minimum(lo, b[0])
        hi = b[1] if hi is None else np.maximum(hi, b[1])
    hull = type("Hull", (), {"bounds": lambda self: (lo, hi)})()
    return _auto_domain(hull, float(mon.get("source_gap_nm", 8.0)),
                        float(mon.get("monitor_margin_nm", 12.0)),
                        pml_nm, grid["cell_nm"])


@dataclass
class SweepResult:
    parameter: str
    values: list
    rows: list          # one dict per value
    table_path: Path


def run_sweep(cfg, parameter, values, out_dir, *, base_dir=".", workers=1,
              use_cache=True, quiet=True, prominence_frac=0.03) -> SweepResult:
    """One run per parameter value plus a combined dispersion table.

    Single-run failures are recorded and the sweep continues.  Within a
    sweep all runs share one domain, so the (scatterer-free) reference run
    is computed once and reused.
    """
    values = list(values)
    if not values:
        raise ValueError("empty sweep value list")
    cfg = validate_config(cfg)
    out_dir = Path(out_dir)
    domain_nm, monitor_nm = _sweep_domains(cfg, parameter, values, base_dir)
    rows = []
    jobs = []
    for v in values:
        sub = set_by_path(cfg, parameter, v)
        sub["name"] = f"{cfg['name']}_{parameter.split('.')[-1]}_{v:g}"
        jobs.append((v, sub, out_dir / sub["name"]))

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_sweep_job, v, sub, d, base_dir, domain_nm,
                                   monitor_nm, use_cache, prominence_frac)
                       for v, sub, d in jobs]
            for (v, _, _), fut in zip(jobs, futures):
                try:
                    rows.append(fut.result())
                except Exception as exc:
                    rows.append({"value": v, "error": f"{type(exc).__name__}: {exc}"})
    else:
        reference = None
        for v, sub, d in jobs:
            try:
                products = run_scene(sub, d, base_dir=base_dir,
                                     reference_data=reference,
                                     domain_nm=domain_nm,
                                     monitor_bounds_nm=monitor_nm,
                                     use_cache=use_cache, quiet=quiet)
                if getattr(products, "_run", None) is not None:
                    reference = products._run
                rows.append(_row_from_products(v, sub, products, prominence_frac))
            except Exception as exc:  # sweep continues, failure recorded
                rows.append({"value": v, "error": f"{type(exc).__name__}: {exc}"})

    table_path = out_dir / "dispersion.tsv"
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(table_path, "w") as fh:
        fh.write("value\tpeak1_nm\tpeak2_nm\tpeak1_height\tpeak2_height\terror\n")
        for r in rows:
            fh.write("%g\t%s\t%s\t%s\t%s\t%s\n" % (
                r["value"],
                "%.3f" % r["peaks_nm"][0] if r.get("peaks_nm") else "",
                "%.3f" % r["peaks_nm"][-1] if r.get("peaks_nm", []) and len(r["peaks_nm"]) > 1 else "",
                "%.4g" % r["heights"][0] if r.get("heights") else "",
                "%.4g" % r["heights"][-1] if r.get("heights", []) and len(r["heights"]) > 1 else "",
                r.get("error", "")))
    return SweepResult(parameter=parameter, values=values, rows=rows,
                       table_path=table_path)


def _sweep_job(v, sub, out_dir, base_dir, domain_nm, monitor_nm, use_cache,
               prominence_frac):
    products = run_scene(sub, out_dir, base_dir=base_dir, domain_nm=domain_nm,
                         monitor_bounds_nm=monitor_nm, use_cache=use_cache)
    return _row_from_products(v, sub, products, prominence_frac)


def _row_from_products(v, sub, products, prominence_frac):
    spec = products.spectrum
    peaks = find_spectrum_peaks(spec.wavelength_nm, spec.sigma_scatt,
                                prominence_frac=prominence_frac)
    return {
        "value": v,
        "peaks_nm": [p.wavelength_nm for p in peaks],
        "heights": [p.height for p in peaks],
        "hwhm_mev": [p.hwhm_mev for p in peaks],
        "out_dir": str(products.out_dir),
    }
