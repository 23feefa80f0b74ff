"""Frequency-domain reductions: Poynting flux, cross sections, field maps,
mode volume, and the spectrum file format.

Cross-section convention: the incident irradiance is the net downward
Poynting flux of the *reference* run through the monitor box's top face,
divided by the face area.  In vacuum this is exactly the incident plane
wave's irradiance; above a substrate it equals (1-R) times it, which keeps
spectral shapes clean (no standing-wave ripple in the normalization).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .constants import nm_to_ev, omega_from_nm

# Face name -> [(E comp, H comp, term sign, trapezoid axis)], outward sign.
# S_n on each face is the sum of two E x H* terms; the trapezoid axis is
# the in-plane direction where that component sits on integer nodes
# (sampled inclusive of both bounds by the engine's flux monitor).
_FACES = {
    "x-": ([("Ey", "Hz", +1.0, 1), ("Ez", "Hy", -1.0, 0)], -1.0),
    "x+": ([("Ey", "Hz", +1.0, 1), ("Ez", "Hy", -1.0, 0)], +1.0),
    "y-": ([("Ez", "Hx", +1.0, 0), ("Ex", "Hz", -1.0, 1)], -1.0),
    "y+": ([("Ez", "Hx", +1.0, 0), ("Ex", "Hz", -1.0, 1)], +1.0),
    "z-": ([("Ex", "Hy", +1.0, 1), ("Ey", "Hx", -1.0, 0)], -1.0),
    "z+": ([("Ex", "Hy", +1.0, 1), ("Ey", "Hx", -1.0, 0)], +1.0),
}


def _trapz_weights(shape, axis):
    w = np.ones(shape[axis])
    w[0] = w[-1] = 0.5
    return w.reshape((1, -1) if axis == 1 else (-1, 1))


class MonitorError(ValueError):
    pass


@dataclass(frozen=True)
class SpectrumRecord:
    """One spectral sample; sigma_ext = sigma_scatt + sigma_abs holds by
    construction."""

    wavelength_nm: float
    sigma_scatt: float
    sigma_abs: float
    sigma_ext: float


@dataclass
class SpectrumData:
    """Cross-section spectra in nm² on a wavelength grid."""

    wavelength_nm: np.ndarray
    sigma_scatt: np.ndarray
    sigma_abs: np.ndarray
    sigma_ext: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.wavelength_nm.size
        if not (self.sigma_scatt.size == self.sigma_abs.size
                == self.sigma_ext.size == n):
            raise MonitorError("spectrum columns must share one grid")

    @property
    def energy_ev(self):
        return nm_to_ev(self.wavelength_nm)

    def records(self):
        return [SpectrumRecord(float(w), float(s), float(a), float(e))
                for w, s, a, e in zip(self.wavelength_nm, self.sigma_scatt,
                                      self.sigma_abs, self.sigma_ext)]


def _face_power(face_arrays, face_name, cell_nm, minus=None):
    """Outward-normal-projected 0.5 Re(E x H*) integrated over one face."""
    terms, sign = _FACES[face_name]
    dA = cell_nm * cell_nm
    out = None
    for ek, hk, tsign, taxis in terms:
        e = face_arrays[ek]
        h = face_arrays[hk]
        if minus is not None:
            e = e - minus[ek]
            h = h - minus[hk]
        s = (e * np.conj(h)).real
        w = _trapz_weights(s.shape[1:], taxis)
        contrib = tsign * 0.5 * dA * np.sum(s * w[None, :, :], axis=(1, 2))
        out = contrib if out is None else out + contrib
    return sign * out


def flux_spectrum(flux_box, cell_nm, minus=None):
    """Net outward power spectrum through a closed flux box.

    `flux_box` is an engine FluxBoxMonitor; pass `minus` (another box with
    identical layout, e.g. the reference run's) to evaluate the flux of
    the difference fields (scattered-field flux).
    """
    total = np.zeros(flux_box.omegas.size)
    for name in _FACES:
        fb = minus.face[name] if minus is not None else None
        total += _face_power(flux_box.face[name], name, cell_nm, minus=fb)
    return total


def face_power_down(flux_box, cell_nm, name="z+"):
    """Net *downward* power through one z-face (used for normalization)."""
    return -_face_power(flux_box.face[name], name, cell_nm) / _FACES[name][1]


def incident_irradiance(run):
    """Reference-run irradiance spectrum at the monitor top face (power/nm²)."""
    box = run.flux_ref
    area = ((box.i1 - box.i0) * (box.j1 - box.j0)) * run.cell_nm ** 2
    return face_power_down(box, run.cell_nm, "z+") / area


def cross_sections(scat_flux, total_flux, incident, wavelengths_nm,
                   meta=None) -> SpectrumData:
    """σ_scatt = P_scat/I, σ_abs = -P_total/I, σ_ext = σ_scatt + σ_abs.

    Frequency samples with vanishing incident irradiance are dropped with
    a warning.
    """
    scat_flux = np.asarray(scat_flux, dtype=float)
    total_flux = np.asarray(total_flux, dtype=float)
    incident = np.asarray(incident, dtype=float)
    wl = np.asarray(wavelengths_nm, dtype=float)
    if not (scat_flux.shape == total_flux.shape == incident.shape == wl.shape):
        raise MonitorError("flux spectra must share one frequency grid")
    good = incident > 1e-14 * np.max(np.abs(incident))
    if not np.all(good):
        warnings.warn(f"dropping {int(np.sum(~good))} samples with ~zero "
                      "incident irradiance", stacklevel=2)
    s = scat_flux[good] / incident[good]
    a = -total_flux[good] / incident[good]
    return SpectrumData(wavelength_nm=wl[good], sigma_scatt=s, sigma_abs=a,
                        sigma_ext=s + a, meta=meta or {})


def cross_sections_from_run(run, meta=None) -> SpectrumData:
    """Full reduction of a two-run ScatteringRun to spectra in nm²."""
    p_scat = flux_spectrum(run.flux_total, run.cell_nm, minus=run.flux_ref)
    p_tot = flux_spectrum(run.flux_total, run.cell_nm)
    inc = incident_irradiance(run)
    m = dict(meta or {})
    m.setdefault("cell_nm", run.cell_nm)
    for tag, stats in (("total", run.stats_total), ("reference", run.stats_ref)):
        if stats.warning:
            m[f"warning_{tag}"] = stats.warning
    return cross_sections(p_scat, p_tot, inc, run.wavelengths_nm, meta=m)


# ---------------------------------------------------------------------------
# Field-enhancement maps
# ---------------------------------------------------------------------------

@dataclass
class EnhancementMap:
    """|E_total| / |E_reference| per node on a monitor plane."""

    axis: str
    wavelength_nm: float
    ratio: np.ndarray
    axes_nm: tuple       # 1-D coordinate arrays of the two in-plane axes


def _magnitude_sq(ex, ey, ez, fi):
    return (np.abs(ex[fi]) ** 2 + np.abs(ey[fi]) ** 2 + np.abs(ez[fi]) ** 2)


def enhancement_map(run, plane_key, wavelength_nm) -> EnhancementMap:
    """Per-pixel magnitude ratio at one recorded map wavelength."""
    if plane_key not in run.planes_total:
        raise MonitorError(f"no plane monitor {plane_key!r}; have "
                           f"{sorted(run.planes_total)}")
    mon_t = run.planes_total[plane_key]
    mon_r = run.planes_ref[plane_key]
    lam = omega_from_nm(wavelength_nm)
    match = np.where(np.isclose(mon_t.omegas, lam, rtol=1e-9))[0]
    if match.size == 0:
        have = [f"{2*np.pi*299.792458/w:.1f}" for w in mon_t.omegas]
        raise MonitorError(
            f"wavelength {wavelength_nm} nm not recorded; available: {have}")
    fi = int(match[0])
    et = _magnitude_sq(*mon_t.colocated(), fi)
    er = _magnitude_sq(*mon_r.colocated(), fi)
    floor = 1e-12 * float(np.max(er))
    ratio = np.sqrt(et / np.maximum(er, floor))
    cell = run.cell_nm
    (x0, x1), (y0, y1), (z0, z1) = run.monitor_bounds_nm
    if mon_t.axis == "z":
        axes = (x0 + cell * np.arange(ratio.shape[0]),
                y0 + cell * np.arange(ratio.shape[1]))
    else:
        axes = (x0 + cell * np.arange(ratio.shape[0]),
                z0 + cell * np.arange(ratio.shape[1]))
    return EnhancementMap(axis=mon_t.axis, wavelength_nm=float(wavelength_nm),
                          ratio=ratio, axes_nm=axes)


# ---------------------------------------------------------------------------
# Mode volume
# ---------------------------------------------------------------------------

@dataclass
class ModeVolumeResult:
    v_m_nm3: float
    wavelength_nm: float
    definition: str           # "brillouin" or "plain"
    max_location_nm: tuple
    max_on_boundary: bool
    warning: str | None = None


def mode_volume_from_arrays(ex, ey, ez, weight, cell_nm, origin_nm=(0, 0, 0),
                            wavelength_nm=0.0, definition="brillouin"):
    """V_m = integral(u) / max(u) with u = 0.5 * weight * |E|^2 on nodes.

    `weight` is Re d(omega*eps)/domega (Brillouin) or Re eps (plain),
    volume-averaged on the same node lattice as the co-located fields.
    """
    e2 = np.abs(ex) ** 2 + np.abs(ey) ** 2 + np.abs(ez) ** 2
    u = 0.5 * weight * e2
    umax = float(np.max(u))
    if umax <= 0:
        raise MonitorError("energy density is zero over the monitor volume")
    loc = np.unravel_index(int(np.argmax(u)), u.shape)
    on_edge = any(i == 0 or i == n - 1 for i, n in zip(loc, u.shape))
    warning = None
    if on_edge:
        warning = ("max energy density on the monitor boundary; "
                   "enlarge the volume monitor")
        warnings.warn(warning, stacklevel=2)
    vm = float(np.sum(u, dtype=np.float64)) * cell_nm ** 3 / umax
    where = tuple(float(o + i * cell_nm) for o, i in zip(origin_nm, loc))
    return ModeVolumeResult(v_m_nm3=vm, wavelength_nm=wavelength_nm,
                            definition=definition, max_location_nm=where,
                            max_on_boundary=on_edge, warning=warning)


def mode_volume(run, wavelength_nm, definition="brillouin") -> ModeVolumeResult:
    """Mode volume of the total-run field at one recorded wavelength."""
    mon = run.volume_total
    if mon is None:
        raise MonitorError("run has no volume monitor")
    lam = omega_from_nm(wavelength_nm)
    match = np.where(np.isclose(mon.omegas, lam, rtol=1e-9))[0]
    if match.size == 0:
        raise MonitorError(f"wavelength {wavelength_nm} nm not recorded")
    fi = int(match[0])
    ex, ey, ez = mon.colocated()
    io, jo, ko = mon.node_index_origin()
    nx, ny, nz = ex.shape[1:]
    if definition == "brillouin":
        wfull = run.grid_cc.d_omega_eps_grid(lam)
    elif definition == "plain":
        wfull = np.zeros(run.grid_cc.shape)
        for m, mat in enumerate(run.grid_cc.materials):
            wfull += run.grid_cc.fractions[m].astype(np.float64) * np.real(mat.eps(lam))
    else:
        raise MonitorError("definition must be 'brillouin' or 'plain'")
    weight = wfull[io:io + nx, jo:jo + ny, ko:ko + nz]
    return mode_volume_from_arrays(ex[fi], ey[fi], ez[fi], weight, run.cell_nm,
                                   origin_nm=run.volume_origin_nm,
                                   wavelength_nm=float(wavelength_nm),
                                   definition=definition)


# ---------------------------------------------------------------------------
# Spectrum file format
# ---------------------------------------------------------------------------

SPECTRUM_COLUMNS = ("wavelength_nm", "energy_ev", "sigma_scatt_nm2",
                    "sigma_abs_nm2", "sigma_ext_nm2")


def write_spectrum(path, spectrum: SpectrumData):
    table = np.column_stack([spectrum.wavelength_nm, spectrum.energy_ev,
                             spectrum.sigma_scatt, spectrum.sigma_abs,
                             spectrum.sigma_ext])
    np.savetxt(path, table, fmt="%.10g", delimiter="\t",
               header="\t".join(SPECTRUM_COLUMNS), comments="")


def read_spectrum(path) -> SpectrumData:
    data = np.genfromtxt(path, names=True)
    try:
        return SpectrumData(
            wavelength_nm=np.atleast_1d(data["wavelength_nm"]),
            sigma_scatt=np.atleast_1d(data["sigma_scatt_nm2"]),
            sigma_abs=np.atleast_1d(data["sigma_abs_nm2"]),
            sigma_ext=np.atleast_1d(data["sigma_ext_nm2"]))
    except (KeyError, ValueError) as exc:
        raise MonitorError(f"{path}: not a spectrum file "
                           f"(columns {SPECTRUM_COLUMNS})") from exc
