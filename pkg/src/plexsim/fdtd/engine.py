"""Time-domain engine: ADE dispersive Yee updates, CPML, DFT monitors,
and the two-run scattered-field scattering pipeline.

Field normalization: E is stored as-is, H as Z0*H, and the vacuum update
is dE/dt = c curl H, dH/dt = -c curl E with c in nm/fs.  Power ratios are
therefore independent of any absolute field scale.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..constants import C_NM_FS, omega_from_nm
from ..geometry import Scene, voxelize
from .grid import GridSpec, cpml_profiles, make_grid
from .source import PlaneWaveSource
from . import kernels as K

_E_OFFSETS = {"x": (0.5, 0.0, 0.0), "y": (0.0, 0.5, 0.0), "z": (0.0, 0.0, 0.5)}


class EngineError(RuntimeError):
    pass


class InstabilityError(EngineError):
    def __init__(self, step, t_fs):
        super().__init__(f"non-finite fields at step {step} (t = {t_fs:.3f} fs)")
        self.step = step


@dataclass
class RunStats:
    steps: int
    t_final_fs: float
    wall_seconds: float
    peak_energy: float
    decay_ratio: float
    terminated_by: str           # "decay" or "max_steps"
    warning: str | None = None


class FluxBoxMonitor:
    """Running DFT of tangential E/H on the six faces of an index box.

    Bounds are integer node planes (i0, i1, j0, j1, k0, k1).  Each
    Poynting term samples its E (and face-averaged H) at the native Yee
    transverse positions: along the axis where the component sits at half
    positions the face cells are covered by midpoints; along the axis
    where it sits on integer nodes the samples run inclusive of both
    bounds and get trapezoid weights in the reduction.  This keeps the
    surface quadrature second order, so a through-going plane wave's net
    box flux cancels cleanly.
    """

    # comp -> (plane tags, half axis, trapezoid axis) per face orientation.
    def __init__(self, name, bounds_idx, omegas):
        self.name = name
        self.i0, self.i1, self.j0, self.j1, self.k0, self.k1 = bounds_idx
        if not (self.i0 < self.i1 and self.j0 < self.j1 and self.k0 < self.k1):
            raise EngineError(f"flux box {name}: empty index bounds {bounds_idx}")
        self.omegas = np.asarray(omegas, dtype=float)
        nf = self.omegas.size
        nx, ny, nz = self.i1 - self.i0, self.j1 - self.j0, self.k1 - self.k0

        def acc(a, b):
            return np.zeros((nf, a, b), dtype=np.complex128)

        self.face = {}
        for tag in ("z-", "z+"):
            self.face[tag] = {"Ex": acc(nx, ny + 1), "Hy": acc(nx, ny + 1),
                              "Ey": acc(nx + 1, ny), "Hx": acc(nx + 1, ny)}
        for tag in ("x-", "x+"):
            self.face[tag] = {"Ey": acc(ny, nz + 1), "Hz": acc(ny, nz + 1),
                              "Ez": acc(ny + 1, nz), "Hy": acc(ny + 1, nz)}
        for tag in ("y-", "y+"):
            self.face[tag] = {"Ez": acc(nx + 1, nz), "Hx": acc(nx + 1, nz),
                              "Ex": acc(nx, nz + 1), "Hz": acc(nx, nz + 1)}

    def accumulate_e(self, F, cr, ci):
        i0, i1, j0, j1, k0, k1 = self.i0, self.i1, self.j0, self.j1, self.k0, self.k1
        for kp, tag in ((k0, "z-"), (k1, "z+")):
            K.acc_plane_z(F["Ex"], kp, i0, i1, j0, j1 + 1, self.face[tag]["Ex"], cr, ci)
            K.acc_plane_z(F["Ey"], kp, i0, i1 + 1, j0, j1, self.face[tag]["Ey"], cr, ci)
        for ip, tag in ((i0, "x-"), (i1, "x+")):
            K.acc_plane_x(F["Ey"], ip, j0, j1, k0, k1 + 1, self.face[tag]["Ey"], cr, ci)
            K.acc_plane_x(F["Ez"], ip, j0, j1 + 1, k0, k1, self.face[tag]["Ez"], cr, ci)
        for jp, tag in ((j0, "y-"), (j1, "y+")):
            K.acc_plane_y(F["Ez"], jp, i0, i1 + 1, k0, k1, self.face[tag]["Ez"], cr, ci)
            K.acc_plane_y(F["Ex"], jp, i0, i1, k0, k1 + 1, self.face[tag]["Ex"], cr, ci)

    def accumulate_h(self, F, cr, ci):
        i0, i1, j0, j1, k0, k1 = self.i0, self.i1, self.j0, self.j1, self.k0, self.k1
        for kp, tag in ((k0, "z-"), (k1, "z+")):
            K.acc_plane_z_avg(F["Hy"], kp - 1, kp, i0, i1, j0, j1 + 1, self.face[tag]["Hy"], cr, ci)
            K.acc_plane_z_avg(F["Hx"], kp - 1, kp, i0, i1 + 1, j0, j1, self.face[tag]["Hx"], cr, ci)
        for ip, tag in ((i0, "x-"), (i1, "x+")):
            K.acc_plane_x_avg(F["Hz"], ip - 1, ip, j0, j1, k0, k1 + 1, self.face[tag]["Hz"], cr, ci)
            K.acc_plane_x_avg(F["Hy"], ip - 1, ip, j0, j1 + 1, k0, k1, self.face[tag]["Hy"], cr, ci)
        for jp, tag in ((j0, "y-"), (j1, "y+")):
            K.acc_plane_y_avg(F["Hx"], jp - 1, jp, i0, i1 + 1, k0, k1, self.face[tag]["Hx"], cr, ci)
            K.acc_plane_y_avg(F["Hz"], jp - 1, jp, i0, i1, k0, k1 + 1, self.face[tag]["Hz"], cr, ci)


class PlaneMonitor:
    """DFT of E over one grid plane (axis 'z' or 'y'), one-cell padded so
    components can be co-located onto nodes in postprocessing."""

    def __init__(self, name, axis, plane_idx, bounds_idx, omegas):
        self.name = name
        self.axis = axis
        self.plane_idx = plane_idx
        self.omegas = np.asarray(omegas, dtype=float)
        nf = self.omegas.size
        if axis == "z":
            self.i0, self.i1, self.j0, self.j1 = bounds_idx
            shape = (nf, self.i1 - self.i0, self.j1 - self.j0)
        elif axis == "y":
            self.i0, self.i1, self.k0, self.k1 = bounds_idx
            shape = (nf, self.i1 - self.i0, self.k1 - self.k0)
        else:
            raise EngineError("plane monitor axis must be 'z' or 'y'")
        self.acc = {c: np.zeros(shape, dtype=np.complex128) for c in ("Ex", "Ey", "Ez")}

    def accumulate_e(self, F, cr, ci):
        p = self.plane_idx
        if self.axis == "z":
            K.acc_plane_z(F["Ex"], p, self.i0, self.i1, self.j0, self.j1, self.acc["Ex"], cr, ci)
            K.acc_plane_z(F["Ey"], p, self.i0, self.i1, self.j0, self.j1, self.acc["Ey"], cr, ci)
            K.acc_plane_z_avg(F["Ez"], p - 1, p, self.i0, self.i1, self.j0, self.j1, self.acc["Ez"], cr, ci)
        else:
            K.acc_plane_y(F["Ex"], p, self.i0, self.i1, self.k0, self.k1, self.acc["Ex"], cr, ci)
            K.acc_plane_y_avg(F["Ey"], p - 1, p, self.i0, self.i1, self.k0, self.k1, self.acc["Ey"], cr, ci)
            K.acc_plane_y(F["Ez"], p, self.i0, self.i1, self.k0, self.k1, self.acc["Ez"], cr, ci)

    def accumulate_h(self, F, cr, ci):
        pass

    def colocated(self):
        """|E| components interpolated to integer nodes; first/last samples
        of the patch are consumed by the averaging."""
        if self.axis == "z":
            ex = 0.5 * (self.acc["Ex"][:, :-1, :] + self.acc["Ex"][:, 1:, :])[:, :, 1:]
            ey = 0.5 * (self.acc["Ey"][:, :, :-1] + self.acc["Ey"][:, :, 1:])[:, 1:, :]
            ez = self.acc["Ez"][:, 1:, 1:]
            return ex, ey, ez
        ex = 0.5 * (self.acc["Ex"][:, :-1, :] + self.acc["Ex"][:, 1:, :])[:, :, 1:]
        ey = self.acc["Ey"][:, 1:, 1:]
        ez = 0.5 * (self.acc["Ez"][:, :, :-1] + self.acc["Ez"][:, :, 1:])[:, 1:, :]
        return ex, ey, ez


class VolumeMonitor:
    """DFT of E over an index box (padded), for mode-volume evaluation."""

    def __init__(self, name, bounds_idx, omegas):
        self.name = name
        self.i0, self.i1, self.j0, self.j1, self.k0, self.k1 = bounds_idx
        self.omegas = np.asarray(omegas, dtype=float)
        nf = self.omegas.size
        shape = (nf, self.i1 - self.i0, self.j1 - self.j0, self.k1 - self.k0)
        self.acc = {c: np.zeros(shape, dtype=np.complex128) for c in ("Ex", "Ey", "Ez")}

    def accumulate_e(self, F, cr, ci):
        for c in ("Ex", "Ey", "Ez"):
            K.acc_volume(F[c], self.i0, self.i1, self.j0, self.j1, self.k0, self.k1,
                         self.acc[c], cr, ci)

    def accumulate_h(self, F, cr, ci):
        pass

    def colocated(self):
        """E components averaged onto integer nodes of the interior box."""
        ex = 0.5 * (self.acc["Ex"][:, :-1] + self.acc["Ex"][:, 1:])[:, :, 1:, 1:]
        ey = 0.5 * (self.acc["Ey"][:, :, :-1] + self.acc["Ey"][:, :, 1:])[:, 1:, :, 1:]
        ez = 0.5 * (self.acc["Ez"][:, :, :, :-1] + self.acc["Ez"][:, :, :, 1:])[:, 1:, 1:, :]
        return ex, ey, ez

    def node_index_origin(self):
        return (self.i0 + 1, self.j0 + 1, self.k0 + 1)


@dataclass
class _PoleState:
    material_index: int
    component: str
    box: tuple            # (i0, j0, k0)
    weight: np.ndarray    # fill fraction at this component's positions
    coeffs: tuple         # (ca, cb, cc) per pole
    p_cur: list           # per pole arrays
    p_prev: list


class Simulation:
    """One FDTD job: immutable scene + grid, mutable field state."""

    def __init__(self, scene: Scene, domain_nm, cell_nm, *, courant=0.9,
                 cpml_cells=10, dft_stride=8, smallest_feature_nm=None,
                 metal_subcell="staircase"):
        self.scene = scene
        self.grid = make_grid(domain_nm, cell_nm, courant=courant,
                              cpml_cells=cpml_cells,
                              smallest_feature_nm=smallest_feature_nm)
        self.dft_stride = int(dft_stride)
        nx, ny, nz = self.grid.dims
        self.domain_nm = tuple(tuple(map(float, ax)) for ax in domain_nm)

        # Material rasterization at the three E-component offsets.  The
        # grid spans one extra node beyond the cell lattice; voxelize on the
        # node-count lattice directly.
        self._stagger = {}
        for comp, off in _E_OFFSETS.items():
            g = voxelize(scene, cell_nm,
                         [(lo, lo + (n - 1) * cell_nm) for (lo, _), n
                          in zip(self.domain_nm, (nx + 1, ny + 1, nz + 1))],
                         offset=off)
            self._stagger[comp] = g
        self.materials = self._stagger["x"].materials

        # Fractional metal cells mix permittivities through the lossy
        # plasmonic range (-2 < Re eps < 0) and produce a spurious red
        # absorption shell, so Drude-bearing materials are binarized at
        # half filling by default; dielectrics keep volume averaging.
        if metal_subcell not in ("staircase", "average"):
            raise EngineError("metal_subcell must be 'staircase' or 'average'")
        if metal_subcell == "staircase":
            for g in self._stagger.values():
                for mi, mat in enumerate(g.materials):
                    if any(p.kind == "drude" for p in mat.poles):
                        self._binarize(g, mi)

        self.inv_eps = {c: 1.0 / g.eps_inf_grid() for c, g in self._stagger.items()}

        # Time step with the ADE stability guard.
        dt = self.grid.dt_fs
        w_max = 0.0
        for m in self.materials:
            for p in m.poles:
                w_max = max(w_max, math.sqrt(p.omega_restoring ** 2
                                             + p.strength / m.eps_inf))
        while w_max > 0 and w_max * dt > 1.9:
            dt *= 0.99
        self.dt_fs = dt

        self._build_poles()
        self._build_cpml()

        self.fields = {c: np.zeros((nx, ny, nz)) for c in
                       ("Ex", "Ey", "Ez", "Hx", "Hy", "Hz")}
        self.monitors = []
        self._sheet_sources = []    # (component, k index, waveform)
        self._point_sources = []    # (component, (i,j,k), waveform)
        self.step_index = 0

    # -- construction helpers ------------------------------------------------

    @staticmethod
    def _binarize(grid, mi, threshold=0.5):
        """Snap material mi's fill fractions to {0, 1}, renormalizing the
        remaining materials so each cell still sums to one."""
        f = grid.fractions
        hard = (f[mi] >= threshold).astype(np.float32)
        rest = 1.0 - f[mi]
        scale = np.where(rest > 1e-9, (1.0 - hard) / np.maximum(rest, 1e-9), 0.0)
        for mj in range(f.shape[0]):
            if mj != mi:
                f[mj] *= scale
        f[mi] = hard

    def _build_poles(self):
        self._poles = []
        dt = self.dt_fs
        for mi, mat in enumerate(self.materials):
            if not mat.poles:
                continue
            for comp in ("x", "y", "z"):
                frac = self._stagger[comp].fractions[mi]
                idx = np.argwhere(frac > 0)
                if idx.size == 0:
                    continue
                (i0, j0, k0), (i1, j1, k1) = idx.min(axis=0), idx.max(axis=0) + 1
                w = frac[i0:i1, j0:j1, k0:k1].astype(np.float64)
                coeffs, pc, pp = [], [], []
                for p in mat.poles:
                    den = 1.0 + 0.5 * p.gamma * dt
                    w0 = p.omega_restoring
                    coeffs.append(((2.0 - w0 * w0 * dt * dt) / den,
                                   -(1.0 - 0.5 * p.gamma * dt) / den,
                                   p.strength * dt * dt / den))
                    pc.append(np.zeros_like(w))
                    pp.append(np.zeros_like(w))
                self._poles.append(_PoleState(material_index=mi, component=comp,
                                              box=(int(i0), int(j0), int(k0)),
                                              weight=w, coeffs=tuple(coeffs),
                                              p_cur=pc, p_prev=pp))

    def _build_cpml(self):
        nx, ny, nz = self.grid.dims
        npml = self.grid.npml
        cell, dt = self.grid.cell_nm, self.dt_fs
        self._cpml = {}
        for axis, n in (("x", nx), ("y", ny), ("z", nz)):
            be, ae, bh, ah = cpml_profiles(n, npml, cell, dt)
            self._cpml[axis] = (be, ae, bh, ah)
        slab = lambda *shape: np.zeros(shape)
        self._psi = {
            "eyx_lo": slab(npml, ny, nz), "eyx_hi": slab(npml, ny, nz),
            "ezx_lo": slab(npml, ny, nz), "ezx_hi": slab(npml, ny, nz),
            "exy_lo": slab(nx, npml, nz), "exy_hi": slab(nx, npml, nz),
            "ezy_lo": slab(nx, npml, nz), "ezy_hi": slab(nx, npml, nz),
            "exz_lo": slab(nx, ny, npml), "exz_hi": slab(nx, ny, npml),
            "eyz_lo": slab(nx, ny, npml), "eyz_hi": slab(nx, ny, npml),
            "hyx_lo": slab(npml, ny, nz), "hyx_hi": slab(npml, ny, nz),
            "hzx_lo": slab(npml, ny, nz), "hzx_hi": slab(npml, ny, nz),
            "hxy_lo": slab(nx, npml, nz), "hxy_hi": slab(nx, npml, nz),
            "hzy_lo": slab(nx, npml, nz), "hzy_hi": slab(nx, npml, nz),
            "hxz_lo": slab(nx, ny, npml), "hxz_hi": slab(nx, ny, npml),
            "hyz_lo": slab(nx, ny, npml), "hyz_hi": slab(nx, ny, npml),
        }

    # -- sources and monitors -------------------------------------------------

    def add_plane_wave(self, source: PlaneWaveSource, z_nm=None):
        """Soft current sheet spanning the domain cross-section at z_nm
        (default: a few cells below the top CPML)."""
        comp = "Ex" if abs(source.polarization[0]) > abs(source.polarization[1]) else "Ey"
        if z_nm is None:
            k = self.grid.dims[2] - self.grid.npml - 4
        else:
            k = self.grid.index_of(z_nm, 2)
        if not self.grid.npml < k < self.grid.dims[2] - self.grid.npml:
            raise EngineError("source sheet must sit inside the interior region")
        self._sheet_sources.append((comp, k, source))
        return k

    def add_point_source(self, component, pos_nm, waveform):
        idx = tuple(self.grid.index_of(p, ax) for ax, p in enumerate(pos_nm))
        self._point_sources.append((component, idx, waveform))

    def _omegas(self, wavelengths_nm):
        return omega_from_nm(np.asarray(wavelengths_nm, dtype=float))

    def _bounds_to_idx(self, bounds_nm):
        out = []
        for ax, (lo, hi) in enumerate(bounds_nm):
            out += [self.grid.index_of(lo, ax), self.grid.index_of(hi, ax)]
        return tuple(out)

    def add_flux_box(self, name, bounds_nm, wavelengths_nm):
        mon = FluxBoxMonitor(name, self._bounds_to_idx(bounds_nm),
                             self._omegas(wavelengths_nm))
        lo = min(mon.i0, mon.j0, mon.k0)
        if lo <= self.grid.npml:
            raise EngineError(f"flux box {name} touches the CPML")
        self.monitors.append(mon)
        return mon

    def add_plane_monitor(self, name, axis, offset_nm, bounds_nm, wavelengths_nm):
        ax = {"z": 2, "y": 1}[axis]
        plane_idx = self.grid.index_of(offset_nm, ax)
        idx = []
        for a, (lo, hi) in zip([0, 1] if axis == "z" else [0, 2], bounds_nm):
            idx += [self.grid.index_of(lo, a) - 1, self.grid.index_of(hi, a) + 1]
        mon = PlaneMonitor(name, axis, plane_idx, tuple(idx),
                           self._omegas(wavelengths_nm))
        self.monitors.append(mon)
        return mon

    def add_volume_monitor(self, name, bounds_nm, wavelengths_nm):
        i0, i1, j0, j1, k0, k1 = self._bounds_to_idx(bounds_nm)
        mon = VolumeMonitor(name, (i0 - 1, i1 + 1, j0 - 1, j1 + 1, k0 - 1, k1 + 1),
                            self._omegas(wavelengths_nm))
        self.monitors.append(mon)
        return mon

    # -- stepping -------------------------------------------------------------

    def _field_energy(self):
        total = 0.0
        for arr in self.fields.values():
            flat = arr.ravel()
            total += float(np.dot(flat, flat))
        return total

    def step(self):
        """One leapfrog update; accumulates monitors on stride steps."""
        F = self.fields
        n = self.step_index
        dt = self.dt_fs
        cell = self.grid.cell_nm
        c_coef = C_NM_FS * dt / cell
        npml = self.grid.npml
        psi = self._psi

        K.update_h(F["Ex"], F["Ey"], F["Ez"], F["Hx"], F["Hy"], F["Hz"], c_coef)
        bex, aex, bhx, ahx = self._cpml["x"]
        bey, aey, bhy, ahy = self._cpml["y"]
        bez, aez, bhz, ahz = self._cpml["z"]
        K.cpml_h_x(F["Ey"], F["Ez"], F["Hy"], F["Hz"], psi["hyx_lo"], psi["hzx_lo"],
                   psi["hyx_hi"], psi["hzx_hi"], bhx, ahx, npml, c_coef)
        K.cpml_h_y(F["Ex"], F["Ez"], F["Hx"], F["Hz"], psi["hxy_lo"], psi["hzy_lo"],
                   psi["hxy_hi"], psi["hzy_hi"], bhy, ahy, npml, c_coef)
        K.cpml_h_z(F["Ex"], F["Ey"], F["Hx"], F["Hy"], psi["hxz_lo"], psi["hyz_lo"],
                   psi["hxz_hi"], psi["hyz_hi"], bhz, ahz, npml, c_coef)

        sample = (n % self.dft_stride) == 0
        if sample and self.monitors:
            t_h = (n + 0.5) * dt
            for mon in self.monitors:
                ph = mon.omegas * t_h
                mon.accumulate_h(F, np.cos(ph), np.sin(ph))

        # Dispersive polarization update from E^n, then the curl update.
        for ps in self._poles:
            comp = "E" + ps.component
            i0, j0, k0 = ps.box
            n0, n1, n2 = ps.weight.shape
            esnap = F[comp][i0:i0 + n0, j0:j0 + n1, k0:k0 + n2].copy()
            inv_eps = self.inv_eps[ps.component]
            for (ca, cb, cc), pc, pp in zip(ps.coeffs, ps.p_cur, ps.p_prev):
                K.ade_update(F[comp], esnap, inv_eps, ps.weight, pc, pp,
                             i0, j0, k0, ca, cb, cc)

        K.update_e(F["Ex"], F["Ey"], F["Ez"], F["Hx"], F["Hy"], F["Hz"],
                   self.inv_eps["x"], self.inv_eps["y"], self.inv_eps["z"], c_coef)
        K.cpml_e_x(F["Ey"], F["Ez"], F["Hy"], F["Hz"], self.inv_eps["y"],
                   self.inv_eps["z"], psi["eyx_lo"], psi["ezx_lo"], psi["eyx_hi"],
                   psi["ezx_hi"], bex, aex, npml, c_coef)
        K.cpml_e_y(F["Ex"], F["Ez"], F["Hx"], F["Hz"], self.inv_eps["x"],
                   self.inv_eps["z"], psi["exy_lo"], psi["ezy_lo"], psi["exy_hi"],
                   psi["ezy_hi"], bey, aey, npml, c_coef)
        K.cpml_e_z(F["Ex"], F["Ey"], F["Hx"], F["Hy"], self.inv_eps["x"],
                   self.inv_eps["y"], psi["exz_lo"], psi["eyz_lo"], psi["exz_hi"],
                   psi["eyz_hi"], bez, aez, npml, c_coef)

        t_mid = (n + 0.5) * dt
        for comp, k, src in self._sheet_sources:
            F[comp][:, :, k] += src.waveform(t_mid) * dt
        for comp, (i, j, k), wf in self._point_sources:
            F[comp][i, j, k] += wf.waveform(t_mid) * dt

        if sample and self.monitors:
            t_e = (n + 1.0) * dt
            for mon in self.monitors:
                ph = mon.omegas * t_e
                mon.accumulate_e(F, np.cos(ph), np.sin(ph))

        self.step_index += 1

    def run(self, max_steps=200_000, decay_threshold=1e-6, check_every=50,
            min_time_fs=None, quiet=True) -> RunStats:
        """Step until the field energy has decayed below threshold times its
        post-source peak, or max_steps is reached.

        The decay is measured against the energy remaining after the drive
        switches off (the ring-down of stored resonances), not against the
        transit peak of the incident pulse; otherwise runs terminate while
        resonators are still ringing and the spectra pick up truncation
        ripple.
        """
        t_start = time.perf_counter()
        src_end = max([s.end_fs for _, _, s in self._sheet_sources]
                      + [w.end_fs for _, _, w in self._point_sources] + [0.0])
        peak_post = 0.0
        energy = 0.0
        terminated = "max_steps"
        warning = None
        while self.step_index < max_steps:
            self.step()
            n = self.step_index
            if n % check_every == 0:
                energy = self._field_energy()
                if not math.isfinite(energy):
                    raise InstabilityError(n, n * self.dt_fs)
                t = n * self.dt_fs
                if t > src_end:
                    peak_post = max(peak_post, energy)
                done_min = min_time_fs is None or t >= min_time_fs
                if not quiet and n % (check_every * 20) == 0:
                    ratio = energy / peak_post if peak_post else 0.0
                    print(f"    step {n}  t={t:8.2f} fs  E/Ering={ratio:.3e}")
                if (t > src_end and done_min and peak_post > 0
                        and energy < decay_threshold * peak_post):
                    terminated = "decay"
                    break
        decay_ratio = energy / peak_post if peak_post > 0 else 0.0
        if terminated == "max_steps" and decay_ratio > decay_threshold:
            warning = (f"energy not decayed at max_steps: E/Ering = {decay_ratio:.3e} "
                       f"(threshold {decay_threshold:.1e})")
        return RunStats(steps=self.step_index, t_final_fs=self.step_index * self.dt_fs,
                        wall_seconds=time.perf_counter() - t_start,
                        peak_energy=peak_post, decay_ratio=decay_ratio,
                        terminated_by=terminated, warning=warning)

    # -- checkpointing ---------------------------------------------------------

    def save_state(self, path):
        """Dump fields, CPML memory and pole states with a descriptive header."""
        header = {"dims": list(self.grid.dims), "cell_nm": self.grid.cell_nm,
                  "dt_fs": self.dt_fs, "step_index": self.step_index}
        arrays = {f"field_{k}": v for k, v in self.fields.items()}
        arrays.update({f"psi_{k}": v for k, v in self._psi.items()})
        for n, ps in enumerate(self._poles):
            for m, (pc, pp) in enumerate(zip(ps.p_cur, ps.p_prev)):
                arrays[f"pole_{n}_{m}_cur"] = pc
                arrays[f"pole_{n}_{m}_prev"] = pp
        np.savez_compressed(path, header=json.dumps(header), **arrays)

    def load_state(self, path):
        with np.load(path, allow_pickle=False) as data:
            header = json.loads(str(data["header"]))
            if tuple(header["dims"]) != self.grid.dims:
                raise EngineError("checkpoint grid does not match this simulation")
            self.step_index = int(header["step_index"])
            for k in self.fields:
                self.fields[k][:] = data[f"field_{k}"]
            for k in self._psi:
                self._psi[k][:] = data[f"psi_{k}"]
            for n, ps in enumerate(self._poles):
                for m in range(len(ps.p_cur)):
                    ps.p_cur[m][:] = data[f"pole_{n}_{m}_cur"]
                    ps.p_prev[m][:] = data[f"pole_{n}_{m}_prev"]


# ---------------------------------------------------------------------------
# Two-run scattering pipeline
# ---------------------------------------------------------------------------

@dataclass
class ScatteringRun:
    """Raw monitor data from one total+reference pair."""

    wavelengths_nm: np.ndarray
    flux_total: FluxBoxMonitor
    flux_ref: FluxBoxMonitor
    planes_total: dict
    planes_ref: dict
    volume_total: VolumeMonitor | None
    volume_ref: VolumeMonitor | None
    cell_nm: float
    monitor_bounds_nm: tuple
    stats_total: RunStats
    stats_ref: RunStats
    grid_cc: object = None       # cell-centered MaterialGrid of the total scene
    volume_origin_nm: tuple = ()
    sim_meta: dict = field(default_factory=dict)


def _auto_domain(scene, source_gap_nm, monitor_margin_nm, pml_nm, cell):
    b = scene.bounds()
    if b is None:
        lo = np.array([-3 * cell, -3 * cell, -3 * cell])
        hi = -lo
    else:
        lo, hi = b
    snap = lambda v, up: (math.ceil(v / cell) if up else math.floor(v / cell)) * cell
    mon_lo = [snap(v - monitor_margin_nm, False) for v in lo]
    mon_hi = [snap(v + monitor_margin_nm, True) for v in hi]
    dom_lo = [v - source_gap_nm - pml_nm for v in mon_lo]
    dom_hi = [v + source_gap_nm + pml_nm for v in mon_hi]
    # Extra headroom on top for the source sheet.
    dom_hi[2] += 3 * cell
    return (tuple(zip(dom_lo, dom_hi)),
            tuple(zip(mon_lo, mon_hi)))


def run_scattering(scene: Scene, source: PlaneWaveSource, cell_nm,
                   wavelengths_nm, *, monitor_bounds_nm=None, domain_nm=None,
                   courant=0.9, cpml_cells=10, dft_stride=8,
                   monitor_margin_nm=12.0, source_gap_nm=8.0,
                   map_planes=(), map_wavelengths_nm=(640.0,),
                   volume_monitor=False, max_steps=200_000,
                   decay_threshold=1e-6, reference_data=None,
                   quiet=True) -> ScatteringRun:
    """Reference (no scatterers) plus total run; scattered fields are the
    per-sample DFT difference.

    `map_planes` is a sequence of ("z"|"y", offset_nm) pairs recorded at
    map_wavelengths_nm in both runs.  Pass `reference_data` (a previous
    ScatteringRun with an identical domain/grid/source) to reuse its
    reference run in a sweep.
    """
    cell = float(cell_nm)
    pml_nm = cpml_cells * cell
    if domain_nm is None or monitor_bounds_nm is None:
        auto_dom, auto_mon = _auto_domain(scene, source_gap_nm,
                                          monitor_margin_nm, pml_nm, cell)
        domain_nm = domain_nm or auto_dom
        monitor_bounds_nm = monitor_bounds_nm or auto_mon

    feature = min([s.radius_nm for s, _ in scene.shapes if hasattr(s, "radius_nm")]
                  + [s.tip_radius_nm for s, _ in scene.shapes if hasattr(s, "tip_radius_nm")]
                  + [math.inf])
    feature = None if feature is math.inf else 2.0 * feature

    def build(sc):
        sim = Simulation(sc, domain_nm, cell, courant=courant,
                         cpml_cells=cpml_cells, dft_stride=dft_stride,
                         smallest_feature_nm=feature)
        sim.add_plane_wave(source)
        flux = sim.add_flux_box("scatter", monitor_bounds_nm, wavelengths_nm)
        planes = {}
        for axis, off in map_planes:
            bounds = ([monitor_bounds_nm[0], monitor_bounds_nm[1]] if axis == "z"
                      else [monitor_bounds_nm[0], monitor_bounds_nm[2]])
            planes[f"{axis}@{off:g}"] = sim.add_plane_monitor(
                f"map_{axis}_{off:g}", axis, off, bounds, map_wavelengths_nm)
        vol = None
        if volume_monitor:
            vol = sim.add_volume_monitor("mode_volume", monitor_bounds_nm,
                                         map_wavelengths_nm)
        return sim, flux, planes, vol

    if reference_data is None:
        sim_r, flux_r, planes_r, vol_r = build(scene.scatterers_removed())
        stats_r = sim_r.run(max_steps=max_steps, decay_threshold=decay_threshold,
                            quiet=quiet)
        del sim_r
    else:
        flux_r = reference_data.flux_ref
        planes_r = reference_data.planes_ref
        vol_r = reference_data.volume_ref
        stats_r = reference_data.stats_ref
        if reference_data.cell_nm != cell or \
                reference_data.monitor_bounds_nm != tuple(monitor_bounds_nm):
            raise EngineError("reference data does not match this configuration")

    sim_t, flux_t, planes_t, vol_t = build(scene)
    grid_cc = None
    vol_origin = ()
    if volume_monitor and vol_t is not None:
        nx, ny, nz = sim_t.grid.dims
        grid_cc = voxelize(scene, cell,
                           [(lo, lo + (n - 1) * cell) for (lo, _), n
                            in zip(sim_t.domain_nm, (nx + 1, ny + 1, nz + 1))],
                           offset=(0.0, 0.0, 0.0))
        io, jo, ko = vol_t.node_index_origin()
        vol_origin = (sim_t.grid.position_of(io, 0), sim_t.grid.position_of(jo, 1),
                      sim_t.grid.position_of(ko, 2))
    stats_t = sim_t.run(max_steps=max_steps, decay_threshold=decay_threshold,
                        quiet=quiet)
    meta = {"dims": sim_t.grid.dims, "dt_fs": sim_t.dt_fs, "cell_nm": cell,
            "courant": courant, "cpml_cells": cpml_cells, "dft_stride": dft_stride,
            "domain_nm": sim_t.domain_nm}
    del sim_t
    return ScatteringRun(wavelengths_nm=np.asarray(wavelengths_nm, dtype=float),
                         flux_total=flux_t, flux_ref=flux_r,
                         planes_total=planes_t, planes_ref=planes_r,
                         volume_total=vol_t, volume_ref=vol_r, cell_nm=cell,
                         monitor_bounds_nm=tuple(monitor_bounds_nm),
                         stats_total=stats_t, stats_ref=stats_r,
                         grid_cc=grid_cc, volume_origin_nm=vol_origin,
                         sim_meta=meta)
