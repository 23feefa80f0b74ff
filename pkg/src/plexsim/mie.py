"""Exact Mie series cross sections for a homogeneous sphere.

Independent validation oracle for the time-domain engine.  Follows the
Bohren-Huffman recurrences: the logarithmic derivative D_n(mx) comes from
a downward recurrence (stable for complex argument), the Riccati-Bessel
functions of the real size parameter from an upward one.

σ_scatt = (2π/k²) Σ (2n+1)(|a_n|² + |b_n|²)
σ_ext   = (2π/k²) Σ (2n+1) Re(a_n + b_n)
σ_abs   = σ_ext − σ_scatt
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constants import nm_to_ev
from .materials import MaterialModel, omega_from_nm

# Refuse size parameters where the upward Riccati-Bessel recurrence is
# untrustworthy; nanophotonic problems sit far below this.
X_MAX = 2000.0


class MieError(ValueError):
    pass


@dataclass
class MieResult:
    wavelength_nm: np.ndarray
    sigma_scatt: np.ndarray   # nm^2
    sigma_abs: np.ndarray
    sigma_ext: np.ndarray
    n_terms: np.ndarray       # series terms used per wavelength


def _nstop(x):
    """Wiscombe series cutoff."""
    return int(math.ceil(x + 4.0 * x ** (1.0 / 3.0) + 2.0))


def _mie_single(x, m, nstop=None):
    """(a_n, b_n) coefficient arrays for size parameter x, relative index m."""
    if nstop is None:
        nstop = _nstop(x)
    y = m * x
    # Downward recurrence for D_n(y) = psi_n'(y)/psi_n(y).
    nmx = int(max(nstop, abs(y)) + 16)
    d = np.zeros(nmx + 1, dtype=complex)
    for n in range(nmx, 0, -1):
        d[n - 1] = n / y - 1.0 / (d[n] + n / y)
    # Upward recurrence for psi_n(x), chi_n(x); xi = psi - i*chi.
    psi0, psi1 = math.cos(x), math.sin(x)
    chi0, chi1 = -math.sin(x), math.cos(x)
    xi1 = psi1 - 1j * chi1
    a = np.zeros(nstop, dtype=complex)
    b = np.zeros(nstop, dtype=complex)
    for n in range(1, nstop + 1):
        psi = (2.0 * n - 1.0) * psi1 / x - psi0
        chi = (2.0 * n - 1.0) * chi1 / x - chi0
        xi = psi - 1j * chi
        da = d[n] / m + n / x
        db = d[n] * m + n / x
        a[n - 1] = (da * psi - psi1) / (da * xi - xi1)
        b[n - 1] = (db * psi - psi1) / (db * xi - xi1)
        psi0, psi1 = psi1, psi
        chi0, chi1 = chi1, chi
        xi1 = xi
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise MieError(f"Mie recurrence overflow at size parameter x = {x:.4g}")
    return a, b


def mie_cross_sections(radius_nm: float, sphere_material: MaterialModel,
                       medium_index: float, wavelengths_nm,
                       extra_terms: int = 0) -> MieResult:
    """Scattering/absorption/extinction cross sections in nm².

    The medium must be a nondispersive real index; the sphere material may
    be any MaterialModel.  `extra_terms` adds terms past the Wiscombe
    cutoff (convergence checks only).
    """
    if radius_nm <= 0:
        raise MieError("radius must be > 0")
    if medium_index <= 0:
        raise MieError("medium index must be > 0")
    wl = np.atleast_1d(np.asarray(wavelengths_nm, dtype=float))
    eps = np.atleast_1d(sphere_material.eps(omega_from_nm(wl)))
    s_sca = np.empty(wl.size)
    s_ext = np.empty(wl.size)
    nterms = np.empty(wl.size, dtype=int)
    for i, (lam, e) in enumerate(zip(wl, eps)):
        m = np.sqrt(complex(e)) / medium_index
        if m.imag < 0:
            m = -m
        k = 2.0 * math.pi * medium_index / lam
        x = k * radius_nm
        if x > X_MAX:
            raise MieError(f"size parameter x = {x:.4g} exceeds supported {X_MAX}")
        nstop = _nstop(x) + extra_terms
        a, b = _mie_single(x, m, nstop)
        n = np.arange(1, nstop + 1)
        pref = 2.0 * math.pi / k ** 2
        s_sca[i] = pref * np.sum((2 * n + 1) * (np.abs(a) ** 2 + np.abs(b) ** 2))
        s_ext[i] = pref * np.sum((2 * n + 1) * (a + b).real)
        nterms[i] = nstop
    return MieResult(wavelength_nm=wl, sigma_scatt=s_sca,
                     sigma_abs=s_ext - s_sca, sigma_ext=s_ext, n_terms=nterms)


def mie_spectrum_table(result: MieResult):
    """Rows matching the spectrum file format (see monitors.write_spectrum)."""
    return np.column_stack([
        result.wavelength_nm,
        nm_to_ev(result.wavelength_nm),
        result.sigma_scatt,
        result.sigma_abs,
        result.sigma_ext,
    ])
