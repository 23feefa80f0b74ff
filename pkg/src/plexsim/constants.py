"""Physical constants and unit conventions.

The whole package works in a single unit system:

* lengths in nm
* time in fs
* angular frequency in rad/fs
* energies in eV (linewidths usually quoted in meV)
* cross sections in nm^2

Fields inside the FDTD engine are normalized so that the vacuum impedance
is 1 (H is stored as Z0*H); every reported quantity is a ratio of powers,
so the normalization drops out.  SI constants appear only in the
dipole-coupling formula (see plexciton.g_from_field).
"""

import math

# Vacuum speed of light in nm/fs (exact).
C_NM_FS = 299.792458

# Energy <-> wavelength conversion, E[eV] = EV_NM / lambda[nm].
# Fixed repo-wide; do not swap in a higher-precision value piecemeal.
EV_NM = 1239.84

# hbar in eV*fs, consistent with EV_NM: hbar = EV_NM / (2*pi*c).
HBAR_EV_FS = EV_NM / (2.0 * math.pi * C_NM_FS)


def ev_to_nm(energy_ev):
    """Photon energy in eV to vacuum wavelength in nm."""
    return EV_NM / energy_ev


def nm_to_ev(wavelength_nm):
    """Vacuum wavelength in nm to photon energy in eV."""
    return EV_NM / wavelength_nm


def omega_from_nm(wavelength_nm):
    """Vacuum wavelength in nm to angular frequency in rad/fs."""
    return 2.0 * math.pi * C_NM_FS / wavelength_nm


def nm_from_omega(omega):
    """Angular frequency in rad/fs to vacuum wavelength in nm."""
    return 2.0 * math.pi * C_NM_FS / omega


def omega_from_ev(energy_ev):
    """Photon energy in eV to angular frequency in rad/fs."""
    return energy_ev / HBAR_EV_FS


def ev_from_omega(omega):
    """Angular frequency in rad/fs to photon energy in eV."""
    return omega * HBAR_EV_FS
