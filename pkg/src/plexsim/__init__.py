"""plexsim: FDTD nanophotonics scattering + plasmon-exciton coupling analysis."""

__version__ = "0.1.0"

from .constants import C_NM_FS, EV_NM, HBAR_EV_FS  # noqa: F401
