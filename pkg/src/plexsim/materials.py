"""Dispersive material models: ε(ω) as ε_inf plus Lorentz/Drude pole terms.

Conventions (time dependence e^{-iωt}, so passive media have Im ε >= 0):

* Lorentz pole:  χ(ω) = Δε ω0² / (ω0² - ω² - iγω)
* Drude pole:    χ(ω) = -Δε ω0² / (ω² + iγω)

For a Drude pole ω0 is not a resonance; Δε·ω0² is the squared plasma
frequency (usually Δε = 1 and ω0 = ω_p).  Both kinds share one ADE update
in the time-domain engine, which is why they share one record here.

Frequencies are rad/fs throughout.
"""

from __future__ import annotations

import importlib.resources
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .constants import EV_NM, HBAR_EV_FS, omega_from_nm

LORENTZ = "lorentz"
DRUDE = "drude"


class MaterialError(ValueError):
    """Invalid material parameters or ingestion failure."""


class FitConvergenceError(RuntimeError):
    """Pole-model fit did not converge; carries the final residual."""

    def __init__(self, message, residual):
        super().__init__(f"{message} (final max |eps| residual {residual:.3g})")
        self.residual = residual


@dataclass(frozen=True)
class Pole:
    """One susceptibility pole.  gamma > 0 always; delta_eps >= 0 for Lorentz."""

    delta_eps: float
    omega0: float   # rad/fs; strength scale for Drude poles
    gamma: float    # rad/fs
    kind: str = LORENTZ

    def __post_init__(self):
        if self.kind not in (LORENTZ, DRUDE):
            raise MaterialError(f"unknown pole kind {self.kind!r}")
        if self.gamma <= 0.0:
            raise MaterialError("pole gamma must be > 0")
        if self.kind == LORENTZ and self.delta_eps < 0.0:
            raise MaterialError("Lorentz pole delta_eps must be >= 0")
        if self.kind == DRUDE and self.delta_eps < 0.0:
            raise MaterialError("Drude pole strength must be >= 0")

    @property
    def strength(self):
        """Unified ADE strength S = Δε·ω0² (rad²/fs²)."""
        return self.delta_eps * self.omega0 ** 2

    @property
    def omega_restoring(self):
        """Restoring frequency in the ADE oscillator: 0 for Drude poles,
        where omega0 is only a strength scale."""
        return 0.0 if self.kind == DRUDE else self.omega0

    def chi(self, omega):
        """Complex susceptibility at omega (rad/fs)."""
        omega = np.asarray(omega, dtype=float)
        if self.kind == LORENTZ:
            return self.strength / (self.omega0 ** 2 - omega ** 2 - 1j * self.gamma * omega)
        return -self.strength / (omega ** 2 + 1j * self.gamma * omega)

    def dchi_domega(self, omega):
        """d χ/dω, used for the dispersive field-energy density."""
        omega = np.asarray(omega, dtype=float)
        if self.kind == LORENTZ:
            den = self.omega0 ** 2 - omega ** 2 - 1j * self.gamma * omega
            return self.strength * (2.0 * omega + 1j * self.gamma) / den ** 2
        den = omega ** 2 + 1j * self.gamma * omega
        return self.strength * (2.0 * omega + 1j * self.gamma) / den ** 2


@dataclass(frozen=True)
class MaterialModel:
    """ε(ω) = eps_inf + Σ poles; value semantics, safe to share."""

    eps_inf: float
    poles: tuple[Pole, ...] = ()
    name: str = ""

    def __post_init__(self):
        if self.eps_inf < 1.0 - 1e-12:
            raise MaterialError("eps_inf must be >= 1")
        object.__setattr__(self, "poles", tuple(self.poles))

    @property
    def dispersive(self):
        return len(self.poles) > 0

    def eps(self, omega):
        """Complex relative permittivity at omega (rad/fs), scalar or array."""
        omega = np.asarray(omega, dtype=float)
        out = np.full(omega.shape, complex(self.eps_inf), dtype=complex)
        for p in self.poles:
            out = out + p.chi(omega)
        return out if out.shape else complex(out)

    def eps_at_wavelength(self, wavelength_nm):
        return self.eps(omega_from_nm(np.asarray(wavelength_nm, dtype=float)))

    def d_omega_eps(self, omega):
        """Re d(ωε)/dω = Re[ε + ω dε/dω], the Brillouin energy-density weight."""
        omega = np.asarray(omega, dtype=float)
        total = self.eps(omega) + 0j
        for p in self.poles:
            total = total + omega * p.dchi_domega(omega)
        return np.real(total)


def eval_permittivity(model: MaterialModel, omega):
    """Complex ε of `model` at angular frequency omega (rad/fs)."""
    return model.eps(omega)


def vacuum():
    return MaterialModel(eps_inf=1.0, name="vacuum")


def silica(n=1.45):
    """Nondispersive SiO2 half-space/substrate material."""
    return MaterialModel(eps_inf=n * n, name="silica")


def constant_eps(eps, name="dielectric"):
    return MaterialModel(eps_inf=float(eps), name=name)


# ---------------------------------------------------------------------------
# Tabulated optical constants
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TabulatedOptics:
    """Measured (wavelength_nm, n, k) rows, wavelengths strictly increasing."""

    wavelength_nm: np.ndarray
    n: np.ndarray
    k: np.ndarray
    name: str = ""

    def __post_init__(self):
        wl = np.asarray(self.wavelength_nm, dtype=float)
        n = np.asarray(self.n, dtype=float)
        k = np.asarray(self.k, dtype=float)
        if not (wl.shape == n.shape == k.shape) or wl.ndim != 1 or wl.size < 2:
            raise MaterialError("tabulated optics needs matching 1-D columns")
        if np.any(np.diff(wl) <= 0):
            raise MaterialError("wavelengths must be strictly increasing")
        if np.any(k < 0):
            raise MaterialError("extinction coefficient k must be >= 0")
        object.__setattr__(self, "wavelength_nm", wl)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "k", k)

    def eps(self, wavelength_nm=None):
        """ε = (n + ik)² at the tabulated (or interpolated) wavelengths."""
        if wavelength_nm is None:
            return (self.n + 1j * self.k) ** 2
        wl = np.asarray(wavelength_nm, dtype=float)
        lo, hi = self.wavelength_nm[0], self.wavelength_nm[-1]
        if np.any(wl < lo) or np.any(wl > hi):
            raise MaterialError(
                f"wavelength outside tabulated range [{lo:.1f}, {hi:.1f}] nm")
        n = np.interp(wl, self.wavelength_nm, self.n)
        k = np.interp(wl, self.wavelength_nm, self.k)
        return (n + 1j * k) ** 2


def load_tabulated(path, name=""):
    """Read delimited text with a header row: wavelength_nm, n, k."""
    data = np.genfromtxt(path, names=True)
    try:
        cols = (data["wavelength_nm"], data["n"], data["k"])
    except (KeyError, ValueError) as exc:
        raise MaterialError(
            f"{path}: expected columns wavelength_nm, n, k") from exc
    return TabulatedOptics(*cols, name=name or str(path))


def johnson_christy_au():
    """Bundled Johnson-Christy gold optical constants."""
    ref = importlib.resources.files("plexsim.assets") / "johnson_christy_au.txt"
    with importlib.resources.as_file(ref) as path:
        return load_tabulated(path, name="Au (Johnson-Christy)")


# ---------------------------------------------------------------------------
# Pole-model fitting
# ---------------------------------------------------------------------------

@dataclass
class FitResult:
    """Fitted model plus its residual report against the tabulation."""

    model: MaterialModel
    max_abs_residual: float     # max |eps_fit - eps_tab| over the fit band
    rms_residual: float
    band_nm: tuple[float, float]
    n_points: int
    iterations: int = 0


def _pack(eps_inf, drude, lorentz):
    x = [eps_inf]
    for wp, g in drude:
        x += [wp, g]
    for de, w0, g in lorentz:
        x += [de, w0, g]
    return np.array(x)


def _unpack(x, n_drude, n_lorentz):
    eps_inf = x[0]
    poles = []
    i = 1
    for _ in range(n_drude):
        wp, g = x[i], x[i + 1]
        poles.append(Pole(delta_eps=1.0, omega0=wp, gamma=g, kind=DRUDE))
        i += 2
    for _ in range(n_lorentz):
        de, w0, g = x[i], x[i + 1], x[i + 2]
        poles.append(Pole(delta_eps=de, omega0=w0, gamma=g, kind=LORENTZ))
        i += 3
    return MaterialModel(eps_inf=eps_inf, poles=tuple(poles))


def fit_pole_model(data: TabulatedOptics, n_lorentz: int, n_drude: int,
                   band_nm=(450.0, 900.0), max_iterations=20000,
                   name="") -> FitResult:
    """Least-squares fit of an ε_inf + Drude/Lorentz model to tabulated optics.

    The fit is bounded so the result is passive by construction (every
    Δε >= 0, γ > 0).  A large residual is *not* an error (a zero-pole
    budget on dispersive data simply reports its best-constant residual);
    only optimizer failure raises FitConvergenceError.
    """
    lo, hi = float(band_nm[0]), float(band_nm[1])
    if lo >= hi:
        raise MaterialError("band must be (low, high) nm")
    if lo < data.wavelength_nm[0] or hi > data.wavelength_nm[-1]:
        raise MaterialError("fit band outside the tabulated range")
    mask = (data.wavelength_nm >= lo) & (data.wavelength_nm <= hi)
    wl = data.wavelength_nm[mask]
    eps_tab = data.eps()[mask]
    n_params = 1 + 2 * n_drude + 3 * n_lorentz
    if wl.size < max(4 * n_params // 4, 2) or 4 * wl.size < 4 * n_params:
        raise MaterialError(
            f"need >= 4 samples per parameter: {wl.size} samples, {n_params} params")
    omega = omega_from_nm(wl)

    if n_drude == 0 and n_lorentz == 0:
        # Best real constant in least squares: mean of Re eps.
        eps_inf = max(1.0, float(np.mean(eps_tab.real)))
        model = MaterialModel(eps_inf=eps_inf, name=name)
        res = model.eps(omega) - eps_tab
        return FitResult(model=model, max_abs_residual=float(np.max(np.abs(res))),
                         rms_residual=float(np.sqrt(np.mean(np.abs(res) ** 2))),
                         band_nm=(lo, hi), n_points=wl.size)

    w_lo, w_hi = float(omega.min()), float(omega.max())

    def residuals(x):
        m = _unpack(x, n_drude, n_lorentz)
        d = m.eps(omega) - eps_tab
        return np.concatenate([d.real, d.imag])

    # Start: Drude carries the free-electron response, Lorentz poles seeded
    # above the fit band (interband transitions sit blueward for Au).
    eps0 = max(1.0, float(np.mean(eps_tab.real[omega < 1.2 * w_lo])) + 10.0)
    x0, lb, ub = [min(eps0, 9.0)], [1.0], [12.0]
    for i in range(n_drude):
        x0 += [13.0, 0.11]
        lb += [1.0, 1e-4]
        ub += [40.0, 3.0]
    # Lorentz damping floor keeps fitted poles from ringing indefinitely in
    # the time-domain engine (a near-undamped pole stalls energy decay).
    for i in range(n_lorentz):
        w0 = w_hi * (1.05 + 0.45 * i)
        x0 += [1.0, w0, 1.0]
        lb += [0.0, 0.3 * w_lo, 0.15]
        ub += [50.0, 6.0 * w_hi, 8.0]
    sol = least_squares(residuals, np.array(x0), bounds=(np.array(lb), np.array(ub)),
                        max_nfev=max_iterations, method="trf", xtol=1e-14, ftol=1e-14)
    if not sol.success or not np.all(np.isfinite(sol.x)):
        final = float(np.max(np.abs(sol.fun))) if np.all(np.isfinite(sol.fun)) else math.inf
        raise FitConvergenceError("pole-model fit did not converge", final)
    model = _unpack(sol.x, n_drude, n_lorentz)
    if name:
        model = MaterialModel(eps_inf=model.eps_inf, poles=model.poles, name=name)
    d = model.eps(omega) - eps_tab
    return FitResult(model=model,
                     max_abs_residual=float(np.max(np.abs(d))),
                     rms_residual=float(np.sqrt(np.mean(np.abs(d) ** 2))),
                     band_nm=(lo, hi), n_points=wl.size, iterations=sol.nfev)


_GOLD_CACHE = {}


def gold_fit(band_nm=(450.0, 900.0)) -> FitResult:
    """Fitted Johnson-Christy gold: 1 Drude + 2 Lorentz over `band_nm` (cached)."""
    key = (round(band_nm[0], 3), round(band_nm[1], 3))
    if key not in _GOLD_CACHE:
        _GOLD_CACHE[key] = fit_pole_model(johnson_christy_au(), n_lorentz=2,
                                          n_drude=1, band_nm=band_nm, name="gold")
    return _GOLD_CACHE[key]


# ---------------------------------------------------------------------------
# Quantum-dot material
# ---------------------------------------------------------------------------

def qd_material(eps_inf: float, lambda_ex_nm: float, hwhm_mev: float,
                delta_eps: float, name="qd") -> MaterialModel:
    """Single-Lorentz-pole quantum-dot permittivity.

    lambda_ex_nm sets the pole center (ω0 = 2πc/λ).  hwhm_mev is the target
    half-linewidth (HWHM, in energy) of the *scattering* resonance of an
    isolated sphere made of this material; for a Lorentz pole the squared
    resonant response has an energy HWHM of ħγ/2, so the pole damping is
    mapped as γ = 2·hwhm/ħ.  delta_eps sets the oscillator strength (the
    source data constrain only peak position and width, so the strength is
    a calibration input).
    """
    if lambda_ex_nm <= 0:
        raise MaterialError("lambda_ex_nm must be > 0")
    if hwhm_mev <= 0:
        raise MaterialError("hwhm_mev must be > 0")
    omega0 = omega_from_nm(lambda_ex_nm)
    gamma = 2.0 * (hwhm_mev / 1000.0) / HBAR_EV_FS
    poles = ()
    if delta_eps > 0:
        poles = (Pole(delta_eps=delta_eps, omega0=omega0, gamma=gamma),)
    return MaterialModel(eps_inf=eps_inf, poles=poles, name=name)
