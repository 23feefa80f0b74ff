"""Coupled-oscillator analysis of plasmon-exciton hybrid spectra.

Implements the two-oscillator eigenenergies, coupling-strength relations,
the semi-analytic scattering lineshape, strong-coupling rules of thumb,
peak/Rabi extraction from spectra, anti-crossing fits and the
resonance-wavelength power law.

Unit conventions: mode energies in eV, linewidths and coupling strengths
in meV.  Every linewidth is a half-linewidth (HWHM); convert FWHM inputs
before calling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.constants as sc
from scipy.optimize import least_squares, minimize_scalar
from scipy.signal import find_peaks as _scipy_find_peaks
from scipy.signal import peak_widths as _scipy_peak_widths

from .constants import EV_NM


class AnalysisError(ValueError):
    pass


@dataclass(frozen=True)
class CoupledOscillatorParams:
    """Symbol home for the two-oscillator model.

    e_lsp_ev / e_ex_ev: uncoupled plasmon and exciton resonance energies.
    gamma_lsp_mev / gamma_ex_mev: half-linewidths.  g_mev: single-emitter
    coupling strength.  n_emitters: number of emitters at the hotspot.
    """

    e_lsp_ev: float
    e_ex_ev: float
    gamma_lsp_mev: float
    gamma_ex_mev: float
    g_mev: float
    n_emitters: int = 1

    def __post_init__(self):
        if min(self.e_lsp_ev, self.e_ex_ev, self.gamma_lsp_mev,
               self.gamma_ex_mev) <= 0 or self.g_mev < 0:
            raise AnalysisError("oscillator parameters must be positive")
        if self.n_emitters < 1 or self.n_emitters != int(self.n_emitters):
            raise AnalysisError("n_emitters must be an integer >= 1")

    @property
    def detuning_mev(self):
        return (self.e_lsp_ev - self.e_ex_ev) * 1e3


@dataclass(frozen=True)
class DetuningPoint:
    """One measured dispersion point: detuning plus the two peak wavelengths."""

    delta_mev: float
    lambda1_nm: float
    lambda2_nm: float

    def __post_init__(self):
        if not self.lambda1_nm < self.lambda2_nm:
            raise AnalysisError("peak wavelengths must satisfy lambda1 < lambda2")


@dataclass(frozen=True)
class ScalingLawFit:
    """lambda_res = lambda0 * (l / l0)^alpha."""

    lambda0_nm: float
    l0_nm: float
    alpha: float
    r_squared: float

    def predict(self, l_nm):
        return self.lambda0_nm * (np.asarray(l_nm, dtype=float) / self.l0_nm) ** self.alpha


def eigenenergies(p: CoupledOscillatorParams, delta_mev: float):
    """Hybrid-state complex eigenenergies (E1, E2) in eV at a given detuning.

    E_LSP is taken as E_ex + delta.  E1 is the branch with the larger real
    part.  Imaginary parts carry the hybrid half-linewidths.
    """
    e_ex = p.e_ex_ev
    delta = delta_mev / 1e3
    e_lsp = e_ex + delta
    g = p.g_mev / 1e3
    gx = p.gamma_ex_mev / 1e3
    gl = p.gamma_lsp_mev / 1e3
    center = 0.5 * ((e_ex + e_lsp) + 1j * (gx + gl))
    root = np.sqrt(p.n_emitters * g * g + 0.25 * (delta + 1j * (gx - gl)) ** 2 + 0j)
    e1, e2 = center + root, center - root
    if e1.real < e2.real:
        e1, e2 = e2, e1
    return e1, e2


def eigen_splitting_mev(p: CoupledOscillatorParams, delta_mev):
    """Re E1 - Re E2 in meV, vectorized over detunings."""
    deltas = np.atleast_1d(np.asarray(delta_mev, dtype=float))
    out = np.array([(lambda t: (t[0].real - t[1].real) * 1e3)(eigenenergies(p, d))
                    for d in deltas])
    return out if np.ndim(delta_mev) else float(out[0])


def g_from_splitting(rabi_mev: float, gamma_ex_mev: float, gamma_lsp_mev: float):
    """Coupling strength in meV from a measured Rabi splitting at zero detuning."""
    if rabi_mev <= 0:
        raise AnalysisError("Rabi splitting must be > 0")
    return math.sqrt(rabi_mev ** 2 + (gamma_ex_mev - gamma_lsp_mev) ** 2) / 2.0


def sqrtN_scale(g_n_mev: float, n: int):
    """Single-emitter coupling g1 = g_N / sqrt(N)."""
    if n < 1:
        raise AnalysisError("N must be >= 1")
    return g_n_mev / math.sqrt(n)


def g_from_field(mu_e_nm: float, e_ex_ev: float, e_lsp_ev: float,
                 v_eff_nm3: float, field_ratio: float):
    """Position-dependent coupling strength in meV.

    g = E_ex * mu * (E(r)/E_max) / sqrt(2 eps0 E_LSP V_eff), evaluated in SI
    and returned in meV.  mu is in units of elementary charge times nm.
    """
    if v_eff_nm3 <= 0:
        raise AnalysisError("V_eff must be > 0")
    if abs(field_ratio) > 1.0 + 1e-12:
        raise AnalysisError("|field_ratio| must be <= 1")
    mu_si = mu_e_nm * sc.e * 1e-9                       # C*m
    e_lsp_joule = e_lsp_ev * sc.e
    v_si = v_eff_nm3 * 1e-27                            # m^3
    denom = math.sqrt(2.0 * sc.epsilon_0 * e_lsp_joule * v_si)   # C*m
    return e_ex_ev * (mu_si / denom) * field_ratio * 1e3


def strong_coupling_check(g_mev: float, gamma_ex_mev: float, gamma_lsp_mev: float):
    """Both rules of thumb, strict inequalities:

    (1) g > |γ_ex - γ_LSP| / 2
    (2) g > sqrt(γ_ex² + γ_LSP²) / 2
    """
    t1 = abs(gamma_ex_mev - gamma_lsp_mev) / 2.0
    t2 = math.sqrt(gamma_ex_mev ** 2 + gamma_lsp_mev ** 2) / 2.0
    c1 = g_mev > t1
    c2 = g_mev > t2
    return StrongCouplingVerdict(
        exceeds_linewidth_difference=c1,
        exceeds_combined_loss=c2,
        strong=c1 and c2,
        threshold_difference_mev=t1,
        threshold_combined_mev=t2,
    )


@dataclass(frozen=True)
class StrongCouplingVerdict:
    exceeds_linewidth_difference: bool
    exceeds_combined_loss: bool
    strong: bool
    threshold_difference_mev: float
    threshold_combined_mev: float


def rabi_from_peaks(lambda1_nm: float, lambda2_nm: float):
    """Peak-pair splitting in meV: 1239.84 * (1/λ1 - 1/λ2) * 1000."""
    if lambda1_nm > lambda2_nm:
        raise AnalysisError("requires lambda1 <= lambda2")
    return EV_NM * (1.0 / lambda1_nm - 1.0 / lambda2_nm) * 1e3


# ---------------------------------------------------------------------------
# Semi-analytic scattering lineshape
# ---------------------------------------------------------------------------

def _semianalytic_raw(energy_ev, p: CoupledOscillatorParams):
    # Resonance poles sit in the lower half-plane (E0 - i*gamma) so that
    # -Im[1/D] is a positive Lorentzian in the decoupled limit.
    e = np.asarray(energy_ev, dtype=float)
    g = p.g_mev / 1e3
    gl = p.gamma_lsp_mev / 1e3
    gx = p.gamma_ex_mev / 1e3
    den = (e - (p.e_lsp_ev - 1j * gl)
           - p.n_emitters * g * g / (e - (p.e_ex_ev - 1j * gx)))
    return -np.imag(1.0 / den)


def semianalytic_scattering(energy_ev, p: CoupledOscillatorParams):
    """Hybrid scattering lineshape on an energy grid, normalized to max 1.

    σ(E) ∝ -Im[E - (E_LSP + iγ_LSP) - N g² / (E - (E_ex + iγ_ex))]^{-1}
    """
    sigma = _semianalytic_raw(energy_ev, p)
    peak = np.max(sigma)
    if peak <= 0:
        raise AnalysisError("lineshape is nonpositive on this grid")
    return sigma / peak


def semianalytic_peak_energies(p: CoupledOscillatorParams,
                               band_ev=(1.3, 2.7), n_grid=3001):
    """Exact local maxima (eV, descending) of the semi-analytic lineshape.

    Brackets maxima on a coarse grid, then polishes each with a bounded
    scalar minimizer on the analytic expression.
    """
    grid = np.linspace(band_ev[0], band_ev[1], n_grid)
    s = _semianalytic_raw(grid, p)
    idx = np.where((s[1:-1] > s[:-2]) & (s[1:-1] >= s[2:]))[0] + 1
    peaks = []
    for i in idx:
        res = minimize_scalar(lambda e: -_semianalytic_raw(e, p),
                              bounds=(grid[i - 1], grid[i + 1]), method="bounded",
                              options={"xatol": 1e-12})
        peaks.append(float(res.x))
    # Merge duplicates from flat tops.
    peaks = sorted(set(round(e, 10) for e in peaks), reverse=True)
    return peaks


def fit_semianalytic_peaks(lambda1_nm: float, lambda2_nm: float,
                           gamma_ex_mev: float, gamma_lsp_mev: float,
                           n_emitters: int, e_ex_ev: float):
    """Find (E_LSP, g) so the semi-analytic lineshape peaks at the targets.

    Used to reduce a measured two-peak spectrum to model parameters; the
    exciton energy and both half-linewidths are held fixed.
    """
    t1 = EV_NM / lambda1_nm
    t2 = EV_NM / lambda2_nm

    def residual(x):
        e_lsp, g = x
        p = CoupledOscillatorParams(e_lsp_ev=e_lsp, e_ex_ev=e_ex_ev,
                                    gamma_lsp_mev=gamma_lsp_mev,
                                    gamma_ex_mev=gamma_ex_mev,
                                    g_mev=g, n_emitters=n_emitters)
        pk = semianalytic_peak_energies(p)
        if len(pk) < 2:
            return [1.0, 1.0]
        return [pk[0] - t1, pk[-1] - t2]

    x0 = np.array([0.5 * (t1 + t2) * 2 - e_ex_ev, (t1 - t2) * 1e3 / (2 * math.sqrt(n_emitters))])
    sol = least_squares(residual, x0, diff_step=1e-4, xtol=1e-14, ftol=1e-14)
    resid = np.max(np.abs(sol.fun))
    if resid > 1e-6:
        raise AnalysisError(
            f"no (E_LSP, g) places the lineshape peaks at the targets "
            f"(residual {resid:.3g} eV)")
    return float(sol.x[0]), float(sol.x[1])


# ---------------------------------------------------------------------------
# Peak extraction from sampled spectra
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectrumPeak:
    wavelength_nm: float
    height: float
    hwhm_nm: float
    hwhm_mev: float
    prominence: float


def find_spectrum_peaks(wavelength_nm, values, prominence_frac=0.05):
    """Local maxima above a prominence threshold, sub-sample refined.

    Peak centers are polished by a local quadratic through the three
    samples around each maximum; half-linewidths come from the
    half-prominence crossings.  Returns peaks sorted by wavelength; an
    empty list when nothing clears the threshold.
    """
    wl = np.asarray(wavelength_nm, dtype=float)
    v = np.asarray(values, dtype=float)
    if wl.size != v.size or wl.size < 5:
        raise AnalysisError("need >= 5 samples")
    vmax = float(np.max(v))
    if vmax <= 0:
        return []
    idx, props = _scipy_find_peaks(v, prominence=prominence_frac * vmax)
    if idx.size == 0:
        return []
    widths, _, lips, rips = _scipy_peak_widths(v, idx, rel_height=0.5)
    peaks = []
    for j, i in enumerate(idx):
        # Quadratic refinement on the three points around the maximum.
        if 0 < i < wl.size - 1:
            y0, y1, y2 = v[i - 1], v[i], v[i + 1]
            denom = y0 - 2.0 * y1 + y2
            shift = 0.5 * (y0 - y2) / denom if denom != 0 else 0.0
            shift = float(np.clip(shift, -0.5, 0.5))
            lam = wl[i] + shift * 0.5 * (wl[min(i + 1, wl.size - 1)] - wl[max(i - 1, 0)])
            height = y1 - 0.25 * (y0 - y2) * shift
        else:
            lam, height = wl[i], v[i]
        lam_l = float(np.interp(lips[j], np.arange(wl.size), wl))
        lam_r = float(np.interp(rips[j], np.arange(wl.size), wl))
        hwhm_nm = abs(lam_r - lam_l) / 2.0
        hwhm_mev = abs(EV_NM / min(lam_l, lam_r) - EV_NM / max(lam_l, lam_r)) / 2.0 * 1e3
        peaks.append(SpectrumPeak(wavelength_nm=float(lam), height=float(height),
                                  hwhm_nm=hwhm_nm, hwhm_mev=hwhm_mev,
                                  prominence=float(props["prominences"][j])))
    peaks.sort(key=lambda pk: pk.wavelength_nm)
    return peaks


# ---------------------------------------------------------------------------
# Dispersion fits
# ---------------------------------------------------------------------------

@dataclass
class AnticrossingFit:
    g_mev: float
    e_ex_ev: float
    rms_residual_mev: float
    min_splitting_mev: float
    min_splitting_delta_mev: float
    residuals_mev: np.ndarray = field(repr=False)


def fit_anticrossing(points, n_emitters: int, gamma_ex_mev: float,
                     gamma_lsp_mev: float) -> AnticrossingFit:
    """Least-squares fit of the two-branch dispersion to measured peaks.

    Fits (g, E_ex) so the real parts of the eigenenergies match the
    measured branch energies over the detuning sweep; half-linewidths are
    inputs, not fit parameters.
    """
    points = list(points)
    if len(points) < 3:
        raise AnalysisError("need >= 3 detuning points")
    deltas = np.array([p.delta_mev for p in points])
    if np.ptp(deltas) == 0:
        raise AnalysisError("detuning points are degenerate (all equal)")
    if not (np.any(deltas > 0) and np.any(deltas < 0)):
        raise AnalysisError("detuning points must span both signs of delta")
    e_hi = np.array([EV_NM / p.lambda1_nm for p in points])
    e_lo = np.array([EV_NM / p.lambda2_nm for p in points])

    def model(x, delta_mev):
        g, e_ex = x
        p = CoupledOscillatorParams(e_lsp_ev=e_ex + delta_mev / 1e3, e_ex_ev=e_ex,
                                    gamma_lsp_mev=gamma_lsp_mev,
                                    gamma_ex_mev=gamma_ex_mev,
                                    g_mev=max(g, 1e-9), n_emitters=n_emitters)
        e1, e2 = eigenenergies(p, delta_mev)
        return e1.real, e2.real

    def residual(x):
        out = np.empty(2 * len(points))
        for i, d in enumerate(deltas):
            m1, m2 = model(x, d)
            out[2 * i] = m1 - e_hi[i]
            out[2 * i + 1] = m2 - e_lo[i]
        return out

    x0 = np.array([np.mean((e_hi - e_lo)) * 1e3 / (2.0 * math.sqrt(n_emitters)),
                   float(np.mean(0.5 * (e_hi + e_lo)))])
    sol = least_squares(residual, x0, xtol=1e-14, ftol=1e-14)
    g_fit, e_ex_fit = float(sol.x[0]), float(sol.x[1])
    res_mev = sol.fun * 1e3
    pfit = CoupledOscillatorParams(e_lsp_ev=e_ex_fit, e_ex_ev=e_ex_fit,
                                   gamma_lsp_mev=gamma_lsp_mev,
                                   gamma_ex_mev=gamma_ex_mev,
                                   g_mev=abs(g_fit), n_emitters=n_emitters)
    dgrid = np.linspace(deltas.min(), deltas.max(), 601)
    splits = eigen_splitting_mev(pfit, dgrid)
    imin = int(np.argmin(splits))
    return AnticrossingFit(g_mev=abs(g_fit), e_ex_ev=e_ex_fit,
                           rms_residual_mev=float(np.sqrt(np.mean(res_mev ** 2))),
                           min_splitting_mev=float(splits[imin]),
                           min_splitting_delta_mev=float(dgrid[imin]),
                           residuals_mev=res_mev)


def fit_scaling_law(lengths_nm, lambda_res_nm) -> ScalingLawFit:
    """Log-log power-law fit of resonance wavelength vs particle length."""
    l = np.asarray(lengths_nm, dtype=float)
    lam = np.asarray(lambda_res_nm, dtype=float)
    if l.size != lam.size or l.size < 3:
        raise AnalysisError("need >= 3 (length, wavelength) pairs")
    if np.unique(l).size < 3:
        raise AnalysisError("need >= 3 distinct lengths")
    if np.any(l <= 0) or np.any(lam <= 0):
        raise AnalysisError("lengths and wavelengths must be > 0")
    x, y = np.log(l), np.log(lam)
    alpha, intercept = np.polyfit(x, y, 1)
    yhat = alpha * x + intercept
    ss_res = float(np.sum((y - yhat) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    l0 = float(np.median(l))
    lambda0 = float(np.exp(intercept + alpha * np.log(l0)))
    return ScalingLawFit(lambda0_nm=lambda0, l0_nm=l0, alpha=float(alpha),
                         r_squared=r2)
