"""Yee grid construction: dimensions, time step, CPML profiles."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from ..constants import C_NM_FS


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    """Uniform cubic-cell grid with CPML shells on all faces.

    Node i along an axis sits at origin + i*cell; arrays span the node
    lattice, dims counts nodes.  dt satisfies the 3-D Courant bound
    dt = courant * cell / (c*sqrt(3)).
    """

    origin_nm: tuple[float, float, float]
    dims: tuple[int, int, int]
    cell_nm: float
    dt_fs: float
    courant: float
    npml: int

    def index_of(self, pos_nm, axis):
        """Nearest node index of a physical coordinate along an axis."""
        i = int(round((pos_nm - self.origin_nm[axis]) / self.cell_nm))
        if not 0 <= i < self.dims[axis]:
            raise GridError(f"position {pos_nm} nm outside grid along axis {axis}")
        return i

    def position_of(self, index, axis):
        return self.origin_nm[axis] + index * self.cell_nm

    def interior_slice(self, margin_cells=0):
        m = self.npml + margin_cells
        return tuple(slice(m, n - m) for n in self.dims)


def make_grid(domain_nm, cell_nm, courant=0.9, cpml_cells=10,
              smallest_feature_nm=None) -> GridSpec:
    """Grid over ((x0,x1),(y0,y1),(z0,z1)), CPML included in the extents.

    Warns when the cell is coarser than half the smallest feature;
    rejects domains too small to hold the absorber plus an interior.
    """
    if not 0.0 < courant <= 1.0:
        raise GridError(f"courant must be in (0, 1], got {courant}")
    if cell_nm <= 0:
        raise GridError("cell must be > 0")
    if cpml_cells < 4:
        raise GridError("need >= 4 CPML cells")
    dims = []
    origin = []
    for lo, hi in domain_nm:
        n = int(round((hi - lo) / cell_nm)) + 1
        if n < 2 * cpml_cells + 8:
            raise GridError(
                f"domain span {hi - lo} nm too small for {cpml_cells}-cell CPML "
                "plus an interior")
        dims.append(n)
        origin.append(float(lo))
    if smallest_feature_nm is not None and cell_nm > smallest_feature_nm / 2.0:
        warnings.warn(
            f"cell {cell_nm} nm is coarser than half the smallest feature "
            f"({smallest_feature_nm} nm); expect staircasing", stacklevel=2)
    dt = courant * cell_nm / (C_NM_FS * math.sqrt(3.0))
    return GridSpec(origin_nm=tuple(origin), dims=tuple(dims), cell_nm=cell_nm,
                    dt_fs=dt, courant=courant, npml=int(cpml_cells))


def cpml_profiles(n, npml, cell_nm, dt_fs, grading=3.0, r_target=1e-8,
                  alpha_max=0.05):
    """Per-axis CPML recursion coefficients (kappa = 1).

    Returns (be, ae, bh, ah), length-n arrays: be/ae apply to E corrections
    at integer node positions, bh/ah to H corrections at half positions.
    sigma is graded as sigma_max * rho^m with rho the normalized depth into
    the absorber; alpha is graded linearly from alpha_max at the interface
    to zero at the outer wall.  sigma here is sigma/eps0 in 1/fs.
    """
    L = npml * cell_nm
    sigma_max = -(grading + 1.0) * C_NM_FS * math.log(r_target) / (2.0 * L)

    def coeffs(rho):
        rho = np.clip(rho, 0.0, 1.0)
        sigma = sigma_max * rho ** grading
        alpha = alpha_max * (1.0 - rho)
        b = np.exp(-(sigma + alpha) * dt_fs)
        with np.errstate(invalid="ignore", divide="ignore"):
            a = np.where(sigma + alpha > 0.0, sigma / (sigma + alpha) * (b - 1.0), 0.0)
        return b, a

    pos_e = np.arange(n, dtype=float)
    pos_h = pos_e + 0.5
    rho_e = np.maximum((npml - pos_e) / npml, (pos_e - (n - 1 - npml)) / npml)
    rho_h = np.maximum((npml - pos_h) / npml, (pos_h - (n - 1 - npml)) / npml)
    be, ae = coeffs(rho_e)
    bh, ah = coeffs(rho_h)
    return be, ae, bh, ah
