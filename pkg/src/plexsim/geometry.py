"""Scene geometry: bipyramid/sphere shapes, QD placement, voxelization.

All coordinates in nm.  A scene is an ordered list of (shape, material)
pairs over a background medium, with an optional substrate half-space at
z < 0.  Later shapes override earlier ones where they overlap; the
substrate is painted first.

Voxelization produces per-cell material fill fractions: cells fully inside
one medium are pure, boundary cells get fractions from an 8x8x8 regular
subsample (deterministic, no RNG).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .materials import MaterialModel

SUBSAMPLE = 8  # per axis; 512 points per mixed cell


class GeometryError(ValueError):
    pass


def _orthonormal_frame(axis):
    """Unit axis plus two transverse unit vectors."""
    a = np.asarray(axis, dtype=float)
    n = np.linalg.norm(a)
    if n == 0:
        raise GeometryError("axis must be a nonzero vector")
    a = a / n
    helper = np.array([0.0, 0.0, 1.0]) if abs(a[2]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(a, helper)
    u /= np.linalg.norm(u)
    v = np.cross(a, u)
    return a, u, v


@dataclass(frozen=True)
class Sphere:
    radius_nm: float
    center_nm: tuple[float, float, float]

    def __post_init__(self):
        if self.radius_nm <= 0:
            raise GeometryError("sphere radius must be > 0")
        object.__setattr__(self, "center_nm", tuple(float(c) for c in self.center_nm))

    def bounds(self):
        c = np.asarray(self.center_nm)
        r = self.radius_nm
        return c - r, c + r

    def inside(self, x, y, z):
        cx, cy, cz = self.center_nm
        return ((x - cx) ** 2 + (y - cy) ** 2 + (z - cz) ** 2) <= self.radius_nm ** 2

    def volume(self):
        return 4.0 / 3.0 * math.pi * self.radius_nm ** 3


@dataclass(frozen=True)
class Bipyramid:
    """Bicone with spherical tip caps: two mirror cones joined at the waist,
    each apex replaced by a sphere of radius tip_radius_nm tangent to the
    cone, total tip-to-tip extent along the axis equal to length_nm.
    """

    length_nm: float
    width_nm: float
    tip_radius_nm: float
    center_nm: tuple[float, float, float] = (0.0, 0.0, 0.0)
    axis: tuple[float, float, float] = (1.0, 0.0, 0.0)
    # Derived cap geometry (set in __post_init__).
    apex_nm: float = field(init=False, repr=False)
    cap_center_nm: float = field(init=False, repr=False)
    tangent_nm: float = field(init=False, repr=False)

    def __post_init__(self):
        l, w, r = self.length_nm, self.width_nm, self.tip_radius_nm
        if not (l > w > 2.0 * r > 0.0):
            raise GeometryError(
                f"need length > width > 2*tip_radius > 0, got l={l}, w={w}, r={r}")
        object.__setattr__(self, "center_nm", tuple(float(c) for c in self.center_nm))
        waist = w / 2.0
        half = l / 2.0

        # The uncapped cone apex x_a solves
        #   x_a - r*(sqrt(waist^2 + x_a^2)/waist - 1) = l/2,
        # the tangency condition for a cap of radius r ending exactly at l/2.
        def f(xa):
            return xa - r * (math.hypot(waist, xa) / waist - 1.0) - half

        try:
            apex = brentq(f, half, half + 4.0 * l, xtol=1e-12)
        except ValueError as exc:
            raise GeometryError(
                "tip cap cannot be made tangent to the cone "
                f"(l={l}, w={w}, r_tip={r})") from exc
        sin_t = waist / math.hypot(waist, apex)
        cap_center = apex - r / sin_t
        tangent = cap_center + r * sin_t
        if cap_center <= 0.0:
            raise GeometryError("tip cap center falls past the waist; "
                                "tip radius too large for this aspect ratio")
        object.__setattr__(self, "apex_nm", apex)
        object.__setattr__(self, "cap_center_nm", cap_center)
        object.__setattr__(self, "tangent_nm", tangent)

    @property
    def aspect_ratio(self):
        return self.length_nm / self.width_nm

    def tip_points(self):
        """The two apex points on the axis, world coordinates."""
        a, _, _ = _orthonormal_frame(self.axis)
        c = np.asarray(self.center_nm)
        h = self.length_nm / 2.0
        return c + h * a, c - h * a

    def bounds(self):
        a, u, v = _orthonormal_frame(self.axis)
        c = np.asarray(self.center_nm)
        h = self.length_nm / 2.0
        w = self.width_nm / 2.0
        ext = np.abs(a) * h + (np.abs(u) + np.abs(v)) * w
        return c - ext, c + ext

    def inside(self, x, y, z):
        a, u, v = _orthonormal_frame(self.axis)
        cx, cy, cz = self.center_nm
        dx, dy, dz = x - cx, y - cy, z - cz
        ax = dx * a[0] + dy * a[1] + dz * a[2]
        pu = dx * u[0] + dy * u[1] + dz * u[2]
        pv = dx * v[0] + dy * v[1] + dz * v[2]
        rho2 = pu ** 2 + pv ** 2
        s = np.abs(ax)
        waist = self.width_nm / 2.0
        cone_r = waist * (self.apex_nm - s) / self.apex_nm
        in_cone = (s <= self.tangent_nm) & (cone_r >= 0) & (rho2 <= cone_r ** 2)
        in_cap = ((s - self.cap_center_nm) ** 2 + rho2) <= self.tip_radius_nm ** 2
        return in_cone | in_cap

    def volume(self):
        """Analytic volume: two frustum-to-tangent cones plus spherical caps."""
        waist = self.width_nm / 2.0
        xa, xt, xc, r = self.apex_nm, self.tangent_nm, self.cap_center_nm, self.tip_radius_nm
        rt = waist * (xa - xt) / xa
        # Cone frustum from waist (radius `waist`) to the tangent circle.
        v_frustum = math.pi * (xt / 3.0) * (waist ** 2 + waist * rt + rt ** 2)
        # Spherical cap beyond the tangent plane: height h = (xc + r) - xt.
        h = xc + r - xt
        v_cap = math.pi * h ** 2 * (3.0 * r - h) / 3.0
        return 2.0 * (v_frustum + v_cap)


def build_bipyramid(length_nm, width_nm, tip_radius_nm,
                    center_nm=(0.0, 0.0, 0.0), axis=(1.0, 0.0, 0.0)) -> Bipyramid:
    return Bipyramid(length_nm=length_nm, width_nm=width_nm,
                     tip_radius_nm=tip_radius_nm, center_nm=center_nm, axis=axis)


def place_qd_at_tip(bp: Bipyramid, r_qd_nm: float, gap_nm: float = 0.0,
                    count: int = 1):
    """Spheres tangent-plus-gap to the +axis tip cap.

    count = 1 puts the sphere on the axis; count > 1 arranges the spheres
    on a ring around the axis, each at the same distance from the cap, at
    the smallest opening angle that keeps them from overlapping.  Returns
    a list of Sphere.
    """
    if r_qd_nm <= 0:
        raise GeometryError("QD radius must be > 0")
    if gap_nm < 0:
        raise GeometryError("gap must be >= 0")
    if count not in (1, 2, 3, 4):
        raise GeometryError("count must be in {1, 2, 3, 4}")
    a, u, v = _orthonormal_frame(bp.axis)
    c = np.asarray(bp.center_nm)
    cap_center = c + bp.cap_center_nm * a
    d = bp.tip_radius_nm + gap_nm + r_qd_nm   # cap center to QD center
    if count == 1:
        centers = [cap_center + d * a]
    else:
        # Smallest ring angle with adjacent spheres just touching.
        s = r_qd_nm / (d * math.sin(math.pi / count))
        if s > 1.0:
            raise GeometryError(
                f"{count} spheres of radius {r_qd_nm} cannot fit around the tip "
                f"without overlap (needs ring radius > {d:.2f} nm)")
        beta = math.asin(s)
        centers = []
        # Ring phase puts one sphere on +z and keeps the set mirror-symmetric
        # in y (so substrate scenes retain their symmetry plane).
        for i in range(count):
            phi = 2.0 * math.pi * i / count + math.pi
            direction = (math.cos(beta) * a
                         + math.sin(beta) * (math.cos(phi) * v + math.sin(phi) * u))
            centers.append(cap_center + d * direction)
    spheres = [Sphere(radius_nm=r_qd_nm, center_nm=tuple(ctr)) for ctr in centers]
    for i in range(len(spheres)):
        for j in range(i + 1, len(spheres)):
            dist = np.linalg.norm(np.asarray(spheres[i].center_nm)
                                  - np.asarray(spheres[j].center_nm))
            if dist < 2.0 * r_qd_nm - 1e-9:
                raise GeometryError("placed spheres overlap")
        # Spheres must clear the bipyramid body (tangency to the cap is fine).
        ctr = np.asarray(spheres[i].center_nm)
        if np.linalg.norm(ctr - cap_center) < d - 1e-9:
            raise GeometryError("sphere intersects the tip cap")
    return spheres


@dataclass
class Scene:
    """Ordered shapes over a background, with an optional z<0 substrate."""

    background: MaterialModel
    shapes: list = field(default_factory=list)        # [(shape, MaterialModel)]
    substrate: MaterialModel | None = None

    def add(self, shape, material: MaterialModel):
        self.shapes.append((shape, material))
        return self

    def scatterers_removed(self):
        """The reference scene: substrate and background only."""
        return Scene(background=self.background, shapes=[], substrate=self.substrate)

    def bounds(self):
        if not self.shapes:
            return None
        los, his = zip(*(s.bounds() for s, _ in self.shapes))
        return np.min(np.array(los), axis=0), np.max(np.array(his), axis=0)

    def material_list(self):
        """Unique materials: background, substrate, then shape materials in order."""
        mats = [self.background]
        if self.substrate is not None and self.substrate not in mats:
            mats.append(self.substrate)
        for _, m in self.shapes:
            if m not in mats:
                mats.append(m)
        return mats


@dataclass
class MaterialGrid:
    """Per-cell fill fractions for each material on a regular grid.

    fractions[m, i, j, k] is the volume fraction of materials[m] in cell
    (i, j, k); fractions sum to 1 per cell.  `origin` is the position of
    the (0,0,0) sample point (cell center for the default offset).
    """

    origin_nm: np.ndarray
    cell_nm: float
    materials: list
    fractions: np.ndarray          # (n_mats, nx, ny, nz) float32

    @property
    def shape(self):
        return self.fractions.shape[1:]

    def dominant_index(self):
        return np.argmax(self.fractions, axis=0).astype(np.int8)

    def material_volume(self, m: int):
        """Voxel-integrated volume of material m in nm^3."""
        return float(self.fractions[m].sum(dtype=np.float64)) * self.cell_nm ** 3

    def eps_inf_grid(self):
        out = np.zeros(self.shape, dtype=np.float64)
        for m, mat in enumerate(self.materials):
            out += self.fractions[m].astype(np.float64) * mat.eps_inf
        return out

    def d_omega_eps_grid(self, omega):
        """Volume-averaged Re d(ωε)/dω field at a single frequency."""
        out = np.zeros(self.shape, dtype=np.float64)
        for m, mat in enumerate(self.materials):
            out += self.fractions[m].astype(np.float64) * mat.d_omega_eps(omega)
        return out


def _cell_fractions_for_shape(shape, xs, ys, zs, cell):
    """Fill fractions of `shape` on the grid whose sample centers are
    xs/ys/zs (1-D axes).  Pure cells decided from corner+center tests,
    mixed cells refined with a regular 8^3 subsample."""
    nx, ny, nz = xs.size, ys.size, zs.size
    frac = np.zeros((nx, ny, nz), dtype=np.float32)
    lo, hi = shape.bounds()
    h = cell / 2.0
    i0 = max(0, int(np.searchsorted(xs, lo[0] - h) - 1))
    i1 = min(nx, int(np.searchsorted(xs, hi[0] + h) + 1))
    j0 = max(0, int(np.searchsorted(ys, lo[1] - h) - 1))
    j1 = min(ny, int(np.searchsorted(ys, hi[1] + h) + 1))
    k0 = max(0, int(np.searchsorted(zs, lo[2] - h) - 1))
    k1 = min(nz, int(np.searchsorted(zs, hi[2] + h) + 1))
    if i0 >= i1 or j0 >= j1 or k0 >= k1:
        return frac
    sx, sy, sz = xs[i0:i1], ys[j0:j1], zs[k0:k1]

    # Corner + center classification.
    cx = np.concatenate([sx - h, [sx[-1] + h]])
    cy = np.concatenate([sy - h, [sy[-1] + h]])
    cz = np.concatenate([sz - h, [sz[-1] + h]])
    corner = shape.inside(cx[:, None, None], cy[None, :, None], cz[None, None, :])
    csum = (corner[:-1, :-1, :-1].astype(np.int8) + corner[1:, :-1, :-1]
            + corner[:-1, 1:, :-1] + corner[:-1, :-1, 1:]
            + corner[1:, 1:, :-1] + corner[1:, :-1, 1:]
            + corner[:-1, 1:, 1:] + corner[1:, 1:, 1:])
    center = shape.inside(sx[:, None, None], sy[None, :, None], sz[None, None, :])
    sub = frac[i0:i1, j0:j1, k0:k1]
    sub[(csum == 8) & center] = 1.0
    mixed = ((csum > 0) & (csum < 8)) | (center != (csum == 8))

    idx = np.argwhere(mixed)
    if idx.size:
        off = (np.arange(SUBSAMPLE) + 0.5) / SUBSAMPLE - 0.5   # cell units
        ox, oy, oz = np.meshgrid(off, off, off, indexing="ij")
        ox = ox.ravel() * cell
        oy = oy.ravel() * cell
        oz = oz.ravel() * cell
        chunk = max(1, 2_000_000 // ox.size)
        for s0 in range(0, idx.shape[0], chunk):
            part = idx[s0:s0 + chunk]
            px = sx[part[:, 0]][:, None] + ox[None, :]
            py = sy[part[:, 1]][:, None] + oy[None, :]
            pz = sz[part[:, 2]][:, None] + oz[None, :]
            inside = shape.inside(px, py, pz)
            sub[part[:, 0], part[:, 1], part[:, 2]] = (
                inside.mean(axis=1, dtype=np.float64).astype(np.float32))
    frac[i0:i1, j0:j1, k0:k1] = sub
    return frac


def voxelize(scene: Scene, cell_nm: float, domain_nm,
             offset=(0.5, 0.5, 0.5)) -> MaterialGrid:
    """Rasterize a scene onto a regular grid of spacing `cell_nm`.

    domain_nm is ((x0, x1), (y0, y1), (z0, z1)); sample i sits at
    lo + (i + offset)*cell along each axis, so the default offset samples
    cell centers.  Raises if any shape extends outside the domain.
    """
    if cell_nm <= 0:
        raise GeometryError("cell size must be > 0")
    (x0, x1), (y0, y1), (z0, z1) = [tuple(map(float, ax)) for ax in domain_nm]
    dims = []
    for lo, hi in ((x0, x1), (y0, y1), (z0, z1)):
        n = int(round((hi - lo) / cell_nm))
        if n < 1 or abs(lo + n * cell_nm - hi) > 1e-6 * cell_nm:
            raise GeometryError("domain extents must be integer multiples of cell")
        dims.append(n)
    nx, ny, nz = dims
    for s, _ in scene.shapes:
        lo, hi = s.bounds()
        if (lo[0] < x0 - 1e-9 or hi[0] > x1 + 1e-9 or lo[1] < y0 - 1e-9
                or hi[1] > y1 + 1e-9 or lo[2] < z0 - 1e-9 or hi[2] > z1 + 1e-9):
            raise GeometryError(f"shape {s} extends outside the domain")

    xs = x0 + (np.arange(nx) + offset[0]) * cell_nm
    ys = y0 + (np.arange(ny) + offset[1]) * cell_nm
    zs = z0 + (np.arange(nz) + offset[2]) * cell_nm

    mats = scene.material_list()
    index = {id(m): i for i, m in enumerate(mats)}
    frac = np.zeros((len(mats), nx, ny, nz), dtype=np.float32)
    frac[0] = 1.0

    def paint(f_shape, m):
        frac[:] *= (1.0 - f_shape)[None, :, :, :]
        frac[index[id(m)]] += f_shape

    if scene.substrate is not None:
        # Fraction of each cell below z = 0, exact for an axis-aligned plane.
        fz = np.clip((0.0 - (zs - cell_nm / 2.0)) / cell_nm, 0.0, 1.0)
        f_sub = np.broadcast_to(fz[None, None, :].astype(np.float32),
                                (nx, ny, nz)).copy()
        paint(f_sub, scene.substrate)
    for s, m in scene.shapes:
        paint(_cell_fractions_for_shape(s, xs, ys, zs, cell_nm), m)

    return MaterialGrid(origin_nm=np.array([xs[0], ys[0], zs[0]]),
                        cell_nm=cell_nm, materials=mats, fractions=frac)


def dump_grid(grid: MaterialGrid, path):
    """Self-describing binary dump: JSON header + fraction arrays."""
    header = {
        "dims": list(grid.shape),
        "cell_nm": grid.cell_nm,
        "origin_nm": [float(v) for v in grid.origin_nm],
        "materials": [m.name or f"material_{i}" for i, m in enumerate(grid.materials)],
    }
    np.savez_compressed(path, header=json.dumps(header),
                        fractions=grid.fractions)


def load_grid_header(path):
    with np.load(path, allow_pickle=False) as data:
        return json.loads(str(data["header"]))
