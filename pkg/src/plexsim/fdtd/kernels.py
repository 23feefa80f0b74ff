"""Numba stencil kernels: Yee updates, CPML corrections, ADE poles, DFT.

All kernels are serial njit functions; every write is to a distinct cell,
so results are bitwise reproducible.  Fields are float64 arrays of shape
(nx, ny, nz) with k contiguous.  Yee staggering:

    Ex (i+1/2, j,     k    )    Hx (i,     j+1/2, k+1/2)
    Ey (i,     j+1/2, k    )    Hy (i+1/2, j,     k+1/2)
    Ez (i,     j,     k+1/2)    Hz (i+1/2, j+1/2, k    )

`ch`/`ce` fold c*dt/cell; raw index differences stand in for derivatives.
CPML uses kappa = 1 (no coordinate stretching), so the correction is a
pure psi term added after the bulk update.
"""

import numpy as np
from numba import njit

FASTMATH = False  # bitwise determinism beats the small fastmath win


@njit(cache=True, fastmath=FASTMATH)
def update_h(Ex, Ey, Ez, Hx, Hy, Hz, ch):
    nx, ny, nz = Ex.shape
    for i in range(nx - 1):
        for j in range(ny - 1):
            for k in range(nz - 1):
                Hx[i, j, k] -= ch * ((Ez[i, j + 1, k] - Ez[i, j, k])
                                     - (Ey[i, j, k + 1] - Ey[i, j, k]))
                Hy[i, j, k] -= ch * ((Ex[i, j, k + 1] - Ex[i, j, k])
                                     - (Ez[i + 1, j, k] - Ez[i, j, k]))
                Hz[i, j, k] -= ch * ((Ey[i + 1, j, k] - Ey[i, j, k])
                                     - (Ex[i, j + 1, k] - Ex[i, j, k]))


@njit(cache=True, fastmath=FASTMATH)
def update_e(Ex, Ey, Ez, Hx, Hy, Hz, iex, iey, iez, ce):
    nx, ny, nz = Ex.shape
    for i in range(nx):
        for j in range(1, ny - 1):
            for k in range(1, nz - 1):
                Ex[i, j, k] += ce * iex[i, j, k] * (
                    (Hz[i, j, k] - Hz[i, j - 1, k]) - (Hy[i, j, k] - Hy[i, j, k - 1]))
    for i in range(1, nx - 1):
        for j in range(ny):
            for k in range(1, nz - 1):
                Ey[i, j, k] += ce * iey[i, j, k] * (
                    (Hx[i, j, k] - Hx[i, j, k - 1]) - (Hz[i, j, k] - Hz[i - 1, j, k]))
    for i in range(1, nx - 1):
        for j in range(1, ny - 1):
            for k in range(nz):
                Ez[i, j, k] += ce * iez[i, j, k] * (
                    (Hy[i, j, k] - Hy[i - 1, j, k]) - (Hx[i, j, k] - Hx[i, j - 1, k]))


# ---------------------------------------------------------------------------
# CPML corrections, one kernel per stretched axis.
# psi arrays live on the two boundary slabs; b/a profiles are full-length
# 1-D arrays along the axis (zero a outside the PML), sampled at integer
# positions for E corrections and half positions for H corrections.
# ---------------------------------------------------------------------------

@njit(cache=True, fastmath=FASTMATH)
def cpml_e_x(Ey, Ez, Hy, Hz, iey, iez, psi_eyx_lo, psi_ezx_lo, psi_eyx_hi,
             psi_ezx_hi, be, ae, npml, ce):
    nx, ny, nz = Ey.shape
    for s in range(npml):
        i = 1 + s
        b = be[i]; a = ae[i]
        for j in range(ny):
            for k in range(1, nz - 1):
                d = Hz[i, j, k] - Hz[i - 1, j, k]
                p = b * psi_eyx_lo[s, j, k] + a * d
                psi_eyx_lo[s, j, k] = p
                Ey[i, j, k] -= ce * iey[i, j, k] * p
        for j in range(1, ny - 1):
            for k in range(nz):
                d = Hy[i, j, k] - Hy[i - 1, j, k]
                p = b * psi_ezx_lo[s, j, k] + a * d
                psi_ezx_lo[s, j, k] = p
                Ez[i, j, k] += ce * iez[i, j, k] * p
    for s in range(npml):
        i = nx - 1 - npml + s
        b = be[i]; a = ae[i]
        for j in range(ny):
            for k in range(1, nz - 1):
                d = Hz[i, j, k] - Hz[i - 1, j, k]
                p = b * psi_eyx_hi[s, j, k] + a * d
                psi_eyx_hi[s, j, k] = p
                Ey[i, j, k] -= ce * iey[i, j, k] * p
        for j in range(1, ny - 1):
            for k in range(nz):
                d = Hy[i, j, k] - Hy[i - 1, j, k]
                p = b * psi_ezx_hi[s, j, k] + a * d
                psi_ezx_hi[s, j, k] = p
                Ez[i, j, k] += ce * iez[i, j, k] * p


@njit(cache=True, fastmath=FASTMATH)
def cpml_e_y(Ex, Ez, Hx, Hz, iex, iez, psi_exy_lo, psi_ezy_lo, psi_exy_hi,
             psi_ezy_hi, be, ae, npml, ce):
    nx, ny, nz = Ex.shape
    for i in range(nx):
        for s in range(npml):
            j = 1 + s
            b = be[j]; a = ae[j]
            for k in range(1, nz - 1):
                d = Hz[i, j, k] - Hz[i, j - 1, k]
                p = b * psi_exy_lo[i, s, k] + a * d
                psi_exy_lo[i, s, k] = p
                Ex[i, j, k] += ce * iex[i, j, k] * p
        for s in range(npml):
            j = ny - 1 - npml + s
            b = be[j]; a = ae[j]
            for k in range(1, nz - 1):
                d = Hz[i, j, k] - Hz[i, j - 1, k]
                p = b * psi_exy_hi[i, s, k] + a * d
                psi_exy_hi[i, s, k] = p
                Ex[i, j, k] += ce * iex[i, j, k] * p
    for i in range(1, nx - 1):
        for s in range(npml):
            j = 1 + s
            b = be[j]; a = ae[j]
            for k in range(nz):
                d = Hx[i, j, k] - Hx[i, j - 1, k]
                p = b * psi_ezy_lo[i, s, k] + a * d
                psi_ezy_lo[i, s, k] = p
                Ez[i, j, k] -= ce * iez[i, j, k] * p
        for s in range(npml):
            j = ny - 1 - npml + s
            b = be[j]; a = ae[j]
            for k in range(nz):
                d = Hx[i, j, k] - Hx[i, j - 1, k]
                p = b * psi_ezy_hi[i, s, k] + a * d
                psi_ezy_hi[i, s, k] = p
                Ez[i, j, k] -= ce * iez[i, j, k] * p


@njit(cache=True, fastmath=FASTMATH)
def cpml_e_z(Ex, Ey, Hx, Hy, iex, iey, psi_exz_lo, psi_eyz_lo, psi_exz_hi,
             psi_eyz_hi, be, ae, npml, ce):
    nx, ny, nz = Ex.shape
    for i in range(nx):
        for j in range(1, ny - 1):
            for s in range(npml):
                k = 1 + s
                d = Hy[i, j, k] - Hy[i, j, k - 1]
                p = be[k] * psi_exz_lo[i, j, s] + ae[k] * d
                psi_exz_lo[i, j, s] = p
                Ex[i, j, k] -= ce * iex[i, j, k] * p
            for s in range(npml):
                k = nz - 1 - npml + s
                d = Hy[i, j, k] - Hy[i, j, k - 1]
                p = be[k] * psi_exz_hi[i, j, s] + ae[k] * d
                psi_exz_hi[i, j, s] = p
                Ex[i, j, k] -= ce * iex[i, j, k] * p
    for i in range(1, nx - 1):
        for j in range(ny):
            for s in range(npml):
                k = 1 + s
                d = Hx[i, j, k] - Hx[i, j, k - 1]
                p = be[k] * psi_eyz_lo[i, j, s] + ae[k] * d
                psi_eyz_lo[i, j, s] = p
                Ey[i, j, k] += ce * iey[i, j, k] * p
            for s in range(npml):
                k = nz - 1 - npml + s
                d = Hx[i, j, k] - Hx[i, j, k - 1]
                p = be[k] * psi_eyz_hi[i, j, s] + ae[k] * d
                psi_eyz_hi[i, j, s] = p
                Ey[i, j, k] += ce * iey[i, j, k] * p


@njit(cache=True, fastmath=FASTMATH)
def cpml_h_x(Ey, Ez, Hy, Hz, psi_hyx_lo, psi_hzx_lo, psi_hyx_hi, psi_hzx_hi,
             bh, ah, npml, ch):
    nx, ny, nz = Ey.shape
    for s in range(npml):
        i = s
        b = bh[i]; a = ah[i]
        for j in range(ny - 1):
            for k in range(nz - 1):
                d = Ez[i + 1, j, k] - Ez[i, j, k]
                p = b * psi_hyx_lo[s, j, k] + a * d
                psi_hyx_lo[s, j, k] = p
                Hy[i, j, k] += ch * p
                d = Ey[i + 1, j, k] - Ey[i, j, k]
                p = b * psi_hzx_lo[s, j, k] + a * d
                psi_hzx_lo[s, j, k] = p
                Hz[i, j, k] -= ch * p
    for s in range(npml):
        i = nx - 1 - npml + s
        b = bh[i]; a = ah[i]
        for j in range(ny - 1):
            for k in range(nz - 1):
                d = Ez[i + 1, j, k] - Ez[i, j, k]
                p = b * psi_hyx_hi[s, j, k] + a * d
                psi_hyx_hi[s, j, k] = p
                Hy[i, j, k] += ch * p
                d = Ey[i + 1, j, k] - Ey[i, j, k]
                p = b * psi_hzx_hi[s, j, k] + a * d
                psi_hzx_hi[s, j, k] = p
                Hz[i, j, k] -= ch * p


@njit(cache=True, fastmath=FASTMATH)
def cpml_h_y(Ex, Ez, Hx, Hz, psi_hxy_lo, psi_hzy_lo, psi_hxy_hi, psi_hzy_hi,
             bh, ah, npml, ch):
    nx, ny, nz = Ex.shape
    for i in range(nx - 1):
        for s in range(npml):
            j = s
            b = bh[j]; a = ah[j]
            for k in range(nz - 1):
                d = Ez[i, j + 1, k] - Ez[i, j, k]
                p = b * psi_hxy_lo[i, s, k] + a * d
                psi_hxy_lo[i, s, k] = p
                Hx[i, j, k] -= ch * p
                d = Ex[i, j + 1, k] - Ex[i, j, k]
                p = b * psi_hzy_lo[i, s, k] + a * d
                psi_hzy_lo[i, s, k] = p
                Hz[i, j, k] += ch * p
        for s in range(npml):
            j = ny - 1 - npml + s
            b = bh[j]; a = ah[j]
            for k in range(nz - 1):
                d = Ez[i, j + 1, k] - Ez[i, j, k]
                p = b * psi_hxy_hi[i, s, k] + a * d
                psi_hxy_hi[i, s, k] = p
                Hx[i, j, k] -= ch * p
                d = Ex[i, j + 1, k] - Ex[i, j, k]
                p = b * psi_hzy_hi[i, s, k] + a * d
                psi_hzy_hi[i, s, k] = p
                Hz[i, j, k] += ch * p


@njit(cache=True, fastmath=FASTMATH)
def cpml_h_z(Ex, Ey, Hx, Hy, psi_hxz_lo, psi_hyz_lo, psi_hxz_hi, psi_hyz_hi,
             bh, ah, npml, ch):
    nx, ny, nz = Ex.shape
    for i in range(nx - 1):
        for j in range(ny - 1):
            for s in range(npml):
                k = s
                d = Ey[i, j, k + 1] - Ey[i, j, k]
                p = bh[k] * psi_hxz_lo[i, j, s] + ah[k] * d
                psi_hxz_lo[i, j, s] = p
                Hx[i, j, k] += ch * p
                d = Ex[i, j, k + 1] - Ex[i, j, k]
                p = bh[k] * psi_hyz_lo[i, j, s] + ah[k] * d
                psi_hyz_lo[i, j, s] = p
                Hy[i, j, k] -= ch * p
            for s in range(npml):
                k = nz - 1 - npml + s
                d = Ey[i, j, k + 1] - Ey[i, j, k]
                p = bh[k] * psi_hxz_hi[i, j, s] + ah[k] * d
                psi_hxz_hi[i, j, s] = p
                Hx[i, j, k] += ch * p
                d = Ex[i, j, k + 1] - Ex[i, j, k]
                p = bh[k] * psi_hyz_hi[i, j, s] + ah[k] * d
                psi_hyz_hi[i, j, s] = p
                Hy[i, j, k] -= ch * p


# ---------------------------------------------------------------------------
# ADE dispersive-pole update (one pole, one E component, one material box).
#
#   P" + gamma P' + w0^2 P = S * w * E      (S in rad^2/fs^2, w = fill frac)
#
# discretized leapfrog-style; the polarization increment is subtracted from
# E immediately (E still holds the pre-update value via esnap).
# ---------------------------------------------------------------------------

@njit(cache=True, fastmath=FASTMATH)
def ade_update(E, esnap, inv_eps, weight, p_cur, p_prev, i0, j0, k0,
               ca, cb, cc):
    n0, n1, n2 = weight.shape
    for a in range(n0):
        for b in range(n1):
            for c in range(n2):
                w = weight[a, b, c]
                if w == 0.0:
                    continue
                i = i0 + a; j = j0 + b; k = k0 + c
                pn = (ca * p_cur[a, b, c] + cb * p_prev[a, b, c]
                      + cc * w * esnap[a, b, c])
                dp = pn - p_cur[a, b, c]
                p_prev[a, b, c] = p_cur[a, b, c]
                p_cur[a, b, c] = pn
                E[i, j, k] -= inv_eps[i, j, k] * dp


# ---------------------------------------------------------------------------
# Running DFT accumulation.  acc[f, ...] += field * (cr[f] + 1j*ci[f]).
# ---------------------------------------------------------------------------

@njit(cache=True, fastmath=FASTMATH)
def acc_plane_z(field, kp, i0, i1, j0, j1, acc, cr, ci):
    nf = cr.shape[0]
    for f in range(nf):
        w = complex(cr[f], ci[f])
        for a in range(i1 - i0):
            for b in range(j1 - j0):
                acc[f, a, b] += field[i0 + a, j0 + b, kp] * w


@njit(cache=True, fastmath=FASTMATH)
def acc_plane_z_avg(field, ka, kb, i0, i1, j0, j1, acc, cr, ci):
    nf = cr.shape[0]
    for f in range(nf):
        w = complex(cr[f], ci[f])
        for a in range(i1 - i0):
            for b in range(j1 - j0):
                v = 0.5 * (field[i0 + a, j0 + b, ka] + field[i0 + a, j0 + b, kb])
                acc[f, a, b] += v * w


@njit(cache=True, fastmath=FASTMATH)
def acc_plane_x(field, ip, j0, j1, k0, k1, acc, cr, ci):
    nf = cr.shape[0]
    for f in range(nf):
        w = complex(cr[f], ci[f])
        for a in range(j1 - j0):
            for b in range(k1 - k0):
                acc[f, a, b] += field[ip, j0 + a, k0 + b] * w


@njit(cache=True, fastmath=FASTMATH)
def acc_plane_x_avg(field, ia, ib, j0, j1, k0, k1, acc, cr, ci):
    nf = cr.shape[0]
    for f in range(nf):
        w = complex(cr[f], ci[f])
        for a in range(j1 - j0):
            for b in range(k1 - k0):
                v = 0.5 * (field[ia, j0 + a, k0 + b] + field[ib, j0 + a, k0 + b])
                acc[f, a, b] += v * w


@njit(cache=True, fastmath=FASTMATH)
def acc_plane_y(field, jp, i0, i1, k0, k1, acc, cr, ci):
    nf = cr.shape[0]
    for f in range(nf):
        w = complex(cr[f], ci[f])
        for a in range(i1 - i0):
            for b in range(k1 - k0):
                acc[f, a, b] += field[i0 + a, jp, k0 + b] * w


@njit(cache=True, fastmath=FASTMATH)
def acc_plane_y_avg(field, ja, jb, i0, i1, k0, k1, acc, cr, ci):
    nf = cr.shape[0]
    for f in range(nf):
        w = complex(cr[f], ci[f])
        for a in range(i1 - i0):
            for b in range(k1 - k0):
                v = 0.5 * (field[i0 + a, ja, k0 + b] + field[i0 + a, jb, k0 + b])
                acc[f, a, b] += v * w


@njit(cache=True, fastmath=FASTMATH)
def acc_volume(field, i0, i1, j0, j1, k0, k1, acc, cr, ci):
    nf = cr.shape[0]
    for f in range(nf):
        w = complex(cr[f], ci[f])
        for a in range(i1 - i0):
            for b in range(j1 - j0):
                for c in range(k1 - k0):
                    acc[f, a, b, c] += field[i0 + a, j0 + b, k0 + c] * w
