"""Compiled inner loops for summing many beams on a uniform grid."""

from __future__ import annotations

import math

import numba as nb
import numpy as np


@nb.njit(cache=True, inline="always")
def _f(u):
    return math.exp(-1.0 / u) if u > 0.0 else 0.0


@nb.njit(cache=True, inline="always")
def _df(u):
    return math.exp(-1.0 / u) / (u * u) if u > 0.0 else 0.0


@nb.njit(cache=True)
def _chi(r, rad):
    """Radial bump and its radial derivative."""
    half = 0.5 * r
    if rad <= half:
        return 1.0, 0.0
    if rad >= r:
        return 0.0, 0.0
    s = (rad - half) / half
    a = _f(1.0 - s)
    b = _f(s)
    den = a + b
    da = -_df(1.0 - s)
    db = _df(s)
    return a / den, (da * b - a * db) / (den * den) / half


@nb.njit(cache=True)
def accumulate_kernel(center, momentum, hessian, coef, xdot, xidot, Gdot, adot,
                      start, dx, shape, offs, eps, cutoff, want_u, want_dt, want_dx,
                      out_u, out_dt, out_dx):
    M, n = center.shape
    K = offs.shape[0]
    strides = np.empty(n, np.int64)
    acc = 1
    for d in range(n - 1, -1, -1):
        strides[d] = acc
        acc *= shape[d]
    base = np.empty(n, np.int64)
    dl = np.empty(n)
    Gd = np.empty(n, np.complex128)
    inv_eps = 1.0 / eps
    for m in range(M):
        for d in range(n):
            base[d] = int(np.rint((center[m, d] - start[d]) / dx[d]))
        c0 = coef[m]
        if want_dt:
            xi_xdot = 0.0
            for d in range(n):
                xi_xdot += momentum[m, d] * xdot[m, d]
        for k in range(K):
            lin = 0
            ok = True
            rad2 = 0.0
            for d in range(n):
                j = base[d] + offs[k, d]
                if j < 0 or j >= shape[d]:
                    ok = False
                    break
                lin += j * strides[d]
                dl[d] = start[d] + j * dx[d] - center[m, d]
                rad2 += dl[d] * dl[d]
            if not ok:
                continue
            rad = math.sqrt(rad2)
            chi, dchi = _chi(cutoff, rad)
            if chi == 0.0 and dchi == 0.0:
                continue
            psi = 0.0 + 0.0j
            for i in range(n):
                g = 0.0 + 0.0j
                for j in range(n):
                    g += hessian[m, i, j] * dl[j]
                Gd[i] = g
                psi += dl[i] * (momentum[m, i] + 0.5 * g)
            e = c0 * np.exp(1j * inv_eps * psi)
            if want_u:
                out_u[lin] += e * chi
            if want_dx or want_dt:
                inv_r = 1.0 / rad if rad > 0.0 else 0.0
            if want_dx:
                for i in range(n):
                    out_dx[lin, i] += e * (dchi * dl[i] * inv_r
                                           + chi * 1j * inv_eps * (momentum[m, i] + Gd[i]))
            if want_dt:
                psi_t = -xi_xdot + 0.0j
                chi_t = 0.0
                for i in range(n):
                    t1 = xidot[m, i] + 0.0j
                    t2 = 0.0 + 0.0j
                    for j in range(n):
                        t1 -= xdot[m, j] * hessian[m, j, i]
                        t2 += Gdot[m, i, j] * dl[j]
                    psi_t += dl[i] * (t1 + 0.5 * t2)
                    chi_t -= dchi * dl[i] * inv_r * xdot[m, i]
                out_dt[lin] += e * (chi_t + chi * (adot[m] + 1j * inv_eps * psi_t))


def accumulate_compiled(beams, eps, xgrid, what, radius):
    n = xgrid.ndim
    shape = np.array(xgrid.shape, np.int64)
    size = int(np.prod(shape))
    dx = np.asarray(xgrid.spacing, float)
    start = np.array([a.start for a in xgrid.axes], float)
    W = np.ceil(radius / dx).astype(int)
    offs = np.stack(np.meshgrid(*[np.arange(-w, w + 1) for w in W], indexing="ij"), -1)
    offs = np.ascontiguousarray(offs.reshape(-1, n).astype(np.int64))
    M = beams.size
    want_dt = "dt" in what
    if want_dt and beams.xdot is None:
        raise ValueError("exact time derivative needs beam rates")
    z2 = np.zeros((M, n))
    xdot = beams.xdot if want_dt else z2
    xidot = beams.xidot if want_dt else z2
    Gdot = beams.Gdot if want_dt else np.zeros((M, n, n), complex)
    adot = beams.adot_over_a if want_dt else np.zeros(M, complex)
    out_u = np.zeros(size if "u" in what else 1, complex)
    out_dt = np.zeros(size if want_dt else 1, complex)
    out_dx = np.zeros((size if "dx" in what else 1, n), complex)
    accumulate_kernel(
        np.ascontiguousarray(beams.center, float), np.ascontiguousarray(beams.momentum, float),
        np.ascontiguousarray(beams.hessian, complex), np.ascontiguousarray(beams.coef, complex),
        np.ascontiguousarray(xdot, float), np.ascontiguousarray(xidot, float),
        np.ascontiguousarray(Gdot, complex), np.ascontiguousarray(adot, complex),
        start, dx, shape, offs, float(eps), float(beams.cutoff_d),
        "u" in what, want_dt, "dx" in what, out_u, out_dt, out_dx)
    res = {}
    if "u" in what:
        res["u"] = out_u.reshape(xgrid.shape)
    if want_dt:
        res["dt"] = out_dt.reshape(xgrid.shape)
    if "dx" in what:
        res["dx"] = out_dx.reshape(xgrid.shape + (n,))
    return res
