"""Batched hot loops over many sampled paths.

Each kernel has a numba implementation (``*_nb``) and a vectorised numpy
implementation (``*_np``).  The public wrappers dispatch on
:data:`geowiener._accel.USE_NUMBA`.  Array conventions: increments are
``(N, n, d)``, vertices ``(N, n+1, D)``, frames ``(N, n+1, D, d)``.
"""
from __future__ import annotations

import math

import numpy as np

from . import _accel


# -- sphere development -------------------------------------------------------------


@_accel.njit
def _develop_sphere_nb(x0, u0, inc):
    N, n, d = inc.shape
    D = x0.shape[0]
    verts = np.empty((N, n + 1, D))
    frames = np.empty((N, n + 1, D, d))
    x = np.empty(D)
    u = np.empty((D, d))
    e = np.empty(D)
    rot = np.empty(D)
    for k in range(N):
        x[:] = x0
        u[:, :] = u0
        verts[k, 0] = x
        frames[k, 0] = u
        for i in range(n):
            th2 = 0.0
            for a in range(D):
                s = 0.0
                for j in range(d):
                    s += u[a, j] * inc[k, i, j]
                e[a] = s
                th2 += s * s
            th = math.sqrt(th2)
            if th > 0.0:
                c = math.cos(th)
                sn = math.sin(th)
                for a in range(D):
                    e[a] /= th
                    rot[a] = (c - 1.0) * e[a] - sn * x[a]
                for j in range(d):
                    p = 0.0
                    for a in range(D):
                        p += e[a] * u[a, j]
                    for a in range(D):
                        u[a, j] += p * rot[a]
                nrm = 0.0
                for a in range(D):
                    x[a] = c * x[a] + sn * e[a]
                    nrm += x[a] * x[a]
                nrm = math.sqrt(nrm)
                for a in range(D):
                    x[a] /= nrm
            # modified Gram-Schmidt against the new normal x
            for j in range(d):
                p = 0.0
                for a in range(D):
                    p += x[a] * u[a, j]
                for a in range(D):
                    u[a, j] -= p * x[a]
                for l in range(j):
                    q = 0.0
                    for a in range(D):
                        q += u[a, l] * u[a, j]
                    for a in range(D):
                        u[a, j] -= q * u[a, l]
                nrm = 0.0
                for a in range(D):
                    nrm += u[a, j] * u[a, j]
                nrm = math.sqrt(nrm)
                for a in range(D):
                    u[a, j] /= nrm
            verts[k, i + 1] = x
            frames[k, i + 1] = u
    return verts, frames


def _develop_sphere_np(x0, u0, inc):
    N, n, d = inc.shape
    D = x0.shape[0]
    verts = np.empty((N, n + 1, D))
    frames = np.empty((N, n + 1, D, d))
    x = np.broadcast_to(x0, (N, D)).copy()
    u = np.broadcast_to(u0, (N, D, d)).copy()
    verts[:, 0] = x
    frames[:, 0] = u
    for i in range(n):
        v = np.einsum("kaj,kj->ka", u, inc[:, i])
        th = np.linalg.norm(v, axis=1)
        safe = np.where(th > 0.0, th, 1.0)
        e = v / safe[:, None]
        c = np.cos(th)[:, None]
        sn = np.sin(th)[:, None]
        rot = (c - 1.0) * e - sn * x
        u = u + rot[:, :, None] * np.einsum("ka,kaj->kj", e, u)[:, None, :]
        x = c * x + sn * e
        x /= np.linalg.norm(x, axis=1, keepdims=True)
        u -= x[:, :, None] * np.einsum("ka,kaj->kj", x, u)[:, None, :]
        for j in range(d):
            for l in range(j):
                u[:, :, j] -= np.einsum("ka,ka->k", u[:, :, l], u[:, :, j])[:, None] * u[:, :, l]
            u[:, :, j] /= np.linalg.norm(u[:, :, j], axis=1, keepdims=True)
        verts[:, i + 1] = x
        frames[:, i + 1] = u
    return verts, frames


def develop_sphere(x0: np.ndarray, u0: np.ndarray, inc: np.ndarray):
    """Develop a batch of driving increments on the unit sphere."""
    x0 = np.ascontiguousarray(x0, dtype=float)
    u0 = np.ascontiguousarray(u0, dtype=float)
    inc = np.ascontiguousarray(inc, dtype=float)
    if _accel.USE_NUMBA:
        return _develop_sphere_nb(x0, u0, inc)
    return _develop_sphere_np(x0, u0, inc)


def develop_flat(x0: np.ndarray, u0: np.ndarray, inc: np.ndarray):
    """Flat development: cumulative sums of the rotated increments."""
    N, n, d = inc.shape
    verts = np.empty((N, n + 1, x0.shape[0]))
    verts[:, 0] = x0
    np.cumsum(inc @ u0.T, axis=1, out=verts[:, 1:])
    verts[:, 1:] += x0
    frames = np.broadcast_to(u0, (N, n + 1) + u0.shape)
    return verts, frames


# -- sphere Jacobi data -----------------------------------------------------------------


def sinc(x: np.ndarray) -> np.ndarray:
    """``sin(x)/x`` with the removable singularity filled in."""
    return np.sinc(np.asarray(x) / np.pi)


def sphere_segment_logdets(inc: np.ndarray):
    """Per-segment ``log det(Z/ds)`` on the unit sphere and the conjugate-point mask.

    A segment is degenerate once it reaches the first conjugate point, ``|db| >= pi``.
    """
    d = inc.shape[-1]
    r = np.linalg.norm(inc, axis=-1)
    degenerate = (r >= np.pi) if d > 1 else np.zeros(r.shape, dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        logdet = (d - 1) * np.log(np.abs(sinc(r)))
    logdet = np.where(degenerate, -np.inf, logdet)
    return logdet, degenerate


@_accel.njit
def _kp_sphere_nb(inc, ds, kprime):
    N, n, d = inc.shape
    h = np.zeros((N, n + 1, d))
    cur = np.empty(d)
    kk = np.empty(d)
    for k in range(N):
        for a in range(d):
            cur[a] = 0.0
        for i in range(n):
            r2 = 0.0
            for a in range(d):
                r2 += inc[k, i, a] * inc[k, i, a]
            r = math.sqrt(r2)
            if r > 0.0:
                cs = math.cos(r)
                sc = math.sin(r) / r
                ph = 0.0
                pk = 0.0
                for a in range(d):
                    ph += inc[k, i, a] * cur[a]
                    pk += inc[k, i, a] * kprime[i, a]
                ph /= r2
                pk /= r2
                for a in range(d):
                    par_h = ph * inc[k, i, a]
                    par_k = pk * inc[k, i, a]
                    kk[a] = ds[i] * (par_k + sc * (kprime[i, a] - par_k))
                    cur[a] = par_h + cs * (cur[a] - par_h) + kk[a]
            else:
                for a in range(d):
                    cur[a] += ds[i] * kprime[i, a]
            for a in range(d):
                h[k, i + 1, a] = cur[a]
    return h


def _kp_sphere_np(inc, ds, kprime):
    N, n, d = inc.shape
    h = np.zeros((N, n + 1, d))
    cur = np.zeros((N, d))
    for i in range(n):
        b = inc[:, i]
        r2 = np.einsum("ka,ka->k", b, b)
        r = np.sqrt(r2)
        safe = np.where(r2 > 0.0, r2, 1.0)
        par_h = (np.einsum("ka,ka->k", b, cur) / safe)[:, None] * b
        par_k = ((b @ kprime[i]) / safe)[:, None] * b
        cs = np.cos(r)[:, None]
        sc = sinc(r)[:, None]
        cur = par_h + cs * (cur - par_h) + ds[i] * (par_k + sc * (kprime[i] - par_k))
        h[:, i + 1] = cur
    return h


def kp_sphere(inc: np.ndarray, ds: np.ndarray, kprime: np.ndarray) -> np.ndarray:
    """Frame coordinates ``h(s_i)`` of the Jacobi tangent with kicks ``kprime`` on the unit sphere.

    Propagates ``h(s_i) = C h(s_{i-1}) + Z k'_i`` with the closed-form segment
    matrices; returns ``(N, n+1, d)`` with ``h(0) = 0``.
    """
    inc = np.ascontiguousarray(inc, dtype=float)
    ds = np.ascontiguousarray(ds, dtype=float)
    kprime = np.ascontiguousarray(np.broadcast_to(kprime, inc.shape[1:]), dtype=float)
    if _accel.USE_NUMBA:
        return _kp_sphere_nb(inc, ds, kprime)
    return _kp_sphere_np(inc, ds, kprime)


def kp_flat(inc: np.ndarray, ds: np.ndarray, kprime: np.ndarray) -> np.ndarray:
    N, n, d = inc.shape
    h = np.zeros((N, n + 1, d))
    h[:, 1:] = np.cumsum(np.broadcast_to(kprime, (n, d)) * ds[:, None], axis=0)
    return h


# -- batched exponential map ---------------------------------------------------------


def sphere_exp(x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Row-wise exponential map on the unit sphere (any leading shape)."""
    th = np.linalg.norm(v, axis=-1, keepdims=True)
    y = np.cos(th) * x + sinc(th) * v
    return y / np.linalg.norm(y, axis=-1, keepdims=True)
