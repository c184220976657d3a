"""Hot loops, each with a numba version and a pure-numpy version.

Set ``TWOSEX_EBT_NUMBA=0`` in the environment before import to force the
numpy path.  Both paths are exercised by the test-suite and compared in
``benchmarks/bench_kernels.py``.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

USE_NUMBA = numba is not None and os.environ.get("TWOSEX_EBT_NUMBA", "1").lower() not in (
    "0", "false", "no", "off")


def _njit(fn):
    if numba is None:  # pragma: no cover
        return fn
    return numba.njit(cache=True, fastmath=False)(fn)


# ---------------------------------------------------------------------------
# fourth marriage-numerator term, one male row at a time
#
#   n4[j]  = sum_w sum_v  theta[w, v, j] * hc[w] * gc[v, j]
#   n4x[j] = sum_w sum_v  xc[w] * (...)
#   n4y[j] = sum_w sum_v  yc[v, j] * (...)

def row_contract4_numpy(theta, hc, xc, gc, yc):
    a = np.einsum("wvj,w->vj", theta, hc)
    ax = np.einsum("wvj,w->vj", theta, hc * xc)
    n4 = np.einsum("vj,vj->j", a, gc)
    n4x = np.einsum("vj,vj->j", ax, gc)
    n4y = np.einsum("vj,vj->j", a, gc * yc)
    return n4, n4x, n4y


@_njit
def _row_contract4_numba(theta, hc, xc, gc, yc):
    nw, nv, nj = theta.shape
    # a[v, j] = sum_w theta[w, v, j] hc[w], ax likewise with hc * xc; j innermost
    a = np.zeros((nv, nj))
    ax = np.zeros((nv, nj))
    for w in range(nw):
        hw = hc[w]
        if hw == 0.0:
            continue
        hxw = hw * xc[w]
        for v in range(nv):
            for j in range(nj):
                t = theta[w, v, j]
                a[v, j] += t * hw
                ax[v, j] += t * hxw
    n4 = np.zeros(nj)
    n4x = np.zeros(nj)
    n4y = np.zeros(nj)
    for v in range(nv):
        for j in range(nj):
            ag = a[v, j] * gc[v, j]
            n4[j] += ag
            n4x[j] += ax[v, j] * gc[v, j]
            n4y[j] += ag * yc[v, j]
    return n4, n4x, n4y


def row_contract4_numba(theta, hc, xc, gc, yc):
    return _row_contract4_numba(np.ascontiguousarray(theta, dtype=np.float64),
                                np.ascontiguousarray(hc, dtype=np.float64),
                                np.ascontiguousarray(xc, dtype=np.float64),
                                np.ascontiguousarray(gc, dtype=np.float64),
                                np.ascontiguousarray(yc, dtype=np.float64))


# ---------------------------------------------------------------------------
# couple right-hand side on a reference lattice
#
# uc[i, j] couple density, theta[i, j] marriage kernel, cc[i, j] couple loss
# rate, hx/gy eligibility, um/uf single densities on the same lattice, wx/wy
# quadrature weights.  Returns (dt-derivative of uc, denominator).

def couple_rhs_numpy(uc, theta, cc, hx, gy, um, uf, wx, wy, gamma):
    unmarried_m = um - uc @ wy
    unmarried_f = uf - wx @ uc
    denom = gamma + np.dot(wx, hx * unmarried_m) + np.dot(wy, gy * unmarried_f)
    src = theta * np.outer(hx * unmarried_m, gy * unmarried_f) / denom
    return src - cc * uc, denom


@_njit
def _couple_rhs_numba(uc, theta, cc, hx, gy, um, uf, wx, wy, gamma):
    nx, ny = uc.shape
    row = np.zeros(nx)
    col = np.zeros(ny)
    for i in range(nx):
        s = 0.0
        for j in range(ny):
            v = uc[i, j]
            s += v * wy[j]
            col[j] += wx[i] * v
        row[i] = s
    a = np.empty(nx)
    b = np.empty(ny)
    denom = gamma
    for i in range(nx):
        a[i] = hx[i] * (um[i] - row[i])
        denom += wx[i] * a[i]
    for j in range(ny):
        b[j] = gy[j] * (uf[j] - col[j])
        denom += wy[j] * b[j]
    out = np.empty((nx, ny))
    inv = 1.0 / denom
    for i in range(nx):
        ai = a[i] * inv
        for j in range(ny):
            out[i, j] = theta[i, j] * ai * b[j] - cc[i, j] * uc[i, j]
    return out, denom


def couple_rhs_numba(uc, theta, cc, hx, gy, um, uf, wx, wy, gamma):
    c = np.ascontiguousarray
    return _couple_rhs_numba(c(uc, dtype=np.float64), c(theta, dtype=np.float64),
                             c(cc, dtype=np.float64), c(hx, dtype=np.float64),
                             c(gy, dtype=np.float64), c(um, dtype=np.float64),
                             c(uf, dtype=np.float64), c(wx, dtype=np.float64),
                             c(wy, dtype=np.float64), float(gamma))


# ---------------------------------------------------------------------------
# upper l1 envelope: f(p) = max(floor, max_k values[k] - |p - centers[k]|_1)
# This is the smallest 1-Lipschitz (per axis) function above the given
# values at the centers, cut off from below at ``floor``.  Also returns the
# maximising center (-1 where the floor wins).

def l1_envelope_numpy(points, centers, values, floor, chunk=1024):
    n = points.shape[0]
    out = np.full(n, float(floor))
    arg = np.full(n, -1, dtype=np.int64)
    if centers.shape[0] == 0:
        return out, arg
    for s in range(0, n, chunk):
        p = points[s:s + chunk]
        d = (np.abs(p[:, None, 0] - centers[None, :, 0])
             + np.abs(p[:, None, 1] - centers[None, :, 1]))
        v = values[None, :] - d
        k = v.argmax(axis=1)
        best = v[np.arange(k.size), k]
        win = best > floor
        out[s:s + chunk] = np.where(win, best, floor)
        arg[s:s + chunk] = np.where(win, k, -1)
    return out, arg


@_njit
def _l1_envelope_numba(points, centers, values, floor):
    n = points.shape[0]
    out = np.empty(n)
    arg = np.empty(n, dtype=np.int64)
    for i in range(n):
        px = points[i, 0]
        py = points[i, 1]
        best = floor
        bk = -1
        for k in range(centers.shape[0]):
            v = values[k] - abs(px - centers[k, 0]) - abs(py - centers[k, 1])
            if v > best:
                best = v
                bk = k
        out[i] = best
        arg[i] = bk
    return out, arg


def l1_envelope_numba(points, centers, values, floor):
    c = np.ascontiguousarray
    return _l1_envelope_numba(c(points, dtype=np.float64).reshape(-1, 2),
                              c(centers, dtype=np.float64).reshape(-1, 2),
                              c(values, dtype=np.float64), float(floor))


if USE_NUMBA:
    row_contract4 = row_contract4_numba
    couple_rhs = couple_rhs_numba
    l1_envelope = l1_envelope_numba
else:
    row_contract4 = row_contract4_numpy
    couple_rhs = couple_rhs_numpy
    l1_envelope = l1_envelope_numpy


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
