"""Right-hand side of the two-sex cohort ODE system.

The marriage source is approximated per couple cell by N_ij / D and its first
moments by Nbar_ij / D.  N expands the product of discrete unmarried male and
female counts, so its four terms carry the signs + - - +.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .cohorts import PopulationState
from .diagnostics import Diagnostics
from .errors import NumericalBlowupError
from .model import Coefficients, check_finite


@dataclass
class StateDerivative:
    """Time derivatives laid out like :class:`PopulationState`.

    Slot 0 of ``male_loc``/``female_loc`` holds dPi/dt of the boundary cohort.
    """

    male_mass: np.ndarray
    male_loc: np.ndarray
    female_mass: np.ndarray
    female_loc: np.ndarray
    couple_mass: np.ndarray
    couple_xbar: np.ndarray
    couple_ybar: np.ndarray
    denominator: float

    def pack(self) -> np.ndarray:
        return np.concatenate((self.male_mass, self.male_loc, self.female_mass, self.female_loc,
                               self.couple_mass.ravel(), self.couple_xbar.ravel(),
                               self.couple_ybar.ravel()))


class _Weighted:
    """Locations and eligibility-weighted masses shared by N, Nbar and D."""

    def __init__(self, state: PopulationState, coeffs: Coefficients):
        self.xm = state.male_locations()
        self.yf = state.female_locations()
        self.xc, self.yc = state.couple_locations()
        self.Hm = check_finite(coeffs.h(self.xm), "h") * state.male_mass
        self.Gf = check_finite(coeffs.g(self.yf), "g") * state.female_mass
        self.Hc = check_finite(coeffs.h(self.xc), "h") * state.couple_mass
        self.Gc = check_finite(coeffs.g(self.yc), "g") * state.couple_mass


def assemble_D(state: PopulationState, coeffs: Coefficients, diag: Diagnostics | None = None,
               _w: _Weighted | None = None) -> float:
    """Global discrete denominator, floored at gamma / 2."""
    w = _w or _Weighted(state, coeffs)
    raw = coeffs.gamma + w.Hm.sum() - w.Hc.sum() + w.Gf.sum() - w.Gc.sum()
    floor = 0.5 * coeffs.gamma
    if raw < floor:
        if diag is not None:
            diag.denominator_floors += 1
            diag.log("denominator_floor", t=state.t, value=float(raw))
        return floor
    return float(raw)


def _numerators_separable(w: _Weighted, tx, ty):
    a = check_finite(tx(w.xm), "theta") * w.Hm
    b = check_finite(ty(w.yf), "theta") * w.Gf
    hc = check_finite(tx(w.xc), "theta") * w.Hc
    gc = check_finite(ty(w.yc), "theta") * w.Gc
    rx = hc.sum(axis=1)
    rxx = (w.xc * hc).sum(axis=1)
    cy = gc.sum(axis=0)
    cyy = (w.yc * gc).sum(axis=0)
    um = a - rx
    uf = b - cy
    N = np.outer(um, uf)
    Nx = np.outer(w.xm * a - rxx, uf)
    Ny = np.outer(um, w.yf * b - cyy)
    return N, Nx, Ny


def _numerators_general(w: _Weighted, theta):
    xm, yf, xc, yc = w.xm, w.yf, w.xc, w.yc
    K = xm.size
    t1 = check_finite(theta(xm[:, None], yf[None, :]), "theta") * np.outer(w.Hm, w.Gf)

    # second term: sum over couple rows v of column j
    live_v = np.flatnonzero(np.any(w.Gc != 0.0, axis=1))
    th2 = check_finite(theta(xm[:, None, None], yc[None, live_v, :]), "theta")
    gcv = w.Gc[live_v]
    s2 = np.einsum("ivj,vj->ij", th2, gcv)
    s2y = np.einsum("ivj,vj->ij", th2, gcv * yc[live_v])
    t2 = w.Hm[:, None] * s2
    t2y = w.Hm[:, None] * s2y

    # third term: sum over couple columns w of row i
    live_w = np.flatnonzero(np.any(w.Hc != 0.0, axis=0))
    th3 = check_finite(theta(xc[:, live_w, None], yf[None, None, :]), "theta")
    hcw = w.Hc[:, live_w]
    s3 = np.einsum("iwj,iw->ij", th3, hcw)
    s3x = np.einsum("iwj,iw->ij", th3, hcw * xc[:, live_w])
    t3 = s3 * w.Gf[None, :]
    t3x = s3x * w.Gf[None, :]

    t4 = np.zeros((K, K))
    t4x = np.zeros((K, K))
    t4y = np.zeros((K, K))
    if live_v.size:
        yc_v = np.ascontiguousarray(yc[live_v])
        for i in range(K):
            cols = np.flatnonzero(w.Hc[i] != 0.0)
            if cols.size == 0:
                continue
            tab = check_finite(theta(xc[i, cols, None, None], yc_v[None, :, :]), "theta")
            t4[i], t4x[i], t4y[i] = _kernels.row_contract4(tab, w.Hc[i, cols], xc[i, cols],
                                                           gcv, yc_v)

    N = t1 - t2 - t3 + t4
    Nx = xm[:, None] * (t1 - t2) - t3x + t4x
    Ny = yf[None, :] * (t1 - t3) - t2y + t4y
    return N, Nx, Ny


def _numerators(w: _Weighted, coeffs: Coefficients, general: bool):
    if coeffs.theta_factors is not None and not general:
        return _numerators_separable(w, *coeffs.theta_factors)
    return _numerators_general(w, coeffs.theta)


def assemble_N(state: PopulationState, coeffs: Coefficients, general: bool = False) -> np.ndarray:
    """Discrete marriage numerator for every couple cell, shape (K, K)."""
    return _numerators(_Weighted(state, coeffs), coeffs, general)[0]


def assemble_Nbar(state: PopulationState, coeffs: Coefficients,
                  general: bool = False) -> np.ndarray:
    """Location-weighted numerators, shape (K, K, 2) holding (x, y) components."""
    _, Nx, Ny = _numerators(_Weighted(state, coeffs), coeffs, general)
    return np.stack((Nx, Ny), axis=-1)


def rhs(state: PopulationState, coeffs: Coefficients, diag: Diagnostics | None = None,
        general: bool = False) -> StateDerivative:
    """Derivative of every cohort quantity at ``state.t``.

    ``general=True`` forces the full contraction even when Theta factorises.
    """
    t = state.t
    w = _Weighted(state, coeffs)
    D = assemble_D(state, coeffs, diag, _w=w)
    N, Nx, Ny = _numerators(w, coeffs, general)
    if diag is not None and np.any(N < 0):
        diag.negative_numerators += 1

    K = state.K
    zero_age = np.zeros(1)
    cc = check_finite(coeffs.c_c(t, w.xc, w.yc), "c_c")
    mc = state.couple_mass
    births_m = float(np.sum(check_finite(coeffs.beta_m(t, w.xc, w.yc), "beta_m") * mc))
    births_f = float(np.sum(check_finite(coeffs.beta_f(t, w.xc, w.yc), "beta_f") * mc))

    out = []
    for mass, loc, pi, c, dc, births in (
            (state.male_mass, w.xm, state.male_pi, coeffs.c_m, coeffs.dx_c_m, births_m),
            (state.female_mass, w.yf, state.female_pi, coeffs.c_f, coeffs.dy_c_f, births_f)):
        rate = check_finite(np.broadcast_to(c(t, loc), (K,)), "c")
        c0 = float(check_finite(c(t, zero_age), "c")[0])
        dc0 = float(check_finite(dc(t, zero_age), "age partial of c")[0])
        dmass = -rate * mass
        dmass[0] = -c0 * mass[0] - dc0 * pi + births
        dloc = np.ones(K)
        dloc[0] = mass[0] - c0 * pi
        out.append((dmass, dloc))

    inv = 1.0 / D
    dmc = -cc * mc + N * inv
    dxbar = (1.0 - w.xc * cc) * mc + Nx * inv
    dybar = (1.0 - w.yc * cc) * mc + Ny * inv

    deriv = StateDerivative(out[0][0], out[0][1], out[1][0], out[1][1], dmc, dxbar, dybar, D)
    vec = deriv.pack()
    if not np.all(np.isfinite(vec)):
        bad = int(np.flatnonzero(~np.isfinite(vec))[0])
        raise NumericalBlowupError(f"non-finite derivative at packed index {bad}", index=bad)
    return deriv
