"""Method-of-characteristics reference solutions on fine grids.

Both solvers keep the part of the solution born after t = 0 and the part
transported from the initial data as separate pieces.  The two meet on the
characteristic leaving the minimal age at t = 0, where the density jumps in
general; keeping them apart keeps the trapezoid quadrature second order.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import _kernels
from .errors import ConfigurationError, InputError
from .model import Coefficients, check_finite
from .scalar_ebt import ScalarCoefficients

NEGATIVE_TOLERANCE = 1e-12


class ReferenceWarning(UserWarning):
    pass


def _trapz_weights(x: np.ndarray) -> np.ndarray:
    w = np.zeros_like(x)
    if x.size > 1:
        d = np.diff(x)
        w[:-1] += 0.5 * d
        w[1:] += 0.5 * d
    return w


def _nonneg(values: np.ndarray, what: str) -> np.ndarray:
    lo = float(values.min()) if values.size else 0.0
    if lo < -NEGATIVE_TOLERANCE:
        warnings.warn(f"{what} reference density dipped to {lo:.3e}", ReferenceWarning,
                      stacklevel=3)
    return np.maximum(values, 0.0)


@dataclass
class DensityGrid1D:
    """Piecewise-linear density made of one or more node segments.

    The density is the sum of the linear interpolants of all segments, each
    supported on its own node range.  Segments may share an endpoint, which is
    how a jump is stored without smearing it.
    """

    segments: list
    t: float = 0.0

    def __post_init__(self):
        segs = []
        for x, u in self.segments:
            x = np.asarray(x, dtype=float)
            u = np.asarray(u, dtype=float)
            if x.shape != u.shape:
                raise InputError("segment nodes and values differ in shape")
            if x.size and np.any(np.diff(x) < 0):
                raise InputError("segment nodes must be sorted")
            segs.append((x, u))
        self.segments = segs

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for xs, us in self.segments:
            if xs.size < 2:
                continue
            inside = (x >= xs[0]) & (x < xs[-1])
            out = out + np.where(inside, np.interp(x, xs, us), 0.0)
        return out

    def total_mass(self) -> float:
        return float(sum(np.dot(_trapz_weights(xs), us) for xs, us in self.segments))

    def first_moment(self) -> float:
        total = 0.0
        for xs, us in self.segments:
            if xs.size < 2:
                continue
            d = np.diff(xs)
            total += float(np.sum(d * (xs[:-1] * (2 * us[:-1] + us[1:])
                                       + xs[1:] * (us[:-1] + 2 * us[1:])) / 6.0))
        return total


@dataclass
class DensityGrid2D:
    """Bilinear density on a rectilinear grid."""

    x: np.ndarray
    y: np.ndarray
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.x.size, self.y.size):
            raise InputError("grid values do not match the axes")

    def total_mass(self) -> float:
        return float(_trapz_weights(self.x) @ self.values @ _trapz_weights(self.y))


@dataclass
class DensityGrid:
    """Reference densities of the two-sex system at time ``t``."""

    male: DensityGrid1D
    female: DensityGrid1D
    couples: DensityGrid2D
    t: float
    meta: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# scalar model

def solve_scalar(u0: Callable, coeffs: ScalarCoefficients, t_end: float, h_ref: float,
                 dt_ref: float, x_max: float) -> DensityGrid1D:
    """Trace characteristics dx/dt = b with du/dt = -(c + b_x) u by RK4.

    Initial particles sit on a uniform grid of step ``h_ref`` over
    [x_b, x_max]; a newborn particle carrying the renewal value is spawned at
    x_b every ``dt_ref``.  The renewal value solves the trapezoid-discretised
    birth integral, which is linear in the new value.
    """
    if not (h_ref > 0 and dt_ref > 0):
        raise ConfigurationError("h_ref and dt_ref must be positive")
    if dt_ref > h_ref * (1 + 1e-12):
        raise ConfigurationError(f"dt_ref={dt_ref} exceeds h_ref={h_ref}")
    steps = int(round(t_end / dt_ref))
    if abs(steps * dt_ref - t_end) > 1e-12:
        raise ConfigurationError("t_end must be a whole number of dt_ref steps")
    xb = float(coeffs.x_b)
    n0 = int(round((x_max - xb) / h_ref))
    xi = xb + h_ref * np.arange(n0 + 1)
    ui = np.asarray(u0(xi), dtype=float) * np.ones_like(xi)
    if not np.all(np.isfinite(ui)) or np.any(ui < 0):
        raise InputError("initial density must be finite and nonnegative")

    def field(t, x, u):
        b = check_finite(coeffs.b(t, x), "b") * np.ones_like(x)
        rate = check_finite(coeffs.c(t, x), "c") + check_finite(coeffs.db(t, x), "db")
        return b, -rate * u

    def rk4(t, x, u):
        k1x, k1u = field(t, x, u)
        k2x, k2u = field(t + dt_ref / 2, x + dt_ref / 2 * k1x, u + dt_ref / 2 * k1u)
        k3x, k3u = field(t + dt_ref / 2, x + dt_ref / 2 * k2x, u + dt_ref / 2 * k2u)
        k4x, k4u = field(t + dt_ref, x + dt_ref * k3x, u + dt_ref * k3u)
        return (x + dt_ref / 6 * (k1x + 2 * k2x + 2 * k3x + k4x),
                u + dt_ref / 6 * (k1u + 2 * k2u + 2 * k3u + k4u))

    def renewal(t, xn, un, xi, ui):
        # born piece: [x_b (new value B), xn...]; B = rest / (1 - w0 * beta0)
        xs = np.concatenate(([xb], xn))
        w = _trapz_weights(xs)
        beta_b = check_finite(coeffs.beta(t, xs), "beta") * np.ones_like(xs)
        beta_i = check_finite(coeffs.beta(t, xi), "beta") * np.ones_like(xi)
        rest = float(np.dot(w[1:] * beta_b[1:], un) + np.dot(_trapz_weights(xi) * beta_i, ui))
        return rest / (1.0 - w[0] * beta_b[0])

    # newborn particles, youngest first
    xn = np.empty(0)
    un = np.empty(0)
    b0 = renewal(0.0, xn, un, xi, ui)
    xn = np.array([xb])
    un = np.array([b0])
    for k in range(steps):
        t = k * dt_ref
        xall, uall = rk4(t, np.concatenate((xn, xi)), np.concatenate((un, ui)))
        xn, xi = xall[:xn.size], xall[xn.size:]
        un, ui = uall[:un.size], uall[un.size:]
        t1 = (k + 1) * dt_ref
        bnew = renewal(t1, xn, un, xi, ui)
        xn = np.concatenate(([xb], xn))
        un = np.concatenate(([bnew], un))
    if xi.size and xi[-1] > x_max + 1e-12 and ui[-1] > 0:
        warnings.warn("characteristics left the domain bound", ReferenceWarning, stacklevel=2)
    return DensityGrid1D([(xn, _nonneg(un, "scalar")), (xi, _nonneg(ui, "scalar"))], t=t_end)


# ---------------------------------------------------------------------------
# two-sex model

@dataclass
class _Lattice:
    """Lattice state: node k sits at age k * h at every step boundary."""

    n: int                 # steps taken; the t = 0 characteristic sits at node n
    um: np.ndarray
    um_left: float         # newborn-side value on the t = 0 characteristic
    uf: np.ndarray
    uf_left: float
    uc: np.ndarray


def _merged(u, left, n):
    if 0 < n < u.size:
        u = u.copy()
        u[n] = 0.5 * (u[n] + left)
    return u


def solve_two_sex(u0_m: Callable, u0_f: Callable, u0_c: Callable, coeffs: Coefficients,
                  t_end: float, h_ref: float, dt_ref: float, x_max: float,
                  snapshot_times=None):
    """Characteristics solver for the full two-sex system.

    The lattice step equals ``dt_ref`` so every node moves exactly one cell
    per step.  Sources are advanced with Heun's method (explicit trapezoid),
    which only needs lattice-aligned stage values.  Returns the DensityGrid
    at ``t_end``, or a list of grids when ``snapshot_times`` is given.
    """
    if not (h_ref > 0 and dt_ref > 0):
        raise ConfigurationError("h_ref and dt_ref must be positive")
    if dt_ref > h_ref * (1 + 1e-12):
        raise ConfigurationError(f"dt_ref={dt_ref} exceeds h_ref={h_ref}")
    h = float(dt_ref)
    steps = int(round(t_end / h))
    if abs(steps * h - t_end) > 1e-12:
        raise ConfigurationError("t_end must be a whole number of dt_ref steps")
    N = int(round(x_max / h))
    ages = h * np.arange(N + 1)
    w = _trapz_weights(ages)

    def sample1(f, what):
        v = np.asarray(f(ages), dtype=float) * np.ones_like(ages)
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise InputError(f"{what} initial density must be finite and nonnegative")
        return v

    um, uf = sample1(u0_m, "male"), sample1(u0_f, "female")
    uc = np.asarray(u0_c(ages[:, None], ages[None, :]), dtype=float) * np.ones((N + 1, N + 1))
    if not np.all(np.isfinite(uc)) or np.any(uc < 0):
        raise InputError("couple initial density must be finite and nonnegative")

    X, Y = ages[:, None], ages[None, :]
    theta = check_finite(coeffs.theta(X, Y), "theta") * np.ones((N + 1, N + 1))
    hx = check_finite(coeffs.h(ages), "h") * np.ones_like(ages)
    gy = check_finite(coeffs.g(ages), "g") * np.ones_like(ages)
    const_cc = getattr(coeffs.c_c, "__name__", "").startswith("const_")
    cc_cache = {}

    def cc_at(t):
        key = 0.0 if const_cc else t
        if key not in cc_cache:
            cc_cache.clear()
            cc_cache[key] = check_finite(coeffs.c_c(t, X, Y), "c_c") * np.ones((N + 1, N + 1))
        return cc_cache[key]

    def births(t, c):
        bm = check_finite(coeffs.beta_m(t, X, Y), "beta_m") * np.ones_like(c)
        bf = check_finite(coeffs.beta_f(t, X, Y), "beta_f") * np.ones_like(c)
        return float(w @ (bm * c) @ w), float(w @ (bf * c) @ w)

    min_unmarried = [np.inf]

    def deriv(t, s: _Lattice):
        um_eff = _merged(s.um, s.um_left, s.n)
        uf_eff = _merged(s.uf, s.uf_left, s.n)
        min_unmarried[0] = min(min_unmarried[0], float(np.min(um_eff - s.uc @ w)),
                               float(np.min(uf_eff - w @ s.uc)))
        dc, denom = _kernels.couple_rhs(s.uc, theta, cc_at(t), hx, gy, um_eff, uf_eff, w, w,
                                        coeffs.gamma)
        cm = check_finite(coeffs.c_m(t, ages), "c_m") * np.ones_like(ages)
        cf = check_finite(coeffs.c_f(t, ages), "c_f") * np.ones_like(ages)
        age_t = np.array([min(t, ages[-1])])
        cml = float(check_finite(coeffs.c_m(t, age_t), "c_m")[0])
        cfl = float(check_finite(coeffs.c_f(t, age_t), "c_f")[0])
        return (-cm * s.um, -cml * s.um_left, -cf * s.uf, -cfl * s.uf_left, dc, denom)

    def shift1(a, head):
        out = np.empty_like(a)
        out[1:] = a[:-1]
        out[0] = head
        return out

    def shift2(a):
        out = np.zeros_like(a)
        out[1:, 1:] = a[:-1, :-1]
        return out

    bm0, bf0 = births(0.0, uc)
    s = _Lattice(0, um, bm0, uf, bf0, uc)
    min_denom = np.inf
    lost = 0.0
    grids = []
    wanted = None
    if snapshot_times is not None:
        wanted = {int(round(ts / h)): ts for ts in snapshot_times}
        if 0 in wanted:
            grids.append(_two_sex_grid(s, ages, 0.0))

    for k in range(steps):
        t0, t1 = k * h, (k + 1) * h
        d1 = deriv(t0, s)
        min_denom = min(min_denom, d1[5])
        lost += float(s.um[-1] + s.uf[-1]) + float(np.abs(s.uc[-1]).sum() + np.abs(s.uc[:, -1]).sum())
        pc = shift2(s.uc + h * d1[4])
        bm, bf = births(t1, pc)
        pred = _Lattice(k + 1, shift1(s.um + h * d1[0], bm), s.um_left + h * d1[1],
                        shift1(s.uf + h * d1[2], bf), s.uf_left + h * d1[3], pc)
        d2 = deriv(t1, pred)
        min_denom = min(min_denom, d2[5])
        # corrector: stage-2 derivatives live one node further along
        uc_new = shift2(s.uc + 0.5 * h * d1[4]) + 0.5 * h * d2[4]
        uc_new[0, :] = 0.0
        uc_new[:, 0] = 0.0
        bm, bf = births(t1, uc_new)
        um_new = shift1(s.um + 0.5 * h * d1[0], 0.0) + 0.5 * h * d2[0]
        uf_new = shift1(s.uf + 0.5 * h * d1[2], 0.0) + 0.5 * h * d2[2]
        um_new[0], uf_new[0] = bm, bf
        s = _Lattice(k + 1, um_new, s.um_left + 0.5 * h * (d1[1] + d2[1]),
                     uf_new, s.uf_left + 0.5 * h * (d1[3] + d2[3]), uc_new)
        if wanted is not None and (k + 1) in wanted:
            grids.append(_two_sex_grid(s, ages, t1))

    if min_unmarried[0] < -NEGATIVE_TOLERANCE:
        warnings.warn(f"unmarried density dipped to {min_unmarried[0]:.3e}; the marriage "
                      "rate changed sign", ReferenceWarning, stacklevel=2)
    if lost > 1e-12:
        warnings.warn("mass reached the age bound x_max and was dropped", ReferenceWarning,
                      stacklevel=2)
    if wanted is not None:
        for g in grids:
            g.meta["min_denominator"] = float(min_denom)
            g.meta["min_unmarried"] = min_unmarried[0]
        return grids
    grid = _two_sex_grid(s, ages, steps * h)
    grid.meta["min_denominator"] = float(min_denom)
    grid.meta["min_unmarried"] = min_unmarried[0]
    return grid


def _two_sex_grid(s: _Lattice, ages: np.ndarray, t: float) -> DensityGrid:
    def pieces(u, left, what):
        n = s.n
        u = _nonneg(u, what)
        if n == 0:
            return DensityGrid1D([(ages[:1], np.array([max(left, 0.0)])), (ages, u)], t=t)
        if n >= ages.size:
            return DensityGrid1D([(ages, u)], t=t)
        born = (ages[:n + 1], np.concatenate((u[:n], [max(left, 0.0)])))
        return DensityGrid1D([born, (ages[n:], u[n:])], t=t)

    return DensityGrid(male=pieces(s.um, s.um_left, "male"),
                       female=pieces(s.uf, s.uf_left, "female"),
                       couples=DensityGrid2D(ages, ages, _nonneg(s.uc, "couple"), t=t), t=t)


# ---------------------------------------------------------------------------
# serialisation

def write_density_csv(grid, path) -> Path:
    """Write a 1D grid (segment, x, u rows) or a 2D grid (x, y, u rows)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["# t", repr(float(grid.t))])
        if isinstance(grid, DensityGrid1D):
            wr.writerow(["segment", "x", "u"])
            for k, (xs, us) in enumerate(grid.segments):
                for x, u in zip(xs, us):
                    wr.writerow([k, repr(float(x)), repr(float(u))])
        else:
            wr.writerow(["x", "y", "u"])
            for i, x in enumerate(grid.x):
                for j, y in enumerate(grid.y):
                    wr.writerow([repr(float(x)), repr(float(y)), repr(float(grid.values[i, j]))])
    return path


def read_density_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    t = float(rows[0][1])
    header, body = rows[1], rows[2:]
    if header[0] == "segment":
        segs = {}
        for r in body:
            segs.setdefault(int(r[0]), ([], []))
            segs[int(r[0])][0].append(float(r[1]))
            segs[int(r[0])][1].append(float(r[2]))
        return DensityGrid1D([(np.array(a), np.array(b)) for _, (a, b) in sorted(segs.items())],
                             t=t)
    xs = sorted({float(r[0]) for r in body})
    ys = sorted({float(r[1]) for r in body})
    vals = np.array([float(r[2]) for r in body]).reshape(len(xs), len(ys))
    return DensityGrid2D(np.array(xs), np.array(ys), vals, t=t)
