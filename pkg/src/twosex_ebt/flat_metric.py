"""Flat (bounded-Lipschitz) distance between atomic measures.

The test functions satisfy |psi| <= 1 and have every partial derivative
bounded by 1, so in 2D they are the 1-Lipschitz functions for the l1 norm.

In 1D the dual problem is solved exactly as a linear program on the atom
locations.  In 2D the value is bracketed: a transport plan restricted to
nearest-neighbour edges gives an upper bound, and the dual potentials of
that restricted problem, extended to the whole plane as an l1 envelope,
give a feasible test function and therefore a lower bound.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog
from scipy.spatial import cKDTree

from . import _kernels
from .cohorts import EPS_MASS, AtomicMeasure1D, AtomicMeasure2D
from .errors import ConfigurationError, InputError, SolverError
from .reference import DensityGrid1D, DensityGrid2D


@dataclass(frozen=True)
class MetricConfig:
    dual_grid_resolution: int = 64
    lp_tolerance: float = 1e-7
    domain_bound: float | None = None
    neighbours: int = 8
    fine_neighbours: int = 2
    max_rounds: int = 30

    def __post_init__(self):
        if self.dual_grid_resolution < 8:
            raise ConfigurationError("dual_grid_resolution must be >= 8")
        if not (0 < self.lp_tolerance <= 1e-7):
            raise ConfigurationError("lp_tolerance must lie in (0, 1e-7]")
        if self.neighbours < 1:
            raise ConfigurationError("neighbours must be >= 1")


@dataclass(frozen=True)
class FlatBracket:
    lower: float
    upper: float

    @property
    def value(self) -> float:
        return 0.5 * (self.lower + self.upper)

    @property
    def width(self) -> float:
        return self.upper - self.lower

    @property
    def relative_width(self) -> float:
        return self.width / self.value if self.value > 0 else 0.0


@dataclass(frozen=True)
class CompositeDistance:
    value: float
    uncertainty: float
    male: float
    female: float
    couples: FlatBracket


def _highs(c, A_ub, b_ub, bounds, cfg: MetricConfig):
    tol = cfg.lp_tolerance * 1e-2
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs-ipm",
                  options={"primal_feasibility_tolerance": tol,
                           "dual_feasibility_tolerance": tol, "presolve": True})
    if res.status != 0:
        raise SolverError(f"LP failed: {res.message}")
    return res


# ---------------------------------------------------------------------------
# 1D

def rho_flat_1d(mu: AtomicMeasure1D, nu: AtomicMeasure1D, cfg: MetricConfig | None = None,
                psi_csv=None) -> float:
    """Exact flat distance between two atomic measures on the line."""
    cfg = cfg or MetricConfig()
    loc = np.concatenate((mu.locations, nu.locations))
    net = np.concatenate((mu.weights, -nu.weights))
    if np.any(mu.weights < 0) or np.any(nu.weights < 0):
        raise InputError("atom weights must be nonnegative")
    if not np.all(np.isfinite(loc)) or not np.all(np.isfinite(net)):
        raise InputError("atoms must be finite")
    if cfg.domain_bound is not None:
        grid = np.linspace(0.0, cfg.domain_bound,
                           int(np.ceil(cfg.domain_bound * cfg.dual_grid_resolution)) + 1)
        loc = np.concatenate((loc, grid))
        net = np.concatenate((net, np.zeros(grid.size)))
    if loc.size == 0:
        return 0.0
    nodes, inv = np.unique(loc, return_inverse=True)
    weight = np.bincount(inv, weights=net, minlength=nodes.size)
    n = nodes.size
    if n == 1:
        psi = np.array([np.sign(weight[0])])
        value = abs(float(weight[0]))
    else:
        gaps = np.diff(nodes)
        rows = np.arange(n - 1)
        D = sparse.csr_matrix((np.concatenate((-np.ones(n - 1), np.ones(n - 1))),
                               (np.concatenate((rows, rows)), np.concatenate((rows, rows + 1)))),
                              shape=(n - 1, n))
        A = sparse.vstack((D, -D), format="csr")
        b = np.concatenate((gaps, gaps))
        res = _highs(-weight, A, b, [(-1.0, 1.0)] * n, cfg)
        psi = res.x
        value = float(-res.fun)
    if psi_csv is not None:
        with open(psi_csv, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["x", "psi"])
            for x, p in zip(nodes, psi):
                wr.writerow([repr(float(x)), repr(float(p))])
    return max(value, 0.0)


# ---------------------------------------------------------------------------
# 2D

def _pairwise_l1(a, b):
    return np.abs(a[:, None, 0] - b[None, :, 0]) + np.abs(a[:, None, 1] - b[None, :, 1])


def _candidate_edges(A, Q, k, k_fine, labels):
    na, nq = A.shape[0], Q.shape[0]
    keys = []
    # the larger measure gets the smaller neighbour count
    if na > nq:
        k, k_fine = k_fine, k
    ka = min(k_fine, na)
    _, idx = cKDTree(A).query(Q, k=ka, p=1)
    idx = idx.reshape(nq, ka)
    keys.append(idx.ravel().astype(np.int64) * nq + np.repeat(np.arange(nq), ka))
    kq = min(k, nq)
    _, idx = cKDTree(Q).query(A, k=kq, p=1)
    idx = idx.reshape(na, kq)
    keys.append(np.repeat(np.arange(na), kq).astype(np.int64) * nq + idx.ravel())
    if labels is not None:
        lab = np.asarray(labels, dtype=np.int64)
        ok = lab >= 0
        keys.append(lab[ok] * nq + np.flatnonzero(ok))
    keys = np.unique(np.concatenate(keys))
    return keys // nq, keys % nq


def rho_flat_2d(mu: AtomicMeasure2D, nu: AtomicMeasure2D, cfg: MetricConfig | None = None,
                labels=None) -> FlatBracket:
    """Bracket (lower, upper) on the flat distance between planar atomic measures.

    ``labels`` optionally maps every atom of ``nu`` to the index of an atom of
    ``mu`` (for instance the cohort cell it falls in); those pairs are always
    offered to the transport plan.  A label of -1 means none.
    """
    cfg = cfg or MetricConfig()
    if np.any(mu.weights < 0) or np.any(nu.weights < 0):
        raise InputError("atom weights must be nonnegative")
    if not (np.all(np.isfinite(mu.points)) and np.all(np.isfinite(nu.points))):
        raise InputError("atoms must be finite")
    keep_a = mu.weights > 0
    keep_q = nu.weights > 0
    A, m = mu.points[keep_a], mu.weights[keep_a]
    Q, w = nu.points[keep_q], nu.weights[keep_q]
    if labels is not None:
        labels = np.asarray(labels, dtype=np.int64)[keep_q]
        remap = np.full(mu.weights.size, -1, dtype=np.int64)
        remap[np.flatnonzero(keep_a)] = np.arange(A.shape[0])
        labels = np.where(labels >= 0, remap[np.clip(labels, 0, None)], -1)
    Ma, Mq = float(m.sum()), float(w.sum())
    if A.shape[0] == 0 or Q.shape[0] == 0:
        return FlatBracket(Ma + Mq, Ma + Mq)

    ia, iq = _candidate_edges(A, Q, cfg.neighbours, cfg.fine_neighbours, labels)
    na, nq = A.shape[0], Q.shape[0]
    slack = 10.0 * cfg.lp_tolerance
    lower, upper = abs(Ma - Mq), Ma + Mq
    for _ in range(cfg.max_rounds):
        cost = np.abs(A[ia, 0] - Q[iq, 0]) + np.abs(A[ia, 1] - Q[iq, 1])
        use = cost < 2.0
        ia, iq, cost = ia[use], iq[use], cost[use]
        ne = ia.size
        if ne == 0:
            # nothing to transport yet: zero plan, zero duals
            duals = np.zeros(na + nq)
        else:
            e = np.arange(ne)
            A_ub = sparse.csr_matrix((np.ones(2 * ne), (np.concatenate((ia, na + iq)),
                                                        np.concatenate((e, e)))),
                                     shape=(na + nq, ne))
            res = _highs(cost - 2.0, A_ub, np.concatenate((m, w)), (0, None), cfg)
            upper = min(upper, Ma + Mq + float(res.fun))
            duals = -np.asarray(res.ineqlin.marginals)

        # test function from the dual: psi_k = 1 - a_k at the mu atoms,
        # extended by the l1 envelope, which keeps it 1-Lipschitz in [-1, 1]
        psi = 1.0 - np.maximum(duals[:na], 0.0)
        phi = np.maximum(duals[na:], 0.0) - 1.0
        fa, _ = _kernels.l1_envelope(A, A, psi, -1.0)
        fq, arg = _kernels.l1_envelope(Q, A, psi, -1.0)
        lower = max(lower, float(np.dot(m, np.minimum(fa, 1.0)) - np.dot(w, fq)))
        if upper - lower <= cfg.lp_tolerance * max(1.0, upper):
            break
        # price out: pairs whose dual constraint psi_k - phi_q <= d_kq fails
        bad = np.flatnonzero((arg >= 0) & (fq > phi + slack))
        if bad.size == 0:
            break
        keys = np.unique(np.concatenate((ia * nq + iq, arg[bad] * nq + bad)))
        if keys.size == ne:
            break
        ia, iq = keys // nq, keys % nq
    if lower > upper:
        # both are within solver tolerance of the same optimum
        lower = upper
    return FlatBracket(lower, upper)


def rho_flat_2d_exact(mu: AtomicMeasure2D, nu: AtomicMeasure2D,
                      cfg: MetricConfig | None = None) -> float:
    """Full pairwise primal LP; only for small measures (tests and oracles)."""
    cfg = cfg or MetricConfig()
    A, m = mu.points, mu.weights
    Q, w = nu.points, nu.weights
    if A.shape[0] == 0 or Q.shape[0] == 0:
        return float(m.sum() + w.sum())
    na, nq = A.shape[0], Q.shape[0]
    cost = np.minimum(_pairwise_l1(A, Q), 2.0).ravel()
    rows = np.concatenate((np.repeat(np.arange(na), nq), na + np.tile(np.arange(nq), na)))
    cols = np.concatenate((np.arange(na * nq), np.arange(na * nq)))
    A_ub = sparse.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(na + nq, na * nq))
    res = _highs(cost - 2.0, A_ub, np.concatenate((m, w)), (0, None), cfg)
    return float(m.sum() + w.sum() + res.fun)


def composite_distance(a, b, cfg: MetricConfig | None = None, labels=None) -> CompositeDistance:
    """d1(male) + d1(female) + d2(couples); the 2D bracket width is the uncertainty."""
    cfg = cfg or MetricConfig()
    dm = rho_flat_1d(a[0], b[0], cfg)
    df = rho_flat_1d(a[1], b[1], cfg)
    dc = rho_flat_2d(a[2], b[2], cfg, labels=labels)
    return CompositeDistance(dm + df + dc.value, 0.5 * dc.width, dm, df, dc)


# ---------------------------------------------------------------------------
# densities to atoms

def _linear_pieces(xs, us, cuts):
    """Masses and first moments of a linear interpolant between sorted break points."""
    xs_all = np.unique(np.concatenate((xs, cuts[(cuts > xs[0]) & (cuts < xs[-1])])))
    u = np.interp(xs_all, xs, us)
    x0, x1, u0, u1 = xs_all[:-1], xs_all[1:], u[:-1], u[1:]
    d = x1 - x0
    mass = 0.5 * d * (u0 + u1)
    mom = d * (x0 * (2 * u0 + u1) + x1 * (u0 + 2 * u1)) / 6.0
    return 0.5 * (x0 + x1), mass, mom


def density_to_measure(grid, edges=None, eps: float = EPS_MASS):
    """One atom per cell at the cell's first moment, carrying the cell mass.

    The density is integrated exactly: linear per segment interval in 1D,
    bilinear per lattice cell in 2D.  Without ``edges`` the cells are the
    grid's own intervals; in 2D, ``edges=(ex, ey)`` groups lattice cells by
    their centres.
    """
    if isinstance(grid, DensityGrid1D):
        return _density_to_measure_1d(grid, edges, eps)
    if isinstance(grid, DensityGrid2D):
        return _density_to_measure_2d(grid, edges, eps)
    raise InputError(f"cannot atomise {type(grid).__name__}")


def _density_to_measure_1d(grid: DensityGrid1D, edges, eps):
    mids, masses, moms = [], [], []
    for xs, us in grid.segments:
        if np.any(us < 0):
            raise InputError("density has negative values")
        if xs.size < 2:
            continue
        cuts = np.empty(0) if edges is None else np.asarray(edges, dtype=float)
        mid, mass, mom = _linear_pieces(xs, us, cuts)
        mids.append(mid)
        masses.append(mass)
        moms.append(mom)
    if not mids:
        return AtomicMeasure1D(np.empty(0), np.empty(0))
    mid = np.concatenate(mids)
    mass = np.concatenate(masses)
    mom = np.concatenate(moms)
    if edges is None:
        # merge pieces sharing an interval (segments meeting at a jump never do)
        keys, inv = np.unique(np.round(mid, 14), return_inverse=True)
    else:
        edges = np.asarray(edges, dtype=float)
        cell = np.searchsorted(edges, mid, side="right") - 1
        if np.any((cell < 0) | (cell >= edges.size - 1)) and np.any(
                mass[(cell < 0) | (cell >= edges.size - 1)] > eps):
            raise InputError("density has mass outside the given cell edges")
        cell = np.clip(cell, 0, edges.size - 2)
        keys, inv = np.unique(cell, return_inverse=True)
    M = np.bincount(inv, weights=mass, minlength=keys.size)
    X = np.bincount(inv, weights=mom, minlength=keys.size)
    ok = M > eps
    return AtomicMeasure1D(X[ok] / M[ok], M[ok])


def _density_to_measure_2d(grid: DensityGrid2D, edges, eps):
    v = grid.values
    if np.any(v < 0):
        raise InputError("density has negative values")
    x, y = grid.x, grid.y
    dx, dy = np.diff(x)[:, None], np.diff(y)[None, :]
    a00, a10, a01, a11 = v[:-1, :-1], v[1:, :-1], v[:-1, 1:], v[1:, 1:]
    mass = dx * dy * (a00 + a10 + a01 + a11) / 4.0
    left, right = a00 + a01, a10 + a11
    low, high = a00 + a10, a01 + a11
    momx = dx * dy / 2.0 * (x[:-1, None] * (left + right) / 2.0 + dx * (left / 6.0 + right / 3.0))
    momy = dx * dy / 2.0 * (y[None, :-1] * (low + high) / 2.0 + dy * (low / 6.0 + high / 3.0))
    if edges is None:
        M, X, Y = mass.ravel(), momx.ravel(), momy.ravel()
    else:
        ex, ey = (np.asarray(e, dtype=float) for e in edges)
        cx = np.searchsorted(ex, 0.5 * (x[:-1] + x[1:]), side="right") - 1
        cy = np.searchsorted(ey, 0.5 * (y[:-1] + y[1:]), side="right") - 1
        outside = ((cx[:, None] < 0) | (cx[:, None] >= ex.size - 1)
                   | (cy[None, :] < 0) | (cy[None, :] >= ey.size - 1))
        if np.any(mass[outside] > eps):
            raise InputError("density has mass outside the given cell edges")
        cx = np.clip(cx, 0, ex.size - 2)
        cy = np.clip(cy, 0, ey.size - 2)
        cell = (cx[:, None] * (ey.size - 1) + cy[None, :]).ravel()
        n = (ex.size - 1) * (ey.size - 1)
        M = np.bincount(cell, weights=mass.ravel(), minlength=n)
        X = np.bincount(cell, weights=momx.ravel(), minlength=n)
        Y = np.bincount(cell, weights=momy.ravel(), minlength=n)
    ok = M > eps
    return AtomicMeasure2D(np.column_stack((X[ok] / M[ok], Y[ok] / M[ok])), M[ok])
