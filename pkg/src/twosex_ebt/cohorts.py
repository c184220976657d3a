"""Cohort state, initialisation, internalisation and the P / E operators.

Index convention: position 0 of every per-sex array is the boundary cohort
(index B), positions 1..K-1 are the internal cohorts B+1..J in order of
increasing age.  The couple grid is K x K with the same indexing on both axes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from .errors import DimensionError, InputError, SupportViolationError
from .model import gauss_cells

EPS_MASS = 1e-12


class Cohort1D(NamedTuple):
    mass: float
    location: float


class BoundaryCohort1D(NamedTuple):
    mass: float
    pi: float


class CoupleCohort(NamedTuple):
    mass: float
    xbar: float
    ybar: float


@dataclass
class AtomicMeasure1D:
    locations: np.ndarray
    weights: np.ndarray
    index: np.ndarray | None = None

    def __post_init__(self):
        self.locations = np.asarray(self.locations, dtype=float).reshape(-1)
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if self.locations.shape != self.weights.shape:
            raise DimensionError("locations and weights differ in length")

    def __len__(self):
        return self.weights.size

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def scaled(self, a: float) -> "AtomicMeasure1D":
        return AtomicMeasure1D(self.locations.copy(), a * self.weights, self.index)


@dataclass
class AtomicMeasure2D:
    points: np.ndarray  # (n, 2)
    weights: np.ndarray
    index: np.ndarray | None = None  # (n, 2) cohort indices (i, j)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 2)
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if self.points.shape[0] != self.weights.size:
            raise DimensionError("points and weights differ in length")

    def __len__(self):
        return self.weights.size

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def scaled(self, a: float) -> "AtomicMeasure2D":
        return AtomicMeasure2D(self.points.copy(), a * self.weights, self.index)


def recover_location(moment, mass, eps=EPS_MASS):
    """moment / mass, or 0 where mass <= eps (zero-mass branch of the scheme)."""
    moment = np.asarray(moment, dtype=float)
    mass = np.asarray(mass, dtype=float)
    safe = np.where(mass > eps, mass, 1.0)
    return np.where(mass > eps, moment / safe, 0.0)


@dataclass
class PopulationState:
    """Full cohort state at time ``t``.

    ``*_loc[0]`` is unused storage: the boundary location is always recovered
    from ``*_pi`` and ``*_mass[0]``.  ``*_edge`` holds (upper cohort edge - t),
    which is constant in time because every edge moves with unit speed.
    """

    t: float
    n: int
    B: int
    J: int
    male_mass: np.ndarray
    male_loc: np.ndarray
    male_pi: float
    female_mass: np.ndarray
    female_loc: np.ndarray
    female_pi: float
    couple_mass: np.ndarray
    couple_xbar: np.ndarray
    couple_ybar: np.ndarray
    male_edge: np.ndarray
    female_edge: np.ndarray
    x_max: float
    eps: float = EPS_MASS
    meta: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return self.male_mass.size

    def copy(self) -> "PopulationState":
        return PopulationState(
            t=self.t, n=self.n, B=self.B, J=self.J,
            male_mass=self.male_mass.copy(), male_loc=self.male_loc.copy(), male_pi=self.male_pi,
            female_mass=self.female_mass.copy(), female_loc=self.female_loc.copy(),
            female_pi=self.female_pi,
            couple_mass=self.couple_mass.copy(), couple_xbar=self.couple_xbar.copy(),
            couple_ybar=self.couple_ybar.copy(),
            male_edge=self.male_edge.copy(), female_edge=self.female_edge.copy(),
            x_max=self.x_max, eps=self.eps, meta=dict(self.meta))

    # -- derived quantities -------------------------------------------------
    def male_locations(self) -> np.ndarray:
        loc = self.male_loc.copy()
        loc[0] = float(recover_location(self.male_pi, self.male_mass[0], self.eps))
        return loc

    def female_locations(self) -> np.ndarray:
        loc = self.female_loc.copy()
        loc[0] = float(recover_location(self.female_pi, self.female_mass[0], self.eps))
        return loc

    def couple_locations(self) -> tuple[np.ndarray, np.ndarray]:
        return (recover_location(self.couple_xbar, self.couple_mass, self.eps),
                recover_location(self.couple_ybar, self.couple_mass, self.eps))

    def totals(self) -> tuple[float, float, float]:
        return (float(self.male_mass.sum()), float(self.female_mass.sum()),
                float(self.couple_mass.sum()))

    def male_edges(self) -> np.ndarray:
        """Cohort edges at time t: [0, upper_0, upper_1, ...]."""
        return np.concatenate(([0.0], self.male_edge + self.t))

    def female_edges(self) -> np.ndarray:
        return np.concatenate(([0.0], self.female_edge + self.t))

    def male_cohorts(self) -> tuple[BoundaryCohort1D, list[Cohort1D]]:
        return (BoundaryCohort1D(float(self.male_mass[0]), float(self.male_pi)),
                [Cohort1D(float(m), float(x)) for m, x in zip(self.male_mass[1:], self.male_loc[1:])])

    def female_cohorts(self) -> tuple[BoundaryCohort1D, list[Cohort1D]]:
        return (BoundaryCohort1D(float(self.female_mass[0]), float(self.female_pi)),
                [Cohort1D(float(m), float(y)) for m, y in zip(self.female_mass[1:], self.female_loc[1:])])

    def couple_cohort(self, i: int, j: int) -> CoupleCohort:
        return CoupleCohort(float(self.couple_mass[i, j]), float(self.couple_xbar[i, j]),
                            float(self.couple_ybar[i, j]))

    # -- flat vector representation used by the integrator -------------------
    def pack(self) -> np.ndarray:
        ml = self.male_loc.copy()
        ml[0] = self.male_pi
        fl = self.female_loc.copy()
        fl[0] = self.female_pi
        return np.concatenate((self.male_mass, ml, self.female_mass, fl,
                               self.couple_mass.ravel(), self.couple_xbar.ravel(),
                               self.couple_ybar.ravel()))

    def unpack(self, vec: np.ndarray, t: float) -> "PopulationState":
        K = self.K
        if vec.size != 4 * K + 3 * K * K:
            raise DimensionError(f"vector of length {vec.size} does not fit K={K}")
        out = self.copy()
        out.t = float(t)
        out.male_mass = vec[0:K].copy()
        out.male_loc = vec[K:2 * K].copy()
        out.male_pi = float(out.male_loc[0])
        out.female_mass = vec[2 * K:3 * K].copy()
        out.female_loc = vec[3 * K:4 * K].copy()
        out.female_pi = float(out.female_loc[0])
        base = 4 * K
        out.couple_mass = vec[base:base + K * K].reshape(K, K).copy()
        out.couple_xbar = vec[base + K * K:base + 2 * K * K].reshape(K, K).copy()
        out.couple_ybar = vec[base + 2 * K * K:].reshape(K, K).copy()
        out.male_loc[0] = float(recover_location(out.male_pi, out.male_mass[0], out.eps))
        out.female_loc[0] = float(recover_location(out.female_pi, out.female_mass[0], out.eps))
        return out


# ---------------------------------------------------------------------------
# initialisation

def _check_mesh(mesh) -> np.ndarray:
    mesh = np.asarray(mesh, dtype=float).reshape(-1)
    if mesh.size < 2:
        raise InputError("mesh needs at least two breakpoints")
    if mesh[0] != 0.0:
        raise InputError("mesh must start at age 0")
    if np.any(np.diff(mesh) <= 0):
        raise InputError("mesh must be strictly increasing")
    return mesh


def _check_support_1d(u0, top: float, what: str):
    probe = top + np.linspace(0.0, max(top, 1.0), 257)[1:]
    vals = np.asarray(u0(probe), dtype=float)
    if np.any(vals > 0.0):
        raise SupportViolationError(f"{what} density has mass beyond the last mesh point {top}")


def _cells_1d(u0, mesh, order, what):
    nodes, weights = gauss_cells(mesh, order)
    vals = np.asarray(u0(nodes), dtype=float)
    vals = np.broadcast_to(vals, nodes.shape)
    if not np.all(np.isfinite(vals)):
        raise InputError(f"{what} density is not finite")
    if np.any(vals < 0):
        raise InputError(f"{what} density has negative samples")
    mass = (vals * weights).sum(axis=1)
    moment = (vals * weights * nodes).sum(axis=1)
    mid = 0.5 * (mesh[:-1] + mesh[1:])
    loc = np.where(mass > EPS_MASS, moment / np.where(mass > 0, mass, 1.0), mid)
    return mass, loc


def init_state(u0_m: Callable, u0_f: Callable, u0_c: Callable, mesh, mesh_f=None,
               order: int = 16) -> PopulationState:
    """Group initial densities into cohorts on ``mesh`` (breakpoints from age 0).

    Masses and first moments are computed per cell with Gauss-Legendre
    quadrature of the given ``order``.  The boundary cohort and the couple
    boundary row/column start empty.
    """
    mesh_m = _check_mesh(mesh)
    mesh_f = mesh_m if mesh_f is None else _check_mesh(mesh_f)
    if mesh_f.size != mesh_m.size:
        raise DimensionError("male and female meshes must have the same number of cells")
    _check_support_1d(u0_m, mesh_m[-1], "male")
    _check_support_1d(u0_f, mesh_f[-1], "female")

    mm, xm = _cells_1d(u0_m, mesh_m, order, "male")
    mf, yf = _cells_1d(u0_f, mesh_f, order, "female")

    xn, xw = gauss_cells(mesh_m, order)
    yn, yw = gauss_cells(mesh_f, order)
    nc = mesh_m.size - 1
    X = xn.reshape(-1)[:, None]
    Y = yn.reshape(-1)[None, :]
    vals = np.broadcast_to(np.asarray(u0_c(X, Y), dtype=float), (X.size, Y.size))
    if not np.all(np.isfinite(vals)):
        raise InputError("couple density is not finite")
    if np.any(vals < 0):
        raise InputError("couple density has negative samples")
    # couple support check along the two outer strips
    probe_x = mesh_m[-1] + np.linspace(0.0, max(mesh_m[-1], 1.0), 65)[1:]
    probe_y = mesh_f[-1] + np.linspace(0.0, max(mesh_f[-1], 1.0), 65)[1:]
    inner_y = np.linspace(0.0, mesh_f[-1] + max(mesh_f[-1], 1.0), 129)
    inner_x = np.linspace(0.0, mesh_m[-1] + max(mesh_m[-1], 1.0), 129)
    if (np.any(np.asarray(u0_c(probe_x[:, None], inner_y[None, :])) > 0)
            or np.any(np.asarray(u0_c(inner_x[:, None], probe_y[None, :])) > 0)):
        raise SupportViolationError("couple density has mass beyond the mesh")
    v4 = vals.reshape(nc, order, nc, order)
    w4 = xw[:, :, None, None] * yw[None, None, :, :]
    mc = np.einsum("iajb,iajb->ij", v4, w4)
    xbar = np.einsum("iajb,iajb,ia->ij", v4, w4, xn)
    ybar = np.einsum("iajb,iajb,jb->ij", v4, w4, yn)

    K = nc + 1
    state = PopulationState(
        t=0.0, n=0, B=0, J=nc,
        male_mass=np.concatenate(([0.0], mm)), male_loc=np.concatenate(([0.0], xm)), male_pi=0.0,
        female_mass=np.concatenate(([0.0], mf)), female_loc=np.concatenate(([0.0], yf)),
        female_pi=0.0,
        couple_mass=np.zeros((K, K)), couple_xbar=np.zeros((K, K)), couple_ybar=np.zeros((K, K)),
        male_edge=mesh_m.copy(), female_edge=mesh_f.copy(),
        x_max=float(max(mesh_m[-1], mesh_f[-1])))
    state.couple_mass[1:, 1:] = mc
    state.couple_xbar[1:, 1:] = xbar
    state.couple_ybar[1:, 1:] = ybar
    return state


# ---------------------------------------------------------------------------
# internalisation

def internalize(state: PopulationState, t_n: float) -> PopulationState:
    """Promote the boundary cohorts to internal ones and open empty new ones."""
    s = state
    K = s.K
    xb = float(recover_location(s.male_pi, s.male_mass[0], s.eps))
    yb = float(recover_location(s.female_pi, s.female_mass[0], s.eps))

    male_loc = s.male_loc.copy()
    male_loc[0] = xb
    female_loc = s.female_loc.copy()
    female_loc[0] = yb

    def grow(a):
        out = np.zeros((K + 1, K + 1))
        out[1:, 1:] = a
        return out

    return PopulationState(
        t=float(t_n), n=s.n + 1, B=s.B - 1, J=s.J,
        male_mass=np.concatenate(([0.0], s.male_mass)),
        male_loc=np.concatenate(([0.0], male_loc)), male_pi=0.0,
        female_mass=np.concatenate(([0.0], s.female_mass)),
        female_loc=np.concatenate(([0.0], female_loc)), female_pi=0.0,
        couple_mass=grow(s.couple_mass), couple_xbar=grow(s.couple_xbar),
        couple_ybar=grow(s.couple_ybar),
        male_edge=np.concatenate(([-float(t_n)], s.male_edge)),
        female_edge=np.concatenate(([-float(t_n)], s.female_edge)),
        x_max=s.x_max, eps=s.eps, meta=dict(s.meta))


def cull(state: PopulationState, max_age: float) -> PopulationState:
    """Drop cohort indices that are empty in every species and older than ``max_age``.

    Optional extension, off by default in the integrator; it breaks the
    J - B0 + n + 1 cohort count on purpose.
    """
    s = state
    eps = s.eps
    keep = np.ones(s.K, dtype=bool)
    for k in range(1, s.K):
        if (s.male_mass[k] <= eps and s.female_mass[k] <= eps
                and np.all(s.couple_mass[k, :] <= eps) and np.all(s.couple_mass[:, k] <= eps)
                and s.male_loc[k] > max_age and s.female_loc[k] > max_age):
            keep[k] = False
    if keep.all():
        return s
    out = s.copy()
    out.male_mass, out.male_loc = s.male_mass[keep], s.male_loc[keep]
    out.female_mass, out.female_loc = s.female_mass[keep], s.female_loc[keep]
    sel = np.ix_(keep, keep)
    out.couple_mass, out.couple_xbar, out.couple_ybar = (
        s.couple_mass[sel], s.couple_xbar[sel], s.couple_ybar[sel])
    out.male_edge, out.female_edge = s.male_edge[keep], s.female_edge[keep]
    out.meta["culled"] = out.meta.get("culled", 0) + int((~keep).sum())
    return out


# ---------------------------------------------------------------------------
# extension E and projection P

class CohortTuples(NamedTuple):
    male: np.ndarray     # (K, 2): location, mass
    female: np.ndarray   # (K, 2)
    couples: np.ndarray  # (K, K, 3): x, y, mass


def state_tuples(state: PopulationState) -> CohortTuples:
    xc, yc = state.couple_locations()
    return CohortTuples(
        male=np.column_stack((state.male_locations(), state.male_mass)),
        female=np.column_stack((state.female_locations(), state.female_mass)),
        couples=np.stack((xc, yc, state.couple_mass), axis=-1))


def extract_measures(state: PopulationState):
    """Operator E: one Dirac atom per cohort with mass above the zero threshold."""
    eps = state.eps
    out = []
    for loc, mass in ((state.male_locations(), state.male_mass),
                      (state.female_locations(), state.female_mass)):
        keep = np.flatnonzero(mass > eps)
        out.append(AtomicMeasure1D(loc[keep], mass[keep], index=keep))
    xc, yc = state.couple_locations()
    ii, jj = np.nonzero(state.couple_mass > eps)
    out.append(AtomicMeasure2D(np.column_stack((xc[ii, jj], yc[ii, jj])),
                               state.couple_mass[ii, jj], index=np.column_stack((ii, jj))))
    return tuple(out)


def project(measures, K: int) -> CohortTuples:
    """Operator P: cohort tuples for a state with ``K`` cohorts per sex.

    Atoms carrying cohort indices are scattered to those indices; unlabelled
    atoms must come in full cohort order.  Cohorts without an atom get mass 0
    at the zero-mass location 0.
    """
    male, female, couples = measures
    tuples = []
    for mu in (male, female):
        arr = np.zeros((K, 2))
        if mu.index is None:
            if len(mu) != K:
                raise DimensionError(f"expected {K} atoms, got {len(mu)}")
            idx = np.arange(K)
        else:
            idx = np.asarray(mu.index, dtype=int)
            if idx.size != len(mu) or (idx.size and (idx.min() < 0 or idx.max() >= K)):
                raise DimensionError("atom indices do not fit the state shape")
        arr[idx, 0] = mu.locations
        arr[idx, 1] = mu.weights
        tuples.append(arr)
    arr = np.zeros((K, K, 3))
    if couples.index is None:
        if len(couples) != K * K:
            raise DimensionError(f"expected {K * K} couple atoms, got {len(couples)}")
        ii, jj = np.divmod(np.arange(K * K), K)
    else:
        idx = np.asarray(couples.index, dtype=int).reshape(-1, 2)
        if idx.shape[0] != len(couples) or (idx.size and (idx.min() < 0 or idx.max() >= K)):
            raise DimensionError("couple atom indices do not fit the state shape")
        ii, jj = idx[:, 0], idx[:, 1]
    arr[ii, jj, 0] = couples.points[:, 0]
    arr[ii, jj, 1] = couples.points[:, 1]
    arr[ii, jj, 2] = couples.weights
    tuples.append(arr)
    return CohortTuples(*tuples)


# ---------------------------------------------------------------------------
# snapshot CSV

def write_snapshot(state: PopulationState, directory, stem: str) -> list[Path]:
    """One CSV per species: ``<stem>_male.csv``, ``_female.csv``, ``_couples.csv``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for sex, mass, loc, pi in (("male", state.male_mass, state.male_locations(), state.male_pi),
                               ("female", state.female_mass, state.female_locations(),
                                state.female_pi)):
        path = directory / f"{stem}_{sex}.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["# t", repr(float(state.t)), "n", state.n])
            w.writerow(["index", "kind", "mass", "location", "moment"])
            for k in range(state.K):
                moment = pi if k == 0 else mass[k] * loc[k]
                w.writerow([state.B + k, "boundary" if k == 0 else "internal",
                            repr(float(mass[k])), repr(float(loc[k])), repr(float(moment))])
        paths.append(path)
    xc, yc = state.couple_locations()
    path = directory / f"{stem}_couples.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["# t", repr(float(state.t)), "n", state.n])
        w.writerow(["i", "j", "mass", "x", "y", "xbar", "ybar"])
        for i in range(state.K):
            for j in range(state.K):
                w.writerow([state.B + i, state.B + j, repr(float(state.couple_mass[i, j])),
                            repr(float(xc[i, j])), repr(float(yc[i, j])),
                            repr(float(state.couple_xbar[i, j])),
                            repr(float(state.couple_ybar[i, j]))])
    paths.append(path)
    return paths


def read_snapshot_1d(path) -> dict:
    """Parse a per-sex snapshot CSV back into arrays."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    t = float(rows[0][1])
    body = rows[2:]
    return {
        "t": t,
        "index": np.array([int(r[0]) for r in body]),
        "mass": np.array([float(r[2]) for r in body]),
        "location": np.array([float(r[3]) for r in body]),
        "moment": np.array([float(r[4]) for r in body]),
    }
