"""Escalator boxcar train for the one-sex McKendrick-von Foerster model.

Internal cohorts ride dx/dt = b(t, x) and lose mass at rate c(t, x); the
boundary cohort tracks its mass m_B and the moment pi_B = sum (x - x_b),
so its location is x_b + pi_B / m_B.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .cohorts import EPS_MASS, AtomicMeasure1D, recover_location
from .diagnostics import Diagnostics
from .errors import (ConfigurationError, EBTError, InputError, NumericalBlowupError,
                     PresetLookupError, StepSizeError)
from .integrator import CLAMP_TOLERANCE, IntegratorConfig
from .model import check_finite, constant, gauss_cells


@dataclass(frozen=True)
class ScalarCoefficients:
    b: Callable
    db: Callable
    c: Callable
    dc: Callable
    beta: Callable
    x_b: float = 0.0
    name: str = "custom"

    def __post_init__(self):
        b0 = np.asarray(self.b(0.0, np.array([self.x_b])), dtype=float)
        if not np.all(np.isfinite(b0)) or np.any(b0 < 0):
            raise ConfigurationError("growth rate at the minimal size must be finite and >= 0")


def _renewal():
    zero = constant(0.0)
    return ScalarCoefficients(b=constant(1.0), db=zero, c=constant(0.2), dc=zero,
                              beta=constant(0.8), name="renewal")


def _transport():
    zero = constant(0.0)
    return ScalarCoefficients(b=constant(1.0), db=zero, c=zero, dc=zero, beta=zero,
                              name="transport")


def _linear_growth():
    def b(t, x):
        return 1.0 + np.asarray(x, dtype=float) + 0.0 * t

    def beta(t, x):
        return 0.5 * np.exp(-np.asarray(x, dtype=float)) + 0.0 * t

    return ScalarCoefficients(b=b, db=constant(1.0), c=constant(0.1), dc=constant(0.0),
                              beta=beta, name="linear-growth")


SCALAR_PRESETS = {
    "renewal": _renewal,
    "transport": _transport,
    "linear-growth": _linear_growth,
}


def scalar_preset(name: str) -> ScalarCoefficients:
    try:
        return SCALAR_PRESETS[name]()
    except KeyError:
        raise PresetLookupError(
            f"unknown scalar preset {name!r}; known: {sorted(SCALAR_PRESETS)}") from None


@dataclass
class ScalarState:
    """Cohorts at time ``t``; slot 0 is the boundary cohort and ``loc[0]`` holds pi_B."""

    t: float
    n: int
    mass: np.ndarray
    loc: np.ndarray
    x_b: float = 0.0
    eps: float = EPS_MASS
    meta: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return self.mass.size

    @property
    def pi(self) -> float:
        return float(self.loc[0])

    def copy(self) -> "ScalarState":
        return ScalarState(self.t, self.n, self.mass.copy(), self.loc.copy(), self.x_b,
                           self.eps, dict(self.meta))

    def locations(self) -> np.ndarray:
        out = self.loc.copy()
        out[0] = self.x_b + float(recover_location(self.loc[0], self.mass[0], self.eps))
        return out

    def total_mass(self) -> float:
        return float(self.mass.sum())

    def measure(self) -> AtomicMeasure1D:
        keep = np.flatnonzero(self.mass > self.eps)
        return AtomicMeasure1D(self.locations()[keep], self.mass[keep], index=keep)


def scalar_init(u0: Callable, mesh, x_b: float = 0.0, order: int = 16) -> ScalarState:
    """Group ``u0`` into cohorts on ``mesh`` (which must start at ``x_b``)."""
    mesh = np.asarray(mesh, dtype=float).reshape(-1)
    if mesh.size < 2 or mesh[0] != x_b or np.any(np.diff(mesh) <= 0):
        raise InputError("mesh must be strictly increasing and start at x_b")
    nodes, weights = gauss_cells(mesh, order)
    vals = np.broadcast_to(np.asarray(u0(nodes), dtype=float), nodes.shape)
    if not np.all(np.isfinite(vals)) or np.any(vals < 0):
        raise InputError("initial density must be finite and nonnegative")
    mass = (vals * weights).sum(axis=1)
    mom = (vals * weights * nodes).sum(axis=1)
    mid = 0.5 * (mesh[:-1] + mesh[1:])
    loc = np.where(mass > EPS_MASS, mom / np.where(mass > 0, mass, 1.0), mid)
    return ScalarState(0.0, 0, np.concatenate(([0.0], mass)), np.concatenate(([0.0], loc)), x_b)


def scalar_rhs(state: ScalarState, coeffs: ScalarCoefficients) -> tuple[np.ndarray, np.ndarray]:
    """(dmass/dt, dloc/dt) with dloc[0] holding dpi_B/dt."""
    t = state.t
    K = state.K
    x = state.locations()
    xb = np.array([state.x_b])
    m = state.mass
    pi = state.pi
    b = check_finite(np.broadcast_to(coeffs.b(t, x), (K,)), "b")
    c = check_finite(np.broadcast_to(coeffs.c(t, x), (K,)), "c")
    beta = check_finite(np.broadcast_to(coeffs.beta(t, x), (K,)), "beta")
    b0 = float(check_finite(coeffs.b(t, xb), "b")[0])
    db0 = float(check_finite(coeffs.db(t, xb), "db")[0])
    c0 = float(check_finite(coeffs.c(t, xb), "c")[0])
    dc0 = float(check_finite(coeffs.dc(t, xb), "dc")[0])

    dm = -c * m
    dx = b.copy()
    dm[0] = -c0 * m[0] - dc0 * pi + float(np.dot(beta, m))
    dx[0] = b0 * m[0] + db0 * pi - c0 * pi
    if not (np.all(np.isfinite(dm)) and np.all(np.isfinite(dx))):
        bad = int(np.flatnonzero(~(np.isfinite(dm) & np.isfinite(dx)))[0])
        raise NumericalBlowupError(f"non-finite scalar derivative at cohort {bad}", index=bad)
    return dm, dx


def scalar_step(state: ScalarState, dt: float, coeffs: ScalarCoefficients,
                diag: Diagnostics | None = None) -> ScalarState:
    K = state.K
    y0 = np.concatenate((state.mass, state.loc))
    t0 = state.t

    def f(t, y):
        s = ScalarState(t, state.n, y[:K], y[K:], state.x_b, state.eps)
        dm, dx = scalar_rhs(s, coeffs)
        return np.concatenate((dm, dx))

    k1 = f(t0, y0)
    k2 = f(t0 + 0.5 * dt, y0 + 0.5 * dt * k1)
    k3 = f(t0 + 0.5 * dt, y0 + 0.5 * dt * k2)
    k4 = f(t0 + dt, y0 + dt * k3)
    y1 = y0 + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    out = ScalarState(t0 + dt, state.n, y1[:K].copy(), y1[K:].copy(), state.x_b, state.eps,
                      state.meta)
    neg = out.mass < 0
    if np.any(neg):
        worst = float(-out.mass[neg].min())
        out.mass[neg] = 0.0
        if diag is not None:
            diag.clamp_events += 1
            diag.max_clamped_mass = max(diag.max_clamped_mass, worst)
            if worst > CLAMP_TOLERANCE:
                diag.clamp_failures += 1
            diag.log("mass_clamp", t=out.t, amount=worst)
    live = out.loc[1:][out.mass[1:] > out.eps]
    if live.size > 1 and np.any(np.diff(live) <= 0):
        raise StepSizeError(f"cohort locations lost their ordering at t={out.t}")
    return out


def scalar_internalize(state: ScalarState, t_n: float) -> ScalarState:
    loc = state.locations()
    return ScalarState(float(t_n), state.n + 1, np.concatenate(([0.0], state.mass)),
                       np.concatenate(([0.0], loc)), state.x_b, state.eps, dict(state.meta))


def scalar_run(initial: ScalarState, coeffs: ScalarCoefficients, cfg: IntegratorConfig,
               diag: Diagnostics | None = None) -> list[ScalarState]:
    """Same protocol as the two-sex ``run``: snapshot after every internalisation."""
    diag = diag if diag is not None else Diagnostics()
    if initial.x_b != coeffs.x_b:
        raise ConfigurationError("state and coefficients disagree on x_b")
    dt = cfg.dt_internalization
    h = dt / cfg.substeps
    state = initial.copy()
    state.eps = cfg.epsilon_mass
    snaps = [state.copy()]
    t_start = state.t
    for n in range(cfg.intervals):
        t_n = t_start + n * dt
        try:
            for k in range(cfg.substeps):
                state.t = t_n + k * h
                state = scalar_step(state, h, coeffs, diag)
        except EBTError as exc:
            raise type(exc)(f"interval n={n}, t={state.t!r}: {exc}") from exc
        state = scalar_internalize(state, t_start + (n + 1) * dt)
        if cfg.keep_snapshots or n == cfg.intervals - 1:
            snaps.append(state.copy())
    return snaps
