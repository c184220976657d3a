"""Fixed-step RK4 time stepping with internalisation at interval ends."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cohorts import EPS_MASS, PopulationState, cull, internalize
from .diagnostics import Diagnostics
from .ebt_rhs import rhs
from .errors import ConfigurationError, EBTError, StepSizeError
from .model import Coefficients

CLAMP_TOLERANCE = 1e-10
CONE_TOLERANCE = 1e-10


@dataclass(frozen=True)
class IntegratorConfig:
    dt_internalization: float
    t_end: float
    substeps: int = 4
    cone_check: bool = True
    epsilon_mass: float = EPS_MASS
    general_theta: bool = False
    cull_age: float | None = None
    keep_snapshots: bool = True

    def __post_init__(self):
        if not (self.dt_internalization > 0 and np.isfinite(self.dt_internalization)):
            raise ConfigurationError("dt_internalization must be positive")
        if self.substeps < 1:
            raise ConfigurationError("substeps must be >= 1")
        if not (self.t_end >= 0):
            raise ConfigurationError("t_end must be nonnegative")
        n = self.intervals
        if abs(n * self.dt_internalization - self.t_end) > 1e-12:
            raise ConfigurationError(
                f"t_end={self.t_end!r} is not a whole number of intervals of {self.dt_internalization!r}")

    @property
    def intervals(self) -> int:
        return int(round(self.t_end / self.dt_internalization))


def _clamp(state: PopulationState, diag: Diagnostics | None):
    worst = 0.0
    hit = False
    for arr in (state.male_mass, state.female_mass, state.couple_mass):
        neg = arr < 0.0
        if np.any(neg):
            hit = True
            worst = max(worst, float(-arr[neg].min()))
            arr[neg] = 0.0
    if hit and diag is not None:
        diag.clamp_events += 1
        diag.max_clamped_mass = max(diag.max_clamped_mass, worst)
        if worst > CLAMP_TOLERANCE:
            diag.clamp_failures += 1
        diag.log("mass_clamp", t=state.t, amount=worst)
    if hit:
        state.male_loc[0] = state.male_pi / state.male_mass[0] if state.male_mass[0] > state.eps else 0.0
        state.female_loc[0] = (state.female_pi / state.female_mass[0]
                               if state.female_mass[0] > state.eps else 0.0)


def _check_ordering(state: PopulationState):
    for name, loc in (("male", state.male_loc), ("female", state.female_loc)):
        if loc.size > 2 and np.any(np.diff(loc[1:]) <= 0.0):
            raise StepSizeError(f"{name} cohort locations lost their ordering at t={state.t}; "
                                "reduce the step size")


def check_cone(state: PopulationState, diag: Diagnostics | None = None) -> int:
    """Count couple cells outside 0 <= moment <= (t + x_max) * mass (+ tolerance)."""
    bound = (state.t + state.x_max) * state.couple_mass + CONE_TOLERANCE
    bad = 0
    for mom in (state.couple_xbar, state.couple_ybar):
        bad += int(np.count_nonzero((mom < -CONE_TOLERANCE) | (mom > bound)))
    if bad and diag is not None:
        diag.cone_violations += bad
        diag.log("cone_violation", t=state.t, cells=bad)
    return bad


def step(state: PopulationState, dt: float, coeffs: Coefficients,
         diag: Diagnostics | None = None, general: bool = False) -> PopulationState:
    """One classical RK4 step of length ``dt`` on the stacked system."""
    if not dt > 0:
        raise ConfigurationError("dt must be positive")
    t0 = state.t
    y0 = state.pack()

    def f(t, y):
        return rhs(state.unpack(y, t), coeffs, diag, general).pack()

    k1 = f(t0, y0)
    k2 = f(t0 + 0.5 * dt, y0 + 0.5 * dt * k1)
    k3 = f(t0 + 0.5 * dt, y0 + 0.5 * dt * k2)
    k4 = f(t0 + dt, y0 + dt * k3)
    y1 = y0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    out = state.unpack(y1, t0 + dt)
    _clamp(out, diag)
    _check_ordering(out)
    return out


def run(initial: PopulationState, coeffs: Coefficients, cfg: IntegratorConfig,
        diag: Diagnostics | None = None) -> list[PopulationState]:
    """Integrate to ``cfg.t_end``; returns the initial state and one snapshot per interval.

    Every snapshot is taken right after the internalisation at t_n = n * dt.
    With ``keep_snapshots=False`` only the initial and final states are kept.
    """
    diag = diag if diag is not None else Diagnostics()
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
                state = step(state, h, coeffs, diag, cfg.general_theta)
                if cfg.cone_check:
                    check_cone(state, diag)
        except EBTError as exc:
            raise type(exc)(f"interval n={n}, t={state.t!r}: {exc}") from exc
        t_next = t_start + (n + 1) * dt
        state = internalize(state, t_next)
        if cfg.cull_age is not None:
            state = cull(state, cfg.cull_age)
        if cfg.keep_snapshots or n == cfg.intervals - 1:
            snaps.append(state.copy())
    return snaps
