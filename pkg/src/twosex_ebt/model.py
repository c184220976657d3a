"""Coefficient model for the two-sex age-structured population system.

Every rate is a vectorised callable: it must broadcast over numpy arrays of
time and age arguments.  Age partials of the male/female death rates are
carried explicitly because the boundary-cohort equations use them at age 0.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigurationError, EvaluationError, InputError, PresetLookupError

Rate1 = Callable[..., np.ndarray]

DEFAULT_QUADRATURE_NODES = 513


def constant(value: float) -> Rate1:
    """Return a broadcasting callable that ignores its arguments."""

    def f(*args):
        shape = np.broadcast(*args).shape if args else ()
        return np.full(shape, float(value))

    f.__name__ = f"const_{value}"
    return f


def smoothstep(z):
    """C2 ramp: 0 for z <= 0, 1 for z >= 1, quintic in between."""
    z = np.clip(z, 0.0, 1.0)
    return z**3 * (10.0 - 15.0 * z + 6.0 * z**2)


def smoothstep_prime(z):
    inside = (z > 0.0) & (z < 1.0)
    zc = np.clip(z, 0.0, 1.0)
    return np.where(inside, 30.0 * zc**2 * (1.0 - zc) ** 2, 0.0)


@dataclass(frozen=True)
class Coefficients:
    """Vital rates, marriage parameters and the age partials of c_m, c_f.

    ``theta_factors`` is optional.  When given as ``(tx, ty)`` it must satisfy
    ``theta(x, y) == tx(x) * ty(y)``; the right-hand side assembly then uses an
    O(K^2) factorised path instead of the O(K^4) general contraction.
    """

    c_m: Rate1
    c_f: Rate1
    c_c: Rate1
    beta_m: Rate1
    beta_f: Rate1
    theta: Rate1
    h: Rate1
    g: Rate1
    gamma: float
    dx_c_m: Rate1
    dy_c_f: Rate1
    theta_factors: tuple[Rate1, Rate1] | None = None
    name: str = "custom"

    def __post_init__(self):
        if not (np.isfinite(self.gamma) and self.gamma > 0):
            raise ConfigurationError(f"gamma must be positive, got {self.gamma!r}")

    def replace(self, **changes) -> "Coefficients":
        return dataclasses.replace(self, **changes)

    def without_marriage(self) -> "Coefficients":
        """Same coefficients with Theta identically zero."""
        zero = constant(0.0)
        return self.replace(theta=zero, theta_factors=(zero, constant(1.0)),
                            name=f"{self.name}+no-marriage")


def check_finite(values, what: str):
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise EvaluationError(f"non-finite value from coefficient {what}")
    return values


# ---------------------------------------------------------------------------
# quadrature helpers

def simpson_weights(a: float, b: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and composite Simpson weights on a uniform grid of ``n`` (odd) nodes."""
    if n < 3 or n % 2 == 0:
        raise ConfigurationError(f"Simpson rule needs an odd node count >= 3, got {n}")
    x = np.linspace(a, b, n)
    hx = (b - a) / (n - 1)
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return x, w * hx / 3.0


def gauss_cells(edges: np.ndarray, order: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights per cell; both arrays shaped (ncells, order)."""
    edges = np.asarray(edges, dtype=float)
    xi, wi = np.polynomial.legendre.leggauss(order)
    lo, hi = edges[:-1, None], edges[1:, None]
    half = 0.5 * (hi - lo)
    return lo + half * (xi[None, :] + 1.0), half * wi[None, :]


# ---------------------------------------------------------------------------
# marriage function

def marriage_formula(theta_xy, h_x, g_y, unmarried_m, unmarried_f, denominator):
    return theta_xy * h_x * g_y * unmarried_m * unmarried_f / denominator


def marriage_rate(t, x, y, um, uf, uc, coeffs: Coefficients, x_max: float,
                  nodes: int = DEFAULT_QUADRATURE_NODES):
    """Pointwise marriage rate T(t, x, y) for density evaluators um, uf, uc.

    All age integrals are truncated to [0, x_max] and computed with composite
    Simpson on ``nodes`` points per axis.  ``x`` and ``y`` may be arrays.
    """
    if not (x_max > 0):
        raise ConfigurationError(f"x_max must be positive, got {x_max!r}")
    z, w = simpson_weights(0.0, float(x_max), nodes)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)

    def sample(f, *args):
        v = np.asarray(f(*args), dtype=float)
        if not np.all(np.isfinite(v)):
            raise InputError("density evaluator returned a non-finite value")
        return np.broadcast_to(v, np.broadcast(*args).shape)

    uc_grid = sample(uc, z[:, None], z[None, :])
    unmarried_m_z = sample(um, z) - uc_grid @ w
    unmarried_f_z = sample(uf, z) - w @ uc_grid
    denom = (coeffs.gamma
             + np.dot(w, check_finite(coeffs.h(z), "h") * unmarried_m_z)
             + np.dot(w, check_finite(coeffs.g(z), "g") * unmarried_f_z))

    row = sample(uc, x[..., None], z) @ w
    col = sample(uc, z, y[..., None]) @ w
    unmarried_m = sample(um, x) - row
    unmarried_f = sample(uf, y) - col
    out = marriage_formula(coeffs.theta(x, y), coeffs.h(x), coeffs.g(y),
                           unmarried_m, unmarried_f, denom)
    out = check_finite(out, "marriage rate")
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# presets

def _zero_vital():
    zero, one = constant(0.0), constant(1.0)
    return Coefficients(c_m=zero, c_f=zero, c_c=zero, beta_m=zero, beta_f=zero,
                        theta=one, h=one, g=one, gamma=1.0,
                        dx_c_m=zero, dy_c_f=zero, theta_factors=(one, one),
                        name="zero-vital")


def _constant():
    zero, one = constant(0.0), constant(1.0)
    rate, birth = constant(0.1), constant(0.5)
    return Coefficients(c_m=rate, c_f=rate, c_c=rate, beta_m=birth, beta_f=birth,
                        theta=one, h=one, g=one, gamma=1.0,
                        dx_c_m=zero, dy_c_f=zero, theta_factors=(one, one),
                        name="constant")


def _separable_gaussian():
    # gaussian age profiles with a mild periodic time modulation
    def mod(t):
        return 1.0 + 0.1 * np.sin(t)

    def c_m(t, x):
        return mod(t) * (0.05 + 0.1 * np.exp(-((x - 1.0) / 0.5) ** 2))

    def dx_c_m(t, x):
        return mod(t) * 0.1 * np.exp(-((x - 1.0) / 0.5) ** 2) * (-2.0 * (x - 1.0) / 0.25)

    def c_f(t, y):
        return mod(t) * (0.04 + 0.12 * np.exp(-((y - 0.9) / 0.6) ** 2))

    def dy_c_f(t, y):
        return mod(t) * 0.12 * np.exp(-((y - 0.9) / 0.6) ** 2) * (-2.0 * (y - 0.9) / 0.36)

    def c_c(t, x, y):
        return 0.15 + 0.05 * np.exp(-((x - 1.0) ** 2 + (y - 1.0) ** 2))

    def beta_m(t, x, y):
        return 0.4 * np.exp(-((x - 1.0) ** 2 + (y - 0.9) ** 2) / 0.5)

    def beta_f(t, x, y):
        return 0.38 * np.exp(-((x - 1.0) ** 2 + (y - 0.9) ** 2) / 0.5)

    def tx(x):
        return np.exp(-((x - 1.1) / 0.8) ** 2)

    def ty(y):
        return np.exp(-((y - 1.0) / 0.8) ** 2)

    def theta(x, y):
        return tx(x) * ty(y)

    def h(x):
        return np.exp(-((x - 1.2) / 0.6) ** 2)

    def g(y):
        return np.exp(-((y - 1.1) / 0.6) ** 2)

    return Coefficients(c_m=c_m, c_f=c_f, c_c=c_c, beta_m=beta_m, beta_f=beta_f,
                        theta=theta, h=h, g=g, gamma=1.0,
                        dx_c_m=dx_c_m, dy_c_f=dy_c_f, theta_factors=(tx, ty),
                        name="separable-gaussian")


def _late_marriage():
    # constant vital rates; eligibility h, g switches on smoothly from age 1,
    # so no marriages form among individuals born after t = 0 while t <= 1
    zero = constant(0.0)

    def tx(x):
        return 1.0 / (1.0 + (x - 1.25) ** 2)

    def theta(x, y):
        return tx(x) * tx(y)

    def h(x):
        return 2.0 * smoothstep((x - 1.0) / 0.25)

    return Coefficients(c_m=constant(0.1), c_f=constant(0.12), c_c=constant(0.2),
                        beta_m=constant(0.6), beta_f=constant(0.55),
                        theta=theta, h=h, g=h, gamma=1.0,
                        dx_c_m=zero, dy_c_f=zero, theta_factors=(tx, tx),
                        name="late-marriage")


PRESETS: dict[str, Callable[[], Coefficients]] = {
    "zero-vital": _zero_vital,
    "constant": _constant,
    "separable-gaussian": _separable_gaussian,
    "late-marriage": _late_marriage,
}


def preset(name: str) -> Coefficients:
    try:
        factory = PRESETS[name]
    except KeyError:
        raise PresetLookupError(f"unknown preset {name!r}; known: {sorted(PRESETS)}") from None
    return factory()
