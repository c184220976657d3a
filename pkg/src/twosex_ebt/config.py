"""Experiment configuration: INI text with a bit-exact round trip.

Floats are written with ``repr`` so ``parse(serialize(cfg)) == cfg``.
Initial densities are named analytic profiles written as
``<kind> key=value key=value ...``.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError
from .flat_metric import MetricConfig
from .model import PRESETS
from .scalar_ebt import SCALAR_PRESETS

# ---------------------------------------------------------------------------
# initial-data profiles


def _uniform(x, lo=0.0, hi=1.0, height=1.0):
    x = np.asarray(x, dtype=float)
    return np.where((x >= lo) & (x < hi), height, 0.0)


def _polynomial_bump(x, lo=0.0, hi=1.0, height=1.0):
    # 16 z^2 (1 - z)^2 on [lo, hi], peak value ``height``
    z = (np.asarray(x, dtype=float) - lo) / (hi - lo)
    inside = (z > 0) & (z < 1)
    zc = np.clip(z, 0.0, 1.0)
    return np.where(inside, height * 16.0 * zc**2 * (1 - zc) ** 2, 0.0)


def _smooth_bump(x, center=0.5, radius=0.4, height=1.0):
    # C-infinity bump exp(1 - 1 / (1 - r^2)), peak value ``height``
    r = (np.asarray(x, dtype=float) - center) / radius
    inside = np.abs(r) < 1
    r2 = np.where(inside, r * r, 0.0)
    return np.where(inside, height * np.exp(1.0 - 1.0 / (1.0 - r2)), 0.0)


def _truncated_gaussian(x, mean=0.5, sigma=0.1, lo=0.0, hi=1.0, height=1.0):
    x = np.asarray(x, dtype=float)
    return np.where((x >= lo) & (x <= hi), height * np.exp(-0.5 * ((x - mean) / sigma) ** 2), 0.0)


PROFILES: dict[str, Callable] = {
    "uniform": _uniform,
    "polynomial_bump": _polynomial_bump,
    "smooth_bump": _smooth_bump,
    "truncated_gaussian": _truncated_gaussian,
    "zero": lambda x: np.zeros_like(np.asarray(x, dtype=float)),
}


@dataclass(frozen=True)
class Profile:
    kind: str
    params: tuple = ()

    def __post_init__(self):
        if self.kind not in PROFILES:
            raise ConfigurationError(f"unknown profile {self.kind!r}; known: {sorted(PROFILES)}")

    @classmethod
    def parse(cls, text: str) -> "Profile":
        tokens = text.split()
        if not tokens:
            raise ConfigurationError("empty profile specification")
        params = []
        for tok in tokens[1:]:
            key, sep, value = tok.partition("=")
            if not sep:
                raise ConfigurationError(f"profile parameter {tok!r} is not key=value")
            try:
                params.append((key, float(value)))
            except ValueError:
                raise ConfigurationError(f"profile parameter {tok!r} is not numeric") from None
        return cls(tokens[0], tuple(params))

    def serialize(self) -> str:
        return " ".join([self.kind] + [f"{k}={v!r}" for k, v in self.params])

    def __call__(self, x):
        fn = PROFILES[self.kind]
        try:
            return fn(x, **dict(self.params)) if self.params else fn(x)
        except TypeError as exc:
            raise ConfigurationError(f"bad parameters for profile {self.kind!r}: {exc}") from None


def product_density(px: Profile, py: Profile, scale: float = 1.0):
    def u(x, y):
        return scale * np.asarray(px(x)) * np.asarray(py(y))

    return u


# ---------------------------------------------------------------------------
# experiment config


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    model: str
    preset: str
    t_end: float
    widths: tuple
    support: float
    x_max: float
    male: Profile
    female: Profile | None = None
    couple_x: Profile | None = None
    couple_y: Profile | None = None
    couple_scale: float = 1.0
    substeps: int = 4
    dt_factor: float = 1.0
    cone_check: bool = True
    h_ref: float = 1.0 / 1024
    dt_ref: float = 1.0 / 1024
    budget_check: bool = True
    budget_fraction: float = 0.1
    metric: MetricConfig = field(default_factory=MetricConfig)
    snapshots: str = "final"

    def __post_init__(self):
        if self.model not in ("scalar", "two-sex"):
            raise ConfigurationError("model must be 'scalar' or 'two-sex'")
        known = SCALAR_PRESETS if self.model == "scalar" else PRESETS
        if self.preset not in known:
            raise ConfigurationError(f"unknown {self.model} preset {self.preset!r}")
        w = np.asarray(self.widths, dtype=float)
        if w.size < 3:
            raise ConfigurationError("at least three widths are needed to fit an order")
        if np.any(w <= 0) or np.any(np.diff(w) >= 0):
            raise ConfigurationError("widths must be positive and strictly decreasing")
        for width in w:
            cells = self.support / width
            if abs(cells - round(cells)) > 1e-9:
                raise ConfigurationError(f"support {self.support} is not a multiple of width {width}")
            steps = self.t_end / (width * self.dt_factor)
            if abs(steps - round(steps)) > 1e-9:
                raise ConfigurationError(f"t_end is not a multiple of the interval for width {width}")
        if self.x_max < self.support + self.t_end:
            raise ConfigurationError("x_max must cover support + t_end")
        if self.model == "two-sex" and (self.female is None or self.couple_x is None
                                        or self.couple_y is None):
            raise ConfigurationError("two-sex experiments need female and couple profiles")
        if self.snapshots not in ("none", "final", "all"):
            raise ConfigurationError("snapshots must be none, final or all")
        if self.dt_ref > self.h_ref:
            raise ConfigurationError("dt_ref must not exceed h_ref")

    def couple_density(self):
        return product_density(self.couple_x, self.couple_y, self.couple_scale)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, Profile):
        return v.serialize()
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    return str(v)


def serialize(cfg: ExperimentConfig) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    cp["experiment"] = {"name": cfg.name, "model": cfg.model, "preset": cfg.preset,
                        "t_end": _fmt(cfg.t_end), "widths": _fmt(cfg.widths),
                        "support": _fmt(cfg.support), "x_max": _fmt(cfg.x_max),
                        "snapshots": cfg.snapshots}
    init = {"male": _fmt(cfg.male)}
    if cfg.female is not None:
        init["female"] = _fmt(cfg.female)
    if cfg.couple_x is not None:
        init["couple_x"] = _fmt(cfg.couple_x)
        init["couple_y"] = _fmt(cfg.couple_y)
        init["couple_scale"] = _fmt(cfg.couple_scale)
    cp["initial"] = init
    cp["integrator"] = {"substeps": _fmt(cfg.substeps), "dt_factor": _fmt(cfg.dt_factor),
                        "cone_check": _fmt(cfg.cone_check)}
    cp["reference"] = {"h_ref": _fmt(cfg.h_ref), "dt_ref": _fmt(cfg.dt_ref),
                       "budget_check": _fmt(cfg.budget_check),
                       "budget_fraction": _fmt(cfg.budget_fraction)}
    m = cfg.metric
    cp["metric"] = {"dual_grid_resolution": _fmt(m.dual_grid_resolution),
                    "lp_tolerance": _fmt(m.lp_tolerance),
                    "domain_bound": "none" if m.domain_bound is None else _fmt(m.domain_bound),
                    "neighbours": _fmt(m.neighbours), "fine_neighbours": _fmt(m.fine_neighbours),
                    "max_rounds": _fmt(m.max_rounds)}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def parse(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config: {exc}") from None

    def get(section, key, conv=str, default=None, required=True):
        if cp.has_option(section, key):
            raw = cp.get(section, key).strip()
            try:
                return conv(raw)
            except (ValueError, ConfigurationError) as exc:
                raise ConfigurationError(f"[{section}] {key}: {exc}") from None
        if required and default is None:
            raise ConfigurationError(f"missing [{section}] {key}")
        return default

    def boolean(s):
        low = s.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"not a boolean: {s!r}")

    def floats(s):
        return tuple(float(v) for v in s.split(",") if v.strip())

    def opt_float(s):
        return None if s.lower() == "none" else float(s)

    metric = MetricConfig(
        dual_grid_resolution=get("metric", "dual_grid_resolution", int, 64, False),
        lp_tolerance=get("metric", "lp_tolerance", float, 1e-7, False),
        domain_bound=get("metric", "domain_bound", opt_float, None, False),
        neighbours=get("metric", "neighbours", int, 8, False),
        fine_neighbours=get("metric", "fine_neighbours", int, 2, False),
        max_rounds=get("metric", "max_rounds", int, 30, False))
    return ExperimentConfig(
        name=get("experiment", "name"),
        model=get("experiment", "model"),
        preset=get("experiment", "preset"),
        t_end=get("experiment", "t_end", float),
        widths=get("experiment", "widths", floats),
        support=get("experiment", "support", float),
        x_max=get("experiment", "x_max", float),
        snapshots=get("experiment", "snapshots", str, "final", False),
        male=get("initial", "male", Profile.parse),
        female=get("initial", "female", Profile.parse, None, False),
        couple_x=get("initial", "couple_x", Profile.parse, None, False),
        couple_y=get("initial", "couple_y", Profile.parse, None, False),
        couple_scale=get("initial", "couple_scale", float, 1.0, False),
        substeps=get("integrator", "substeps", int, 4, False),
        dt_factor=get("integrator", "dt_factor", float, 1.0, False),
        cone_check=get("integrator", "cone_check", boolean, True, False),
        h_ref=get("reference", "h_ref", float, 1.0 / 1024, False),
        dt_ref=get("reference", "dt_ref", float, 1.0 / 1024, False),
        budget_check=get("reference", "budget_check", boolean, True, False),
        budget_fraction=get("reference", "budget_fraction", float, 0.1, False),
        metric=metric)


def load(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse(fh.read())
