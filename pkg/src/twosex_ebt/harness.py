"""Resolution sweeps against a reference solution and convergence-order fits."""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cohorts import extract_measures, init_state, write_snapshot
from .config import ExperimentConfig
from .diagnostics import Diagnostics
from .errors import InputError
from .flat_metric import composite_distance, density_to_measure, rho_flat_1d
from .integrator import IntegratorConfig, run
from .model import preset
from .reference import solve_scalar, solve_two_sex
from .scalar_ebt import scalar_init, scalar_preset, scalar_run

REPORT_HEADER = "# ebt-report v1"


def fit_order(errors, widths) -> float:
    """Least-squares slope of log(error) against log(width)."""
    e = np.asarray(errors, dtype=float)
    w = np.asarray(widths, dtype=float)
    if e.shape != w.shape:
        raise InputError("errors and widths differ in length")
    if e.size < 3:
        raise InputError("at least three points are needed")
    if np.any(~np.isfinite(e)) or np.any(e <= 0) or np.any(w <= 0):
        raise InputError("errors and widths must be positive")
    slope, _ = np.polyfit(np.log(w), np.log(e), 1)
    return float(slope)


@dataclass
class WidthResult:
    width: float
    error: float
    uncertainty: float
    components: tuple
    cohorts: int
    diagnostics: Diagnostics
    error_refined: float | None = None


@dataclass
class ConvergenceReport:
    name: str
    model: str
    preset: str
    results: list
    order: float
    reference_delta: float | None
    valid: bool
    notes: list = field(default_factory=list)

    @property
    def widths(self):
        return [r.width for r in self.results]

    @property
    def errors(self):
        return [r.error for r in self.results]

    @property
    def diagnostics_clean(self) -> bool:
        return all(r.diagnostics.clean for r in self.results)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(REPORT_HEADER + "\n")
        buf.write(f"# name={self.name} model={self.model} preset={self.preset}\n")
        delta = "none" if self.reference_delta is None else repr(self.reference_delta)
        buf.write(f"# order={self.order!r} valid={str(self.valid).lower()} "
                  f"reference_delta={delta}\n")
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["width", "error", "uncertainty", "male", "female", "couples_lower",
                     "couples_upper", "cohorts", "denominator_floors", "clamp_events",
                     "clamp_failures", "cone_violations", "error_refined_reference"])
        for r in self.results:
            d = r.diagnostics
            comp = list(r.components) + [""] * (4 - len(r.components))
            wr.writerow([repr(r.width), repr(r.error), repr(r.uncertainty)]
                        + [repr(c) if c != "" else "" for c in comp]
                        + [r.cohorts, d.denominator_floors, d.clamp_events, d.clamp_failures,
                           d.cone_violations,
                           "" if r.error_refined is None else repr(r.error_refined)])
        return buf.getvalue()


# ---------------------------------------------------------------------------
# single-resolution runs

def _run_two_sex(cfg: ExperimentConfig, width: float):
    coeffs = preset(cfg.preset)
    mesh = np.linspace(0.0, cfg.support, int(round(cfg.support / width)) + 1)
    s0 = init_state(cfg.male, cfg.female, cfg.couple_density(), mesh)
    s0.x_max = cfg.x_max
    diag = Diagnostics()
    icfg = IntegratorConfig(dt_internalization=width * cfg.dt_factor, t_end=cfg.t_end,
                            substeps=cfg.substeps, cone_check=cfg.cone_check,
                            keep_snapshots=cfg.snapshots == "all")
    snaps = run(s0, coeffs, icfg, diag)
    return snaps, diag


def _run_scalar(cfg: ExperimentConfig, width: float):
    coeffs = scalar_preset(cfg.preset)
    mesh = coeffs.x_b + np.linspace(0.0, cfg.support, int(round(cfg.support / width)) + 1)
    s0 = scalar_init(cfg.male, mesh, coeffs.x_b)
    diag = Diagnostics()
    icfg = IntegratorConfig(dt_internalization=width * cfg.dt_factor, t_end=cfg.t_end,
                            substeps=cfg.substeps, keep_snapshots=cfg.snapshots == "all")
    return scalar_run(s0, coeffs, icfg, diag), diag


def reference_measures(cfg: ExperimentConfig, h_ref: float, dt_ref: float):
    """Reference solution at t_end, atomised on its own lattice cells."""
    if cfg.model == "scalar":
        grid = solve_scalar(cfg.male, scalar_preset(cfg.preset), cfg.t_end, h_ref, dt_ref,
                            cfg.x_max)
        return density_to_measure(grid)
    grid = solve_two_sex(cfg.male, cfg.female, cfg.couple_density(), preset(cfg.preset),
                         cfg.t_end, h_ref, dt_ref, cfg.x_max)
    return (density_to_measure(grid.male), density_to_measure(grid.female),
            density_to_measure(grid.couples))


def _distance(cfg, measures, ref):
    if cfg.model == "scalar":
        d = rho_flat_1d(measures, ref, cfg.metric)
        return d, 0.0, (d,)
    c = composite_distance(measures, ref, cfg.metric)
    return c.value, c.uncertainty, (c.male, c.female, c.couples.lower, c.couples.upper)


def run_experiment(cfg: ExperimentConfig, threads: int = 1, out_dir=None) -> ConvergenceReport:
    """Sweep every width, measure the flat-metric error at t_end and fit the order."""
    runner = _run_scalar if cfg.model == "scalar" else _run_two_sex
    widths = list(cfg.widths)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            runs = list(pool.map(lambda w: runner(cfg, w), widths))
    else:
        runs = [runner(cfg, w) for w in widths]

    finals = []
    for snaps, _ in runs:
        last = snaps[-1]
        finals.append(last.measure() if cfg.model == "scalar" else extract_measures(last))

    ref = reference_measures(cfg, cfg.h_ref, cfg.dt_ref)
    results = []
    for w, (snaps, diag), meas in zip(widths, runs, finals):
        err, unc, comp = _distance(cfg, meas, ref)
        results.append(WidthResult(w, err, unc, comp, snaps[-1].K, diag))

    notes = []
    delta = None
    valid = True
    if cfg.budget_check:
        fine = reference_measures(cfg, cfg.h_ref / 2, cfg.dt_ref / 2)
        for r, meas in zip(results, finals):
            r.error_refined = _distance(cfg, meas, fine)[0]
        delta = max(abs(r.error - r.error_refined) for r in results)
        if delta > cfg.budget_fraction * min(r.error for r in results):
            valid = False
            notes.append("reference error budget exceeded")
    try:
        order = fit_order([r.error for r in results], widths)
    except InputError as exc:
        order = float("nan")
        valid = False
        notes.append(str(exc))
    if cfg.model == "two-sex":
        # the 2D bracket must be tight relative to the couple distance
        for r in results:
            lo, hi = r.components[2], r.components[3]
            if hi - lo > 0.05 * max(0.5 * (lo + hi), 1e-300):
                valid = False
                notes.append(f"couple bracket too wide at width {r.width}")

    report = ConvergenceReport(cfg.name, cfg.model, cfg.preset, results, order, delta, valid,
                               notes)
    if out_dir is not None:
        write_outputs(report, runs, cfg, out_dir)
    return report


def write_outputs(report: ConvergenceReport, runs, cfg: ExperimentConfig, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(report.to_csv())
    with (out / "diagnostics.log").open("w") as fh:
        for r in report.results:
            fh.write(json.dumps({"kind": "summary", "width": r.width,
                                 **r.diagnostics.counters()}, sort_keys=True) + "\n")
            for rec in r.diagnostics.records:
                fh.write(json.dumps({"width": r.width, **rec}, sort_keys=True) + "\n")
        for note in report.notes:
            fh.write(json.dumps({"kind": "note", "message": note}, sort_keys=True) + "\n")
    if cfg.snapshots == "none" or cfg.model == "scalar":
        if cfg.model == "scalar" and cfg.snapshots != "none":
            _write_scalar_snapshots(runs, cfg, out / "snapshots")
        return
    snapdir = out / "snapshots"
    for k, (snaps, _) in enumerate(runs):
        chosen = snaps if cfg.snapshots == "all" else snaps[-1:]
        for s in chosen:
            write_snapshot(s, snapdir, f"w{k}_n{s.n:04d}")


def _write_scalar_snapshots(runs, cfg, snapdir: Path):
    snapdir.mkdir(parents=True, exist_ok=True)
    for k, (snaps, _) in enumerate(runs):
        chosen = snaps if cfg.snapshots == "all" else snaps[-1:]
        for s in chosen:
            with (snapdir / f"w{k}_n{s.n:04d}_scalar.csv").open("w", newline="") as fh:
                wr = csv.writer(fh, lineterminator="\n")
                wr.writerow(["# t", repr(float(s.t)), "n", s.n])
                wr.writerow(["index", "kind", "mass", "location", "moment"])
                loc = s.locations()
                for i in range(s.K):
                    moment = s.pi if i == 0 else s.mass[i] * loc[i]
                    wr.writerow([i - s.n, "boundary" if i == 0 else "internal",
                                 repr(float(s.mass[i])), repr(float(loc[i])),
                                 repr(float(moment))])
