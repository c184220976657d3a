"""Escalator boxcar train solver for the two-sex age-structured population model."""

from .cohorts import (AtomicMeasure1D, AtomicMeasure2D, BoundaryCohort1D, Cohort1D,
                      CoupleCohort, PopulationState, extract_measures, init_state, internalize,
                      project)
from .diagnostics import Diagnostics
from .ebt_rhs import StateDerivative, assemble_D, assemble_N, assemble_Nbar, rhs
from .flat_metric import (CompositeDistance, FlatBracket, MetricConfig, composite_distance,
                          density_to_measure, rho_flat_1d, rho_flat_2d)
from .harness import ConvergenceReport, fit_order, run_experiment
from .integrator import IntegratorConfig, run, step
from .model import Coefficients, marriage_rate, preset
from .reference import DensityGrid, DensityGrid1D, DensityGrid2D, solve_scalar, solve_two_sex
from .scalar_ebt import (ScalarCoefficients, scalar_init, scalar_preset, scalar_rhs,
                         scalar_run)

__version__ = "0.1.0"

__all__ = [
    "AtomicMeasure1D", "AtomicMeasure2D", "BoundaryCohort1D", "Cohort1D", "CoupleCohort",
    "PopulationState", "extract_measures", "init_state", "internalize", "project",
    "Diagnostics", "StateDerivative", "assemble_D", "assemble_N", "assemble_Nbar", "rhs",
    "CompositeDistance", "FlatBracket", "MetricConfig", "composite_distance",
    "density_to_measure", "rho_flat_1d", "rho_flat_2d", "ConvergenceReport", "fit_order",
    "run_experiment", "IntegratorConfig", "run", "step", "Coefficients", "marriage_rate",
    "preset", "DensityGrid", "DensityGrid1D", "DensityGrid2D", "solve_scalar",
    "solve_two_sex", "ScalarCoefficients", "scalar_init", "scalar_preset", "scalar_rhs",
    "scalar_run",
]
