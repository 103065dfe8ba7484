"""Decision-dependent stochastic saddle-point solvers."""

from .evmarket import EvParams, build_problem, closed_form_references, synth_demand
from .geometry import ProductBox, diameter, inner_radius, project, shrink
from .oracles import FirstOrderOracle, ZerothOrderOracle
from .problem import LocationScaleMap, MinimaxProblem, ProblemConstants
from .solvers import (References, SolverConfig, SolverTrace, StepSchedule, aggregate,
                      compute_equilibrium, compute_saddle, compute_smoothed_saddle,
                      repeated_retraining, run_dfo, run_epd, run_replications, run_sepd)

__version__ = "0.1.0"

__all__ = [
    "EvParams", "build_problem", "closed_form_references", "synth_demand",
    "ProductBox", "diameter", "inner_radius", "project", "shrink",
    "FirstOrderOracle", "ZerothOrderOracle",
    "LocationScaleMap", "MinimaxProblem", "ProblemConstants",
    "References", "SolverConfig", "SolverTrace", "StepSchedule", "aggregate",
    "compute_equilibrium", "compute_saddle", "compute_smoothed_saddle",
    "repeated_retraining", "run_dfo", "run_epd", "run_replications", "run_sepd",
]
