"""Cardiac tissue electrophysiology: forward solvers, adjoints, optimal control."""

from .adjoint import AdjointResult, CostConfig, run_adjoint
from .assembly import SystemOperators, build_operators
from .control import ControlProblem, OptimizeResult, projected_gradient_descent
from .forward import ForwardResult, ProblemConfig, run_forward
from .grid import FieldSeries, Grid, ScalarField, TensorField
from .ionic import IonicParams
from .verify import (
    convergence_study,
    gradient_check,
    monodomain_limit_check,
    stability_experiment,
)

__version__ = "0.1.0"

__all__ = [
    "AdjointResult",
    "ControlProblem",
    "CostConfig",
    "FieldSeries",
    "ForwardResult",
    "Grid",
    "IonicParams",
    "OptimizeResult",
    "ProblemConfig",
    "ScalarField",
    "SystemOperators",
    "TensorField",
    "build_operators",
    "convergence_study",
    "gradient_check",
    "monodomain_limit_check",
    "projected_gradient_descent",
    "run_adjoint",
    "run_forward",
    "stability_experiment",
]
