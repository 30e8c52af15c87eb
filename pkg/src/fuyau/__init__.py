"""Spectral solver and verification lab for the Fu-Yau equation on flat complex tori."""

from .continuation import ContinuationOptions, NewtonOptions, newton_solve_at_t, run_continuation, solve
from .errors import ConeError, ConfigError, ContinuationError, FuYauError, GeometryError, KernelError, NewtonError
from .forms import FormField, GridSpec, make_grid
from .geometry import ProblemData, build_metric, flat_metric, make_problem, manufactured_problem, skt_metric

__version__ = "0.1.0"

__all__ = [
    "ConeError", "ConfigError", "ContinuationError", "ContinuationOptions", "FormField", "FuYauError",
    "GeometryError", "GridSpec", "KernelError", "NewtonError", "NewtonOptions", "ProblemData", "build_metric",
    "flat_metric", "make_grid", "make_problem", "manufactured_problem", "newton_solve_at_t", "run_continuation",
    "skt_metric", "solve",
]
