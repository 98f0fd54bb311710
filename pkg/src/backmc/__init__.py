"""Forward and backward (Feynman-Kac) Monte-Carlo solvers for 1D diffusion."""

__version__ = "0.1.0"

from .backward import PointEstimate, solve_backward, solve_backward_grid
from .bench import SlopeFit, SweepResult, SweepSpec, fit_slope, relative_error, run_sweep
from .forward import BinnedSolution, eval_binned, launch_points, solve_forward
from .lorentz import LegendreSeries, LorentzProblem, analytic_solution, initial_condition, legendre_eval
from .oracle import FdGrid, eval_fd, solve_fd
from .rng import RandomStream
from .sde import (
    Boundary,
    DiffusionModel,
    StepScheme,
    StepTooLargeError,
    TimeGrid,
    apply_boundary,
    evolve_trajectory,
    step_high,
    step_low,
    wiener_integral_statistic,
)
