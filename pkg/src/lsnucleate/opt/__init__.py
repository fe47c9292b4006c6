from .loop import OptimizationError, OptimizationResult, gradient_check_run, run_optimization
from .mma import MmaError, MmaState, mma_update
from .problem import (Fixture, ObjectiveBreakdown, Problem, ProblemSpec, SensitivityBundle,
                      finite_difference_check)

__all__ = [
    "Fixture", "MmaError", "MmaState", "OptimizationError", "gradient_check_run",
    "ObjectiveBreakdown", "OptimizationResult", "Problem", "ProblemSpec", "SensitivityBundle", "finite_difference_check", "mma_update", "run_optimization",
]
