"""In-repo dense solver stack: active-set QP and line-search SQP."""

from .qp import QpResult, hinge_newton, qp_solve
from .sqp import (
    NlpNumericsError,
    NlpProblem,
    SolverResult,
    restore_feasibility,
    sqp_solve,
)

__all__ = [
    "QpResult",
    "qp_solve",
    "hinge_newton",
    "NlpProblem",
    "NlpNumericsError",
    "SolverResult",
    "sqp_solve",
    "restore_feasibility",
]
