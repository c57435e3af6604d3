"""Complex chance-constrained programming with second-order cone reformulations."""

__version__ = "0.1.0"

from .cnormal import ComplexNormal, re_inner_stats, re_row_stats, sample  # noqa: E402
from .reformulate import (  # noqa: E402
    ChanceRow, IndividualCCCP, JointCCCP, solve_individual, solve_joint_bounds, solve_joint_grid,
)
from .socp import ConicProgram, SolverConfig, solve  # noqa: E402

__all__ = [
    "ComplexNormal", "re_inner_stats", "re_row_stats", "sample",
    "ChanceRow", "IndividualCCCP", "JointCCCP",
    "solve_individual", "solve_joint_bounds", "solve_joint_grid",
    "ConicProgram", "SolverConfig", "solve", "__version__",
]
