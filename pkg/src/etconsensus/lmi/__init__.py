from .assemble import (
    DesignParams,
    assemble_theorem1,
    assemble_theorem2,
    assemble_theorem3,
    assemble_theorem4,
)
from .blocks import (
    assemble_omega_ab,
    build_trigger_block,
    build_xi_blocks,
    make_selectors,
)
from .expr import AffineMatrixExpr, LmiProblem, RectExpr, VarSpec, dump_problem
from .solve import (
    Infeasible,
    Solution,
    analysis_certificate_from_design,
    recover_design,
    solve_feasibility,
)
from .summation import verify_summation_inequality

__all__ = [
    "AffineMatrixExpr", "DesignParams", "Infeasible", "LmiProblem", "RectExpr",
    "Solution", "VarSpec", "analysis_certificate_from_design",
    "assemble_omega_ab", "assemble_theorem1", "assemble_theorem2",
    "assemble_theorem3", "assemble_theorem4", "build_trigger_block",
    "build_xi_blocks", "dump_problem", "make_selectors", "recover_design",
    "solve_feasibility", "verify_summation_inequality",
]
