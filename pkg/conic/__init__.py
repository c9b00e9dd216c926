# 锥优化求解与凸性审计模块

from .problem import SocBatch, ConicProblem, ProblemBuilder, dump_problem
from .backends import BackendResult, ConicBackend, CvxpyBackend, BackendRegistry, registry
from .solver import SolveStatus, KKTResiduals, ConicSolution, presolve, kkt_residuals, solve
from .audit import (
    finite_diff_hessian, psd_check, leading_principal_minors,
    log_product, log_one_plus_product, capacity_form, gain_curvature_matrix, run_convexity_audit
)

__all__ = [
    'SocBatch', 'ConicProblem', 'ProblemBuilder', 'dump_problem',
    'BackendResult', 'ConicBackend', 'CvxpyBackend', 'BackendRegistry', 'registry',
    'SolveStatus', 'KKTResiduals', 'ConicSolution', 'presolve', 'kkt_residuals', 'solve',
    'finite_diff_hessian', 'psd_check', 'leading_principal_minors',
    'log_product', 'log_one_plus_product', 'capacity_form', 'gain_curvature_matrix', 'run_convexity_audit'
]
