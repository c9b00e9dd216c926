import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Any, Optional

import cvxpy as cp
import numpy as np
import scipy.sparse as sp

from config import Config
from .backends import BackendResult, registry
from .problem import ConicProblem, SocBatch

logger = logging.getLogger(__name__)

DEFAULT_TOL = Config.SOLVER_CONFIG['tol']
DEFAULT_KKT_TOL = Config.SOLVER_CONFIG['kkt_tol']
DEFAULT_MAX_ITER = Config.SOLVER_CONFIG['max_iter']


class SolveStatus(Enum):
    """求解状态枚举"""
    OPTIMAL = "optimal"
    INACCURATE = "inaccurate"      # 后端报告最优但 KKT 残差超限
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    MAX_ITER = "max_iter"
    ERROR = "error"


_STATUS_MAP = {
    cp.OPTIMAL: SolveStatus.OPTIMAL,
    cp.OPTIMAL_INACCURATE: SolveStatus.INACCURATE,
    cp.INFEASIBLE: SolveStatus.INFEASIBLE,
    cp.INFEASIBLE_INACCURATE: SolveStatus.INFEASIBLE,
    cp.UNBOUNDED: SolveStatus.UNBOUNDED,
    cp.UNBOUNDED_INACCURATE: SolveStatus.UNBOUNDED,
    cp.USER_LIMIT: SolveStatus.MAX_ITER,
}


@dataclass
class KKTResiduals:
    """KKT 残差 (在均衡化后的问题上计算)"""
    primal: float = np.inf
    dual: float = np.inf
    gap: float = np.inf

    def max(self) -> float:
        return max(self.primal, self.dual, self.gap)

    def to_dict(self):
        return {"primal": self.primal, "dual": self.dual, "gap": self.gap}


@dataclass
class ConicSolution:
    """锥规划求解结果"""
    status: SolveStatus
    x: Optional[np.ndarray]
    objective: float
    residuals: KKTResiduals = field(default_factory=KKTResiduals)
    backend: str = ""
    iterations: Optional[int] = None
    message: str = ""

    @property
    def usable(self) -> bool:
        """原始解是否可以被上层使用"""
        return self.x is not None and self.status in (SolveStatus.OPTIMAL, SolveStatus.INACCURATE, SolveStatus.MAX_ITER)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "status": self.status.value,
            "objective": self.objective,
            "residuals": self.residuals.to_dict(),
            "backend": self.backend,
            "iterations": self.iterations,
            "message": self.message
        }


@dataclass
class Presolved:
    """预处理结果及还原信息"""
    problem: ConicProblem
    free: np.ndarray
    fixed: np.ndarray
    fixed_values: np.ndarray
    col_scale: np.ndarray
    n_original: int
    infeasible: bool = False

    def restore(self, x_scaled: np.ndarray) -> np.ndarray:
        x = np.empty(self.n_original)
        x[self.free] = self.col_scale * x_scaled
        x[self.fixed] = self.fixed_values
        return x


def _row_max(A: sp.csr_matrix) -> np.ndarray:
    if A.shape[0] == 0:
        return np.zeros(0)
    return np.asarray(abs(A).max(axis=1).todense()).ravel()


def presolve(problem: ConicProblem, tol: float = 1e-12) -> Presolved:
    """去除固定变量与空行, 并把行、列均衡到单位最大范数"""
    n = problem.n
    fixed = np.flatnonzero(np.isfinite(problem.lb) & (problem.ub - problem.lb <= tol))
    free = np.setdiff1d(np.arange(n), fixed)
    xf = problem.lb[fixed]

    def split(A):
        A = sp.csc_matrix(A)
        return sp.csr_matrix(A[:, free]), (A[:, fixed] @ xf if len(fixed) else np.zeros(A.shape[0]))

    A_ub, shift_ub = split(problem.A_ub)
    A_eq, shift_eq = split(problem.A_eq)
    b_ub = problem.b_ub - shift_ub
    b_eq = problem.b_eq - shift_eq
    infeasible = False

    # 空行: 检查可行性后删除
    ub_scale = _row_max(A_ub)
    empty = ub_scale == 0
    if np.any(b_ub[empty] < -1e-9):
        infeasible = True
    A_ub, b_ub, ub_scale = A_ub[~empty], b_ub[~empty], ub_scale[~empty]
    eq_scale = _row_max(A_eq)
    empty = eq_scale == 0
    if np.any(np.abs(b_eq[empty]) > 1e-9):
        infeasible = True
    A_eq, b_eq, eq_scale = A_eq[~empty], b_eq[~empty], eq_scale[~empty]

    A_ub = sp.diags(1.0 / ub_scale) @ A_ub if len(ub_scale) else A_ub
    b_ub = b_ub / ub_scale if len(ub_scale) else b_ub
    A_eq = sp.diags(1.0 / eq_scale) @ A_eq if len(eq_scale) else A_eq
    b_eq = b_eq / eq_scale if len(eq_scale) else b_eq

    cones = []
    for batch in problem.cones:
        M, q_shift = split(batch.M)
        G, s_shift = split(batch.G)
        q = batch.q + q_shift
        s = batch.s + s_shift
        # 每个锥整体按 [g; M] 的最大元缩放, 缩放正数不改变锥约束
        block = np.maximum(_row_max(G), _row_max(M).reshape(batch.count, batch.dim).max(axis=1))
        block[block == 0] = 1.0
        inv = 1.0 / block
        M = sp.diags(np.repeat(inv, batch.dim)) @ M
        G = sp.diags(inv) @ G
        cones.append(SocBatch(dim=batch.dim, M=sp.csr_matrix(M), q=q * np.repeat(inv, batch.dim),
                              G=sp.csr_matrix(G), s=s * inv))

    # 列均衡: x = D x̃
    mats = [A_ub, A_eq] + [b.M for b in cones] + [b.G for b in cones]
    col = np.zeros(len(free))
    for A in mats:
        if A.shape[0]:
            col = np.maximum(col, np.asarray(abs(A).max(axis=0).todense()).ravel())
    col[col == 0] = 1.0
    D = 1.0 / col
    Dm = sp.diags(D)
    scaled_cones = [SocBatch(dim=b.dim, M=sp.csr_matrix(b.M @ Dm), q=b.q, G=sp.csr_matrix(b.G @ Dm), s=b.s)
                    for b in cones]
    c = problem.c[free] * D
    offset = problem.offset + float(problem.c[fixed] @ xf) if len(fixed) else problem.offset
    reduced = ConicProblem(
        c=c,
        A_ub=sp.csr_matrix(A_ub @ Dm), b_ub=b_ub,
        A_eq=sp.csr_matrix(A_eq @ Dm), b_eq=b_eq,
        cones=scaled_cones,
        lb=problem.lb[free] / D, ub=problem.ub[free] / D,
        offset=offset
    )
    return Presolved(problem=reduced, free=free, fixed=fixed, fixed_values=xf, col_scale=D,
                     n_original=n, infeasible=infeasible)


def kkt_residuals(problem: ConicProblem, result: BackendResult) -> KKTResiduals:
    """独立计算 KKT 残差: 原始可行性, 对偶平稳性 (等式乘子用最小二乘拟合), 互补间隙"""
    x = result.x
    scale_x = 1.0 + float(np.max(np.abs(x), initial=0.0))
    primal = problem.max_violation(x) / scale_x
    if result.lower_dual is None or (problem.cones and len(result.cone_duals) != len(problem.cones)):
        return KKTResiduals(primal=primal, dual=np.nan, gap=np.nan)

    lam = result.ineq_dual if result.ineq_dual is not None else np.zeros(len(problem.b_ub))
    # 最大化 cᵀx 的平稳性: c = A_ubᵀλ - λ_lb + λ_ub - Σ(Gᵀt* + MᵀX*) + A_eqᵀν
    r = problem.c - problem.A_ub.T @ lam + result.lower_dual - result.upper_dual
    gap = float(lam @ (problem.b_ub - problem.A_ub @ x)) if len(lam) else 0.0
    lo = np.isfinite(problem.lb)
    hi = np.isfinite(problem.ub)
    gap += float(result.lower_dual[lo] @ (x[lo] - problem.lb[lo]))
    gap += float(result.upper_dual[hi] @ (problem.ub[hi] - x[hi]))
    for batch, (t_dual, X_dual) in zip(problem.cones, result.cone_duals):
        r = r + batch.G.T @ t_dual + batch.M.T @ X_dual.reshape(-1)
        t, X = batch.slack(x)
        gap += float(t_dual @ t + np.sum(X_dual * X))
    if len(problem.b_eq):
        nu, *_ = np.linalg.lstsq(problem.A_eq.T.toarray(), r, rcond=None)
        r = r - problem.A_eq.T @ nu
    dual = float(np.max(np.abs(r), initial=0.0)) / (1.0 + float(np.max(np.abs(problem.c), initial=0.0)))
    gap = abs(gap) / (1.0 + abs(problem.objective(x)))
    return KKTResiduals(primal=primal, dual=dual, gap=gap)


def solve(problem: ConicProblem, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
          backend: Optional[str] = None, kkt_tol: float = DEFAULT_KKT_TOL) -> ConicSolution:
    """求解锥规划; 最优状态要求后端最优且 KKT 残差不超过 kkt_tol

    达到迭代上限时返回后端给出的最后迭代点 (状态 MAX_ITER); 后端没有迭代点时 x 为 None,
    usable 为 False, 目标值为 -inf. 调用方应以 usable 判断解是否可用.
    """
    backend_name = backend or Config.SOLVER_CONFIG['backend']
    pre = presolve(problem)
    if pre.infeasible:
        return ConicSolution(status=SolveStatus.INFEASIBLE, x=None, objective=-np.inf, message="预处理检测到空行不可行")

    reduced = pre.problem
    candidates = [backend_name]
    fallback = Config.SOLVER_CONFIG.get('fallback')
    if fallback and fallback.upper() != backend_name.upper():
        candidates.append(fallback)

    result: Optional[BackendResult] = None
    used = ""
    for name in candidates:
        try:
            engine = registry.create(name)
            result = engine.solve(reduced, tol, max_iter)
            used = engine.name
            break
        except (cp.error.SolverError, ValueError) as e:
            logger.warning(f"求解后端 {name} 失败: {str(e)}")
            result = None
    if result is None:
        return ConicSolution(status=SolveStatus.ERROR, x=None, objective=-np.inf, message="所有求解后端均失败")

    status = _STATUS_MAP.get(result.status, SolveStatus.ERROR)
    if result.x is None or status in (SolveStatus.INFEASIBLE, SolveStatus.UNBOUNDED):
        objective = np.inf if status is SolveStatus.UNBOUNDED else -np.inf
        if status is SolveStatus.MAX_ITER:
            logger.warning(f"求解后端 {used} 达到迭代上限且没有迭代点")
        return ConicSolution(status=status, x=None, objective=objective, backend=used,
                             iterations=result.iterations, message=result.status)

    residuals = kkt_residuals(reduced, result)
    if status is SolveStatus.OPTIMAL and not residuals.max() <= kkt_tol:
        status = SolveStatus.INACCURATE
        logger.debug(f"KKT 残差超限: {residuals.to_dict()}")
    x = pre.restore(result.x)
    return ConicSolution(
        status=status,
        x=x,
        objective=problem.objective(x),
        residuals=residuals,
        backend=used,
        iterations=result.iterations,
        message=result.status
    )
