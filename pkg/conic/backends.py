import logging
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import cvxpy as cp
import numpy as np

from .problem import ConicProblem

logger = logging.getLogger(__name__)


@dataclass
class BackendResult:
    """后端求解器的原始输出"""
    status: str
    x: Optional[np.ndarray]
    ineq_dual: Optional[np.ndarray] = None
    lower_dual: Optional[np.ndarray] = None
    upper_dual: Optional[np.ndarray] = None
    cone_duals: List[Tuple[np.ndarray, np.ndarray]] = field(default_factory=list)
    iterations: Optional[int] = None
    message: str = ""


class ConicBackend(ABC):
    """锥规划求解后端接口"""

    name = "abstract"

    @abstractmethod
    def solve(self, problem: ConicProblem, tol: float, max_iter: int) -> BackendResult:
        """求解问题并返回原始结果 (状态字符串取 cvxpy 的状态名)"""
        pass


def _dual_array(value, shape) -> Optional[np.ndarray]:
    if value is None:
        return None
    arr = np.asarray(value, dtype=float)
    if arr.shape != shape and arr.T.shape == shape:
        arr = arr.T
    return arr.reshape(shape)


class CvxpyBackend(ConicBackend):
    """基于 cvxpy 的后端 (默认 Clarabel 内点法)"""

    OPTIONS = {
        'CLARABEL': lambda tol, it: {'tol_gap_abs': tol, 'tol_gap_rel': tol, 'tol_feas': tol, 'max_iter': it},
        'ECOS': lambda tol, it: {'abstol': tol, 'reltol': tol, 'feastol': tol, 'max_iters': it},
        'SCS': lambda tol, it: {'eps': tol, 'max_iters': it}
    }

    def __init__(self, solver: str = 'CLARABEL'):
        self.solver = solver.upper()
        self.name = f"cvxpy-{self.solver.lower()}"

    def solve(self, problem: ConicProblem, tol: float, max_iter: int) -> BackendResult:
        x = cp.Variable(problem.n)
        constraints = []
        ineq = lower = upper = None
        if len(problem.b_ub):
            ineq = problem.A_ub @ x <= problem.b_ub
            constraints.append(ineq)
        if len(problem.b_eq):
            constraints.append(problem.A_eq @ x == problem.b_eq)
        lo_idx = np.flatnonzero(np.isfinite(problem.lb))
        hi_idx = np.flatnonzero(np.isfinite(problem.ub))
        if len(lo_idx):
            lower = x[lo_idx] >= problem.lb[lo_idx]
            constraints.append(lower)
        if len(hi_idx):
            upper = x[hi_idx] <= problem.ub[hi_idx]
            constraints.append(upper)
        socs = []
        for batch in problem.cones:
            t = batch.G @ x + batch.s
            X = cp.reshape(batch.M @ x + batch.q, (batch.count, batch.dim), order='C')
            soc = cp.SOC(t, X, axis=1)
            socs.append(soc)
            constraints.append(soc)

        prob = cp.Problem(cp.Maximize(problem.c @ x), constraints)
        options = self.OPTIONS.get(self.solver, lambda tol, it: {})(tol, max_iter)
        prob.solve(solver=self.solver, **options)

        result = BackendResult(status=prob.status, x=None if x.value is None else np.asarray(x.value, dtype=float))
        stats = prob.solver_stats
        result.iterations = getattr(stats, 'num_iters', None) if stats is not None else None
        if result.x is None:
            return result

        n_lo, n_hi = len(lo_idx), len(hi_idx)
        if ineq is not None:
            result.ineq_dual = _dual_array(ineq.dual_value, (len(problem.b_ub),))
        else:
            result.ineq_dual = np.zeros(0)
        full_lo = np.zeros(problem.n)
        full_hi = np.zeros(problem.n)
        if lower is not None and lower.dual_value is not None:
            full_lo[lo_idx] = _dual_array(lower.dual_value, (n_lo,))
        if upper is not None and upper.dual_value is not None:
            full_hi[hi_idx] = _dual_array(upper.dual_value, (n_hi,))
        result.lower_dual = full_lo
        result.upper_dual = full_hi
        for batch, soc in zip(problem.cones, socs):
            dual = soc.dual_value
            if dual is None:
                result.cone_duals = []
                break
            t_dual = _dual_array(dual[0], (batch.count,))
            X_dual = _dual_array(dual[1], (batch.count, batch.dim))
            result.cone_duals.append((t_dual, X_dual))
        return result


class BackendRegistry:
    """后端注册表"""

    def __init__(self):
        self._backends: Dict[str, dict] = {}
        self._lock = threading.Lock()

    def register(self, name: str, factory: Callable[[], ConicBackend], meta: Optional[dict] = None):
        with self._lock:
            self._backends[name.upper()] = {'factory': factory, 'meta': meta or {}}

    def unregister(self, name: str):
        with self._lock:
            self._backends.pop(name.upper(), None)

    def create(self, name: str) -> ConicBackend:
        with self._lock:
            entry = self._backends.get(name.upper())
        if entry is None:
            raise ValueError(f"未注册的求解后端: {name}")
        return entry['factory']()

    def available(self) -> List[str]:
        """列出已注册且求解器已安装的后端"""
        installed = set(cp.installed_solvers())
        with self._lock:
            return [name for name, entry in self._backends.items()
                    if entry['meta'].get('solver', name) in installed]


registry = BackendRegistry()
for _solver in ('CLARABEL', 'ECOS', 'SCS'):
    registry.register(_solver, lambda s=_solver: CvxpyBackend(s), {'solver': _solver})
