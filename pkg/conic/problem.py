import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)


@dataclass
class SocBatch:
    """同维二阶锥约束组: 对每个 i 有 ‖M_i x + q_i‖ ≤ g_iᵀx + s_i

    M 按锥顺序逐块堆叠, 第 i 个锥占据行 i*dim 到 (i+1)*dim-1.
    """
    dim: int
    M: sp.csr_matrix
    q: np.ndarray
    G: sp.csr_matrix
    s: np.ndarray

    @property
    def count(self) -> int:
        return len(self.s)

    def slack(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """返回 (t, X): t = Gx + s, X 为 count×dim"""
        t = self.G @ x + self.s
        X = (self.M @ x + self.q).reshape(self.count, self.dim)
        return t, X

    def violation(self, x: np.ndarray) -> np.ndarray:
        t, X = self.slack(x)
        return np.maximum(np.linalg.norm(X, axis=1) - t, 0.0)


@dataclass
class ConicProblem:
    """标准锥规划: 最大化 cᵀx, 约束 A_ub x ≤ b_ub, A_eq x = b_eq, 二阶锥, 变量上下界"""
    c: np.ndarray
    A_ub: sp.csr_matrix
    b_ub: np.ndarray
    A_eq: sp.csr_matrix
    b_eq: np.ndarray
    cones: List[SocBatch] = field(default_factory=list)
    lb: Optional[np.ndarray] = None
    ub: Optional[np.ndarray] = None
    offset: float = 0.0
    blocks: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.c)
        if self.lb is None:
            self.lb = np.full(n, -np.inf)
        if self.ub is None:
            self.ub = np.full(n, np.inf)
        if self.A_ub.shape != (len(self.b_ub), n):
            raise ValueError(f"不等式约束维度不一致: {self.A_ub.shape} vs ({len(self.b_ub)}, {n})")
        if self.A_eq.shape != (len(self.b_eq), n):
            raise ValueError(f"等式约束维度不一致: {self.A_eq.shape} vs ({len(self.b_eq)}, {n})")
        if len(self.lb) != n or len(self.ub) != n:
            raise ValueError("变量上下界长度与变量数不一致")
        for batch in self.cones:
            if batch.M.shape != (batch.count * batch.dim, n) or batch.G.shape != (batch.count, n):
                raise ValueError(f"二阶锥维度不一致: M {batch.M.shape}, G {batch.G.shape}, 变量数 {n}")

    @property
    def n(self) -> int:
        return len(self.c)

    def objective(self, x: np.ndarray) -> float:
        return float(self.c @ x) + self.offset

    def max_violation(self, x: np.ndarray) -> float:
        """原始可行性的最大违反量"""
        parts = [0.0]
        if len(self.b_ub):
            parts.append(float(np.max(self.A_ub @ x - self.b_ub)))
        if len(self.b_eq):
            parts.append(float(np.max(np.abs(self.A_eq @ x - self.b_eq))))
        for batch in self.cones:
            parts.append(float(np.max(batch.violation(x))))
        parts.append(float(np.max(self.lb - x, initial=0.0)))
        parts.append(float(np.max(x - self.ub, initial=0.0)))
        return max(parts)


class ProblemBuilder:
    """按变量块组装锥规划, 约束行以稀疏三元组收集"""

    def __init__(self):
        self.n = 0
        self.blocks: Dict[str, np.ndarray] = {}
        self._lb: List[float] = []
        self._ub: List[float] = []
        self._objective: Dict[int, float] = {}
        self._offset = 0.0
        self._ub_rows: List[Tuple[Sequence[int], Sequence[float]]] = []
        self._ub_rhs: List[float] = []
        self._eq_rows: List[Tuple[Sequence[int], Sequence[float]]] = []
        self._eq_rhs: List[float] = []
        self._cones: Dict[int, List[Tuple[list, tuple]]] = {}

    def add_variables(self, name: str, count: int, lb: float = -np.inf, ub: float = np.inf) -> np.ndarray:
        """新增一个变量块, 返回其全局下标"""
        if name in self.blocks:
            raise ValueError(f"变量块重复定义: {name}")
        idx = np.arange(self.n, self.n + count)
        self.blocks[name] = idx
        self.n += count
        self._lb.extend([lb] * count)
        self._ub.extend([ub] * count)
        return idx

    def set_bounds(self, index: int, lb: float = -np.inf, ub: float = np.inf) -> None:
        self._lb[index] = lb
        self._ub[index] = ub

    def add_objective(self, idx: Sequence[int], coef: Sequence[float], constant: float = 0.0) -> None:
        for i, v in zip(idx, coef):
            self._objective[int(i)] = self._objective.get(int(i), 0.0) + float(v)
        self._offset += constant

    def add_inequality(self, idx: Sequence[int], coef: Sequence[float], rhs: float) -> None:
        """添加 Σ coef·x[idx] ≤ rhs"""
        self._ub_rows.append((list(idx), list(coef)))
        self._ub_rhs.append(float(rhs))

    def add_equality(self, idx: Sequence[int], coef: Sequence[float], rhs: float) -> None:
        self._eq_rows.append((list(idx), list(coef)))
        self._eq_rhs.append(float(rhs))

    def add_cone(self, rows: Sequence[Tuple[Sequence[int], Sequence[float], float]],
                 t: Tuple[Sequence[int], Sequence[float], float]) -> None:
        """添加 ‖(rows_i · x + const_i)_i‖ ≤ t · x + const_t"""
        self._cones.setdefault(len(rows), []).append(([(list(i), list(v), float(c)) for i, v, c in rows],
                                                      (list(t[0]), list(t[1]), float(t[2]))))

    def add_rotated_cone(self, u: Tuple[Sequence[int], Sequence[float], float],
                         v: Tuple[Sequence[int], Sequence[float], float],
                         w: Sequence[Tuple[Sequence[int], Sequence[float], float]]) -> None:
        """添加旋转锥 ‖w‖² ≤ u·v (u, v ≥ 0), 化为 ‖(2w, u - v)‖ ≤ u + v"""
        rows = [(list(i), [2.0 * c for c in vals], 2.0 * const) for i, vals, const in w]
        rows.append((list(u[0]) + list(v[0]), list(u[1]) + [-c for c in v[1]], u[2] - v[2]))
        self.add_cone(rows, (list(u[0]) + list(v[0]), list(u[1]) + list(v[1]), u[2] + v[2]))

    @staticmethod
    def _stack(rows, n):
        data, ri, ci = [], [], []
        for r, (idx, coef) in enumerate(rows):
            ri.extend([r] * len(idx))
            ci.extend(idx)
            data.extend(coef)
        return sp.csr_matrix((data, (ri, ci)), shape=(len(rows), n))

    def build(self) -> ConicProblem:
        n = self.n
        c = np.zeros(n)
        for i, v in self._objective.items():
            c[i] = v
        cones = []
        for dim in sorted(self._cones):
            items = self._cones[dim]
            m_rows = [(idx, coef) for rows, _ in items for idx, coef, _ in rows]
            q = np.array([const for rows, _ in items for _, _, const in rows])
            g_rows = [(t[0], t[1]) for _, t in items]
            s = np.array([t[2] for _, t in items])
            cones.append(SocBatch(dim=dim, M=self._stack(m_rows, n), q=q, G=self._stack(g_rows, n), s=s))
        return ConicProblem(
            c=c,
            A_ub=self._stack(self._ub_rows, n),
            b_ub=np.array(self._ub_rhs, dtype=float),
            A_eq=self._stack(self._eq_rows, n),
            b_eq=np.array(self._eq_rhs, dtype=float),
            cones=cones,
            lb=np.array(self._lb, dtype=float),
            ub=np.array(self._ub, dtype=float),
            offset=self._offset,
            blocks=dict(self.blocks)
        )


def _format_row(row: sp.csr_matrix) -> str:
    coo = row.tocoo()
    return " ".join(f"{j}:{v:.17g}" for j, v in sorted(zip(coo.col, coo.data)))


def dump_problem(problem: ConicProblem, path: str) -> None:
    """以纯文本规范形式导出问题, 便于外部交叉校验"""
    lines = [f"variables {problem.n}", f"maximize offset {problem.offset:.17g}",
             "objective " + " ".join(f"{j}:{v:.17g}" for j, v in enumerate(problem.c) if v != 0.0)]
    for j in range(problem.n):
        if np.isfinite(problem.lb[j]) or np.isfinite(problem.ub[j]):
            lines.append(f"bound {j} {problem.lb[j]:.17g} {problem.ub[j]:.17g}")
    for r in range(problem.A_ub.shape[0]):
        lines.append(f"ineq {_format_row(problem.A_ub[r])} <= {problem.b_ub[r]:.17g}")
    for r in range(problem.A_eq.shape[0]):
        lines.append(f"eq {_format_row(problem.A_eq[r])} == {problem.b_eq[r]:.17g}")
    for batch in problem.cones:
        for i in range(batch.count):
            lines.append(f"soc dim {batch.dim} t {_format_row(batch.G[i])} + {batch.s[i]:.17g}")
            for k in range(batch.dim):
                r = i * batch.dim + k
                lines.append(f"  row {_format_row(batch.M[r])} + {batch.q[r]:.17g}")
    with open(path, 'w', encoding='utf-8') as f:
        f.write("\n".join(lines) + "\n")
    logger.info(f"锥规划已导出: {path}")
