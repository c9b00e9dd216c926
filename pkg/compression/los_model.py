import logging
from dataclasses import dataclass, asdict
from typing import Dict, Any, Optional, Sequence

import numpy as np
from scipy.special import expit
from sklearn.metrics import accuracy_score

from .sampling import TrainingSample, elevation_angle, samples_to_arrays

logger = logging.getLogger(__name__)

# 恒为视距的退化模型截距, p = expit(40) 在双精度下等于 1
ALWAYS_LOS_INTERCEPT = -40.0


@dataclass
class FitDiagnostics:
    """逻辑回归拟合诊断信息"""
    iterations: int = 0
    grad_norm: float = 0.0
    converged: bool = True
    projected: bool = False
    degenerate: bool = False
    holdout_accuracy: Optional[float] = None
    samples: int = 0

    @property
    def flagged(self) -> bool:
        return (not self.converged) or self.projected or self.degenerate

    def to_dict(self):
        data = asdict(self)
        data["flagged"] = self.flagged
        return data


@dataclass
class LogisticFit:
    a: float
    b: float
    diagnostics: FitDiagnostics


def penalized_log_likelihood(a: float, b: float, theta: np.ndarray, labels: np.ndarray, l2: float) -> float:
    """L2 正则化的平均伯努利对数似然, 模型 p = 1/(1+exp(-aθ+b))"""
    z = a * theta - b
    return float(np.mean(labels * z - np.logaddexp(0.0, z)) - 0.5 * l2 * (a * a + b * b))


def _newton(X: np.ndarray, y: np.ndarray, w: np.ndarray, l2: float, tol: float, max_iter: int):
    """牛顿法 (IRLS) 配合回溯线搜索, 最大化带正则的对数似然"""
    n = len(y)

    def objective(v):
        z = X @ v
        return float(np.mean(y * z - np.logaddexp(0.0, z)) - 0.5 * l2 * v @ v)

    grad_norm = np.inf
    for it in range(1, max_iter + 1):
        p = expit(X @ w)
        grad = X.T @ (y - p) / n - l2 * w
        grad_norm = float(np.max(np.abs(grad)))
        if grad_norm < tol:
            return w, it - 1, grad_norm, True
        neg_hess = (X.T * (p * (1.0 - p))) @ X / n + l2 * np.eye(X.shape[1])
        step = np.linalg.solve(neg_hess, grad)
        t = 1.0
        if grad_norm > 1e-4:
            # 接近最优时目标函数差值低于舍入误差, 直接取整步
            f0 = objective(w)
            slope = float(grad @ step)
            while objective(w + t * step) < f0 + 1e-4 * t * slope and t > 1e-12:
                t *= 0.5
        w = w + t * step
    p = expit(X @ w)
    grad_norm = float(np.max(np.abs(X.T @ (y - p) / n - l2 * w)))
    return w, max_iter, grad_norm, grad_norm < tol


def fit_logistic_arrays(theta: np.ndarray, labels: np.ndarray, l2: float = 1e-6,
                        tol: float = 1e-8, max_iter: int = 100) -> LogisticFit:
    """在 (a, b) 上拟合仰角逻辑回归, 斜率 a 投影到非负"""
    theta = np.asarray(theta, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if len(theta) == 0:
        raise ValueError("训练样本为空")
    # 参数化为 logit = aθ + c, 其中 c = -b
    X = np.column_stack([theta, np.ones_like(theta)])
    w, iterations, grad_norm, converged = _newton(X, labels, np.zeros(2), l2, tol, max_iter)
    projected = False
    if w[0] < 0:
        # 负斜率只出现在退化地图上, 固定 a = 0 后重新拟合截距
        projected = True
        c_w, extra, grad_norm, converged = _newton(X[:, 1:], labels, np.zeros(1), l2, tol, max_iter)
        iterations += extra
        w = np.array([0.0, c_w[0]])
    rate = float(labels.mean())
    diagnostics = FitDiagnostics(
        iterations=iterations,
        grad_norm=grad_norm,
        converged=converged,
        projected=projected,
        degenerate=rate in (0.0, 1.0),
        samples=len(labels)
    )
    if not converged:
        logger.warning(f"逻辑回归未收敛: 迭代 {iterations} 次, 梯度范数 {grad_norm:.3e}")
    return LogisticFit(a=float(w[0]), b=float(-w[1]), diagnostics=diagnostics)


def fit_logistic(samples: Sequence[TrainingSample], l2: float = 1e-6, tol: float = 1e-8,
                 max_iter: int = 100) -> LogisticFit:
    """对训练样本拟合视距概率模型"""
    if not samples:
        raise ValueError("训练样本为空")
    theta, labels = samples_to_arrays(samples)
    return fit_logistic_arrays(theta, labels, l2, tol, max_iter)


class LocalLosModel:
    """
    单节点的仰角视距概率模型 p = 1/(1+exp(-aθ+b))
    这是压缩后的地图: 每个节点只保留 (a, b) 两个系数
    """

    def __init__(self, node_id: int, a: float, b: float, diagnostics: Optional[FitDiagnostics] = None):
        if a < 0:
            raise ValueError(f"视距模型斜率必须非负: {a}")
        self.node_id = node_id
        self.a = float(a)
        self.b = float(b)
        self.diagnostics = diagnostics or FitDiagnostics()

    @classmethod
    def from_fit(cls, node_id: int, fit: LogisticFit) -> 'LocalLosModel':
        return cls(node_id, fit.a, fit.b, fit.diagnostics)

    @classmethod
    def always_los(cls, node_id: int) -> 'LocalLosModel':
        """恒为视距的退化模型 (单段确定性基线)"""
        return cls(node_id, 0.0, ALWAYS_LOS_INTERCEPT, FitDiagnostics(degenerate=True))

    def predict(self, theta):
        """按仰角预测视距概率"""
        return expit(self.a * np.asarray(theta, dtype=float) - self.b)

    def probability(self, z, r):
        """按高度与水平距离预测视距概率"""
        return self.predict(elevation_angle(z, r))

    def batch_predict(self, samples: Sequence[TrainingSample]) -> np.ndarray:
        """批量预测标签 (概率不低于 0.5 判为视距)"""
        theta, _ = samples_to_arrays(samples)
        return (self.predict(theta) >= 0.5).astype(int)

    def evaluate_performance(self, samples: Sequence[TrainingSample]) -> Dict[str, Any]:
        """评估模型在样本集上的分类表现"""
        if not samples:
            return {"accuracy": None, "samples": 0}
        _, labels = samples_to_arrays(samples)
        predictions = self.batch_predict(samples)
        return {
            "accuracy": float(accuracy_score(labels.astype(int), predictions)),
            "samples": len(samples),
            "los_rate": float(labels.mean())
        }

    def get_model_info(self) -> Dict[str, Any]:
        return {
            "node_id": self.node_id,
            "a": self.a,
            "b": self.b,
            "midpoint_theta": self.b / self.a if self.a > 0 else None,
            "diagnostics": self.diagnostics.to_dict()
        }

    def to_dict(self) -> Dict[str, Any]:
        return {"node_id": self.node_id, "a_k": self.a, "b_k": self.b, "diagnostics": self.diagnostics.to_dict()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'LocalLosModel':
        diag = dict(data.get("diagnostics", {}))
        diag.pop("flagged", None)
        return cls(data["node_id"], data["a_k"], data["b_k"], FitDiagnostics(**diag))

    def with_node(self, node_id: int) -> 'LocalLosModel':
        return LocalLosModel(node_id, self.a, self.b, self.diagnostics)
