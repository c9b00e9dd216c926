import logging
from typing import Callable, Dict, Any, Sequence

import numpy as np

logger = logging.getLogger(__name__)


def finite_diff_hessian(f: Callable[[np.ndarray], float], point: Sequence[float], step: float = 1e-4) -> np.ndarray:
    """中心差分 Hessian, 步长相对于坐标大小, 结果对称化"""
    if step <= 0:
        raise ValueError(f"差分步长必须为正: {step}")
    x = np.asarray(point, dtype=float)
    n = len(x)
    h = step * np.maximum(1.0, np.abs(x))

    def ev(v):
        value = float(f(v))
        if not np.isfinite(value):
            raise ValueError(f"函数在 {v} 处取值非有限: {value}")
        return value

    f0 = ev(x)
    H = np.zeros((n, n))
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h[i]
        H[i, i] = (ev(x + ei) - 2.0 * f0 + ev(x - ei)) / h[i] ** 2
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = h[j]
            H[i, j] = (ev(x + ei + ej) - ev(x + ei - ej) - ev(x - ei + ej) + ev(x - ei - ej)) / (4.0 * h[i] * h[j])
            H[j, i] = H[i, j]
    return 0.5 * (H + H.T)


def psd_check(matrix: np.ndarray, eps: float = 1e-6) -> bool:
    """最小特征值不小于 -eps 即视为半正定"""
    A = np.asarray(matrix, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"需要方阵, 实际形状 {A.shape}")
    if not np.allclose(A, A.T, rtol=1e-9, atol=1e-12 * max(1.0, float(np.max(np.abs(A), initial=0.0)))):
        raise ValueError("矩阵不对称")
    return bool(np.linalg.eigvalsh(A).min() >= -eps)


def leading_principal_minors(matrix: np.ndarray) -> np.ndarray:
    A = np.asarray(matrix, dtype=float)
    return np.array([np.linalg.det(A[:k, :k]) for k in range(1, A.shape[0] + 1)])


def log_product(v) -> float:
    """ĥ(x, y) = log(f(x)·g(y)), f = 1/(1+x), g = 1/y"""
    x, y = v
    return -np.log1p(x) - np.log(y)


def log_one_plus_product(v) -> float:
    """h(x, y) = log(1 + f(x)·g(y))"""
    x, y = v
    return np.log1p(1.0 / ((1.0 + x) * y))


def capacity_form(tau: float = 0.5, lam: float = 2.0) -> Callable:
    """c(x, y, d) = log(1 + [f(x)g(y) + τ]/d^λ)"""
    def c(v):
        x, y, d = v
        return np.log1p((1.0 / ((1.0 + x) * y) + tau) / d ** lam)
    return c


def gain_curvature_matrix(x: float, y: float, d: float, tau: float = 0.5, lam: float = 2.0) -> np.ndarray:
    """由 q = f g + τ 与 h = d^-λ 的解析导数组装的 3×3 矩阵 Q"""
    F, G = 1.0 / (1.0 + x), 1.0 / y
    q = F * G + tau
    q_x, q_y = -F ** 2 * G, -F * G ** 2
    q_xx, q_yy, q_xy = 2 * F ** 3 * G, 2 * F * G ** 3, F ** 2 * G ** 2
    h = d ** -lam
    h_d = -lam * d ** (-lam - 1)
    h_dd = lam * (lam + 1) * d ** (-lam - 2)
    return np.array([
        [q_xx * h, q_xy * h, q_x * h_d],
        [q_xy * h, q_yy * h, q_y * h_d],
        [q_x * h_d, q_y * h_d, q * h_dd]
    ])


def run_convexity_audit(points: int = 1000, seed: int = 0, low: float = 1e-2, high: float = 1e2,
                        tau: float = 0.5, lam: float = 2.0, eps: float = 1e-6) -> Dict[str, Any]:
    """在随机正点上检查各函数 Hessian 的半正定性与矩阵 Q 的顺序主子式

    坐标在 [low, high] 上按对数均匀采样, 覆盖多个数量级.
    """
    if not 0 < low < high:
        raise ValueError(f"采样区间必须满足 0 < low < high: [{low}, {high}]")
    rng = np.random.default_rng(seed)
    c = capacity_form(tau, lam)
    summary = {"points": points, "log_product": 0, "log_one_plus_product": 0, "capacity": 0,
               "minors_positive": 0, "min_eigenvalue": np.inf, "sample_min": np.inf, "sample_max": 0.0}
    for _ in range(points):
        x, y, d = 10.0 ** rng.uniform(np.log10(low), np.log10(high), size=3)
        summary["sample_min"] = min(summary["sample_min"], float(min(x, y, d)))
        summary["sample_max"] = max(summary["sample_max"], float(max(x, y, d)))
        for name, fn, pt in (("log_product", log_product, (x, y)),
                             ("log_one_plus_product", log_one_plus_product, (x, y)),
                             ("capacity", c, (x, y, d))):
            H = finite_diff_hessian(fn, pt)
            summary["min_eigenvalue"] = min(summary["min_eigenvalue"], float(np.linalg.eigvalsh(H).min()))
            summary[name] += int(psd_check(H, eps))
        summary["minors_positive"] += int(np.all(leading_principal_minors(gain_curvature_matrix(x, y, d, tau, lam)) > 0))
    logger.info(f"凸性审计完成: {summary}")
    return summary
