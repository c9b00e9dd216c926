import logging
import math
from dataclasses import dataclass, field, asdict
from typing import Dict, List, Any, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from config import Config
from channel.model import D_MIN, ChannelParams
from citymap.geometry import CityMap, GroundNode, los_batch
from compression.compressed_map import CompressedMap, expected_gain
from conic.problem import ProblemBuilder
from conic.solver import solve
from .base_planner import BasePlanner, PlannerType, StepType
from .surrogates import (
    CapacityConstants, capacity_gradient, capacity, elevation, elevation_derivative, los_factor,
    nlos_factor, nlos_factor_derivative, altitude_los_factor, altitude_los_factor_derivative
)

logger = logging.getLogger(__name__)

# 调度份额低于该值的 (k, n) 不参与子问题
ACTIVE_TOL = 1e-9
# 展开点水平距离平方的下限 (m²), 避免节点正上方 θ(l) 导数发散
L_FLOOR = 1.0
# 安全接受准则允许的目标下降量
ACCEPT_TOL = 1e-9
# 运动约束留出的余量, 使求解器残差不会越过 ρ_max
MOTION_MARGIN = 1e-6


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass
class CommConfig:
    """通信阶段配置, dB 与线性单位的换算只在这里进行一次"""
    T_c: float = Config.COMM_CONFIG['T_c']
    N_c: Optional[int] = Config.COMM_CONFIG['N_c']
    v_max: float = Config.COMM_CONFIG['v_max']
    h_min: float = Config.COMM_CONFIG['h_min']
    h_max: float = Config.COMM_CONFIG['h_max']
    power_dbm: float = Config.COMM_CONFIG['power_dbm']
    noise_dbm: float = Config.COMM_CONFIG['noise_dbm']
    loop: bool = Config.COMM_CONFIG['loop']
    eps: float = Config.COMM_CONFIG['eps']
    max_iter: int = Config.COMM_CONFIG['max_iter']
    trust_radius: float = Config.COMM_CONFIG['trust_radius']
    trust_altitude: float = Config.COMM_CONFIG['trust_altitude']
    max_halvings: int = Config.COMM_CONFIG['max_halvings']
    exact_epigraph: bool = Config.COMM_CONFIG['exact_epigraph']
    extent: Optional[Tuple[float, float]] = None
    solver_tol: float = Config.SOLVER_CONFIG['tol']
    solver_max_iter: int = Config.SOLVER_CONFIG['max_iter']

    def __post_init__(self):
        if self.N_c is None:
            self.N_c = max(int(round(self.T_c)), 2)
        self.N_c = int(self.N_c)
        if self.T_c <= 0:
            raise ValueError(f"飞行时间必须为正: {self.T_c}")
        if self.N_c < (3 if self.loop else 2):
            raise ValueError(f"时隙数过少: N_c={self.N_c}")
        if self.v_max < 0:
            raise ValueError(f"最大速度不能为负: {self.v_max}")
        if self.h_max < self.h_min:
            raise ValueError(f"高度范围无效: h_min={self.h_min}, h_max={self.h_max}")
        if self.h_min <= 0:
            raise ValueError(f"最低高度必须为正: {self.h_min}")
        if self.extent is not None:
            self.extent = (float(self.extent[0]), float(self.extent[1]))

    @property
    def slot_duration(self) -> float:
        return self.T_c / self.N_c

    @property
    def rho_max(self) -> float:
        """单个时隙内的最大水平飞行距离 v_max·T_c/N_c"""
        return self.v_max * self.T_c / self.N_c

    @property
    def power_w(self) -> float:
        return dbm_to_watts(self.power_dbm)

    @property
    def noise_w(self) -> float:
        return dbm_to_watts(self.noise_dbm)

    def check_map(self, city: CityMap) -> None:
        if self.h_min < city.tallest:
            raise ValueError(f"最低飞行高度 {self.h_min} 低于最高建筑 {city.tallest}")

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["extent"] = list(self.extent) if self.extent is not None else None
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'CommConfig':
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class SchedulePlan:
    """松弛后的调度矩阵 Q (K×N_c)"""
    Q: np.ndarray

    def __post_init__(self):
        self.Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        if np.any(self.Q < -1e-7) or np.any(self.Q > 1 + 1e-7):
            raise ValueError("调度份额必须位于 [0, 1]")
        if np.any(self.Q.sum(axis=0) > 1 + 1e-7):
            raise ValueError(f"每个时隙的调度份额之和不能超过 1: 最大 {float(self.Q.sum(axis=0).max()):.6f}")

    @classmethod
    def uniform(cls, K: int, N: int) -> 'SchedulePlan':
        return cls(np.full((K, N), 1.0 / K))

    def rounded(self) -> np.ndarray:
        """每个时隙取份额最大的节点 (仅用于作图)"""
        hard = np.zeros_like(self.Q)
        hard[np.argmax(self.Q, axis=0), np.arange(self.Q.shape[1])] = 1.0
        return hard

    def to_dict(self):
        return {"Q": self.Q.tolist()}


@dataclass
class StepReport:
    """一次块更新的诊断信息"""
    block: str
    status: str
    accepted: bool
    halvings: int = 0
    mu_before: float = 0.0
    mu_after: float = 0.0
    message: str = ""

    @property
    def moved(self) -> bool:
        return self.accepted and self.status != "frozen"

    def to_dict(self):
        return asdict(self)


@dataclass
class CommPlan:
    """通信轨迹: 水平航点, 固定高度与调度"""
    waypoints: np.ndarray
    z: float
    schedule: SchedulePlan
    mu: float = float('nan')
    trace: List[Dict[str, Any]] = field(default_factory=list)
    converged: bool = False
    diagnostics: List[str] = field(default_factory=list)

    def __post_init__(self):
        self.waypoints = np.asarray(self.waypoints, dtype=float).reshape(-1, 2)

    @property
    def N_c(self) -> int:
        return len(self.waypoints)

    def positions(self) -> np.ndarray:
        return np.column_stack([self.waypoints, np.full(self.N_c, self.z)])

    def rounded_schedule(self) -> np.ndarray:
        return self.schedule.rounded()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "waypoints": self.waypoints.tolist(),
            "z": self.z,
            "Q": self.schedule.Q.tolist(),
            "rounded_schedule": self.rounded_schedule().astype(int).tolist(),
            "mu": self.mu,
            "trace": self.trace,
            "converged": self.converged,
            "diagnostics": self.diagnostics
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'CommPlan':
        return cls(
            waypoints=np.array(data["waypoints"], dtype=float),
            z=float(data["z"]),
            schedule=SchedulePlan(np.array(data["Q"], dtype=float)),
            mu=float(data.get("mu", float('nan'))),
            trace=list(data.get("trace", [])),
            converged=bool(data.get("converged", False)),
            diagnostics=list(data.get("diagnostics", []))
        )

    def trace_frame(self) -> pd.DataFrame:
        """逐轮迭代表 (iter, mu, z)"""
        return pd.DataFrame([{"iter": t["iteration"], "mu": t["mu"], "z": t["z"]} for t in self.trace],
                            columns=["iter", "mu", "z"])


def check_feasible(waypoints: np.ndarray, z: float, config: CommConfig, tol: float = 1e-7) -> List[str]:
    """返回违反的约束描述, 空列表表示可行"""
    problems = []
    v = np.asarray(waypoints, dtype=float).reshape(-1, 2)
    if len(v) != config.N_c:
        problems.append(f"航点数 {len(v)} 与 N_c={config.N_c} 不一致")
    steps = np.linalg.norm(np.diff(v, axis=0), axis=1)
    if len(steps) and steps.max() > config.rho_max + tol:
        problems.append(f"相邻航点距离 {steps.max():.6f} 超过 ρ_max={config.rho_max:.6f}")
    if config.loop and np.linalg.norm(v[0] - v[-1]) > tol:
        problems.append("闭环轨迹首尾航点不一致")
    if not config.h_min - tol <= z <= config.h_max + tol:
        problems.append(f"高度 {z} 不在 [{config.h_min}, {config.h_max}] 内")
    return problems


def throughput_upper_slot(cmap: CompressedMap, model, z, r, power_w: float = 1.0, noise_w: float = 1e-11):
    """单时隙吞吐量上界 C_up = log2(1 + P·E[γ]/σ²)"""
    gain = expected_gain(cmap, model, z, r)
    value = np.log2(1.0 + power_w * np.asarray(gain) / noise_w)
    return float(value) if np.ndim(value) == 0 else value


def slot_capacities(cmap: CompressedMap, waypoints: np.ndarray, z: float, power_w: float,
                    noise_w: float) -> np.ndarray:
    """全部 (节点, 时隙) 的吞吐量上界矩阵 K×N"""
    v = np.asarray(waypoints, dtype=float).reshape(-1, 2)
    C = np.empty((cmap.K, len(v)))
    for k, (node, model) in enumerate(zip(cmap.nodes, cmap.models)):
        r = np.linalg.norm(v - node.xy, axis=1)
        C[k] = throughput_upper_slot(cmap, model, np.full(len(v), z), r, power_w, noise_w)
    return C


def min_throughput(Q: np.ndarray, C: np.ndarray) -> float:
    """max-min 目标 μ = min_k (1/N) Σ_n q_k[n] C_k[n]"""
    return float(np.min(np.mean(Q * C, axis=1)))


def _as_matrix(Q: Union[SchedulePlan, np.ndarray]) -> np.ndarray:
    return Q.Q if isinstance(Q, SchedulePlan) else np.atleast_2d(np.asarray(Q, dtype=float))


def schedule_from_capacities(C: np.ndarray, tol: float = Config.SOLVER_CONFIG['tol']) -> Tuple[SchedulePlan, float]:
    """给定容量矩阵求解调度线性规划"""
    K, N = C.shape
    pb = ProblemBuilder()
    mu = pb.add_variables("mu", 1)[0]
    q = pb.add_variables("q", K * N, lb=0.0, ub=1.0).reshape(K, N)
    pb.add_objective([mu], [1.0])
    for k in range(K):
        pb.add_inequality([mu] + list(q[k]), [1.0] + list(-C[k] / N), 0.0)
    for n in range(N):
        pb.add_inequality(list(q[:, n]), [1.0] * K, 1.0)
    solution = solve(pb.build(), tol=tol)
    if not solution.usable:
        raise RuntimeError(f"调度线性规划求解失败: {solution.status.value} {solution.message}")
    Q = np.clip(solution.x[q], 0.0, 1.0)
    sums = Q.sum(axis=0)
    Q[:, sums > 1.0] /= sums[sums > 1.0]
    return SchedulePlan(Q), min_throughput(Q, C)


def schedule_lp(cmap: CompressedMap, waypoints: np.ndarray, z: float,
                config: Optional[CommConfig] = None) -> Tuple[SchedulePlan, float]:
    """固定轨迹与高度时的最优松弛调度"""
    config = config or CommConfig()
    C = slot_capacities(cmap, waypoints, z, config.power_w, config.noise_w)
    return schedule_from_capacities(C, config.solver_tol)


def _safeguard(evaluate, mu_prev: float, max_halvings: int) -> Optional[Tuple[float, float, int]]:
    """沿步长方向回溯直到真实目标不下降, 返回 (t, μ, 折半次数)"""
    t = 1.0
    for halvings in range(max_halvings + 1):
        mu_new = evaluate(t)
        if mu_new >= mu_prev - ACCEPT_TOL:
            return t, mu_new, halvings
        t *= 0.5
    return None


def horizontal_scp_step(cmap: CompressedMap, Q: Union[SchedulePlan, np.ndarray], waypoints_prev: np.ndarray,
                        z: float, config: CommConfig) -> Tuple[np.ndarray, StepReport]:
    """固定调度和高度, 求解线性化后的水平轨迹子问题"""
    Q = _as_matrix(Q)
    v0 = np.asarray(waypoints_prev, dtype=float).reshape(-1, 2)
    N = len(v0)

    def true_mu(v):
        return min_throughput(Q, slot_capacities(cmap, v, z, config.power_w, config.noise_w))

    mu_prev = true_mu(v0)
    if config.rho_max <= 0:
        return v0.copy(), StepReport("horizontal", "frozen", False, mu_before=mu_prev, mu_after=mu_prev)

    const = CapacityConstants.from_map(cmap, config.power_w, config.noise_w)
    pairs = [(k, n) for k in range(cmap.K) for n in range(N) if Q[k, n] > ACTIVE_TOL]
    P = len(pairs)

    pb = ProblemBuilder()
    mu = pb.add_variables("mu", 1)[0]
    dv = pb.add_variables("dv", 2 * N).reshape(N, 2)
    f = pb.add_variables("f", P, lb=0.0)
    w = pb.add_variables("w", P, lb=0.0)
    l = pb.add_variables("l", P, lb=0.0)
    theta = pb.add_variables("theta", P, lb=0.0, ub=np.pi / 2.0)
    pb.add_objective([mu], [1.0])

    if config.extent is not None:
        for n in range(N):
            for axis in range(2):
                pb.set_bounds(int(dv[n, axis]), -v0[n, axis], config.extent[axis] - v0[n, axis])

    # 每个节点的容量约束: μ - (1/N) Σ_n q c̃ ≤ 0
    cap_idx: Dict[int, List[int]] = {k: [mu] for k in range(cmap.K)}
    cap_coef: Dict[int, List[float]] = {k: [1.0] for k in range(cmap.K)}
    cap_rhs: Dict[int, float] = {k: 0.0 for k in range(cmap.K)}

    for p, (k, n) in enumerate(pairs):
        node_xy = cmap.nodes[k].xy
        model = cmap.models[k]
        diff = v0[n] - node_xy
        dist2 = float(diff @ diff)
        l0 = max(dist2, L_FLOOR)
        theta0 = float(elevation(l0, z))
        f0 = float(los_factor(theta0, model.a, model.b))
        D0 = z ** 2 + l0
        w0 = float(nlos_factor(D0, const))

        # f ≥ f̃(θ), 以 f0 缩放
        pb.add_inequality([f[p], theta[p]], [-1.0, -model.a], -1.0 - model.a * theta0)
        # θ ≤ θ̃(l)
        slope = float(elevation_derivative(l0, z)) * l0
        pb.add_inequality([theta[p], l[p]], [1.0, -slope], theta0 - slope)
        # l ≥ ‖v - u‖²
        if config.exact_epigraph:
            pb.add_rotated_cone(([l[p]], [l0], 0.0), ([], [], 1.0),
                                [([dv[n, 0]], [1.0], diff[0]), ([dv[n, 1]], [1.0], diff[1])])
        else:
            pb.add_inequality([l[p], dv[n, 0], dv[n, 1]], [-l0, 2.0 * diff[0], 2.0 * diff[1]], -dist2)
        # w ≥ w̃(l)
        s = float(nlos_factor_derivative(D0, const)) * l0 / w0
        pb.add_inequality([w[p], l[p]], [-1.0, s], -1.0 + s)

        c0 = float(capacity(f0, w0, D0, const))
        gf, gw, gD = (float(g) for g in capacity_gradient(f0, w0, D0, const))
        weight = Q[k, n] / N
        cap_idx[k].extend([f[p], w[p], l[p]])
        cap_coef[k].extend([-weight * gf * f0, -weight * gw * w0, -weight * gD * l0])
        cap_rhs[k] += weight * (c0 - gf * f0 - gw * w0 - gD * l0)

    for k in range(cmap.K):
        pb.add_inequality(cap_idx[k], cap_coef[k], cap_rhs[k])

    rho = max(config.rho_max - MOTION_MARGIN, 0.0)
    for n in range(1, N):
        step = v0[n] - v0[n - 1]
        pb.add_cone([([dv[n, 0], dv[n - 1, 0]], [1.0, -1.0], step[0]),
                     ([dv[n, 1], dv[n - 1, 1]], [1.0, -1.0], step[1])], ([], [], rho))
    for n in range(N):
        pb.add_cone([([dv[n, 0]], [1.0], 0.0), ([dv[n, 1]], [1.0], 0.0)], ([], [], config.trust_radius))
    if config.loop:
        for axis in range(2):
            pb.add_equality([dv[0, axis], dv[N - 1, axis]], [1.0, -1.0], 0.0)

    solution = solve(pb.build(), tol=config.solver_tol, max_iter=config.solver_max_iter)
    if not solution.usable:
        logger.warning(f"水平子问题求解失败 ({solution.status.value}), 保留上一轮轨迹")
        return v0.copy(), StepReport("horizontal", solution.status.value, False, mu_before=mu_prev,
                                     mu_after=mu_prev, message=solution.message)

    delta = solution.x[dv]
    if config.loop:
        delta[-1] = delta[0]
    result = _safeguard(lambda t: true_mu(v0 + t * delta), mu_prev, config.max_halvings)
    if result is None:
        logger.warning("水平步在最大折半次数内未能提升目标, 拒绝该步")
        return v0.copy(), StepReport("horizontal", "rejected", False, config.max_halvings, mu_prev, mu_prev,
                                     message=solution.status.value)
    t, mu_new, halvings = result
    logger.debug(f"水平步接受: μ {mu_prev:.6f} -> {mu_new:.6f}, 折半 {halvings} 次")
    return v0 + t * delta, StepReport("horizontal", solution.status.value, True, halvings, mu_prev, mu_new)


def altitude_scp_step(cmap: CompressedMap, Q: Union[SchedulePlan, np.ndarray], waypoints: np.ndarray,
                      z_prev: float, config: CommConfig) -> Tuple[float, StepReport]:
    """固定调度和水平轨迹, 求解线性化后的高度子问题"""
    Q = _as_matrix(Q)
    v = np.asarray(waypoints, dtype=float).reshape(-1, 2)
    N = len(v)
    z0 = float(z_prev)

    def true_mu(z):
        return min_throughput(Q, slot_capacities(cmap, v, z, config.power_w, config.noise_w))

    mu_prev = true_mu(z0)
    if config.h_max - config.h_min <= 0:
        return z0, StepReport("altitude", "frozen", False, mu_before=mu_prev, mu_after=mu_prev)

    const = CapacityConstants.from_map(cmap, config.power_w, config.noise_w)
    pairs = [(k, n) for k in range(cmap.K) for n in range(N) if Q[k, n] > ACTIVE_TOL]
    P = len(pairs)
    h0 = z0 ** 2

    pb = ProblemBuilder()
    mu = pb.add_variables("mu", 1)[0]
    dz = pb.add_variables("dz", 1, lb=max(config.h_min - z0, -config.trust_altitude),
                          ub=min(config.h_max - z0, config.trust_altitude))[0]
    h = pb.add_variables("h", 1, lb=0.0)[0]
    m = pb.add_variables("m", P, lb=0.0)
    o = pb.add_variables("o", P, lb=0.0)
    pb.add_objective([mu], [1.0])

    if config.exact_epigraph:
        pb.add_rotated_cone(([h], [h0], 0.0), ([], [], 1.0), [([dz], [1.0], z0)])
    else:
        pb.add_inequality([h, dz], [-h0, 2.0 * z0], -h0)

    cap_idx: Dict[int, List[int]] = {k: [mu] for k in range(cmap.K)}
    cap_coef: Dict[int, List[float]] = {k: [1.0] for k in range(cmap.K)}
    cap_rhs: Dict[int, float] = {k: 0.0 for k in range(cmap.K)}
    h_coef: Dict[int, float] = {k: 0.0 for k in range(cmap.K)}

    for p, (k, n) in enumerate(pairs):
        model = cmap.models[k]
        diff = v[n] - cmap.nodes[k].xy
        r2 = float(diff @ diff)
        r = math.sqrt(r2)
        m0 = float(altitude_los_factor(z0, r, model.a, model.b))
        D0 = h0 + r2
        o0 = float(nlos_factor(D0, const))

        # m ≥ m̃(z)
        pb.add_inequality([m[p], dz], [-1.0, float(altitude_los_factor_derivative(z0, r, model.a, model.b)) / m0],
                          -1.0)
        # o ≥ õ(h)
        s = float(nlos_factor_derivative(D0, const)) * h0 / o0
        pb.add_inequality([o[p], h], [-1.0, s], -1.0 + s)

        c0 = float(capacity(m0, o0, D0, const))
        gm, go, gD = (float(g) for g in capacity_gradient(m0, o0, D0, const))
        weight = Q[k, n] / N
        cap_idx[k].extend([m[p], o[p]])
        cap_coef[k].extend([-weight * gm * m0, -weight * go * o0])
        h_coef[k] += -weight * gD * h0
        cap_rhs[k] += weight * (c0 - gm * m0 - go * o0 - gD * h0)

    for k in range(cmap.K):
        pb.add_inequality(cap_idx[k] + [h], cap_coef[k] + [h_coef[k]], cap_rhs[k])

    solution = solve(pb.build(), tol=config.solver_tol, max_iter=config.solver_max_iter)
    if not solution.usable:
        logger.warning(f"高度子问题求解失败 ({solution.status.value}), 保留上一轮高度")
        return z0, StepReport("altitude", solution.status.value, False, mu_before=mu_prev, mu_after=mu_prev,
                              message=solution.message)

    step = float(np.clip(z0 + solution.x[dz], config.h_min, config.h_max)) - z0
    result = _safeguard(lambda t: true_mu(z0 + t * step), mu_prev, config.max_halvings)
    if result is None:
        logger.warning("高度步在最大折半次数内未能提升目标, 拒绝该步")
        return z0, StepReport("altitude", "rejected", False, config.max_halvings, mu_prev, mu_prev,
                              message=solution.status.value)
    t, mu_new, halvings = result
    logger.debug(f"高度步接受: z {z0:.3f} -> {z0 + t * step:.3f}, μ {mu_prev:.6f} -> {mu_new:.6f}")
    return z0 + t * step, StepReport("altitude", solution.status.value, True, halvings, mu_prev, mu_new)


def init_circle(nodes: Sequence[GroundNode], T_c: float, v_max: float, h_max: float, N_c: int,
                loop: bool = True, extent: Optional[Tuple[float, float]] = None) -> CommPlan:
    """以节点重心为圆心的圆形初始轨迹, 高度取 h_max, 均匀调度"""
    if len(nodes) < 1:
        raise ValueError("初始化轨迹至少需要 1 个节点")
    centroid = np.mean([n.xy for n in nodes], axis=0)
    L_max = v_max * T_c
    radius = L_max / (2.0 * np.pi)
    rho_max = v_max * T_c / N_c
    if loop:
        # 闭环轨迹用 N_c-1 段弦长首尾相接
        angles = 2.0 * np.pi * np.arange(N_c) / (N_c - 1)
        radius = min(radius, rho_max / (2.0 * np.sin(np.pi / (N_c - 1))))
    else:
        angles = 2.0 * np.pi * np.arange(N_c) / N_c
    if extent is not None:
        margin = min(centroid[0], extent[0] - centroid[0], centroid[1], extent[1] - centroid[1])
        radius = min(radius, max(margin, 0.0))
    waypoints = centroid + radius * np.column_stack([np.cos(angles), np.sin(angles)])
    if loop:
        waypoints[-1] = waypoints[0]
    logger.info(f"初始化圆形轨迹: 圆心 ({centroid[0]:.1f}, {centroid[1]:.1f}), 半径 {radius:.2f} m")
    return CommPlan(waypoints=waypoints, z=float(h_max), schedule=SchedulePlan.uniform(len(nodes), N_c))


class CommPlanner(BasePlanner):
    """块坐标下降: 调度线性规划 → 水平轨迹 → 高度, 直到 μ 的提升小于 ε"""

    def __init__(self, cmap: CompressedMap, config: CommConfig, planner_id: str = "comm_planner"):
        super().__init__(planner_id, PlannerType.COMMUNICATION, config.to_dict())
        self.cmap = cmap
        self.comm_config = config

    def capacities(self, waypoints: np.ndarray, z: float) -> np.ndarray:
        return slot_capacities(self.cmap, waypoints, z, self.comm_config.power_w, self.comm_config.noise_w)

    def plan(self, init: CommPlan) -> CommPlan:
        config = self.comm_config
        problems = check_feasible(init.waypoints, init.z, config)
        if problems:
            raise ValueError(f"初始轨迹不可行: {'; '.join(problems)}")
        self.begin_run()

        v, z = init.waypoints.copy(), float(init.z)
        Q = init.schedule.Q.copy()
        mu = min_throughput(Q, self.capacities(v, z))
        trace = [{"iteration": 0, "mu_schedule": mu, "mu_horizontal": mu, "mu_altitude": mu, "mu": mu, "z": z,
                  "horizontal": "init", "altitude": "init", "halvings": 0}]
        diagnostics: List[str] = []
        converged = False

        for j in range(1, config.max_iter + 1):
            C = self.capacities(v, z)
            new_schedule, mu_lp = schedule_from_capacities(C, config.solver_tol)
            if mu_lp >= mu:
                Q = new_schedule.Q
            else:
                # 求解器误差使 LP 解略差于上一轮调度, 保留原调度
                mu_lp = mu
            self.add_step(StepType.SCHEDULE, f"第 {j} 轮调度", {"mu": mu_lp})

            v, h_report = horizontal_scp_step(self.cmap, Q, v, z, config)
            self.add_step(StepType.HORIZONTAL, f"第 {j} 轮水平轨迹", h_report.to_dict(),
                          success=h_report.accepted or h_report.status == "frozen")
            z, a_report = altitude_scp_step(self.cmap, Q, v, z, config)
            self.add_step(StepType.ALTITUDE, f"第 {j} 轮高度", a_report.to_dict(),
                          success=a_report.accepted or a_report.status == "frozen")

            mu_new = min_throughput(Q, self.capacities(v, z))
            trace.append({"iteration": j, "mu_schedule": mu_lp, "mu_horizontal": h_report.mu_after,
                          "mu_altitude": mu_new, "mu": mu_new, "z": z, "horizontal": h_report.status,
                          "altitude": a_report.status, "halvings": h_report.halvings + a_report.halvings})
            logger.debug(f"BCD 第 {j} 轮: μ = {mu_new:.6f}, z = {z:.2f}")
            delta = mu_new - mu
            mu = mu_new

            if not (h_report.moved or a_report.moved):
                frozen = h_report.status == "frozen" and a_report.status == "frozen"
                if not frozen:
                    diagnostics.append(f"第 {j} 轮几何块均未更新: 水平 {h_report.status}, 高度 {a_report.status}")
                    logger.warning(f"BCD 在第 {j} 轮停止: 几何块均未更新")
                converged = frozen or delta < config.eps
                break
            if delta < config.eps:
                converged = True
                break
        else:
            diagnostics.append(f"达到最大迭代次数 {config.max_iter}")

        elapsed = self.end_run()
        logger.info(f"通信轨迹优化完成: μ = {mu:.4f} bits/s/Hz, {len(trace) - 1} 轮, 耗时 {elapsed:.2f}秒")
        return CommPlan(waypoints=v, z=z, schedule=SchedulePlan(Q), mu=mu, trace=trace,
                        converged=converged, diagnostics=diagnostics)


def bcd_optimize(cmap: CompressedMap, config: CommConfig, init: Optional[CommPlan] = None) -> CommPlan:
    """交替优化调度, 水平轨迹与高度"""
    if init is None:
        init = init_circle(cmap.nodes, config.T_c, config.v_max, config.h_max, config.N_c,
                           loop=config.loop, extent=config.extent)
    return CommPlanner(cmap, config).plan(init)


@dataclass
class EvaluationResult:
    """蒙特卡洛评估得到的实际吞吐量"""
    min_throughput: float
    per_node: np.ndarray
    trials: int
    los_source: str

    def to_dict(self):
        return {"min_throughput": self.min_throughput, "per_node": self.per_node.tolist(),
                "trials": self.trials, "los_source": self.los_source}


def evaluate_plan(city: CityMap, params: ChannelParams, nodes: Sequence[GroundNode], plan: CommPlan,
                  trials: int = Config.SCENARIO_CONFIG['trials'], seed: int = 0,
                  config: Optional[CommConfig] = None, los_source: str = "ray",
                  cmap: Optional[CompressedMap] = None, shadowing: bool = True,
                  chunk: int = 1000) -> EvaluationResult:
    """按真实几何与真实信道参数评估计划的平均吞吐量

    los_source="ray" 用射线判断视距; "model" 按压缩地图中的视距概率抽样 (需传入 cmap).
    """
    if trials < 1:
        raise ValueError(f"试验次数必须为正: {trials}")
    if los_source not in ("ray", "model"):
        raise ValueError(f"未知的视距来源: {los_source}")
    if los_source == "model" and cmap is None:
        raise ValueError("按模型抽样视距需要压缩地图")
    config = config or CommConfig()
    rng = np.random.default_rng(seed)
    points = plan.positions()
    Q = plan.schedule.Q
    per_node = np.zeros(len(nodes))

    for k, node in enumerate(nodes):
        offsets = points - np.asarray(node.position, dtype=float)
        d = np.maximum(np.linalg.norm(offsets, axis=1), D_MIN)
        if los_source == "ray":
            los_fixed = los_batch(city, points, node.position)
        else:
            p = cmap.models[k].probability(points[:, 2], np.linalg.norm(offsets[:, :2], axis=1))
        total = np.zeros(len(points))
        done = 0
        while done < trials:
            count = min(chunk, trials - done)
            if los_source == "ray":
                los = np.broadcast_to(los_fixed, (count, len(points)))
            else:
                los = rng.random((count, len(points))) < p
            alpha = np.where(los, params.alpha_los, params.alpha_nlos)
            beta = np.where(los, params.beta_los_db, params.beta_nlos_db)
            shadow = 0.0
            if shadowing:
                sigma = np.where(los, np.sqrt(params.sigma2_los), np.sqrt(params.sigma2_nlos))
                shadow = rng.standard_normal((count, len(points))) * sigma
            gain_db = beta - alpha * 10.0 * np.log10(d) + shadow
            total += np.log2(1.0 + config.power_w * 10.0 ** (gain_db / 10.0) / config.noise_w).sum(axis=0)
            done += count
        per_node[k] = float(np.mean(Q[k] * total / trials))

    result = EvaluationResult(min_throughput=float(per_node.min()), per_node=per_node, trials=trials,
                              los_source=los_source)
    logger.info(f"计划评估完成: 最小吞吐量 {result.min_throughput:.4f} bits/s/Hz ({trials} 次试验)")
    return result
