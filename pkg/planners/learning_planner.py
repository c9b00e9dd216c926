import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Any, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from channel.estimation import GramAccumulator, SEGMENTS, design_rows, inversion_lemma_update, mle_estimate
from channel.model import ChannelParams, link_geometry
from citymap.geometry import CityMap, GroundNode, Segment
from citymap.path_graph import ActionTuple, PathGraph, Vertex
from .base_planner import BasePlanner, PlannerType, StepType

logger = logging.getLogger(__name__)

DISTANCE_TOL = 1e-9


class InfeasibleHorizonError(ValueError):
    """规划时域内无法从起点到达终点"""

    def __init__(self, message: str, min_stages: int):
        super().__init__(message)
        self.min_stages = min_stages


def select_horizon(T_l: float, a_h: float, a_v: float, v_max: float) -> int:
    """学习时域 N_l = ⌊T_l / T_e⌋, T_e 为以最大速度走完最长边的时间"""
    if min(T_l, a_h, a_v, v_max) <= 0:
        raise ValueError(f"时域参数必须为正: T_l={T_l}, a_h={a_h}, a_v={a_v}, v_max={v_max}")
    T_e = math.sqrt(2.0 * a_h ** 2 + a_v ** 2) / v_max
    N_l = int(math.floor(T_l / T_e + 1e-9))
    if N_l < 2:
        raise ValueError(f"学习时域过短: N_l={N_l} (T_l={T_l}, T_e={T_e:.3f})")
    return N_l


@dataclass
class SlotGeometry:
    """某个顶点上一次测量的设计矩阵 (只依赖几何)"""
    rows: Dict[Segment, np.ndarray]
    distances: Dict[Segment, np.ndarray]


@dataclass
class DPState:
    """动态规划标签: (顶点, 阶段) 上的最优代价及其信息矩阵快照"""
    vertex: Vertex
    stage: int
    cost: float
    H: Dict[Segment, np.ndarray]
    ranks: Dict[Segment, int]
    anchors: Dict[Segment, Optional[float]]
    parent: Optional['DPState'] = field(default=None, repr=False)
    action_index: Optional[int] = None
    stage_cost: float = 0.0

    def rank_total(self) -> int:
        return sum(self.ranks.values())

    def key(self, action_index: int = 0) -> Tuple:
        """比较键: 秩越高越好, 其次代价越低越好, 最后动作序号越小越好"""
        return (-self.rank_total(), self.cost, action_index)


@dataclass
class LearningPlan:
    """学习轨迹结果"""
    waypoints: List[Tuple[float, float, float]]
    vertices: List[Vertex]
    actions: List[ActionTuple]
    final_error: float
    per_stage_costs: List[float]
    N_l: int
    regularized_cost: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "waypoints": [list(w) for w in self.waypoints],
            "actions": [a.to_dict() for a in self.actions],
            "final_error": self.final_error if math.isfinite(self.final_error) else "inf",
            "N_l": self.N_l,
            "per_stage_costs": self.per_stage_costs
        }

    def stage_frame(self) -> pd.DataFrame:
        """逐阶段代价表 (用于高度剖面图)"""
        return pd.DataFrame([
            {"stage": n + 1, "x": w[0], "y": w[1], "z": w[2], "cost": c}
            for n, (w, c) in enumerate(zip(self.waypoints, self.per_stage_costs))
        ], columns=["stage", "x", "y", "z", "cost"])


def _update_rank(rank: int, anchor: Optional[float], distances: np.ndarray) -> Tuple[int, Optional[float]]:
    """按距离是否互异追踪设计矩阵的秩 (行 [-φ(d), 1] 互异当且仅当距离互异)"""
    for d in distances:
        if rank == 2:
            break
        if anchor is None:
            anchor, rank = float(d), 1
        elif abs(float(d) - anchor) > DISTANCE_TOL * max(1.0, anchor):
            rank = 2
    return rank, anchor


class LearningPlanner(BasePlanner):
    """学习轨迹规划器: 在路径图上做前向动态规划

    每个 (顶点, 阶段) 只保留一个最优标签及其信息矩阵, 由于阶段代价依赖历史,
    该递推是标签设定式的启发式; keep_all_labels=True 时退化为穷举.
    """

    def __init__(self, graph: PathGraph, city: CityMap, nodes: Sequence[GroundNode], kappa: float,
                 epsilon: float = 1e-6, planner_id: str = "learning_planner"):
        super().__init__(planner_id, PlannerType.LEARNING, {"kappa": kappa, "epsilon": epsilon})
        self.graph = graph
        self.city = city
        self.nodes = list(nodes)
        self.kappa = kappa
        self.epsilon = epsilon
        self._geometry: Dict[Vertex, SlotGeometry] = {}

    def slot_geometry(self, vertex: Vertex) -> SlotGeometry:
        if vertex not in self._geometry:
            rows = {seg: np.zeros((0, 2)) for seg in SEGMENTS}
            dists = {seg: np.zeros(0) for seg in SEGMENTS}
            if self.nodes:
                distances, segments = link_geometry(self.city, self.nodes, self.graph.position(vertex))
                for seg in SEGMENTS:
                    mask = np.array([s is seg for s in segments])
                    dists[seg] = distances[mask]
                    rows[seg] = design_rows(distances[mask]).reshape(-1, 2)
            self._geometry[vertex] = SlotGeometry(rows=rows, distances=dists)
        return self._geometry[vertex]

    def initial_state(self, vertex: Vertex) -> DPState:
        """第一阶段: 正则化后的 e_LoS[1] + κ e_NLoS[1]"""
        geom = self.slot_geometry(vertex)
        H, ranks, anchors = {}, {}, {}
        for seg in SEGMENTS:
            _, H[seg] = inversion_lemma_update(np.eye(2) / self.epsilon, geom.rows[seg])
            ranks[seg], anchors[seg] = _update_rank(0, None, geom.distances[seg])
        cost = float(np.trace(H[Segment.LOS]) + self.kappa * np.trace(H[Segment.NLOS]))
        return DPState(vertex=vertex, stage=1, cost=cost, H=H, ranks=ranks, anchors=anchors, stage_cost=cost)

    def transition(self, state: DPState, action_index: int, successor: Vertex) -> DPState:
        geom = self.slot_geometry(successor)
        H, ranks, anchors, r = {}, {}, {}, {}
        for seg in SEGMENTS:
            r[seg], H[seg] = inversion_lemma_update(state.H[seg], geom.rows[seg])
            ranks[seg], anchors[seg] = _update_rank(state.ranks[seg], state.anchors[seg], geom.distances[seg])
        step = -(r[Segment.LOS] + self.kappa * r[Segment.NLOS])
        return DPState(vertex=successor, stage=state.stage + 1, cost=state.cost + step, H=H, ranks=ranks,
                       anchors=anchors, parent=state, action_index=action_index, stage_cost=step)

    def stage_cost(self, state: DPState, action_index: int) -> float:
        """L[n] = -(r_LoS + κ r_NLoS), 由后继顶点的测量几何计算"""
        for index, successor in self.graph.successors(state.vertex):
            if index == action_index:
                return self.transition(state, action_index, successor).stage_cost
        raise ValueError(f"动作 {action_index} 在顶点 {state.vertex} 不可行")

    def plan(self, x_b: Sequence[float], x_t: Sequence[float], N_l: int,
             keep_all_labels: bool = False,
             stage_cost_fn: Optional[Callable[[Vertex, Vertex, int], float]] = None) -> LearningPlan:
        """前向动态规划, 终点固定为 x_t"""
        self.begin_run()
        base = self.graph.vertex_at(x_b)
        terminal = self.graph.vertex_at(x_t)
        hops = self.graph.hops_to(terminal)
        if base not in hops or hops[base] > N_l - 1:
            min_stages = hops[base] + 1 if base in hops else -1
            raise InfeasibleHorizonError(f"时域 N_l={N_l} 内无法从 {base} 到达 {terminal}, 最少需要 {min_stages} 个阶段",
                                         min_stages)

        if stage_cost_fn is None:
            first = self.initial_state(base)
        else:
            first = DPState(vertex=base, stage=1, cost=0.0, H={}, ranks={}, anchors={})
        labels: Dict[Vertex, List[DPState]] = {base: [first]}

        for n in range(1, N_l):
            remaining = N_l - 1 - n
            nxt: Dict[Vertex, List[DPState]] = {}
            best_key: Dict[Vertex, Tuple] = {}
            for vertex in sorted(labels):
                for state in labels[vertex]:
                    for action_index, successor in self.graph.successors(vertex):
                        if hops.get(successor, math.inf) > remaining:
                            continue
                        if stage_cost_fn is None:
                            child = self.transition(state, action_index, successor)
                        else:
                            step = float(stage_cost_fn(vertex, successor, n + 1))
                            child = DPState(vertex=successor, stage=n + 1, cost=state.cost + step, H={}, ranks={},
                                            anchors={}, parent=state, action_index=action_index, stage_cost=step)
                        if keep_all_labels:
                            nxt.setdefault(successor, []).append(child)
                            continue
                        key = child.key(action_index)
                        if successor not in best_key or key < best_key[successor]:
                            best_key[successor] = key
                            nxt[successor] = [child]
            labels = nxt
            self.add_step(StepType.STAGE, f"阶段 {n + 1} 松弛完成",
                          {"stage": n + 1, "labels": sum(len(v) for v in labels.values())})

        finals = labels.get(terminal, [])
        if not finals:
            raise InfeasibleHorizonError(f"终点 {terminal} 在阶段 {N_l} 不可达", hops[base] + 1)
        best = min(finals, key=lambda s: s.key(s.action_index or 0))
        plan = self._backtrack(best, N_l)
        elapsed = self.end_run()
        logger.info(f"学习轨迹规划完成: N_l={N_l}, 最终误差 {plan.final_error:.6g}, 耗时 {elapsed:.2f}秒")
        return plan

    def _backtrack(self, state: DPState, N_l: int) -> LearningPlan:
        chain = []
        while state is not None:
            chain.append(state)
            state = state.parent
        chain.reverse()
        vertices = [s.vertex for s in chain]
        waypoints = [tuple(float(v) for v in self.graph.position(v)) for v in vertices]
        actions = [self.graph.actions[s.action_index] for s in chain[1:]]
        final_error = trajectory_error(waypoints, self.city, self.nodes, self.kappa) if self.nodes else math.inf
        return LearningPlan(
            waypoints=waypoints,
            vertices=vertices,
            actions=actions,
            final_error=final_error,
            per_stage_costs=[float(s.stage_cost) for s in chain],
            N_l=N_l,
            regularized_cost=float(chain[-1].cost)
        )


def plan_learning_trajectory(graph: PathGraph, city: CityMap, nodes: Sequence[GroundNode], kappa: float,
                             x_b: Sequence[float], x_t: Sequence[float], N_l: int,
                             epsilon: float = 1e-6, keep_all_labels: bool = False,
                             stage_cost_fn: Optional[Callable[[Vertex, Vertex, int], float]] = None) -> LearningPlan:
    """规划使信道参数估计误差最小的学习轨迹"""
    planner = LearningPlanner(graph, city, nodes, kappa, epsilon)
    return planner.plan(x_b, x_t, N_l, keep_all_labels=keep_all_labels, stage_cost_fn=stage_cost_fn)


def trajectory_accumulator(waypoints: Sequence[Sequence[float]], city: CityMap,
                           nodes: Sequence[GroundNode]) -> GramAccumulator:
    """沿航点重新累积信息矩阵 (无噪声几何)"""
    acc = GramAccumulator()
    for w in waypoints:
        distances, segments = link_geometry(city, nodes, w)
        for seg in SEGMENTS:
            mask = np.array([s is seg for s in segments], dtype=bool)
            if mask.any():
                acc = acc.replace(seg, acc.segment(seg).add(design_rows(distances[mask])))
    return acc


def trajectory_error(waypoints: Sequence[Sequence[float]], city: CityMap, nodes: Sequence[GroundNode],
                     kappa: float) -> float:
    """轨迹的真实 (未正则化) 加权估计误差 e_LoS + κ e_NLoS"""
    return mle_estimate(trajectory_accumulator(waypoints, city, nodes)).weighted_error(kappa)


def random_feasible_trajectory(graph: PathGraph, N_l: int, rng: np.random.Generator) -> List[Vertex]:
    """在时域内随机游走并保证最终到达终点"""
    hops = graph.hops_to(graph.terminal)
    if hops.get(graph.base, math.inf) > N_l - 1:
        raise InfeasibleHorizonError("随机轨迹无法在时域内到达终点", hops.get(graph.base, -2) + 1)
    path = [graph.base]
    for n in range(1, N_l):
        remaining = N_l - 1 - n
        options = [v for _, v in graph.successors(path[-1]) if hops.get(v, math.inf) <= remaining]
        path.append(options[int(rng.integers(len(options)))])
    return path


def monte_carlo_mse(waypoints: Sequence[Sequence[float]], city: CityMap, nodes: Sequence[GroundNode],
                    params: ChannelParams, trials: int, rng: np.random.Generator) -> float:
    """沿轨迹模拟带噪测量并做最大似然估计, 返回参数均方误差 (两段之和)"""
    acc = trajectory_accumulator(waypoints, city, nodes)
    rows: Dict[Segment, List[np.ndarray]] = {seg: [] for seg in SEGMENTS}
    for w in waypoints:
        distances, segments = link_geometry(city, nodes, w)
        for d, seg in zip(distances, segments):
            rows[seg].append(design_rows([d])[0])
    total = 0.0
    for seg in SEGMENTS:
        sg = acc.segment(seg)
        if sg.H is None:
            return math.inf
        A = np.array(rows[seg])
        omega = params.omega(seg)
        noise = rng.normal(0.0, math.sqrt(params.sigma2(seg)), size=(len(A), trials))
        estimates = sg.H @ (A.T @ (A @ omega)[:, None] + A.T @ noise)
        total += float(np.mean(np.sum((estimates - omega[:, None]) ** 2, axis=0)))
    return total
