import logging
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import networkx as nx
import numpy as np

from .geometry import CityMap

logger = logging.getLogger(__name__)

Vertex = Tuple[int, int, int]

# 动作字母表: 8 个航向角, 5 个俯仰类别
PHI_ALPHABET = tuple(k * np.pi / 4.0 for k in range(8))
PSI_ALPHABET = (-np.pi / 2.0, -np.pi / 4.0, 0.0, np.pi / 4.0, np.pi / 2.0)

GRID_TOL = 1e-6


def rho_alphabet(a_h: float, a_v: float) -> Tuple[float, ...]:
    """六种可行的移动距离 (含原地停留)"""
    return (0.0, a_h, a_v, a_h * np.sqrt(2.0),
            float(np.hypot(a_h, a_v)), float(np.sqrt(2.0 * a_h ** 2 + a_v ** 2)))


@dataclass(frozen=True)
class ActionTuple:
    """离散动作 (航向 phi, 俯仰类别 psi, 距离 rho)

    psi = ±pi/4 表示斜向爬升/下降, 实际俯仰角由网格步长决定 (elevation 字段),
    以保证按运动方程走一步恰好落在相邻网格点上.
    """
    phi: float
    psi: float
    rho: float
    elevation: float
    offset: Tuple[int, int, int]

    def displacement(self) -> np.ndarray:
        """按运动方程计算位移向量"""
        return self.rho * np.array([
            np.cos(self.phi) * np.cos(self.elevation),
            np.sin(self.phi) * np.cos(self.elevation),
            np.sin(self.elevation)
        ])

    def to_dict(self):
        return {
            "phi": self.phi,
            "psi": self.psi,
            "rho": self.rho
        }


def build_action_alphabet(a_h: float, a_v: float) -> List[ActionTuple]:
    """枚举所有落在网格上的动作, 顺序固定 (用于确定性的平局裁决)"""
    actions = [ActionTuple(phi=0.0, psi=0.0, rho=0.0, elevation=0.0, offset=(0, 0, 0))]
    for psi in PSI_ALPHABET:
        vertical = int(np.sign(psi))
        if abs(psi) == np.pi / 2.0:
            # 垂直移动与航向无关, 只保留 phi = 0
            actions.append(ActionTuple(phi=0.0, psi=psi, rho=a_v, elevation=psi, offset=(0, 0, vertical)))
            continue
        for phi in PHI_ALPHABET:
            di, dj = int(round(np.cos(phi))), int(round(np.sin(phi)))
            run = a_h * float(np.hypot(di, dj))
            rise = vertical * a_v
            actions.append(ActionTuple(
                phi=phi,
                psi=psi,
                rho=float(np.hypot(run, rise)),
                elevation=float(np.arctan2(rise, run)),
                offset=(di, dj, vertical)
            ))
    return actions


@dataclass
class PathGraph:
    """学习阶段使用的三维离散路径图"""
    a_h: float
    a_v: float
    altitude_levels: Tuple[float, ...]
    shape: Tuple[int, int]
    graph: nx.DiGraph
    actions: Tuple[ActionTuple, ...]
    base: Vertex
    terminal: Vertex

    @property
    def vertex_count(self) -> int:
        return self.graph.number_of_nodes()

    def position(self, vertex: Vertex) -> np.ndarray:
        i, j, m = vertex
        return np.array([i * self.a_h, j * self.a_h, self.altitude_levels[m]])

    def vertex_at(self, point: Sequence[float]) -> Vertex:
        """把坐标映射到网格顶点, 不在网格上则报错"""
        x, y, z = (float(v) for v in point)
        i, j = round(x / self.a_h), round(y / self.a_h)
        levels = np.asarray(self.altitude_levels)
        m = int(np.argmin(np.abs(levels - z)))
        vertex = (int(i), int(j), m)
        if vertex not in self.graph or np.max(np.abs(self.position(vertex) - np.array([x, y, z]))) > GRID_TOL:
            raise ValueError(f"坐标 {tuple(point)} 不在路径图网格上")
        return vertex

    def successors(self, vertex: Vertex) -> List[Tuple[int, Vertex]]:
        """按动作序号排列的 (动作序号, 后继顶点)"""
        out = [(data['action_index'], nb) for nb, data in self.graph[vertex].items()]
        return sorted(out)

    def hops_to(self, target: Vertex) -> Dict[Vertex, int]:
        """各顶点到目标顶点的最少边数"""
        return nx.single_source_shortest_path_length(self.graph.reverse(copy=False), target)


def build_path_graph(city: CityMap, a_h: float, a_v: float, h_min: float, h_max: float,
                     base: Sequence[float], terminal: Sequence[float]) -> PathGraph:
    """构建三维路径图: 顶点为网格点, 边为动作字母表中落在网格上的动作"""
    if a_h <= 0 or a_v <= 0:
        raise ValueError(f"离散步长必须为正: a_h={a_h}, a_v={a_v}")
    if h_min < city.tallest:
        raise ValueError(f"最低高度 {h_min} 低于最高建筑 {city.tallest:.2f}")
    if h_max < h_min:
        raise ValueError(f"高度区间为空: [{h_min}, {h_max}]")

    levels = []
    m = 0
    while h_min + m * a_v <= h_max + GRID_TOL:
        levels.append(h_min + m * a_v)
        m += 1
    width, depth = city.extent
    nx_count = int(np.floor(width / a_h + GRID_TOL)) + 1
    ny_count = int(np.floor(depth / a_h + GRID_TOL)) + 1

    actions = build_action_alphabet(a_h, a_v)
    graph = nx.DiGraph()
    for i in range(nx_count):
        for j in range(ny_count):
            for k in range(len(levels)):
                graph.add_node((i, j, k))
    for (i, j, k) in list(graph.nodes):
        for index, action in enumerate(actions):
            di, dj, dk = action.offset
            nb = (i + di, j + dj, k + dk)
            if nb in graph:
                graph.add_edge((i, j, k), nb, action_index=index, length=action.rho)

    path_graph = PathGraph(
        a_h=a_h, a_v=a_v,
        altitude_levels=tuple(levels),
        shape=(nx_count, ny_count),
        graph=graph,
        actions=tuple(actions),
        base=(0, 0, 0),
        terminal=(0, 0, 0)
    )
    path_graph.base = path_graph.vertex_at(base)
    path_graph.terminal = path_graph.vertex_at(terminal)
    logger.info(f"路径图构建完成: {nx_count}×{ny_count}×{len(levels)} 个顶点, {graph.number_of_edges()} 条边")
    return path_graph
