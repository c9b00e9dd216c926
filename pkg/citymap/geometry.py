import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Any, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import brentq
from scipy.special import erf

logger = logging.getLogger(__name__)

DEFAULT_HEIGHT_RANGE = (5.0, 40.0)
DEFAULT_STREET_WIDTH = 20.0


class Segment(Enum):
    """传播段枚举"""
    LOS = "LoS"    # 视距
    NLOS = "NLoS"  # 非视距


@dataclass(frozen=True)
class Building:
    """轴对齐的建筑棱柱"""
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    height: float

    def __post_init__(self):
        if not self.x_min < self.x_max or not self.y_min < self.y_max:
            raise ValueError(f"建筑占地范围无效: x=[{self.x_min}, {self.x_max}], y=[{self.y_min}, {self.y_max}]")
        if self.height <= 0:
            raise ValueError(f"建筑高度必须为正: {self.height}")

    def contains_xy(self, x: float, y: float) -> bool:
        """判断地面点是否落在占地范围内 (含边界)"""
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max

    def to_dict(self) -> Dict[str, float]:
        return {
            "x_min": self.x_min,
            "x_max": self.x_max,
            "y_min": self.y_min,
            "y_max": self.y_max,
            "height": self.height
        }


@dataclass(frozen=True)
class GroundNode:
    """地面物联网节点, 高度固定为 0"""
    id: int
    position: Tuple[float, float, float]

    @property
    def xy(self) -> np.ndarray:
        return np.array(self.position[:2], dtype=float)

    def to_dict(self) -> Dict[str, Any]:
        return {"id": self.id, "position": list(self.position)}


@dataclass(frozen=True)
class CityMap:
    """曼哈顿式三维城市地图, 视距判断的几何依据"""
    extent: Tuple[float, float]
    buildings: Tuple[Building, ...]
    seed: Optional[int] = None
    tallest: float = field(init=False)
    _lo: np.ndarray = field(init=False, repr=False, compare=False)
    _hi: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        width, depth = self.extent
        for b in self.buildings:
            if b.x_min < 0 or b.y_min < 0 or b.x_max > width or b.y_max > depth:
                raise ValueError(f"建筑超出地图范围: {b}")
        object.__setattr__(self, 'buildings', tuple(self.buildings))
        object.__setattr__(self, 'tallest', max((b.height for b in self.buildings), default=0.0))
        lo = np.array([[b.x_min, b.y_min, 0.0] for b in self.buildings], dtype=float).reshape(-1, 3)
        hi = np.array([[b.x_max, b.y_max, b.height] for b in self.buildings], dtype=float).reshape(-1, 3)
        object.__setattr__(self, '_lo', lo)
        object.__setattr__(self, '_hi', hi)

    @property
    def boxes(self) -> Tuple[np.ndarray, np.ndarray]:
        """返回所有建筑包围盒的下角与上角 (n×3)"""
        return self._lo, self._hi

    def inside_extent(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        width, depth = self.extent
        return (pts[:, 0] >= 0) & (pts[:, 0] <= width) & (pts[:, 1] >= 0) & (pts[:, 1] <= depth)

    def inside_footprint(self, points: np.ndarray) -> np.ndarray:
        """判断地面点是否位于任一建筑占地范围内"""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if not self.buildings:
            return np.zeros(len(pts), dtype=bool)
        x = pts[:, 0:1]
        y = pts[:, 1:2]
        inside = ((x >= self._lo[:, 0]) & (x <= self._hi[:, 0]) &
                  (y >= self._lo[:, 1]) & (y <= self._hi[:, 1]))
        return inside.any(axis=1)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "extent": list(self.extent),
            "seed": self.seed,
            "buildings": [b.to_dict() for b in self.buildings]
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'CityMap':
        return cls(
            extent=tuple(float(v) for v in data["extent"]),
            buildings=tuple(Building(**b) for b in data.get("buildings", [])),
            seed=data.get("seed")
        )


def _as_extent(extent: Union[float, Sequence[float]]) -> Tuple[float, float]:
    if np.isscalar(extent):
        return float(extent), float(extent)
    width, depth = extent
    return float(width), float(depth)


def clamped_rayleigh_mean(scale: float, height_range: Tuple[float, float]) -> float:
    """截断到 [lo, hi] 后瑞利分布的均值 (闭式)"""
    lo, hi = height_range
    k = scale * np.sqrt(2.0)
    return lo + scale * np.sqrt(np.pi / 2.0) * (erf(hi / k) - erf(lo / k))


def rayleigh_scale_for_mean(mean_height: float, height_range: Tuple[float, float] = DEFAULT_HEIGHT_RANGE) -> float:
    """求解瑞利尺度参数, 使截断后的均值等于目标平均高度"""
    lo, hi = height_range
    if not lo < mean_height < hi:
        raise ValueError(f"平均高度 {mean_height} 必须位于高度范围 ({lo}, {hi}) 内部")
    return brentq(lambda s: clamped_rayleigh_mean(s, height_range) - mean_height, 1e-6, 1e4, xtol=1e-12)


def generate_city(extent: Union[float, Sequence[float]] = 600.0,
                  street_pitch: float = 60.0,
                  building_fill: float = 1.0,
                  height_range: Tuple[float, float] = DEFAULT_HEIGHT_RANGE,
                  mean_height: float = 14.0,
                  seed: Optional[int] = None,
                  street_width: float = DEFAULT_STREET_WIDTH) -> CityMap:
    """生成规则街区的城市地图, 建筑高度服从截断瑞利分布"""
    width, depth = _as_extent(extent)
    if street_pitch <= 0:
        raise ValueError(f"街区间距必须为正: {street_pitch}")
    if not 0.0 <= street_width < street_pitch:
        raise ValueError(f"街道宽度 {street_width} 必须小于街区间距 {street_pitch}")
    if not 0.0 <= building_fill <= 1.0:
        raise ValueError(f"建筑填充率必须位于 [0, 1]: {building_fill}")
    if mean_height <= 0:
        raise ValueError(f"平均高度必须为正: {mean_height}")

    nx_blocks = int(np.floor(width / street_pitch))
    ny_blocks = int(np.floor(depth / street_pitch))
    if nx_blocks < 1 or ny_blocks < 1:
        raise ValueError(f"地图范围 {width}×{depth} 容纳不下一个街区 (间距 {street_pitch})")

    lo, hi = height_range
    rng = np.random.default_rng(seed)
    n_blocks = nx_blocks * ny_blocks
    # 先统一抽样再按填充率筛选, 保证相同种子下抽样序列一致
    present = rng.random(n_blocks) < building_fill
    if building_fill > 0:
        scale = rayleigh_scale_for_mean(mean_height, height_range)
        heights = np.clip(rng.rayleigh(scale, n_blocks), lo, hi)
    else:
        heights = np.zeros(n_blocks)

    half = street_width / 2.0
    buildings: List[Building] = []
    for idx in range(n_blocks):
        if not present[idx]:
            continue
        i, j = divmod(idx, ny_blocks)
        buildings.append(Building(
            x_min=i * street_pitch + half,
            x_max=(i + 1) * street_pitch - half,
            y_min=j * street_pitch + half,
            y_max=(j + 1) * street_pitch - half,
            height=float(heights[idx])
        ))

    city = CityMap(extent=(width, depth), buildings=tuple(buildings), seed=seed)
    logger.debug(f"城市地图生成完成: {len(buildings)} 栋建筑, 最高 {city.tallest:.1f} m, 种子 {seed}")
    return city


def place_nodes(city: CityMap, K: int, seed: Optional[int] = None, max_attempts: int = 100000) -> List[GroundNode]:
    """在街道区域内均匀放置 K 个地面节点"""
    if K < 1:
        raise ValueError(f"节点数量必须至少为 1: {K}")
    width, depth = city.extent
    rng = np.random.default_rng(seed)
    accepted: List[np.ndarray] = []
    drawn = 0
    while len(accepted) < K and drawn < max_attempts:
        batch = rng.random((max(4 * K, 64), 2)) * np.array([width, depth])
        drawn += len(batch)
        free = ~city.inside_footprint(batch)
        accepted.extend(batch[free][:K - len(accepted)])
    if len(accepted) < K:
        raise ValueError(f"没有可用的街道区域放置节点 (尝试 {drawn} 次)")
    return [GroundNode(id=k, position=(float(p[0]), float(p[1]), 0.0)) for k, p in enumerate(accepted)]


def los_batch(city: CityMap, points: np.ndarray, node: Sequence[float]) -> np.ndarray:
    """批量视距判断: 返回每个空中点到节点的线段是否避开全部建筑

    采用 slab 法精确求线段与包围盒的交, 擦边接触按非视距处理.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    target = np.asarray(node, dtype=float)
    if not city.buildings:
        return np.ones(len(pts), dtype=bool)

    lo, hi = city.boxes
    direction = target[None, :] - pts                  # (m, 3)
    t_enter = np.zeros((len(pts), len(lo)))
    t_exit = np.ones((len(pts), len(lo)))
    with np.errstate(divide='ignore', invalid='ignore'):
        for axis in range(3):
            d = direction[:, axis:axis + 1]
            p = pts[:, axis:axis + 1]
            flat = np.abs(d) < 1e-15
            t1 = (lo[None, :, axis] - p) / d
            t2 = (hi[None, :, axis] - p) / d
            near = np.where(flat, -np.inf, np.minimum(t1, t2))
            far = np.where(flat, np.inf, np.maximum(t1, t2))
            # 平行于该轴且位于 slab 外的线段不可能相交
            outside = flat & ((p < lo[None, :, axis]) | (p > hi[None, :, axis]))
            t_enter = np.maximum(t_enter, near)
            t_exit = np.where(outside, -1.0, np.minimum(t_exit, far))
    blocked = (t_enter <= t_exit).any(axis=1)
    return ~blocked


def los_check(city: CityMap, uav: Sequence[float], node: Sequence[float]) -> Segment:
    """判断无人机与地面节点之间是否视距"""
    if uav[2] <= 0:
        raise ValueError(f"无人机高度必须为正: {uav[2]}")
    return Segment.LOS if los_batch(city, np.asarray(uav, dtype=float), node)[0] else Segment.NLOS


def save_city(city: CityMap, path: str) -> None:
    """保存地图为 JSON"""
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(city.to_dict(), f, indent=2, sort_keys=True)
    logger.info(f"地图已保存: {path}")


def load_city(path: str) -> CityMap:
    """从 JSON 读取地图"""
    with open(path, 'r', encoding='utf-8') as f:
        return CityMap.from_dict(json.load(f))
