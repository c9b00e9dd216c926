import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from citymap.geometry import CityMap, GroundNode, los_batch

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainingSample:
    """视距概率模型的训练样本"""
    theta: float
    label: int
    uav_position: Tuple[float, float, float]

    def to_dict(self):
        return {"theta": self.theta, "label": self.label, "uav_position": list(self.uav_position)}


def elevation_angle(z, r):
    """仰角 θ = arctan(z / r), r = 0 时为 π/2"""
    return np.arctan2(z, r)


def sample_training_set(city: CityMap, node: GroundNode, M: int = 1500, radius: float = 250.0,
                        h_min: float = 50.0, h_max: float = 100.0, seed=None,
                        max_rounds: int = 100) -> List[TrainingSample]:
    """在节点周围竖直圆柱内均匀采样无人机位置并以射线判定视距标签"""
    if M < 100:
        raise ValueError(f"训练样本数至少为 100: {M}")
    if radius <= 0:
        raise ValueError(f"采样半径必须为正: {radius}")
    if not 0 < h_min <= h_max:
        raise ValueError(f"采样高度区间无效: [{h_min}, {h_max}]")

    width, depth = city.extent
    nx0, ny0, _ = node.position
    if nx0 + radius < 0 or nx0 - radius > width or ny0 + radius < 0 or ny0 - radius > depth:
        raise ValueError(f"节点 {node.id} 的采样圆柱与地图范围不相交")

    rng = np.random.default_rng(seed)
    kept: List[np.ndarray] = []
    total = 0
    for _ in range(max_rounds):
        r = radius * np.sqrt(rng.random(2 * M))
        ang = rng.uniform(0.0, 2.0 * np.pi, 2 * M)
        z = rng.uniform(h_min, h_max, 2 * M)
        pts = np.column_stack([nx0 + r * np.cos(ang), ny0 + r * np.sin(ang), z])
        pts = pts[city.inside_extent(pts)]
        kept.append(pts)
        total += len(pts)
        if total >= M:
            break
    if total < M:
        raise ValueError(f"节点 {node.id} 的采样圆柱与地图交集过小, 仅得到 {total} 个样本")

    positions = np.vstack(kept)[:M]
    horizontal = np.hypot(positions[:, 0] - nx0, positions[:, 1] - ny0)
    theta = elevation_angle(positions[:, 2], horizontal)
    labels = los_batch(city, positions, node.position).astype(int)
    return [TrainingSample(theta=float(t), label=int(y), uav_position=tuple(float(v) for v in p))
            for t, y, p in zip(theta, labels, positions)]


def samples_to_arrays(samples: Sequence[TrainingSample]) -> Tuple[np.ndarray, np.ndarray]:
    theta = np.array([s.theta for s in samples], dtype=float)
    labels = np.array([s.label for s in samples], dtype=float)
    return theta, labels
