import logging
from dataclasses import dataclass, asdict
from typing import Dict, List, Any, Sequence

import numpy as np
import pandas as pd

from citymap.geometry import CityMap, GroundNode, Segment, los_batch

logger = logging.getLogger(__name__)

D_MIN = 1.0


@dataclass(frozen=True)
class ChannelParams:
    """分段对数距离信道参数 (视距/非视距)"""
    alpha_los: float = 2.27
    alpha_nlos: float = 3.64
    beta_los_db: float = -30.0
    beta_nlos_db: float = -40.0
    sigma2_los: float = 2.0
    sigma2_nlos: float = 5.0

    def __post_init__(self):
        if not self.alpha_nlos >= self.alpha_los > 0:
            raise ValueError(f"路径损耗指数需满足 alpha_nlos >= alpha_los > 0: {self.alpha_los}, {self.alpha_nlos}")
        if not self.sigma2_nlos >= self.sigma2_los > 0:
            raise ValueError(f"阴影方差需满足 sigma2_nlos >= sigma2_los > 0: {self.sigma2_los}, {self.sigma2_nlos}")

    @property
    def kappa(self) -> float:
        return self.sigma2_nlos / self.sigma2_los

    def alpha(self, segment: Segment) -> float:
        return self.alpha_los if segment is Segment.LOS else self.alpha_nlos

    def beta_db(self, segment: Segment) -> float:
        return self.beta_los_db if segment is Segment.LOS else self.beta_nlos_db

    def sigma2(self, segment: Segment) -> float:
        return self.sigma2_los if segment is Segment.LOS else self.sigma2_nlos

    def omega(self, segment: Segment) -> np.ndarray:
        """待估参数向量 (alpha, beta_db)"""
        return np.array([self.alpha(segment), self.beta_db(segment)])

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ChannelParams':
        return cls(**{k: float(v) for k, v in data.items() if k in cls.__dataclass_fields__})


@dataclass(frozen=True)
class Measurement:
    """单次信道增益测量"""
    node_id: int
    uav_position: tuple
    distance: float
    segment: Segment
    gain_db: float
    slot: int = 0

    def to_dict(self) -> Dict[str, Any]:
        x, y, z = self.uav_position
        return {
            "slot": self.slot,
            "node_id": self.node_id,
            "x": x,
            "y": y,
            "z": z,
            "d": self.distance,
            "segment": self.segment.value,
            "gain_db": self.gain_db
        }


def phi_db(d):
    """距离的 dB 形式 10log10(d)"""
    return 10.0 * np.log10(d)


def gain_db(params: ChannelParams, d: float, segment: Segment, shadow_db: float = 0.0) -> float:
    """对数距离模型下的信道增益 (dB)"""
    if d < D_MIN:
        raise ValueError(f"距离 {d} 小于下限 {D_MIN} m")
    return params.beta_db(segment) - params.alpha(segment) * phi_db(d) + shadow_db


def link_geometry(city: CityMap, nodes: Sequence[GroundNode], uav_position: Sequence[float]):
    """返回各节点到无人机的距离 (已截断到下限) 与传播段"""
    uav = np.asarray(uav_position, dtype=float)
    distances = np.empty(len(nodes))
    segments: List[Segment] = []
    for k, node in enumerate(nodes):
        d = float(np.linalg.norm(uav - np.asarray(node.position)))
        if d < D_MIN:
            logger.warning(f"节点 {node.id} 距离 {d:.3f} m 小于下限, 截断为 {D_MIN} m")
            d = D_MIN
        distances[k] = d
        segments.append(Segment.LOS if los_batch(city, uav, node.position)[0] else Segment.NLOS)
    return distances, segments


def sample_slot_measurements(city: CityMap, params: ChannelParams, nodes: Sequence[GroundNode],
                             uav_position: Sequence[float], rng: np.random.Generator,
                             slot: int = 0, h_min: float = 0.0,
                             noiseless: bool = False) -> List[Measurement]:
    """一个时隙内每个节点各产生一次测量, 阴影衰落独立同分布"""
    if uav_position[2] < h_min:
        raise ValueError(f"无人机高度 {uav_position[2]} 低于最低高度 {h_min}")
    distances, segments = link_geometry(city, nodes, uav_position)
    position = tuple(float(v) for v in uav_position)
    batch = []
    for node, d, seg in zip(nodes, distances, segments):
        shadow = 0.0 if noiseless else float(rng.normal(0.0, np.sqrt(params.sigma2(seg))))
        batch.append(Measurement(
            node_id=node.id,
            uav_position=position,
            distance=float(d),
            segment=seg,
            gain_db=gain_db(params, float(d), seg, shadow),
            slot=slot
        ))
    return batch


def measurements_to_frame(measurements: Sequence[Measurement]) -> pd.DataFrame:
    columns = ["slot", "node_id", "x", "y", "z", "d", "segment", "gain_db"]
    return pd.DataFrame([m.to_dict() for m in measurements], columns=columns)


def export_measurements(measurements: Sequence[Measurement], path: str) -> None:
    """导出测量日志 CSV"""
    measurements_to_frame(measurements).to_csv(path, index=False)
    logger.info(f"测量日志已导出: {path} ({len(measurements)} 条)")
