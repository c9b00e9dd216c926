import logging
from dataclasses import replace
from typing import List, Optional, Sequence

import numpy as np

from channel.estimation import PooledFit, fit_pooled
from channel.model import ChannelParams, Measurement, sample_slot_measurements
from citymap.geometry import CityMap, GroundNode
from compression.compressed_map import CompressedMap
from compression.los_model import LocalLosModel
from .comm_planner import CommConfig, CommPlan, bcd_optimize

logger = logging.getLogger(__name__)

# 无噪声标定数据下合并拟合的方差为 0, ChannelParams 要求严格为正
MIN_SIGMA2 = 1e-12


def baseline_probabilistic(cmap: CompressedMap, config: CommConfig, init: Optional[CommPlan] = None) -> CommPlan:
    """概率基线: 所有节点共用全局视距模型"""
    return bcd_optimize(cmap.with_global_model(), config, init)


def deterministic_map(cmap: CompressedMap, pooled: PooledFit) -> CompressedMap:
    """单段确定性地图: 视距概率恒为 1, 视距参数取合并拟合结果

    非视距参数只用于保持 w 的定义域, p ≡ 1 时不影响期望增益.
    """
    params = cmap.params
    sigma2 = max(pooled.sigma2, MIN_SIGMA2)
    single = ChannelParams(
        alpha_los=pooled.alpha,
        # w 的指数 (α_NLoS - α_LoS)/2 至少为 0.5
        alpha_nlos=max(params.alpha_nlos, pooled.alpha + 1.0),
        beta_los_db=pooled.beta_db,
        beta_nlos_db=min(params.beta_nlos_db, pooled.beta_db),
        sigma2_los=sigma2,
        sigma2_nlos=max(params.sigma2_nlos, sigma2)
    )
    return replace(cmap, params=single, models=[LocalLosModel.always_los(n.id) for n in cmap.nodes])


def collect_calibration_measurements(city: CityMap, params: ChannelParams, nodes: Sequence[GroundNode],
                                     rng: np.random.Generator,
                                     waypoints: Optional[Sequence[Sequence[float]]] = None,
                                     count: int = 50, h_min: float = 50.0, h_max: float = 100.0,
                                     noiseless: bool = False) -> List[Measurement]:
    """单段拟合用的测量: 优先使用学习轨迹上的测量, 否则在高度带内随机取点"""
    if waypoints is None:
        width, depth = city.extent
        waypoints = np.column_stack([rng.random(count) * width, rng.random(count) * depth,
                                     h_min + rng.random(count) * (h_max - h_min)])
    measurements: List[Measurement] = []
    for slot, position in enumerate(waypoints):
        measurements.extend(sample_slot_measurements(city, params, nodes, position, rng, slot=slot,
                                                     noiseless=noiseless))
    return measurements


def baseline_deterministic(cmap: CompressedMap, config: CommConfig, measurements: Sequence[Measurement],
                           init: Optional[CommPlan] = None) -> CommPlan:
    """确定性基线: 忽略视距/非视距, 用合并拟合的 (α_avg, β_avg) 规划"""
    pooled = fit_pooled(measurements)
    if not cmap.params.alpha_los <= pooled.alpha <= cmap.params.alpha_nlos:
        logger.warning(f"合并路径损耗指数 {pooled.alpha:.3f} 不在 [{cmap.params.alpha_los}, "
                       f"{cmap.params.alpha_nlos}] 内")
    logger.info(f"确定性基线参数: α_avg={pooled.alpha:.3f}, β_avg={pooled.beta_db:.2f} dB")
    return bcd_optimize(deterministic_map(cmap, pooled), config, init)
