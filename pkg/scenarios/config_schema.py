import hashlib
import json
import logging
from enum import Enum
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from config import Config
from channel.model import ChannelParams
from planners.comm_planner import CommConfig

logger = logging.getLogger(__name__)

SCHEMA_VERSION = Config.SCENARIO_CONFIG['schema_version']


class Variant(str, Enum):
    """通信轨迹的三种方案"""
    MAP_BASED = "map_based"
    PROBABILISTIC = "probabilistic"
    DETERMINISTIC = "deterministic"


class _Section(BaseModel):
    model_config = ConfigDict(extra='forbid')


class MapSection(_Section):
    extent: float = Config.CITY_CONFIG['extent']
    street_pitch: float = Config.CITY_CONFIG['street_pitch']
    street_width: float = Config.CITY_CONFIG['street_width']
    building_fill: float = Field(Config.CITY_CONFIG['building_fill'], ge=0.0, le=1.0)
    height_range: Tuple[float, float] = Config.CITY_CONFIG['height_range']
    mean_height: float = Config.CITY_CONFIG['mean_height']


class ChannelSection(_Section):
    alpha_los: float = Config.CHANNEL_CONFIG['alpha_los']
    alpha_nlos: float = Config.CHANNEL_CONFIG['alpha_nlos']
    beta_los_db: float = Config.CHANNEL_CONFIG['beta_los_db']
    beta_nlos_db: float = Config.CHANNEL_CONFIG['beta_nlos_db']
    sigma2_los: float = Config.CHANNEL_CONFIG['sigma2_los']
    sigma2_nlos: float = Config.CHANNEL_CONFIG['sigma2_nlos']

    def to_params(self) -> ChannelParams:
        return ChannelParams(**self.model_dump())


class LearningSection(_Section):
    enabled: bool = True
    x_b: Tuple[float, float, float] = Config.LEARNING_CONFIG['x_b']
    x_t: Tuple[float, float, float] = Config.LEARNING_CONFIG['x_t']
    T_l: float = Config.LEARNING_CONFIG['T_l']
    a_h: float = Field(Config.LEARNING_CONFIG['a_h'], gt=0)
    a_v: float = Field(Config.LEARNING_CONFIG['a_v'], gt=0)
    h_min: float = Config.LEARNING_CONFIG['h_min']
    h_max: float = Config.LEARNING_CONFIG['h_max']
    v_max: float = Field(Config.LEARNING_CONFIG['v_max'], gt=0)
    epsilon: float = Field(Config.LEARNING_CONFIG['epsilon'], gt=0)
    random_trajectories: int = Field(Config.LEARNING_CONFIG['random_trajectories'], ge=0)
    mse_trials: int = Field(Config.LEARNING_CONFIG['mse_trials'], ge=1)


class CompressionSection(_Section):
    samples: int = Field(Config.COMPRESSION_CONFIG['samples'], ge=100)
    radius: float = Field(Config.COMPRESSION_CONFIG['radius'], gt=0)
    l2: float = Field(Config.COMPRESSION_CONFIG['l2'], ge=0)
    tol: float = Config.COMPRESSION_CONFIG['tol']
    max_iter: int = Config.COMPRESSION_CONFIG['max_iter']
    holdout: float = Field(Config.COMPRESSION_CONFIG['holdout'], ge=0.0, lt=1.0)


class CommSection(_Section):
    T_c: float = Field(Config.COMM_CONFIG['T_c'], gt=0)
    N_c: Optional[int] = Config.COMM_CONFIG['N_c']
    v_max: float = Field(Config.COMM_CONFIG['v_max'], ge=0)
    h_min: float = Config.COMM_CONFIG['h_min']
    h_max: float = Config.COMM_CONFIG['h_max']
    power_dbm: float = Config.COMM_CONFIG['power_dbm']
    noise_dbm: float = Config.COMM_CONFIG['noise_dbm']
    loop: bool = Config.COMM_CONFIG['loop']
    eps: float = Field(Config.COMM_CONFIG['eps'], gt=0)
    max_iter: int = Field(Config.COMM_CONFIG['max_iter'], ge=1)
    trust_radius: float = Field(Config.COMM_CONFIG['trust_radius'], gt=0)
    trust_altitude: float = Field(Config.COMM_CONFIG['trust_altitude'], gt=0)
    max_halvings: int = Field(Config.COMM_CONFIG['max_halvings'], ge=0)
    exact_epigraph: bool = Config.COMM_CONFIG['exact_epigraph']

    def to_comm_config(self, extent: Optional[Tuple[float, float]] = None) -> CommConfig:
        return CommConfig(**self.model_dump(), extent=extent)


class ScenarioConfig(_Section):
    """场景配置: 地图 → 学习 → 压缩 → 通信 → 评估 全流程的参数"""
    schema_version: int = SCHEMA_VERSION
    K: int = Field(Config.SCENARIO_CONFIG['K'], ge=1)
    seeds: List[int] = Field(default_factory=lambda: list(Config.SCENARIO_CONFIG['seeds']))
    trials: int = Field(Config.SCENARIO_CONFIG['trials'], ge=1)
    calibration_points: int = Field(50, ge=3)
    variants: List[Variant] = Field(default_factory=lambda: [Variant(v) for v in Config.SCENARIO_CONFIG['variants']])
    parameter_source: List[Literal['true', 'learned']] = Field(
        default_factory=lambda: [Config.SCENARIO_CONFIG['parameter_source']])
    map: MapSection = Field(default_factory=MapSection)
    channel: ChannelSection = Field(default_factory=ChannelSection)
    learning: LearningSection = Field(default_factory=LearningSection)
    compression: CompressionSection = Field(default_factory=CompressionSection)
    comm: CommSection = Field(default_factory=CommSection)

    @model_validator(mode='after')
    def check_consistency(self) -> 'ScenarioConfig':
        if self.schema_version != SCHEMA_VERSION:
            raise ValueError(f"不支持的配置版本 {self.schema_version}, 当前版本 {SCHEMA_VERSION}")
        tallest_possible = self.map.height_range[1]
        if self.comm.h_min < tallest_possible:
            raise ValueError(f"通信最低高度 {self.comm.h_min} 低于建筑高度上限 {tallest_possible}")
        if self.learning.h_min < tallest_possible:
            raise ValueError(f"学习最低高度 {self.learning.h_min} 低于建筑高度上限 {tallest_possible}")
        if self.comm.h_max < self.comm.h_min or self.learning.h_max < self.learning.h_min:
            raise ValueError("高度范围无效: h_max 小于 h_min")
        for name in ("x_b", "x_t"):
            point = getattr(self.learning, name)
            if not self._on_grid(point):
                raise ValueError(f"{name}={point} 不在路径图格点上")
        if "learned" in self.parameter_source and not self.learning.enabled:
            raise ValueError("使用学习得到的信道参数需要开启学习阶段")
        if not self.seeds:
            raise ValueError("至少需要一个随机种子")
        return self

    def _on_grid(self, point: Tuple[float, float, float]) -> bool:
        lr = self.learning
        x, y, z = point
        steps = [x / lr.a_h, y / lr.a_h, (z - lr.h_min) / lr.a_v]
        aligned = all(abs(s - round(s)) < 1e-6 for s in steps)
        return aligned and 0 <= x <= self.map.extent and 0 <= y <= self.map.extent and lr.h_min <= z <= lr.h_max

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode='json'), sort_keys=True, separators=(',', ':'))

    def config_hash(self) -> str:
        """规范 JSON 的 SHA-256 前 12 位, 作为结果溯源标识"""
        return hashlib.sha256(self.canonical_json().encode('utf-8')).hexdigest()[:12]

    def with_override(self, dotted: str, value: Any) -> 'ScenarioConfig':
        """按点分路径覆盖单个字段, 返回重新校验后的新配置"""
        data = self.model_dump(mode='json')
        node = data
        keys = dotted.split('.')
        for key in keys[:-1]:
            if key not in node or not isinstance(node[key], dict):
                raise ValueError(f"未知的配置字段: {dotted}")
            node = node[key]
        if keys[-1] not in node:
            raise ValueError(f"未知的配置字段: {dotted}")
        node[keys[-1]] = value
        return ScenarioConfig.model_validate(data)

    def with_overrides(self, overrides: Dict[str, Any]) -> 'ScenarioConfig':
        config = self
        for dotted, value in overrides.items():
            config = config.with_override(dotted, value)
        return config


def load_scenario(path: Optional[str] = None) -> ScenarioConfig:
    """读取 JSON 场景文件, 未给出路径时使用默认配置"""
    if path is None:
        return ScenarioConfig()
    with open(path, 'r', encoding='utf-8') as f:
        config = ScenarioConfig.model_validate(json.load(f))
    logger.info(f"已加载场景配置 {path} (hash {config.config_hash()})")
    return config


def save_scenario(config: ScenarioConfig, path: str) -> None:
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(config.model_dump(mode='json'), f, indent=2, sort_keys=True)


def parse_value(text: str) -> Any:
    """CLI 覆盖值按 JSON 解析, 失败时按字符串处理"""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text
