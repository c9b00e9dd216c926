import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Any, Sequence

import numpy as np
import pandas as pd
from sklearn.model_selection import train_test_split

from channel.model import D_MIN, ChannelParams
from citymap.geometry import CityMap, GroundNode
from .los_model import LocalLosModel, fit_logistic
from .sampling import TrainingSample, sample_training_set

logger = logging.getLogger(__name__)

GLOBAL_MODEL_ID = -1


def shadow_mean_factor(sigma2_db: float) -> float:
    """dB 域高斯阴影在线性域的均值因子 exp((σ·ln10/10)²/2)"""
    return float(np.exp(sigma2_db * (np.log(10.0) / 10.0) ** 2 / 2.0))


@dataclass
class CompressedMap:
    """压缩地图: 各节点的视距概率模型 + 信道参数"""
    nodes: List[GroundNode]
    models: List[LocalLosModel]
    global_model: LocalLosModel
    params: ChannelParams
    absorb_shadowing: bool = True
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.nodes) != len(self.models):
            raise ValueError(f"节点数 {len(self.nodes)} 与模型数 {len(self.models)} 不一致")

    @property
    def K(self) -> int:
        return len(self.nodes)

    @property
    def node_xy(self) -> np.ndarray:
        return np.array([n.xy for n in self.nodes]).reshape(-1, 2)

    @property
    def alpha_los(self) -> float:
        return self.params.alpha_los

    @property
    def alpha_nlos(self) -> float:
        return self.params.alpha_nlos

    @property
    def beta_los(self) -> float:
        """线性域视距参考增益 (可吸收阴影均值)"""
        factor = shadow_mean_factor(self.params.sigma2_los) if self.absorb_shadowing else 1.0
        return 10.0 ** (self.params.beta_los_db / 10.0) * factor

    @property
    def beta_nlos(self) -> float:
        factor = shadow_mean_factor(self.params.sigma2_nlos) if self.absorb_shadowing else 1.0
        return 10.0 ** (self.params.beta_nlos_db / 10.0) * factor

    @property
    def A(self) -> float:
        return self.alpha_nlos / self.alpha_los

    @property
    def B(self) -> float:
        return self.beta_nlos / self.beta_los

    def slopes(self) -> np.ndarray:
        return np.array([m.a for m in self.models])

    def intercepts(self) -> np.ndarray:
        return np.array([m.b for m in self.models])

    def with_global_model(self) -> 'CompressedMap':
        """概率基线: 所有节点使用全局模型"""
        return replace(self, models=[self.global_model.with_node(n.id) for n in self.nodes])

    def with_params(self, params: ChannelParams) -> 'CompressedMap':
        """替换信道参数 (视距模型只依赖几何, 保持不变)"""
        return replace(self, params=params)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "nodes": [n.to_dict() for n in self.nodes],
            "models": [m.to_dict() for m in self.models],
            "global": {"a": self.global_model.a, "b": self.global_model.b,
                       "diagnostics": self.global_model.diagnostics.to_dict()},
            "params": self.params.to_dict(),
            "absorb_shadowing": self.absorb_shadowing,
            "constants": {"A": self.A, "B": self.B, "beta_los": self.beta_los, "beta_nlos": self.beta_nlos},
            "metadata": self.metadata
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'CompressedMap':
        nodes = [GroundNode(id=n["id"], position=tuple(n["position"])) for n in data["nodes"]]
        global_data = data["global"]
        return cls(
            nodes=nodes,
            models=[LocalLosModel.from_dict(m) for m in data["models"]],
            global_model=LocalLosModel.from_dict({"node_id": GLOBAL_MODEL_ID, "a_k": global_data["a"],
                                                  "b_k": global_data["b"],
                                                  "diagnostics": global_data.get("diagnostics", {})}),
            params=ChannelParams.from_dict(data["params"]),
            absorb_shadowing=data.get("absorb_shadowing", True),
            metadata=data.get("metadata", {})
        )


def los_probability(model: LocalLosModel, z, r):
    """视距概率 p(θ), θ = arctan(z/r)"""
    return model.probability(z, r)


def expected_gain(cmap: CompressedMap, model: LocalLosModel, z, r):
    """期望信道增益 E[γ] = ((d^{(A-1)α_LoS} - B)p + B)·β_LoS/d^{α_NLoS}"""
    z = np.asarray(z, dtype=float)
    r = np.asarray(r, dtype=float)
    d = np.sqrt(z ** 2 + r ** 2)
    if np.any(d < D_MIN):
        raise ValueError(f"链路距离低于下限 {D_MIN} m: 最小 {float(np.min(d)):.3f} m")
    p = model.probability(z, r)
    exponent = (cmap.A - 1.0) * cmap.alpha_los
    gain = ((d ** exponent - cmap.B) * p + cmap.B) * cmap.beta_los / d ** cmap.alpha_nlos
    return float(gain) if gain.ndim == 0 else gain


def fit_global_model(city: CityMap, nodes: Sequence[GroundNode],
                     samples_per_node: Dict[int, Sequence[TrainingSample]],
                     l2: float = 1e-6, tol: float = 1e-8, max_iter: int = 100) -> LocalLosModel:
    """对各节点训练集合并后做一次逻辑回归, 作为全局视距模型"""
    if len(nodes) < 1:
        raise ValueError("全局模型至少需要 1 个节点")
    pooled = [s for node in nodes for s in samples_per_node[node.id]]
    fit = fit_logistic(pooled, l2=l2, tol=tol, max_iter=max_iter)
    if fit.diagnostics.degenerate:
        logger.warning(f"全局视距模型退化 (样本标签单一): a={fit.a:.3f}, b={fit.b:.3f}")
    return LocalLosModel.from_fit(GLOBAL_MODEL_ID, fit)


def compress_map(city: CityMap, nodes: Sequence[GroundNode], params: ChannelParams,
                 M: int = 1500, radius: float = 250.0, h_min: float = 50.0, h_max: float = 100.0,
                 seed: int = 0, l2: float = 1e-6, tol: float = 1e-8, max_iter: int = 100,
                 holdout: float = 0.2, absorb_shadowing: bool = True, workers: int = 1) -> CompressedMap:
    """为每个节点采样并拟合视距模型, 同时拟合全局模型"""

    def prepare(node: GroundNode):
        samples = sample_training_set(city, node, M, radius, h_min, h_max, seed=[seed, node.id])
        if holdout > 0:
            train, test = train_test_split(samples, test_size=holdout,
                                           random_state=(seed * 1009 + node.id) % 2 ** 32)
        else:
            train, test = list(samples), []
        fit = fit_logistic(train, l2=l2, tol=tol, max_iter=max_iter)
        return node, train, test, fit

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            prepared = list(pool.map(prepare, nodes))
    else:
        prepared = [prepare(node) for node in nodes]

    train_sets = {node.id: train for node, train, _, _ in prepared}
    global_model = fit_global_model(city, nodes, train_sets, l2=l2, tol=tol, max_iter=max_iter)

    models = []
    holdout_report = {}
    for node, _, test, fit in prepared:
        model = LocalLosModel.from_fit(node.id, fit)
        if test:
            local_acc = model.evaluate_performance(test)["accuracy"]
            global_acc = global_model.evaluate_performance(test)["accuracy"]
            model.diagnostics.holdout_accuracy = local_acc
            holdout_report[node.id] = {"local": local_acc, "global": global_acc}
        if model.diagnostics.flagged:
            logger.warning(f"节点 {node.id} 的视距模型被标记: {model.diagnostics.to_dict()}")
        models.append(model)

    logger.info(f"地图压缩完成: {len(models)} 个节点模型, 全局模型 a={global_model.a:.3f}, b={global_model.b:.3f}")
    return CompressedMap(
        nodes=list(nodes),
        models=models,
        global_model=global_model,
        params=params,
        absorb_shadowing=absorb_shadowing,
        metadata={"holdout_accuracy": holdout_report, "samples": M, "radius": radius}
    )


def los_curves_frame(cmap: CompressedMap, points: int = 91) -> pd.DataFrame:
    """各节点及全局模型的 (θ, p) 曲线"""
    theta = np.linspace(0.0, np.pi / 2.0, points)
    rows = []
    for model in list(cmap.models) + [cmap.global_model]:
        for t, p in zip(theta, model.predict(theta)):
            rows.append({"node_id": model.node_id, "theta": float(t), "p": float(p)})
    return pd.DataFrame(rows, columns=["node_id", "theta", "p"])


def save_compressed_map(cmap: CompressedMap, path: str) -> None:
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(cmap.to_dict(), f, indent=2, sort_keys=True)
    logger.info(f"压缩地图已保存: {path}")


def load_compressed_map(path: str) -> CompressedMap:
    with open(path, 'r', encoding='utf-8') as f:
        return CompressedMap.from_dict(json.load(f))
