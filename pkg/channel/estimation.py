import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from citymap.geometry import Segment
from .model import ChannelParams, Measurement, phi_db

logger = logging.getLogger(__name__)

SEGMENTS = (Segment.LOS, Segment.NLOS)


def design_rows(distances) -> np.ndarray:
    """设计矩阵行 a_i = [-10log10(d_i), 1]"""
    d = np.atleast_1d(np.asarray(distances, dtype=float))
    return np.column_stack([-phi_db(d), np.ones_like(d)])


def inversion_lemma_update(H: np.ndarray, rows: np.ndarray) -> Tuple[float, np.ndarray]:
    """矩阵求逆引理: 返回误差改善量 r 以及更新后的 H"""
    if len(rows) == 0:
        return 0.0, H
    X = rows @ H
    S = np.eye(len(rows)) + X @ rows.T
    Y = np.linalg.solve(S, X)
    r = float(np.sum(X * Y))
    return r, H - X.T @ Y


@dataclass(frozen=True)
class ErrorTrace:
    """估计误差 tr(H); 秩不足时为显式的无穷状态"""
    rank: int
    trace: float

    @property
    def finite(self) -> bool:
        return self.rank == 2

    @property
    def value(self) -> float:
        return self.trace if self.finite else math.inf

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True, eq=False)
class SegmentGram:
    """单个传播段的信息矩阵 G = AᵀA, 右端向量 Aᵀg 以及 gᵀg"""
    gram: np.ndarray = field(default_factory=lambda: np.zeros((2, 2)))
    rhs: np.ndarray = field(default_factory=lambda: np.zeros(2))
    sum_sq: float = 0.0
    count: int = 0
    rank: int = field(init=False)
    H: Optional[np.ndarray] = field(init=False, repr=False)

    def __post_init__(self):
        rank = int(np.linalg.matrix_rank(self.gram)) if self.count else 0
        object.__setattr__(self, 'rank', rank)
        object.__setattr__(self, 'H', np.linalg.inv(self.gram) if rank == 2 else None)

    def add(self, rows: np.ndarray, gains: Optional[np.ndarray] = None) -> 'SegmentGram':
        if len(rows) == 0:
            return self
        g = np.zeros(len(rows)) if gains is None else np.asarray(gains, dtype=float)
        return SegmentGram(
            gram=self.gram + rows.T @ rows,
            rhs=self.rhs + rows.T @ g,
            sum_sq=self.sum_sq + float(g @ g),
            count=self.count + len(rows)
        )

    def error(self) -> ErrorTrace:
        if self.rank == 2:
            return ErrorTrace(rank=2, trace=float(np.trace(self.H)))
        return ErrorTrace(rank=self.rank, trace=math.inf)


@dataclass(frozen=True, eq=False)
class GramAccumulator:
    """按传播段累积的信息矩阵 (值类型, 每次更新返回新对象)"""
    los: SegmentGram = field(default_factory=SegmentGram)
    nlos: SegmentGram = field(default_factory=SegmentGram)

    def segment(self, segment: Segment) -> SegmentGram:
        return self.los if segment is Segment.LOS else self.nlos

    def replace(self, segment: Segment, value: SegmentGram) -> 'GramAccumulator':
        if segment is Segment.LOS:
            return GramAccumulator(los=value, nlos=self.nlos)
        return GramAccumulator(los=self.los, nlos=value)


def split_batch(batch: Iterable[Measurement]) -> Dict[Segment, Tuple[np.ndarray, np.ndarray]]:
    """把测量按传播段拆分为 (设计矩阵, 增益向量)"""
    grouped: Dict[Segment, List[Measurement]] = {seg: [] for seg in SEGMENTS}
    for m in batch:
        grouped[m.segment].append(m)
    return {
        seg: (design_rows([m.distance for m in ms]).reshape(-1, 2), np.array([m.gain_db for m in ms], dtype=float))
        for seg, ms in grouped.items()
    }


def accumulate(acc: GramAccumulator, batch: Sequence[Measurement]) -> GramAccumulator:
    """把一批测量累积进信息矩阵"""
    if not batch:
        return acc
    for seg, (rows, gains) in split_batch(batch).items():
        acc = acc.replace(seg, acc.segment(seg).add(rows, gains))
    return acc


@dataclass(frozen=True, eq=False)
class SegmentEstimate:
    """单个传播段的估计结果"""
    omega_hat: Optional[np.ndarray]
    error: ErrorTrace
    count: int
    sigma2_hat: Optional[float] = None

    def to_dict(self):
        return {
            "alpha_hat": None if self.omega_hat is None else float(self.omega_hat[0]),
            "beta_hat_db": None if self.omega_hat is None else float(self.omega_hat[1]),
            "error_trace": self.error.value if self.error.finite else "inf",
            "count": self.count,
            "sigma2_hat": self.sigma2_hat
        }


@dataclass(frozen=True, eq=False)
class ParamEstimate:
    """最大似然估计的信道参数及误差"""
    los: SegmentEstimate
    nlos: SegmentEstimate

    def segment(self, segment: Segment) -> SegmentEstimate:
        return self.los if segment is Segment.LOS else self.nlos

    def weighted_error(self, kappa: float) -> float:
        """学习目标 e_LoS + κ e_NLoS"""
        return self.los.error.value + kappa * self.nlos.error.value

    def mse(self, params: ChannelParams) -> float:
        """总估计误差 σ²_LoS (e_LoS + κ e_NLoS)"""
        return params.sigma2_los * self.weighted_error(params.kappa)

    def to_channel_params(self, fallback: ChannelParams) -> ChannelParams:
        """用估计值构造信道参数, 缺失的段沿用 fallback"""
        values = fallback.to_dict()
        for seg, suffix in ((Segment.LOS, 'los'), (Segment.NLOS, 'nlos')):
            est = self.segment(seg)
            if est.omega_hat is not None:
                values[f'alpha_{suffix}'] = float(est.omega_hat[0])
                values[f'beta_{suffix}_db'] = float(est.omega_hat[1])
            if est.sigma2_hat is not None and est.sigma2_hat > 0:
                values[f'sigma2_{suffix}'] = float(est.sigma2_hat)
        if values['alpha_nlos'] < values['alpha_los'] or values['sigma2_nlos'] < values['sigma2_los']:
            logger.warning(f"估计参数违反段间次序, 按次序截断: {values}")
            values['alpha_nlos'] = max(values['alpha_nlos'], values['alpha_los'])
            values['sigma2_nlos'] = max(values['sigma2_nlos'], values['sigma2_los'])
        return ChannelParams(**values)

    def to_dict(self):
        return {"LoS": self.los.to_dict(), "NLoS": self.nlos.to_dict()}


def _estimate_segment(sg: SegmentGram) -> SegmentEstimate:
    if sg.rank < 2:
        return SegmentEstimate(omega_hat=None, error=sg.error(), count=sg.count)
    omega = sg.H @ sg.rhs
    sigma2 = None
    if sg.count > 2:
        rss = max(sg.sum_sq - float(omega @ sg.rhs), 0.0)
        sigma2 = rss / (sg.count - 2)
    return SegmentEstimate(omega_hat=omega, error=sg.error(), count=sg.count, sigma2_hat=sigma2)


def mle_estimate(acc: GramAccumulator) -> ParamEstimate:
    """由正规方程求最大似然估计 ω̂ = (ĀᵀĀ)⁻¹Āᵀḡ"""
    return ParamEstimate(los=_estimate_segment(acc.los), nlos=_estimate_segment(acc.nlos))


@dataclass(frozen=True)
class Improvement:
    """一次测量带来的误差改善量"""
    value: float
    defined: bool


def improvement_r(acc_before: GramAccumulator, batch: Sequence[Measurement]) -> Dict[Segment, Improvement]:
    """计算每个传播段的误差改善量 r_s[n]"""
    result = {}
    parts = split_batch(batch)
    for seg in SEGMENTS:
        rows, _ = parts[seg]
        sg = acc_before.segment(seg)
        if sg.H is None:
            # 先验信息矩阵秩不足时改善量无定义
            result[seg] = Improvement(value=0.0, defined=len(rows) == 0)
            continue
        r, _ = inversion_lemma_update(sg.H, rows)
        result[seg] = Improvement(value=r, defined=True)
    return result


@dataclass(frozen=True)
class PooledFit:
    """忽略传播段的单段路径损耗拟合"""
    alpha: float
    beta_db: float
    sigma2: float
    count: int

    def to_dict(self):
        return {"alpha": self.alpha, "beta_db": self.beta_db, "sigma2": self.sigma2, "count": self.count}


def fit_pooled(measurements: Sequence[Measurement]) -> PooledFit:
    """对全部测量 (视距+非视距) 做单段最小二乘拟合"""
    if len(measurements) < 3:
        raise ValueError(f"单段拟合至少需要 3 条测量, 实际 {len(measurements)}")
    rows = design_rows([m.distance for m in measurements])
    gains = np.array([m.gain_db for m in measurements])
    omega, _, rank, _ = np.linalg.lstsq(rows, gains, rcond=None)
    if rank < 2:
        raise ValueError("测量距离全部相同, 单段拟合秩不足")
    residual = gains - rows @ omega
    sigma2 = float(residual @ residual) / (len(gains) - 2)
    return PooledFit(alpha=float(omega[0]), beta_db=float(omega[1]), sigma2=sigma2, count=len(gains))
