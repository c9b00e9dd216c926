# 通信轨迹子问题用到的容量函数及其一阶泰勒下界
#
# 记 S = P·β_LoS/σ², D = z² + l 为无人机到节点距离的平方, 期望增益写成
#   G(f, w, D) = (1/(w(1+f)) + B)·S·D^{-α_NLoS/2},  c = log2(1 + G)
# 其中 f = exp(-aθ + b), w = 1/(D^{(A-1)α_LoS/2} - B).
# c 对 (f, w, D) 联合凸且逐个单调不增, 下列辅助函数均为凸函数, 切线处处是下界.

import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

LN2 = np.log(2.0)


@dataclass(frozen=True)
class CapacityConstants:
    """容量函数中与位置无关的常数"""
    snr_ref: float
    A: float
    B: float
    alpha_los: float
    alpha_nlos: float

    @property
    def exponent(self) -> float:
        """w 中 D 的指数 (A-1)·α_LoS/2"""
        return (self.A - 1.0) * self.alpha_los / 2.0

    @classmethod
    def from_map(cls, cmap, power_w: float, noise_w: float) -> 'CapacityConstants':
        return cls(
            snr_ref=power_w * cmap.beta_los / noise_w,
            A=cmap.A,
            B=cmap.B,
            alpha_los=cmap.alpha_los,
            alpha_nlos=cmap.alpha_nlos
        )


def gain_factor(f, w, D, const: CapacityConstants):
    """归一化期望增益 G = P·E[γ]/σ²"""
    return (1.0 / (w * (1.0 + f)) + const.B) * const.snr_ref * D ** (-const.alpha_nlos / 2.0)


def capacity(f, w, D, const: CapacityConstants):
    return np.log2(1.0 + gain_factor(f, w, D, const))


def capacity_gradient(f, w, D, const: CapacityConstants):
    """返回 (∂c/∂f, ∂c/∂w, ∂c/∂D), 均非正"""
    f = np.asarray(f, dtype=float)
    w = np.asarray(w, dtype=float)
    D = np.asarray(D, dtype=float)
    path = const.snr_ref * D ** (-const.alpha_nlos / 2.0)
    G = (1.0 / (w * (1.0 + f)) + const.B) * path
    dc_dG = 1.0 / ((1.0 + G) * LN2)
    dG_df = -path / (w * (1.0 + f) ** 2)
    dG_dw = -path / (w ** 2 * (1.0 + f))
    dG_dD = G * (-const.alpha_nlos / 2.0) / D
    return dc_dG * dG_df, dc_dG * dG_dw, dc_dG * dG_dD


def capacity_tangent(f, w, D, f0, w0, D0, const: CapacityConstants):
    """c 在 (f0, w0, D0) 处的一阶泰勒展开"""
    gf, gw, gD = capacity_gradient(f0, w0, D0, const)
    return capacity(f0, w0, D0, const) + gf * (f - f0) + gw * (w - w0) + gD * (D - D0)


def los_factor(theta, a: float, b: float):
    """f(θ) = exp(-aθ + b), 视距概率 p = 1/(1+f)"""
    return np.exp(-a * np.asarray(theta, dtype=float) + b)


def los_factor_tangent(theta, theta0, a: float, b: float):
    f0 = los_factor(theta0, a, b)
    return f0 - a * f0 * (np.asarray(theta, dtype=float) - theta0)


def elevation(l, z: float):
    """θ(l) = arctan(z/√l), l 为水平距离平方"""
    return np.arctan(z / np.sqrt(np.asarray(l, dtype=float)))


def elevation_derivative(l, z: float):
    l = np.asarray(l, dtype=float)
    return -z / (2.0 * np.sqrt(l) * (l + z ** 2))


def elevation_tangent(l, l0, z: float):
    return elevation(l0, z) + elevation_derivative(l0, z) * (np.asarray(l, dtype=float) - l0)


def nlos_factor(D, const: CapacityConstants):
    """w(D) = 1/(D^{(A-1)α_LoS/2} - B), 要求分母为正"""
    D = np.asarray(D, dtype=float)
    denom = D ** const.exponent - const.B
    if np.any(denom <= 0):
        raise ValueError(f"w 的定义域不满足: D^{const.exponent:.4f} - B 最小为 {float(np.min(denom)):.3e}, "
                         f"B = {const.B:.4f}")
    return 1.0 / denom


def nlos_factor_derivative(D, const: CapacityConstants):
    D = np.asarray(D, dtype=float)
    w = nlos_factor(D, const)
    return -w ** 2 * const.exponent * D ** (const.exponent - 1.0)


def nlos_factor_tangent(D, D0, const: CapacityConstants):
    return nlos_factor(D0, const) + nlos_factor_derivative(D0, const) * (np.asarray(D, dtype=float) - D0)


def sq_distance_tangent(v, v0, u):
    """‖v - u‖² 在 v0 处的切线 l̃"""
    v = np.asarray(v, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    u = np.asarray(u, dtype=float)
    diff = v0 - u
    return float(diff @ diff + 2.0 * diff @ (v - v0))


def altitude_los_factor(z, r: float, a: float, b: float):
    """m(z) = exp(-a·arctan(z/r) + b)"""
    return np.exp(-a * np.arctan2(np.asarray(z, dtype=float), r) + b)


def altitude_los_factor_derivative(z, r: float, a: float, b: float):
    z = np.asarray(z, dtype=float)
    return altitude_los_factor(z, r, a, b) * (-a) * r / (r ** 2 + z ** 2)


def altitude_los_factor_tangent(z, z0: float, r: float, a: float, b: float):
    return (altitude_los_factor(z0, r, a, b)
            + altitude_los_factor_derivative(z0, r, a, b) * (np.asarray(z, dtype=float) - z0))


def altitude_nlos_factor(h, r2: float, const: CapacityConstants):
    """o(h) = w(h + r²)"""
    return nlos_factor(np.asarray(h, dtype=float) + r2, const)


def altitude_nlos_factor_tangent(h, h0: float, r2: float, const: CapacityConstants):
    return nlos_factor_tangent(np.asarray(h, dtype=float) + r2, h0 + r2, const)


def square_tangent(z, z0: float):
    """h̃(z) = z0² + 2z0(z - z0)"""
    return z0 ** 2 + 2.0 * z0 * (np.asarray(z, dtype=float) - z0)
