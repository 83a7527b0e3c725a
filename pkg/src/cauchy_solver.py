#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Cauchy 问题求解模块
在周期网格上（n = 1）对初值做离散 Fourier 变换，逐模态积分后反变换，
得到 u 及其时间导数 D_t^j u，并由二进频率壳估计 Sobolev 导数损失
"""

import os
import json
import math
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from src.errors import NumericalAbort, SpecValidationError
from src.mode_solver import H_MAX, RTOL, classify_growth, integrate_mode, regularity_tag
from src.task_pool import ModeTaskPool

logger = logging.getLogger("HypAn.Cauchy")

MIN_GRID = 16
NYQUIST_TOL = 1e-12
T0_TOL = 1e-12


def _is_power_of_two(n):
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(eq=False)
class CauchyData:
    """周期网格上的初值 g_j = D_t^j u(t0, x)，j = 0..m-1

    Args:
        g: 形状 (m, N) 的复数网格函数
        period: 周期 L，网格 x_k = x0 + kL/N
        t0: 初始时刻
        x0: 网格起点
    """
    g: np.ndarray
    period: float = 2.0 * math.pi
    t0: float = 0.0
    x0: float = 0.0

    def __post_init__(self):
        self.g = np.atleast_2d(np.asarray(self.g, dtype=complex))
        self.period = float(self.period)
        self.t0 = float(self.t0)
        self.x0 = float(self.x0)
        N = self.g.shape[1]
        if not _is_power_of_two(N) or N < MIN_GRID:
            raise SpecValidationError(f"网格点数必须是 ≥{MIN_GRID} 的 2 的幂，收到 {N}")
        if not self.period > 0.0 or not math.isfinite(self.period):
            raise SpecValidationError(f"周期必须为正有限数，收到 {self.period}")
        if not np.all(np.isfinite(self.g)):
            raise SpecValidationError("初值中含有 NaN/Inf")

    @property
    def m(self):
        return self.g.shape[0]

    @property
    def N(self):
        return self.g.shape[1]

    @property
    def x_grid(self):
        return self.x0 + self.period * np.arange(self.N) / self.N

    @property
    def frequencies(self):
        return 2.0 * math.pi * np.fft.fftfreq(self.N, d=self.period / self.N)


@dataclass(eq=False)
class CauchySolution:
    """各输出时刻的解

    dtu[i, j] 为 t_out[i] 处的 D_t^j u，dtu[i, 0] 即 u。
    """
    t_out: np.ndarray
    x_grid: np.ndarray
    dtu: np.ndarray
    xi: np.ndarray
    V: np.ndarray
    regularity: str = ""
    skipped_modes: int = 0
    steps: int = 0

    @property
    def u(self):
        return self.dtu[:, 0, :]

    def max_imag_ratio(self):
        """max|Im u| / ‖u‖∞，用于检查实性"""
        scale = float(np.max(np.abs(self.u)))
        if scale == 0.0:
            return 0.0
        return float(np.max(np.abs(self.u.imag))) / scale

    def to_frame(self, index):
        """第 index 个输出时刻的网格数据表"""
        data = {"x": self.x_grid}
        for j in range(self.dtu.shape[1]):
            prefix = "u" if j == 0 else f"dtu{j}"
            data[f"{prefix}_re"] = self.dtu[index, j].real
            data[f"{prefix}_im"] = self.dtu[index, j].imag
        return pd.DataFrame(data)

    def summary(self):
        return {
            "t_out": self.t_out.tolist(),
            "N": int(len(self.x_grid)),
            "m": int(self.dtu.shape[1]),
            "max_abs_u": [float(np.max(np.abs(u))) for u in self.u],
            "max_imag_ratio": self.max_imag_ratio(),
            "skipped_modes": self.skipped_modes,
            "steps": self.steps,
            "regularity": self.regularity,
        }


def transform_data(data):
    """V0(ξ_k)_l = ⟨ξ_k⟩^{m-l} ĝ_{l-1}(ξ_k)

    Returns:
        tuple: (ξ_k 数组 (N,), V0 数组 (N, m))
    """
    xi = data.frequencies
    phase = np.exp(-1j * xi * data.x0)
    g_hat = np.fft.fft(data.g, axis=1) / data.N * phase
    nyquist = data.N // 2
    level = float(np.max(np.abs(g_hat[:, nyquist])))
    if level > NYQUIST_TOL * max(1.0, float(np.max(np.abs(g_hat)))):
        logger.warning(f"Nyquist 模态的幅度 {level:.3e} 不可忽略，已置零")
    g_hat[:, nyquist] = 0.0
    bracket = np.sqrt(1.0 + xi ** 2)
    m = data.m
    V0 = np.empty((data.N, m), dtype=complex)
    for l in range(1, m + 1):
        V0[:, l - 1] = bracket ** (m - l) * g_hat[l - 1]
    return xi, V0


def inverse_transform(xi, V, x0=0.0):
    """由模态解 V(ξ_k) 重建 D_t^j u = F^{-1}[⟨ξ⟩^{-(m-1-j)} V_{j+1}]

    Returns:
        np.ndarray: 形状 (m, N)
    """
    N, m = V.shape
    bracket = np.sqrt(1.0 + xi ** 2)
    phase = np.exp(1j * xi * x0)
    out = np.empty((m, N), dtype=complex)
    for j in range(m):
        out[j] = np.fft.ifft(bracket ** (j - (m - 1)) * V[:, j] * phase) * N
    return out


def _propagate(spec, data, times, pool, h_max, rtol):
    """把全部非零模态从 t0 积分到 times 中每个时刻，返回 (ξ, V0, V[时刻, 模态, 分量], 统计)"""
    if spec.n != 1:
        raise SpecValidationError(f"完整 Cauchy 求解只支持 n = 1，收到 n = {spec.n}")
    if data.m != spec.m:
        raise SpecValidationError(f"初值个数 {data.m} 与 m = {spec.m} 不一致")
    spec.check_time(data.t0)
    if abs(data.t0 - spec.a) > T0_TOL:
        logger.warning(f"t0={data.t0} 不等于 a={spec.a}，不在定理要求的初值位置")
    times = np.asarray(times, dtype=float)
    for t in times:
        spec.check_time(t)

    xi, V0 = transform_data(data)
    norms = np.linalg.norm(V0, axis=1)
    # 只跳过严格为零的模态
    active = [k for k in range(data.N) if norms[k] > 0.0]
    if len(active) < data.N:
        logger.info(f"{data.N - len(active)} 个模态的初值为零，不做积分")
    forward = sorted({float(t) for t in times if t > data.t0})
    backward = sorted({float(t) for t in times if t < data.t0}, reverse=True)

    def work(k):
        states = {data.t0: V0[k]}
        steps = 0
        for targets in (forward, backward):
            if not targets:
                continue
            try:
                trace = integrate_mode(spec, [xi[k]], V0[k], (data.t0, targets[-1]), h_max=h_max, rtol=rtol,
                                       n_out=2, extra_nodes=targets)
            except NumericalAbort as e:
                raise NumericalAbort(f"模态 ξ_k={xi[k]!r} 求解失败: {e}", t=e.t, xi=np.array([xi[k]]))
            steps += trace.steps
            for t in targets:
                states[t] = trace.V[int(np.argmin(np.abs(trace.t_nodes - t)))]
        return np.array([states[float(t)] if float(t) in states else V0[k] for t in times]), steps

    pool = pool or ModeTaskPool(desc="cauchy")
    results = pool.map(work, active)
    V = np.zeros((len(times), data.N, spec.m), dtype=complex)
    total = 0
    for k, (values, steps) in zip(active, results):
        V[:, k, :] = values
        total += steps
    return xi, V0, V, {"skipped": data.N - len(active), "steps": total}


def solve_cauchy(spec, data, t_out, pool=None, h_max=H_MAX, rtol=RTOL):
    """逐模态求解周期 Cauchy 问题

    Args:
        spec: n = 1 的算子描述
        data: CauchyData
        t_out: 输出时刻列表（须在工作区间内）
        pool: 可选 ModeTaskPool

    Returns:
        CauchySolution: 各输出时刻的 u 与 D_t^j u
    """
    t_out = np.atleast_1d(np.asarray(t_out, dtype=float))
    logger.info(f"开始 Cauchy 求解: N={data.N}, t0={data.t0}, 输出时刻 {t_out.tolist()}")
    xi, _, V, stats = _propagate(spec, data, t_out, pool, h_max, rtol)
    dtu = np.array([inverse_transform(xi, V[i], data.x0) for i in range(len(t_out))])
    solution = CauchySolution(
        t_out=t_out, x_grid=data.x_grid, dtu=dtu, xi=xi, V=V,
        regularity=regularity_tag(spec), skipped_modes=stats["skipped"], steps=stats["steps"],
    )
    logger.info(f"Cauchy 求解完成: 跳过零模态 {stats['skipped']} 个，总步数 {stats['steps']}")
    return solution


@dataclass(eq=False)
class SobolevLoss:
    """导数损失估计：loss 为壳上最大模态比值关于 ⟨ξ⟩ 的对数斜率"""
    t: float
    loss: float
    slope: float
    verdict: str
    shells: list = field(default_factory=list)
    fit: dict = field(default_factory=dict)

    def to_dict(self):
        return {"t": self.t, "loss": self.loss, "slope": self.slope, "verdict": self.verdict,
                "shells": list(self.shells), "fit": dict(self.fit)}


def sobolev_loss(spec, data, t, pool=None, h_max=H_MAX, rtol=RTOL):
    """由二进频率壳 2^s ≤ |ξ| < 2^{s+1} 上的 max|V(t,ξ)|/|V(t0,ξ)| 估计损失的导数个数

    判定: finite（|漂移| < 0.5）、unbounded（超多项式）或 inconclusive。
    """
    xi, V0, V, _ = _propagate(spec, data, [t], pool, h_max, rtol)
    start = np.linalg.norm(V0, axis=1)
    end = np.linalg.norm(V[0], axis=1)
    shells = {}
    for k in range(data.N):
        mag = abs(xi[k])
        if mag < 1.0 or start[k] == 0.0 or k == data.N // 2:
            continue
        s = int(math.floor(math.log2(mag) + 1e-12))
        shells[s] = max(shells.get(s, 0.0), end[k] / start[k])
    if len(shells) < 4:
        raise SpecValidationError(f"有效频率壳只有 {len(shells)} 个，至少需要 4 个（请增大 N 或使用宽谱初值）")
    order = sorted(shells)
    centers = np.array([math.sqrt(1.0 + (1.5 * 2.0 ** s) ** 2) for s in order])
    ratios = np.maximum(np.array([shells[s] for s in order]), 1e-16)
    fit = classify_growth(np.log(centers), np.log(ratios))
    verdict = {"polynomial": "finite", "superpolynomial": "unbounded"}.get(fit["verdict"], "inconclusive")
    result = SobolevLoss(
        t=float(t),
        loss=max(0.0, fit["slope"]),
        slope=fit["slope"],
        verdict=verdict,
        shells=[{"shell": s, "bracket": float(c), "max_ratio": float(r)} for s, c, r in zip(order, centers, ratios)],
        fit=fit,
    )
    logger.info(f"Sobolev 损失估计: loss={result.loss:.4f}, 判定={verdict}")
    return result


def rough_data(N, m, decay, seed=0, period=2.0 * math.pi, t0=0.0):
    """随机谱初值，|ĝ_j(ξ)| ~ ⟨ξ⟩^{-decay}；decay < 1/2 时属于负指数 Sobolev 空间"""
    if not _is_power_of_two(N) or N < MIN_GRID:
        raise SpecValidationError(f"网格点数必须是 ≥{MIN_GRID} 的 2 的幂，收到 {N}")
    rng = np.random.default_rng(seed)
    xi = 2.0 * math.pi * np.fft.fftfreq(N, d=period / N)
    weight = (1.0 + xi ** 2) ** (-decay / 2.0)
    g = np.empty((m, N), dtype=complex)
    for j in range(m):
        spectrum = (rng.standard_normal(N) + 1j * rng.standard_normal(N)) * weight
        spectrum[N // 2] = 0.0
        g[j] = np.fft.ifft(spectrum) * N
    return CauchyData(g=g, period=period, t0=t0)


def _parse_grid_function(raw, where):
    if isinstance(raw, dict):
        if "re" not in raw:
            raise SpecValidationError(f"{where}: 复数网格函数需要 re 字段")
        re = np.asarray(raw["re"], dtype=float)
        im = np.asarray(raw.get("im", np.zeros_like(re)), dtype=float)
        if re.shape != im.shape:
            raise SpecValidationError(f"{where}: re 与 im 长度不一致")
        return re + 1j * im
    return np.asarray(raw, dtype=float).astype(complex)


def load_cauchy_data(path, default_t0=0.0):
    """读取 JSON 或 CSV 格式的初值文件

    JSON: {"period": L, "t0": t0, "x0": x0, "g": [...]}，g_j 为实数列表或 {"re", "im"}；
    CSV: 列 x, g0_re, g0_im, g1_re, ...（g_j_im 可省略），周期由均匀网格步长推出。
    """
    if not os.path.exists(path):
        raise SpecValidationError(f"找不到初值文件: {path}")
    if str(path).lower().endswith(".csv"):
        df = pd.read_csv(path, comment="#")
        if "x" not in df.columns:
            raise SpecValidationError(f"{path}: CSV 需要 x 列")
        x = df["x"].to_numpy(dtype=float)
        if len(x) < 2:
            raise SpecValidationError(f"{path}: 网格点过少")
        dx = np.diff(x)
        if not np.allclose(dx, dx[0], rtol=1e-9, atol=0.0):
            raise SpecValidationError(f"{path}: x 网格必须均匀")
        g = []
        j = 0
        while f"g{j}_re" in df.columns:
            re = df[f"g{j}_re"].to_numpy(dtype=float)
            im = df[f"g{j}_im"].to_numpy(dtype=float) if f"g{j}_im" in df.columns else np.zeros_like(re)
            g.append(re + 1j * im)
            j += 1
        if not g:
            raise SpecValidationError(f"{path}: 没有 g0_re 列")
        data = CauchyData(g=np.array(g), period=float(dx[0]) * len(x), t0=default_t0, x0=float(x[0]))
    else:
        try:
            with open(path, "r", encoding="utf-8") as f:
                raw = json.load(f)
        except json.JSONDecodeError as e:
            raise SpecValidationError(f"初值文件 {path} 不是合法 JSON: {e}")
        if not isinstance(raw, dict) or "g" not in raw:
            raise SpecValidationError(f"{path}: 初值 JSON 需要 g 字段")
        g = [_parse_grid_function(item, f"g[{j}]") for j, item in enumerate(raw["g"])]
        if len({len(item) for item in g}) != 1:
            raise SpecValidationError(f"{path}: 各 g_j 的长度必须相同")
        data = CauchyData(g=np.array(g), period=raw.get("period", 2.0 * math.pi),
                          t0=raw.get("t0", default_t0), x0=raw.get("x0", 0.0))
    logger.info(f"已加载初值 {path}: m={data.m}, N={data.N}, 周期 {data.period}")
    return data
