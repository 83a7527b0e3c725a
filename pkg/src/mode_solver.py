#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
模态求解模块
逐频率积分 ∂ₜV = i(⟨ξ⟩A + B)V，跟踪 Kovalevskian 能量 |V|² 与双曲能量 ⟨QV,V⟩
及其 Gronwall 包络，并在二进频率扫描上拟合增长指数
"""

import math
import logging
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from scipy.linalg import eigh, LinAlgError

from src.errors import NumericalAbort, SpecValidationError
from src.operator_model import ModeGenerator, build_frame, eval_lower_row, japanese_bracket
from src.partition_builder import log_variation, unit_direction
from src.symmetriser import SymmetriserField
from src.task_pool import ModeTaskPool

logger = logging.getLogger("HypAn.ModeSolver")

RTOL = 1e-10
H_MAX = 0.05
H_MIN = 1e-14
STEP_LAW = 0.1
MIN_OUTPUT_NODES = 512
OVERFLOW = 1e300
RATIO_FLOOR = 1e-16
# 由采样上确界得到的能量常数再放大 1%，覆盖采样点之间的变化
CONSTANT_MARGIN = 1.01


def regularity_tag(spec):
    """解的正则性标签；低阶项含分段系数时降级为 W^{inf,m} 形式"""
    if spec.has_piecewise_lower:
        return f"C^{spec.m - 1}([a,b]; C^inf) ∩ W^{{inf,{spec.m}}}([a,b]; C^inf)"
    return f"C^{spec.m}([a,b]; C^inf)"


@dataclass(eq=False)
class ModeTrace:
    """单个频率的时间轨迹

    Args:
        xi: 频率向量
        t_nodes: 输出时间节点
        V: 形状 (节点数, m) 的复数解
        E_kov: |V|²
        E_hyp: ⟨QV,V⟩，排除集上为 NaN
        energy: 分段定义的能量（排除集上 |V|²，保留集上 ⟨QV,V⟩）
        envelope: Gronwall 包络
        bound_slack: energy / envelope
    """
    xi: np.ndarray
    t_nodes: np.ndarray
    V: np.ndarray
    E_kov: np.ndarray
    E_hyp: np.ndarray = None
    energy: np.ndarray = None
    envelope: np.ndarray = None
    bound_slack: np.ndarray = None
    regularity: str = ""
    breakpoints: tuple = ()
    steps: int = 0
    rejected: int = 0
    overflow: bool = False

    @property
    def sup_ratio(self):
        start = np.linalg.norm(self.V[0])
        if start == 0.0:
            return math.nan
        return float(np.max(np.linalg.norm(self.V, axis=1)) / start)

    def to_frame(self):
        """逐节点数据表：t、各分量实部/虚部、能量与包络"""
        data = {"t": self.t_nodes}
        for k in range(self.V.shape[1]):
            data[f"V{k + 1}_re"] = self.V[:, k].real
            data[f"V{k + 1}_im"] = self.V[:, k].imag
        data["E_kov"] = self.E_kov
        n = len(self.t_nodes)
        for name in ("E_hyp", "energy", "envelope", "bound_slack"):
            value = getattr(self, name)
            data[name] = value if value is not None else np.full(n, np.nan)
        return pd.DataFrame(data)

    def summary(self):
        slack = self.bound_slack
        return {
            "xi": self.xi.tolist(),
            "t_start": float(self.t_nodes[0]),
            "t_end": float(self.t_nodes[-1]),
            "nodes": int(len(self.t_nodes)),
            "steps": self.steps,
            "rejected_steps": self.rejected,
            "sup_ratio": self.sup_ratio,
            "max_slack": float(np.nanmax(slack)) if slack is not None and np.any(np.isfinite(slack)) else None,
            "regularity": self.regularity,
            "breakpoints": list(self.breakpoints),
            "overflow": self.overflow,
        }


def _rk4_step(f, t, y, h):
    k1 = f(t, y)
    k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = f(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


class _Stepper:
    """RK4 + 步长加倍 Richardson 误差控制，保留两个半步的解"""

    def __init__(self, h_cap, rtol, xi):
        self.h_cap = h_cap
        self.h_prop = h_cap
        self.rtol = rtol
        self.xi = xi
        self.steps = 0
        self.rejected = 0

    def advance(self, f, t, y, t_end):
        direction = 1.0 if t_end >= t else -1.0
        while (t_end - t) * direction > 0.0:
            remaining = abs(t_end - t)
            h = min(self.h_prop, self.h_cap, remaining)
            clipped = h < self.h_prop
            full = _rk4_step(f, t, y, direction * h)
            half = _rk4_step(f, t, y, 0.5 * direction * h)
            two = _rk4_step(f, t + 0.5 * direction * h, half, 0.5 * direction * h)
            if not np.all(np.isfinite(two)):
                raise NumericalAbort(f"ξ={self.xi.tolist()} 在 t={t!r} 处出现 NaN/Inf", t=t, xi=self.xi)
            err = float(np.linalg.norm(two - full)) / 15.0
            scale = max(float(np.linalg.norm(two)), 1e-300)
            if err <= self.rtol * scale:
                t = t_end if h == remaining else t + direction * h
                y = two
                self.steps += 1
                factor = 2.0 if err == 0.0 else min(2.0, 0.9 * (self.rtol * scale / err) ** 0.2)
                self.h_prop = max(self.h_prop, h * factor) if clipped else h * factor
            else:
                self.rejected += 1
                self.h_prop = h * max(0.2, 0.9 * (self.rtol * scale / err) ** 0.2)
                if self.h_prop < H_MIN:
                    raise NumericalAbort(
                        f"ξ={self.xi.tolist()} 在 t={t!r} 处步长下溢 (h={self.h_prop:.3e})", t=t, xi=self.xi)
        return t, y


def _output_nodes(t_start, t_end, n_out, extra):
    lo, hi = min(t_start, t_end), max(t_start, t_end)
    nodes = np.linspace(t_start, t_end, max(n_out, 2))
    inside = [float(t) for t in extra if lo < t < hi]
    nodes = np.unique(np.concatenate((nodes, inside)))
    return nodes if t_end >= t_start else nodes[::-1]


def _fixed_nodes(t_start, t_end, h, breakpoints):
    lo, hi = min(t_start, t_end), max(t_start, t_end)
    edges = [lo, *[b for b in breakpoints if lo < b < hi], hi]
    pieces = []
    for left, right in zip(edges[:-1], edges[1:]):
        count = max(1, int(math.ceil((right - left) / h - 1e-9)))
        pieces.append(np.linspace(left, right, count + 1)[:-1])
    nodes = np.concatenate(pieces + [np.array([hi])])
    return nodes if t_end >= t_start else nodes[::-1]


def integrate_mode(spec, xi, V0, t_span=None, h_max=H_MAX, rtol=RTOL, n_out=MIN_OUTPUT_NODES,
                   extra_nodes=(), fixed_step=None, stop_on_overflow=False, generator=None):
    """积分单个模态 ∂ₜV = i(⟨ξ⟩A(t,ξ) + B(t,ξ))V

    Args:
        spec: 算子描述
        xi: 频率向量（允许 ξ = 0）
        V0: 初值 (m,)
        t_span: (t_start, t_end)，须在工作区间内，默认 [a, b]
        h_max: 步长上限，实际上限为 min(h_max, 0.1/⟨ξ⟩)
        rtol: 局部相对误差目标
        n_out: 均匀输出节点数（另加分段断点与 extra_nodes）
        extra_nodes: 额外输出节点
        fixed_step: 给出时改用定步长 RK4，输出节点即步长网格
        stop_on_overflow: |V| 超过 1e300 时提前结束并标记 overflow

    Returns:
        ModeTrace: 轨迹
    """
    generator = generator or ModeGenerator(spec, xi)
    xi_arr = generator.xi
    m = spec.m
    V0 = np.asarray(V0, dtype=complex).reshape(-1)
    if V0.shape != (m,):
        raise SpecValidationError(f"V0 的长度必须为 m={m}，收到 {V0.shape}")
    if not np.all(np.isfinite(V0)):
        raise SpecValidationError("V0 必须有限")
    t_start, t_end = (spec.a, spec.b) if t_span is None else (float(t_span[0]), float(t_span[1]))
    spec.check_time(t_start)
    spec.check_time(t_end)

    breakpoints = generator.breakpoints
    if fixed_step is not None:
        nodes = _fixed_nodes(t_start, t_end, float(fixed_step), breakpoints)
    else:
        nodes = _output_nodes(t_start, t_end, n_out, list(breakpoints) + list(extra_nodes))

    h_cap = min(h_max, STEP_LAW / generator.bracket)
    stepper = _Stepper(h_cap, rtol, xi_arr)
    fields = {}
    V = np.empty((len(nodes), m), dtype=complex)
    V[0] = V0
    y = V0.copy()
    overflow = False
    last = len(nodes)
    for idx in range(1, len(nodes)):
        t_prev, t_next = float(nodes[idx - 1]), float(nodes[idx])
        segment = generator.segment_index(0.5 * (t_prev + t_next))
        if segment not in fields:
            fields[segment] = generator.rhs(segment)
        f = fields[segment]
        if fixed_step is not None:
            y = _rk4_step(f, t_prev, y, t_next - t_prev)
            stepper.steps += 1
            if not np.all(np.isfinite(y)):
                raise NumericalAbort(f"ξ={xi_arr.tolist()} 在 t={t_next!r} 处出现 NaN/Inf", t=t_next, xi=xi_arr)
        else:
            _, y = stepper.advance(f, t_prev, y, t_next)
        V[idx] = y
        if np.linalg.norm(y) > OVERFLOW:
            if stop_on_overflow:
                overflow = True
                last = idx + 1
                break
            raise NumericalAbort(f"ξ={xi_arr.tolist()} 在 t={t_next!r} 处 |V| 溢出", t=t_next, xi=xi_arr)

    nodes, V = nodes[:last], V[:last]
    logger.debug(f"模态 ξ={xi_arr.tolist()} 积分完成: {stepper.steps} 步，拒绝 {stepper.rejected} 步")
    return ModeTrace(
        xi=xi_arr,
        t_nodes=np.asarray(nodes, dtype=float),
        V=V,
        E_kov=np.sum(np.abs(V) ** 2, axis=1),
        regularity=regularity_tag(spec),
        breakpoints=breakpoints,
        steps=stepper.steps,
        rejected=stepper.rejected,
        overflow=overflow,
    )


def qb_commutator_bound(frame, symm):
    """‖QB - B*Q‖₂，直接矩阵乘积与 d_ij = q_im b_j - conj(b_i) q_jm 两种算法须一致"""
    Q = np.asarray(symm.Q, dtype=float)
    B = np.asarray(frame.B, dtype=complex)
    direct = Q @ B - B.conj().T @ Q
    b = B[-1]
    q_last = Q[:, -1]
    entrywise = q_last[:, None] * b[None, :] - np.conj(b)[:, None] * q_last[None, :]
    scale = max(1.0, float(np.max(np.abs(Q))) * float(np.max(np.abs(b), initial=0.0)))
    gap = float(np.max(np.abs(direct - entrywise)))
    if gap > 1e-12 * scale:
        raise NumericalAbort(f"QB - B*Q 的两种计算不一致（差 {gap:.3e}）", t=frame.t, xi=frame.xi)
    return float(np.linalg.norm(direct, 2))


@dataclass(frozen=True)
class EnergyConstants:
    """能量估计常数：c_A ≥ sup‖A‖，c_B ≥ sup‖B‖，c_hyp 为双曲能量的增长常数"""
    c_A: float
    c_B: float
    c_hyp: float

    def to_dict(self):
        return {"c_A": self.c_A, "c_B": self.c_B, "c_hyp": self.c_hyp}


def _sample_grid(spec, partition, count=1025):
    ts = [np.linspace(spec.a, spec.b, count), np.asarray(spec.breakpoints(), dtype=float)]
    if partition is not None:
        ts.append(np.asarray([t for iv in partition.kept for t in iv], dtype=float))
    return np.unique(np.concatenate(ts))


def estimate_energy_constants(spec, xi, partition, ts=None):
    """在采样网格上测量 c_A、c_B 与双曲能量常数 c

    c 取保留集上 (∂ₜQ + i(QB - B*Q), Q) 广义特征值的最大值除以 (1 + |∂ₜΔ|/Δ) 的上确界。
    """
    ts = _sample_grid(spec, partition) if ts is None else np.asarray(ts, dtype=float)
    field_ = SymmetriserField(spec, xi)
    breaks = set(spec.breakpoints())
    c_A, c_B, c_hyp = 0.0, 0.0, 0.0
    for t in ts:
        frame = build_frame(spec, t, xi)
        c_A = max(c_A, float(np.linalg.norm(frame.A, 2)))
        rows = [frame.B[-1]]
        if t in breaks:
            rows.append(eval_lower_row(spec, t, xi, side="left"))
        for b in rows:
            c_B = max(c_B, float(np.linalg.norm(b)))
        if partition is not None and partition.is_excluded(t):
            continue
        delta = float(field_.delta(t))
        if not delta > field_.zero_tol:
            continue
        Q = field_.Q(t)
        dQ = field_.dQ(t)
        weight = 1.0 + abs(float(field_.d_delta(t))) / delta
        for b in rows:
            B = np.zeros((spec.m, spec.m), dtype=complex)
            B[-1] = b
            H = dQ + 1j * (Q @ B - B.conj().T @ Q)
            try:
                top = float(eigh(H, Q, eigvals_only=True)[-1])
            except LinAlgError:
                logger.warning(f"t={t!r} 处 Q 非正定，跳过该采样点")
                continue
            c_hyp = max(c_hyp, top / weight)
    constants = EnergyConstants(c_A=c_A * CONSTANT_MARGIN, c_B=c_B * CONSTANT_MARGIN, c_hyp=c_hyp * CONSTANT_MARGIN)
    logger.debug(f"ξ={np.asarray(xi).tolist()} 的能量常数: {constants}")
    return constants


def energy_trace(spec, trace, partition, constants=None):
    """给轨迹加上两段式能量与 Gronwall 包络

    排除集上 E = |V|²，包络 exp(2(c_A⟨ξ⟩ + c_B)(t - t'))E(t')；
    保留集 [c_i, d_i] 上 E = ⟨QV,V⟩，包络 e^{c(d_i - c_i)} exp(c∫_{c_i}^t |∂ₜΔ|/Δ) E(c_i)。
    constants 缺省时只计算能量，不给包络与 slack。
    """
    xi = trace.xi
    if not np.any(xi):
        raise SpecValidationError("energy_trace 需要非零频率")
    if not np.allclose(unit_direction(xi), partition.xi_dir):
        raise SpecValidationError(f"轨迹频率 {xi.tolist()} 与划分方向 {partition.xi_dir.tolist()} 不一致")
    ts = trace.t_nodes
    if len(ts) > 1 and ts[-1] < ts[0]:
        raise SpecValidationError("energy_trace 需要时间递增的轨迹")

    field_ = SymmetriserField(spec, xi)
    excluded = np.array([partition.is_excluded(t) for t in ts])
    Q = field_.Q(ts)
    E_hyp = np.real(np.einsum("ni,nij,nj->n", trace.V.conj(), Q, trace.V))
    energy = np.where(excluded, trace.E_kov, E_hyp)
    E_hyp = np.where(excluded, np.nan, E_hyp)
    if constants is None:
        return replace(trace, E_hyp=E_hyp, energy=energy, envelope=None, bound_slack=None)

    rate = 2.0 * (constants.c_A * japanese_bracket(xi) + constants.c_B)
    envelope = np.empty_like(energy)
    idx = 0
    while idx < len(ts):
        start = idx
        state = excluded[idx]
        while idx < len(ts) and excluded[idx] == state:
            idx += 1
        if state:
            ref = start - 1 if start > 0 else start
            t_ref, e_ref = ts[ref], trace.E_kov[ref]
            envelope[start:idx] = np.exp(rate * (ts[start:idx] - t_ref)) * e_ref
        else:
            c_ref = ts[start]
            d_end = next((hi for lo, hi in partition.kept if lo - 1e-12 <= c_ref <= hi + 1e-12), ts[idx - 1])
            e_ref = energy[start]
            jump = math.exp(constants.c_hyp * (d_end - c_ref))
            for k in range(start, idx):
                integral = log_variation(field_.delta_poly, c_ref, ts[k]) if ts[k] > c_ref else 0.0
                envelope[k] = jump * math.exp(constants.c_hyp * integral) * e_ref

    with np.errstate(divide="ignore", invalid="ignore"):
        slack = np.where(envelope > 0.0, energy / envelope, np.where(energy <= 0.0, 0.0, np.inf))
    return replace(trace, E_hyp=E_hyp, energy=energy, envelope=envelope, bound_slack=slack)


def classify_growth(log_x, log_r):
    """由 (log⟨ξ⟩, log 比值) 拟合整体、前后两半与三等分的斜率并给出判定"""
    log_x = np.asarray(log_x, dtype=float)
    log_r = np.asarray(log_r, dtype=float)
    n = len(log_x)
    slope = float(np.polyfit(log_x, log_r, 1)[0])
    half = int(math.ceil(n / 2))
    lower = float(np.polyfit(log_x[:half], log_r[:half], 1)[0])
    upper = float(np.polyfit(log_x[n - half:], log_r[n - half:], 1)[0])
    thirds = [float(np.polyfit(log_x[chunk], log_r[chunk], 1)[0])
              for chunk in np.array_split(np.arange(n), 3) if len(chunk) >= 2]
    drift = upper - lower
    increasing = len(thirds) == 3 and all(b > a for a, b in zip(thirds[:-1], thirds[1:]))
    if abs(drift) < 0.5:
        verdict = "polynomial"
    elif drift >= 1.0 and increasing:
        verdict = "superpolynomial"
    else:
        verdict = "inconclusive"
    return {"slope": slope, "slope_lower": lower, "slope_upper": upper, "slope_drift": drift,
            "thirds": thirds, "verdict": verdict}


@dataclass(eq=False)
class GrowthFit:
    """频率扫描的增长拟合结果"""
    xi_dir: np.ndarray
    xi_mags: np.ndarray
    brackets: np.ndarray
    ratios: np.ndarray
    slope: float
    slope_lower: float
    slope_upper: float
    slope_drift: float
    thirds: list
    verdict: str
    witness: object = None
    regularity: str = ""
    v0_policy: str = "ones"
    extra: dict = field(default_factory=dict)

    def to_frame(self):
        return pd.DataFrame({
            "xi_mag": self.xi_mags,
            "bracket": self.brackets,
            "ratio": self.ratios,
            "log_bracket": np.log(self.brackets),
            "log_ratio": np.log(np.maximum(self.ratios, RATIO_FLOOR)),
        })

    def to_dict(self):
        return {
            "xi_dir": self.xi_dir.tolist(),
            "xi_mags": self.xi_mags.tolist(),
            "ratios": self.ratios.tolist(),
            "slope": self.slope,
            "slope_lower": self.slope_lower,
            "slope_upper": self.slope_upper,
            "slope_drift": self.slope_drift,
            "thirds": list(self.thirds),
            "verdict": self.verdict,
            "witness": self.witness,
            "regularity": self.regularity,
            "v0_policy": self.v0_policy,
        }


def _initial_vectors(m, count, policy, seed):
    if policy == "ones":
        return [np.ones(m, dtype=complex) for _ in range(count)]
    if policy == "random":
        rng = np.random.default_rng(seed)
        vectors = []
        for _ in range(count):
            v = rng.standard_normal(m) + 1j * rng.standard_normal(m)
            vectors.append(v / np.linalg.norm(v))
        return vectors
    raise SpecValidationError(f"V0 策略必须是 ones 或 random，收到 {policy!r}")


def growth_scan(spec, xi_dir, magnitudes, v0_policy="ones", seed=0, pool=None, h_max=H_MAX, rtol=RTOL):
    """二进频率扫描：逐量级积分一个模态，拟合 log(sup_t|V|/|V(a)|) 关于 log⟨ξ⟩ 的斜率

    Args:
        spec: 算子描述
        xi_dir: 方向
        magnitudes: 二进量级（至少 6 个，最小值 ≥ 2）
        v0_policy: 'ones' 或 'random'
        seed: 随机初值的种子
        pool: 可选 ModeTaskPool

    Returns:
        GrowthFit: 拟合结果与 polynomial/superpolynomial/inconclusive 判定
    """
    mags = np.sort(np.asarray(magnitudes, dtype=float))
    if mags.size < 6:
        raise SpecValidationError(f"growth_scan 至少需要 6 个量级，收到 {mags.tolist()}")
    if mags[0] < 2.0:
        raise SpecValidationError(f"最小量级必须 ≥ 2，收到 {mags[0]}")
    if not np.allclose(mags[1:] / mags[:-1], 2.0, rtol=1e-12, atol=0.0):
        raise SpecValidationError(f"量级必须是连续的二进序列，收到 {mags.tolist()}")
    direction = unit_direction(xi_dir)
    vectors = _initial_vectors(spec.m, mags.size, v0_policy, seed)
    pool = pool or ModeTaskPool(desc="scan")
    logger.info(f"开始频率扫描: 方向 {direction.tolist()}，量级 {mags[0]:g}..{mags[-1]:g}")

    def work(item):
        s, v0 = item
        trace = integrate_mode(spec, s * direction, v0, (spec.a, spec.b), h_max=h_max, rtol=rtol,
                               stop_on_overflow=True)
        return math.inf if trace.overflow else trace.sup_ratio

    ratios = np.array(pool.map(work, list(zip(mags, vectors))), dtype=float)
    brackets = np.sqrt(1.0 + mags ** 2)
    witness = None
    overflow = ~np.isfinite(ratios) | (ratios > OVERFLOW)
    ratios = np.maximum(ratios, RATIO_FLOOR)
    log_x = np.log(brackets)
    if np.any(overflow):
        witness = float(mags[int(np.argmax(overflow))])
        finite = ~overflow
        slope = float(np.polyfit(log_x[finite], np.log(ratios[finite]), 1)[0]) if finite.sum() >= 2 else math.nan
        fit = {"slope": slope, "slope_lower": math.nan, "slope_upper": math.nan, "slope_drift": math.nan,
               "thirds": [], "verdict": "superpolynomial"}
        logger.warning(f"比值在 |ξ|={witness:g} 处溢出，判定为超多项式增长")
    else:
        fit = classify_growth(log_x, np.log(ratios))
        if fit["verdict"] == "superpolynomial":
            witness = float(mags[-1])

    result = GrowthFit(
        xi_dir=direction, xi_mags=mags, brackets=brackets, ratios=ratios,
        witness=witness, regularity=regularity_tag(spec), v0_policy=v0_policy, **fit,
    )
    logger.info(f"频率扫描完成: 斜率={result.slope:.4f}, 漂移={result.slope_drift:.4f}, 判定={result.verdict}")
    return result
