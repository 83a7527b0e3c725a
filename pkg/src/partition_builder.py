#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
时间区间划分模块
定位 Δ(·,ξ) 的零点集 Σ(ξ)，构造排除集 A_{ξ,ε} 及其补集，
计算 Z(t,ξ) 并估计划分常数 p, q, c₁, c₂
"""

import math
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from src.errors import DegenerateDirectionError, SpecValidationError
from src.symmetriser import SymmetriserField, ZERO_TOL, real_critical_points

logger = logging.getLogger("HypAn.Partition")

SCAN_INTERVALS = 2048
ROOT_XTOL = 1e-12
CLUSTER_TOL = 1e-10
QUAD_RTOL = 1e-6
EPS_MAX = math.exp(-1.0)


def unit_direction(xi_dir):
    xi = np.atleast_1d(np.asarray(xi_dir, dtype=float))
    norm = float(np.linalg.norm(xi))
    if norm == 0.0 or not math.isfinite(norm):
        raise SpecValidationError(f"方向向量必须非零且有限，收到 {xi.tolist()}")
    return xi / norm


def _direction_field(spec, xi_dir):
    field_ = SymmetriserField(spec, unit_direction(xi_dir))
    if field_.is_degenerate:
        raise DegenerateDirectionError(
            f"Δ(·,ξ) 在方向 {field_.xi.tolist()} 上恒为零（‖Δ‖∞={field_.delta_sup:.3e}）",
            xi_dir=field_.xi)
    return field_


def _merge_close(points):
    """合并相距不超过 CLUSTER_TOL 的零点"""
    merged = []
    for t in sorted(points):
        if merged and t - merged[-1][-1] <= CLUSTER_TOL:
            if t - merged[-1][-1] > ROOT_XTOL:
                logger.warning(f"零点簇无法分辨: {merged[-1][-1]!r} 与 {t!r} 相距不足 {CLUSTER_TOL}，按一个零点处理")
            merged[-1].append(t)
        else:
            merged.append([t])
    return tuple(float(np.mean(group)) for group in merged)


def _even_zeros(delta, d_delta, lo, hi, tol):
    """[lo, hi] 内不变号的零点

    以 Δ' 的多项式根为提示把区间切成子段，每段至多含一个驻点；
    只接受 |Δ| 的局部极小（sign(Δ)·Δ' 由负变正）且 |Δ| < tol 的驻点。
    """
    hints = real_critical_points(delta, lo, hi)
    cuts = np.concatenate(([lo], 0.5 * (hints[1:] + hints[:-1]), [hi])) if hints.size else np.array([lo, hi])
    sign = np.sign(delta(lo) + delta(hi))
    zeros = []
    for s_lo, s_hi in zip(cuts[:-1], cuts[1:]):
        g_lo, g_hi = d_delta(s_lo), d_delta(s_hi)
        if sign != 0.0 and not (sign * g_lo <= 0.0 <= sign * g_hi):
            continue
        if g_lo == 0.0:
            candidate = s_lo
        elif g_hi == 0.0:
            candidate = s_hi
        elif g_lo * g_hi < 0.0:
            candidate = brentq(d_delta, s_lo, s_hi, xtol=ROOT_XTOL)
        else:
            continue
        if abs(delta(candidate)) < tol:
            zeros.append(float(candidate))
    return zeros


def find_zeros(spec, xi_dir, field_=None):
    """定位 Δ(·,ξ) 在 [a, b] 上的全部零点

    变号零点用 2048 段扫描加 brentq；不变号的偶数阶零点在 |Δ| 的每个局部极小
    附近按 Δ' 的根分段，再在 Δ' 上用 brentq 细化，若 |Δ| < 1e-12·‖Δ‖∞ 则接受。
    相距小于扫描步长的偶数阶零点因此也能分开。

    Args:
        spec: 算子描述
        xi_dir: 方向（非零向量）
        field_: 可选，已构造的 SymmetriserField

    Returns:
        tuple: 升序零点 t_1..t_N
    """
    field_ = field_ or _direction_field(spec, xi_dir)
    delta = field_.delta_poly
    d_delta = field_.d_delta_poly
    a, b = spec.a, spec.b
    tol = ZERO_TOL * field_.delta_sup

    nodes = np.linspace(a, b, SCAN_INTERVALS + 1)
    values = delta(nodes)
    found = []

    for idx, value in enumerate(values):
        if abs(value) <= tol and (value == 0.0 or idx in (0, len(values) - 1)):
            found.append(float(nodes[idx]))

    for idx in range(SCAN_INTERVALS):
        lo, hi = values[idx], values[idx + 1]
        if lo * hi < 0.0:
            found.append(brentq(delta, nodes[idx], nodes[idx + 1], xtol=ROOT_XTOL))

    magnitude = np.abs(values)
    for idx in range(len(values)):
        left = magnitude[idx - 1] if idx > 0 else math.inf
        right = magnitude[idx + 1] if idx < len(values) - 1 else math.inf
        if not (magnitude[idx] <= left and magnitude[idx] <= right) or magnitude[idx] == 0.0:
            continue
        lo = nodes[max(idx - 1, 0)]
        hi = nodes[min(idx + 1, len(nodes) - 1)]
        found.extend(_even_zeros(delta, d_delta, lo, hi, tol))

    sigma = _merge_close(found)
    logger.debug(f"方向 {field_.xi.tolist()} 上找到 {len(sigma)} 个零点: {sigma}")
    return sigma


def z_function(sigma, t):
    """Z(t,ξ) = Π|t - t_j|，Σ(ξ) 为空时为 1"""
    if len(sigma) == 0:
        return 1.0 if np.ndim(t) == 0 else np.ones_like(np.asarray(t, dtype=float))
    t = np.asarray(t, dtype=float)
    result = np.ones_like(t)
    for t_j in sigma:
        result = result * np.abs(t - t_j)
    return float(result) if result.ndim == 0 else result


def log_variation(delta_poly, lo, hi):
    """∫_lo^hi |Δ'|/Δ dt 的精确值：在驻点之间累加 |log Δ| 的增量（要求 Δ > 0）"""
    points = np.concatenate(([lo], real_critical_points(delta_poly, lo, hi), [hi]))
    logs = np.log(delta_poly(points))
    return float(np.sum(np.abs(np.diff(logs))))


@dataclass(frozen=True, eq=False)
class Partition:
    """单个方向、单个 ε 的划分结果"""
    xi_dir: np.ndarray
    eps: float
    work: tuple
    sigma: tuple
    excluded: tuple
    kept: tuple
    bounds: dict = field(default_factory=dict)

    def is_excluded(self, t):
        """t 是否落在排除集内；被截断到 [a, b] 的区间在截断端点处闭合"""
        a, b = self.work
        for lo, hi in self.excluded:
            if lo < t < hi or (t == lo and lo <= a) or (t == hi and hi >= b):
                return True
        return False

    def to_dict(self):
        return {
            "xi_dir": self.xi_dir.tolist(),
            "eps": self.eps,
            "work": list(self.work),
            "sigma": list(self.sigma),
            "excluded": [list(iv) for iv in self.excluded],
            "kept": [list(iv) for iv in self.kept],
            "bounds": dict(self.bounds),
        }


def _excluded_intervals(sigma, eps, a, b):
    half = eps / (2.0 * max(len(sigma), 1))
    raw = [(max(a, t - half), min(b, t + half)) for t in sigma]
    merged = []
    for lo, hi in sorted(raw):
        if merged and lo <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
        else:
            merged.append((lo, hi))
    return tuple(merged)


def _kept_intervals(excluded, a, b):
    kept = []
    cursor = a
    for lo, hi in excluded:
        if lo > cursor:
            kept.append((cursor, lo))
        cursor = max(cursor, hi)
    if cursor < b:
        kept.append((cursor, b))
    return tuple(kept)


def build_partition(spec, xi_dir, eps, field_=None, sigma=None):
    """构造 A_{ξ,ε}：每个零点两侧各 ε/(2·max(N,1)) 的开区间，合并并截断到 [a, b]

    bounds 中给出四项估计：区间数、排除集测度、保留集上 Δ 的最小值、
    保留集上 ∫|∂ₜΔ|/Δ dt（自适应积分，另以精确变差交叉校验）。
    """
    if not 0.0 < eps <= EPS_MAX * (1.0 + 1e-12):
        raise SpecValidationError(f"eps 必须在 (0, e^-1] 内，收到 {eps}")
    field_ = field_ or _direction_field(spec, xi_dir)
    if sigma is None:
        sigma = find_zeros(spec, xi_dir, field_)
    a, b = spec.a, spec.b
    excluded = _excluded_intervals(sigma, eps, a, b)
    kept = _kept_intervals(excluded, a, b)

    delta = field_.delta_poly
    d_delta = field_.d_delta_poly
    min_delta = math.inf
    log_integral = 0.0
    variation = 0.0
    for lo, hi in kept:
        critical = real_critical_points(delta, lo, hi)
        points = np.concatenate(([lo, hi], critical))
        min_delta = min(min_delta, float(np.min(delta(points))))
        value, _ = quad(lambda t: abs(d_delta(t)) / delta(t), lo, hi,
                        points=critical.tolist() or None, epsrel=QUAD_RTOL, limit=200)
        log_integral += value
        variation += log_variation(delta, lo, hi)
    if kept and abs(log_integral - variation) > 1e-4 * max(1.0, variation):
        logger.warning(f"对数积分与精确变差不一致: quad={log_integral!r}, 变差={variation!r}")

    bounds = {
        "p_observed": len(excluded),
        "measure_excluded": float(sum(hi - lo for lo, hi in excluded)),
        "min_delta_kept": min_delta if kept else math.nan,
        "log_integral": log_integral,
        "log_variation": variation,
        "delta_sup": field_.delta_sup,
        "min_ratio": (min_delta / field_.delta_sup) if kept else math.nan,
    }
    return Partition(
        xi_dir=field_.xi, eps=float(eps), work=(a, b), sigma=tuple(sigma),
        excluded=excluded, kept=kept, bounds=bounds,
    )


@dataclass(frozen=True, eq=False)
class PQEstimate:
    """(p, q, c₁, c₂) 的估计；q 为 None 时数据不单调，只报告原始斜率"""
    p: int
    q: object
    q_raw: float
    slopes: dict
    c1: float
    c2: float
    monotone: bool
    rows: list

    def to_dict(self):
        return {
            "p": self.p,
            "q": self.q,
            "q_raw": self.q_raw,
            "slopes": dict(self.slopes),
            "c1": self.c1,
            "c2": self.c2,
            "monotone": self.monotone,
        }


def estimate_pq(spec, xi_dirs, eps_list):
    """由 ε 扫描拟合 log(min Δ/‖Δ‖) 对 log ε 的斜率，q = round(斜率/2)

    Args:
        spec: 算子描述
        xi_dirs: 方向列表
        eps_list: 至少 3 个 ε，最大与最小之比不小于 e

    Returns:
        PQEstimate: 估计结果，rows 为逐 (方向, ε) 的明细
    """
    eps_arr = np.sort(np.asarray(eps_list, dtype=float))
    if eps_arr.size < 3:
        raise SpecValidationError(f"estimate_pq 至少需要 3 个 eps，收到 {eps_arr.tolist()}")
    if eps_arr[-1] / eps_arr[0] < math.e * (1.0 - 1e-12):
        raise SpecValidationError(f"eps 取值范围太窄: {eps_arr.tolist()}")

    rows = []
    slopes = {}
    p_max = 0
    monotone = True
    q_raw = 0.0
    c1_values, c2_values = [], []
    for xi_dir in xi_dirs:
        field_ = _direction_field(spec, xi_dir)
        sigma = find_zeros(spec, xi_dir, field_)
        ratios = []
        for eps in eps_arr:
            part = build_partition(spec, xi_dir, float(eps), field_=field_, sigma=sigma)
            p_max = max(p_max, part.bounds["p_observed"])
            ratios.append(part.bounds["min_ratio"])
            rows.append({
                "xi_dir": ",".join(f"{v:.17g}" for v in field_.xi),
                "eps": float(eps),
                "n_zeros": len(sigma),
                "p_observed": part.bounds["p_observed"],
                "measure_excluded": part.bounds["measure_excluded"],
                "min_delta_kept": part.bounds["min_delta_kept"],
                "min_ratio": part.bounds["min_ratio"],
                "log_integral": part.bounds["log_integral"],
            })
            if eps < 1.0:
                c2_values.append(part.bounds["log_integral"] / math.log(1.0 / eps))
        ratios = np.asarray(ratios)
        slope = float(np.polyfit(np.log(eps_arr), np.log(ratios), 1)[0])
        slopes[",".join(f"{v:.6g}" for v in field_.xi)] = slope
        q_raw = max(q_raw, slope / 2.0)
        if np.any(np.diff(ratios) < -1e-12 * np.max(np.abs(ratios))):
            monotone = False
        c1_values.append(ratios)

    q = int(round(q_raw)) if monotone else None
    power = 2 * (q if q is not None else q_raw)
    c1 = float(min(np.min(r / eps_arr ** power) for r in c1_values))
    c2 = float(max(c2_values)) if c2_values else math.nan
    if not monotone:
        logger.warning(f"min Δ 关于 ε 不单调，只报告原始斜率 q_raw={q_raw:.4f}")
    logger.info(f"划分常数估计: p={p_max}, q={q}, q_raw={q_raw:.4f}, c1={c1:.4e}, c2={c2:.4e}")
    return PQEstimate(p=p_max, q=q, q_raw=q_raw, slopes=slopes, c1=c1, c2=c2, monotone=monotone, rows=rows)
