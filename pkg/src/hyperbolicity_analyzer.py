#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
双曲性分析模块
由主子式符号模式判定严格/弱双曲性，检验条件 |ψ| ≤ C₁Δ̃（及其 Z²|ψ| ≤ CΔ 形式）、
Levi 条件（复、实、分级三种模式）以及 m=2 时的等价条件
"""

import math
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from src.errors import DegenerateDirectionError, SpecValidationError
from src.operator_model import build_frame, eval_graded_lower_rows, eval_lower_row, principal_row_polynomials
from src.partition_builder import find_zeros, unit_direction, z_function
from src.symmetriser import SymmetriserField, build_symmetriser
from src.task_pool import ModeTaskPool

logger = logging.getLogger("HypAn.Analyzer")

CLASSIFY_TOL = 1e-10
IMAG_TOL = 1e-8
ROOT_CLUSTER_TOL = 1e-6
# 多重根的特征值扰动约为 eps^{1/k}，按此距离分组后取均值再检查虚部
ROOT_GROUP_TOL = 1e-4
ZERO_RADIUS = 1e-4
STABILITY_TOL = 0.2
TINY_SUP = 1e-12


@dataclass(frozen=True, eq=False)
class Classification:
    """单点双曲性分类结果"""
    kind: str
    r: object
    minors: np.ndarray
    roots: np.ndarray
    distinct_roots: int
    oracle_agrees: bool

    @property
    def label(self):
        return f"weak({self.r})" if self.kind == "weak" else self.kind


def _group_roots(roots):
    """把相互接近的根分组取均值"""
    remaining = sorted(roots, key=lambda z: (z.real, z.imag))
    groups = []
    for z in remaining:
        scale = max(1.0, abs(z))
        for group in groups:
            if abs(np.mean(group) - z) <= ROOT_GROUP_TOL * scale:
                group.append(z)
                break
        else:
            groups.append([z])
    return np.array([np.mean(g) for g in groups]), [len(g) for g in groups]


def _count_clusters(values):
    values = np.sort(np.asarray(values, dtype=float))
    if values.size == 0:
        return 0
    count = 1
    for prev, cur in zip(values[:-1], values[1:]):
        if cur - prev > ROOT_CLUSTER_TOL * max(1.0, abs(cur)):
            count += 1
    return count


def classify_from_minors(minors, roots, log_mismatch=True):
    """按主子式模式与根的重数给出分类"""
    minors = np.asarray(minors, dtype=float)
    m = minors.size
    rho = max(1.0, float(np.max(np.abs(roots)))) if len(roots) else 1.0
    normalized = np.array([minors[j - 1] / rho ** (j * (j - 1)) for j in range(1, m + 1)])

    centers, _ = _group_roots(np.asarray(roots, dtype=complex))
    if np.any(np.abs(centers.imag) > IMAG_TOL):
        return Classification("not_hyperbolic", None, normalized, np.asarray(roots), len(centers), True)

    if np.any(normalized < -CLASSIFY_TOL):
        return Classification("not_hyperbolic", None, normalized, np.asarray(roots), len(centers), False)
    r = 0
    while r < m and normalized[r] > CLASSIFY_TOL:
        r += 1
    if not np.all(np.abs(normalized[r:]) <= CLASSIFY_TOL):
        return Classification("not_hyperbolic", None, normalized, np.asarray(roots), len(centers), False)

    distinct = _count_clusters(centers.real)
    agrees = distinct == r
    if not agrees and log_mismatch:
        logger.warning(f"主子式模式给出 r={r}，但根的聚类给出 {distinct} 个不同根: {np.round(roots, 12)}")
    kind = "strict" if r == m else "weak"
    return Classification(kind, r, normalized, np.asarray(roots), distinct, agrees)


def classify_hyperbolicity(spec, t, xi, log_mismatch=True):
    """(t, ξ) 处的双曲性分类：strict、weak(r) 或 not_hyperbolic

    主子式 Δ_j（去掉前 m-j 行列后的尾部主子式）归一化后按 1e-10 的绝对容差判断符号，
    并与伴随矩阵特征值的聚类数交叉校验。
    """
    frame = build_frame(spec, t, xi)
    sym = build_symmetriser(frame)
    roots = np.linalg.eigvals(frame.A)
    return classify_from_minors(sym.minors, roots, log_mismatch=log_mismatch)


def sample_directions(n, count=64):
    """单位方向采样：n=1 取 ±1，n=2 取 count 个等分角，n≥3 取球面 Fibonacci 点"""
    if n == 1:
        return [np.array([1.0]), np.array([-1.0])]
    if n == 2:
        angles = 2.0 * np.pi * np.arange(count) / count
        return [np.array([math.cos(a), math.sin(a)]) for a in angles]
    if n == 3:
        golden = math.pi * (3.0 - math.sqrt(5.0))
        dirs = []
        for k in range(count):
            z = 1.0 - 2.0 * (k + 0.5) / count
            radius = math.sqrt(1.0 - z * z)
            dirs.append(np.array([radius * math.cos(golden * k), radius * math.sin(golden * k), z]))
        return dirs
    rng = np.random.default_rng(0)
    return [unit_direction(v) for v in rng.standard_normal((count, n))]


@dataclass(frozen=True)
class GridConfig:
    """分析网格

    Args:
        t_nodes: 时间节点数
        xi_decades: 二进频率量级 2^0..2^xi_decades
        directions: n≥2 时的方向数
        zero_radius: 零点邻域半径，邻域内不计算商
        stability_tol: 加密前后上确界允许的相对变化
        refine: 是否做加密与频率扩展检验
        threads: 并行线程数（None 时取 HYPAN_THREADS）
        progress: 是否显示进度条
    """
    t_nodes: int = 256
    xi_decades: int = 4
    directions: int = 64
    zero_radius: float = ZERO_RADIUS
    stability_tol: float = STABILITY_TOL
    refine: bool = True
    threads: object = None
    progress: bool = False

    def __post_init__(self):
        if self.t_nodes < 2:
            raise SpecValidationError(f"t_nodes 必须 ≥ 2，收到 {self.t_nodes}")
        if self.xi_decades < 0:
            raise SpecValidationError(f"xi_decades 必须 ≥ 0，收到 {self.xi_decades}")
        if not self.zero_radius > 0 or not self.stability_tol > 0:
            raise SpecValidationError("zero_radius 与 stability_tol 必须为正")

    def magnitudes(self):
        return 2.0 ** np.arange(self.xi_decades + 1)

    def extension_magnitude(self):
        return 2.0 ** (self.xi_decades + 1)

    def refined(self):
        return replace(self, t_nodes=2 * self.t_nodes, zero_radius=self.zero_radius / 2.0)

    def to_dict(self):
        return {
            "t_nodes": self.t_nodes,
            "xi_decades": self.xi_decades,
            "directions": self.directions,
            "zero_radius": self.zero_radius,
            "stability_tol": self.stability_tol,
            "refine": self.refine,
        }


def _make_pool(grid, pool, desc):
    return pool or ModeTaskPool(threads=grid.threads, progress=grid.progress, desc=desc)


def _prepare_directions(spec, grid):
    """方向采样与零点定位；Δ 恒为零的方向被记录并跳过"""
    usable, degenerate = [], []
    for direction in sample_directions(spec.n, grid.directions):
        try:
            usable.append((direction, find_zeros(spec, direction)))
        except DegenerateDirectionError as e:
            logger.warning(f"退化方向已跳过: {e}")
            degenerate.append(direction.tolist())
    return usable, degenerate


def _sample_times(spec, sigma, grid):
    ts = np.linspace(spec.a, spec.b, grid.t_nodes)
    radius = grid.zero_radius
    extra = [t for t_j in sigma for t in (t_j - radius, t_j + radius) if spec.a <= t <= spec.b]
    ts = np.unique(np.concatenate((ts, np.asarray(extra, dtype=float))))
    if sigma:
        distance = np.min(np.abs(ts[:, None] - np.asarray(sigma)[None, :]), axis=1)
        ts = ts[distance >= radius * (1.0 - 1e-9)]
    return ts


class _Extremum:
    """跟踪上确界/下确界及其见证点"""

    def __init__(self):
        self.sup = -math.inf
        self.sup_at = None
        self.inf = math.inf
        self.inf_at = None

    def update(self, values, ts, xi):
        values = np.asarray(values, dtype=float)
        if values.size == 0:
            return
        bad = ~np.isfinite(values)
        if np.any(bad):
            idx = int(np.argmax(bad))
            self.sup, self.sup_at = math.inf, (float(ts[idx]), xi.tolist())
            return
        idx = int(np.argmax(values))
        if values[idx] > self.sup:
            self.sup, self.sup_at = float(values[idx]), (float(ts[idx]), xi.tolist())
        idx = int(np.argmin(values))
        if values[idx] < self.inf:
            self.inf, self.inf_at = float(values[idx]), (float(ts[idx]), xi.tolist())

    @property
    def value(self):
        return self.sup if self.sup_at is not None else math.nan


def _sweep(spec, grid, directions, magnitudes, evaluate, pool):
    """对 (方向, 量级) 网格求 evaluate 返回的各量的极值"""
    tasks = [(direction, sigma, float(s)) for direction, sigma in directions for s in magnitudes]

    def work(task):
        direction, sigma, s = task
        xi = s * direction
        field_ = SymmetriserField(spec, xi)
        ts = _sample_times(spec, sigma, grid)
        # 零点邻域已由 zero_radius 排除，这里只去掉 Δ 恰为零的点
        ts = ts[field_.delta(ts) > 0.0]
        if ts.size == 0:
            return xi, ts, {}
        return xi, ts, evaluate(field_, xi, ts, sigma)

    stats = {}
    for xi, ts, values in pool.map(work, tasks):
        for key, arr in values.items():
            stats.setdefault(key, _Extremum()).update(arr, ts, xi)
    return stats


def _stable(base, others, tol):
    if not math.isfinite(base):
        return False
    for other in others:
        if not math.isfinite(other):
            return False
        if max(abs(base), abs(other)) <= TINY_SUP:
            continue
        if abs(other - base) > tol * max(abs(base), TINY_SUP):
            return False
    return True


def _evaluate_condition(spec, grid, directions, evaluate, pool):
    """基础网格、时间加密（零点邻域减半）与频率扩展三次求值，给出各量的稳定性判定"""
    base = _sweep(spec, grid, directions, grid.magnitudes(), evaluate, pool)
    refined, extended = {}, {}
    if grid.refine:
        refined = _sweep(spec, grid.refined(), directions, grid.magnitudes(), evaluate, pool)
        extra = _sweep(spec, grid, directions, [grid.extension_magnitude()], evaluate, pool)
        for key, ext in base.items():
            extended[key] = max(ext.value, extra[key].value) if key in extra else ext.value
    results = {}
    for key, ext in base.items():
        others = []
        entry = {"sup": ext.value, "witness": ext.sup_at, "inf": ext.inf if ext.inf_at else math.nan,
                 "inf_witness": ext.inf_at}
        if grid.refine:
            entry["refined_sup"] = refined[key].value if key in refined else math.nan
            entry["extended_sup"] = extended[key]
            others = [entry["refined_sup"], entry["extended_sup"]]
        entry["verdict"] = _stable(ext.value, others, grid.stability_tol)
        results[key] = entry
    return results


def _empty_entry():
    return {"sup": math.nan, "witness": None, "inf": math.nan, "inf_witness": None, "verdict": False}


@dataclass(frozen=True, eq=False)
class GR1mResult:
    """条件 |ψ| ≤ C₁Δ̃ 的检验结果"""
    C1_estimate: float
    jt2_sup: float
    verdict: bool
    witness: object
    details: dict
    quotient_traces: dict
    delta2_sandwich: dict
    degenerate_directions: list

    def to_dict(self):
        return {
            "C1_estimate": self.C1_estimate,
            "jt2_sup": self.jt2_sup,
            "verdict": self.verdict,
            "witness": self.witness,
            "details": self.details,
            "quotient_traces": self.quotient_traces,
            "delta2_sandwich": self.delta2_sandwich,
            "degenerate_directions": self.degenerate_directions,
        }


def _gr1m_quantities(field_, xi, ts, sigma):
    delta = field_.delta(ts)
    d_delta = field_.d_delta(ts)
    psi = np.abs(field_.psi(ts))
    z2 = np.asarray(z_function(sigma, ts)) ** 2
    tilde = delta + d_delta ** 2 / delta
    return {
        "jt2": z2 * psi / delta,
        "psi_over_delta_tilde": psi / tilde,
        "delta_derivative_quotient": np.abs(d_delta) / np.sqrt(delta * tilde),
        "delta2": z2 * tilde / delta,
    }


def check_gr1m(spec, grid=None, pool=None, directions=None):
    """检验 |ψ| ≤ C₁Δ̃，判定依据为 Z²|ψ|/Δ 的网格上确界是否有限且稳定

    Args:
        spec: 算子描述
        grid: GridConfig
        pool: 可选 ModeTaskPool
        directions: 可选，预先计算的 (方向, 零点) 列表

    Returns:
        GR1mResult: C1 估计、Z²|ψ|/Δ 上确界、判定与见证点
    """
    grid = grid or GridConfig()
    pool = _make_pool(grid, pool, "GR1m")
    degenerate = []
    if directions is None:
        directions, degenerate = _prepare_directions(spec, grid)
    stats = _evaluate_condition(spec, grid, directions, _gr1m_quantities, pool)
    jt2 = stats.get("jt2", _empty_entry())
    c1 = stats.get("psi_over_delta_tilde", _empty_entry())
    dq = stats.get("delta_derivative_quotient", _empty_entry())
    sandwich = stats.get("delta2", _empty_entry())
    result = GR1mResult(
        C1_estimate=c1["sup"],
        jt2_sup=jt2["sup"],
        verdict=bool(jt2["verdict"]),
        witness=jt2["witness"],
        details=jt2,
        quotient_traces={
            "delta_derivative_quotient": dq["sup"],
            "psi_over_delta_tilde": c1["sup"],
            "psi_over_delta_tilde_verdict": bool(c1["verdict"]),
        },
        delta2_sandwich={"inf": sandwich["inf"], "sup": sandwich["sup"]},
        degenerate_directions=degenerate,
    )
    logger.info(f"GR1m 检验完成: Z²|ψ|/Δ 上确界={result.jt2_sup:.6g}, C1≈{result.C1_estimate:.6g}, 成立={result.verdict}")
    return result


def _levi_quotients(Q, rows, delta):
    """|q_{im} b_j - conj(b_i) q_{jm}| / Δ，形状 (N, m, m)"""
    q_last = Q[:, :, -1]
    d = q_last[:, :, None] * rows[:, None, :] - np.conj(rows)[:, :, None] * q_last[:, None, :]
    return np.abs(d) / delta[:, None, None]


@dataclass(frozen=True, eq=False)
class LeviResult:
    """Levi 条件检验结果"""
    mode: str
    constants: np.ndarray
    sup: float
    verdict: bool
    witness: object
    grades: dict
    residuals: dict
    degenerate_directions: list

    def to_dict(self):
        return {
            "mode": self.mode,
            "constants": self.constants.tolist(),
            "sup": self.sup,
            "verdict": self.verdict,
            "witness": self.witness,
            "grades": self.grades,
            "residuals": self.residuals,
            "degenerate_directions": self.degenerate_directions,
        }


def _parse_mode(mode, l_max, m):
    if mode not in ("complex", "real", "graded"):
        raise SpecValidationError(f"Levi 模式必须是 complex、real 或 graded，收到 {mode!r}")
    if mode == "graded":
        l_max = m - 1 if l_max is None else int(l_max)
        if not 0 <= l_max <= m - 1:
            raise SpecValidationError(f"l_max 必须在 0..{m - 1} 之间，收到 {l_max}")
    return l_max


def check_levi(spec, grid=None, mode="complex", l_max=None, pool=None, directions=None):
    """检验 Levi 条件 |q_{im}b_j - conj(b_i)q_{jm}| ≤ cΔ

    mode='complex' 检查全部 (i, j)；mode='real' 只检查 i<j 且要求低阶系数为实；
    mode='graded' 按 B = Σ B_{-l} 分级，只检查 l ≤ l_max，其余级报告 sup|b_{-l}|⟨ξ⟩^l。
    """
    grid = grid or GridConfig()
    l_max = _parse_mode(mode, l_max, spec.m)
    if mode == "real" and not spec.lower_is_real:
        raise SpecValidationError("real 模式要求所有低阶系数为实值")
    pool = _make_pool(grid, pool, "Levi")
    degenerate = []
    if directions is None:
        directions, degenerate = _prepare_directions(spec, grid)
    m = spec.m
    pairs = [(i, j) for i in range(m) for j in range(m) if mode != "real" or i < j]

    def evaluate(field_, xi, ts, sigma):
        Q = field_.Q(ts)
        delta = field_.delta(ts)
        values = {}
        if mode == "graded":
            graded = np.array([eval_graded_lower_rows(spec, t, xi) for t in ts]).reshape(len(ts), m, m)
            for l in range(m):
                rows = graded[:, l, :]
                if l <= l_max:
                    quotients = _levi_quotients(Q, rows, delta)
                    values[f"grade_{l}"] = quotients.reshape(len(ts), m * m).max(axis=1) if len(ts) else np.array([])
                    for i, j in pairs:
                        values[f"q_{l}_{i}_{j}"] = quotients[:, i, j]
                else:
                    values[f"residual_{l}"] = np.abs(rows).max(axis=1) * (1.0 + float(xi @ xi)) ** (l / 2.0)
        else:
            rows = np.array([eval_lower_row(spec, t, xi) for t in ts]).reshape(len(ts), m)
            quotients = _levi_quotients(Q, rows, delta)
            for i, j in pairs:
                values[f"q_{i}_{j}"] = quotients[:, i, j]
        return values

    stats = _evaluate_condition(spec, grid, directions, evaluate, pool)
    constants = np.full((m, m), np.nan)
    grades, residuals = {}, {}
    if mode == "graded":
        verdict = True
        for l in range(l_max + 1):
            entry = stats.get(f"grade_{l}", _empty_entry())
            grades[str(l)] = {"sup": entry["sup"], "verdict": bool(entry["verdict"]), "witness": entry["witness"]}
            verdict = verdict and bool(entry["verdict"])
            for i, j in pairs:
                value = stats.get(f"q_{l}_{i}_{j}", _empty_entry())["sup"]
                constants[i, j] = np.nanmax([constants[i, j], value]) if not np.isnan(value) else constants[i, j]
        for l in range(l_max + 1, m):
            residuals[str(l)] = stats.get(f"residual_{l}", _empty_entry())["sup"]
        sups = [g["sup"] for g in grades.values()]
        sup = float(np.max(sups)) if sups else math.nan
        witness = max(grades.values(), key=lambda g: g["sup"] if math.isfinite(g["sup"]) else math.inf)["witness"] \
            if grades else None
    else:
        best = None
        verdict = bool(pairs)
        for i, j in pairs:
            entry = stats.get(f"q_{i}_{j}", _empty_entry())
            constants[i, j] = entry["sup"]
            verdict = verdict and bool(entry["verdict"])
            if best is None or not (entry["sup"] <= best["sup"]):
                best = entry
        sup = best["sup"] if best else math.nan
        witness = best["witness"] if best else None
        if not pairs:
            verdict = True
            sup = 0.0

    result = LeviResult(mode=mode, constants=constants, sup=sup, verdict=verdict, witness=witness,
                        grades=grades, residuals=residuals, degenerate_directions=degenerate)
    logger.info(f"Levi 检验完成 (mode={mode}): 上确界={sup:.6g}, 成立={verdict}")
    return result


@dataclass(frozen=True, eq=False)
class M2Report:
    """m=2 等价条件的数值比较"""
    sups: dict
    verdicts: dict
    witnesses: dict
    agreement: dict

    def to_dict(self):
        return {"sups": self.sups, "verdicts": self.verdicts, "witnesses": self.witnesses,
                "agreement": self.agreement}


def m2_equivalences(spec, grid=None, pool=None):
    """m=2 时比较 GR1m、条件 (i)、条件 (ii) 以及两种 Levi 形式

    (i):  Z²((∂ₜλ₁)² + (∂ₜλ₂)²) ≤ M(λ₁-λ₂)²
    (ii): λ₁² + λ₂² ≤ M(λ₁-λ₂)²
    LC2:  |b_j|² ≤ c q_jj
    LCB2: |q₁₂b₂ - b₁q₂₂|² ≤ cΔ

    根由闭式 λ = (a₂ ∓ sqrt(Δ))/2 给出，m=2 时 Δ = a₂² + 4a₁ 直接取自 Δ 的多项式。
    """
    if spec.m != 2:
        raise SpecValidationError(f"m2_equivalences 只适用于 m=2，收到 m={spec.m}")
    grid = grid or GridConfig()
    pool = _make_pool(grid, pool, "m=2")
    directions, _ = _prepare_directions(spec, grid)

    def evaluate(field_, xi, ts, sigma):
        if len(ts) == 0:
            return {key: np.array([]) for key in ("gr1m", "cond_i", "cond_ii", "lc2", "lcb2")}
        _, p2 = principal_row_polynomials(spec, xi)
        a2 = p2(ts)
        da2 = p2.deriv()(ts)
        disc = field_.delta(ts)
        keep = disc > 0.0
        sq = np.sqrt(np.where(keep, disc, 1.0))
        lam1, lam2 = (a2 - sq) / 2.0, (a2 + sq) / 2.0
        dsq = field_.d_delta(ts) / (2.0 * sq)
        dlam1, dlam2 = (da2 - dsq) / 2.0, (da2 + dsq) / 2.0
        gap = np.where(keep, (lam1 - lam2) ** 2, 1.0)
        z2 = np.asarray(z_function(sigma, ts)) ** 2
        delta = field_.delta(ts)
        Q = field_.Q(ts)
        rows = np.array([eval_lower_row(spec, t, xi) for t in ts]).reshape(len(ts), 2)
        q11, q12, q22 = Q[:, 0, 0], Q[:, 0, 1], Q[:, 1, 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            lc2 = np.maximum(np.abs(rows[:, 0]) ** 2 / q11, np.abs(rows[:, 1]) ** 2 / q22)
        lc2 = np.where(np.abs(rows).max(axis=1) == 0.0, 0.0, lc2)
        values = {
            "gr1m": z2 * np.abs(field_.psi(ts)) / delta,
            "cond_i": z2 * (dlam1 ** 2 + dlam2 ** 2) / gap,
            "cond_ii": (lam1 ** 2 + lam2 ** 2) / gap,
            "lc2": lc2,
            "lcb2": np.abs(q12 * rows[:, 1] - rows[:, 0] * q22) ** 2 / delta,
        }
        # disc ≤ 0 的点只在零点上出现，已被零点邻域排除
        return {key: np.where(keep, v, 0.0) for key, v in values.items()}

    stats = _evaluate_condition(spec, grid, directions, evaluate, pool)
    keys = ("gr1m", "cond_i", "cond_ii", "lc2", "lcb2")
    sups = {k: stats.get(k, _empty_entry())["sup"] for k in keys}
    verdicts = {k: bool(stats.get(k, _empty_entry())["verdict"]) for k in keys}
    witnesses = {k: stats.get(k, _empty_entry())["witness"] for k in keys}
    agreement = {
        "gr1m_i_ii": verdicts["gr1m"] == verdicts["cond_i"] == verdicts["cond_ii"],
        "lc2_lcb2": (verdicts["lc2"] == verdicts["lcb2"]) if verdicts["cond_ii"] else None,
    }
    if not agreement["gr1m_i_ii"]:
        logger.warning(f"m=2 等价条件判定不一致: {verdicts}")
    return M2Report(sups=sups, verdicts=verdicts, witnesses=witnesses, agreement=agreement)


@dataclass(eq=False)
class AnalysisReport:
    """完整分析报告"""
    hyperbolicity: str
    C1_estimate: float
    levi_constants: np.ndarray
    verdicts: dict
    witnesses: dict
    gr1m: object = None
    levi: object = None
    classification: dict = field(default_factory=dict)
    eigenvalue_bound: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "hyperbolicity": self.hyperbolicity,
            "C1_estimate": self.C1_estimate,
            "levi_constants": self.levi_constants.tolist(),
            "verdicts": dict(self.verdicts),
            "witnesses": dict(self.witnesses),
            "gr1m": self.gr1m.to_dict() if self.gr1m else None,
            "levi": self.levi.to_dict() if self.levi else None,
            "classification": dict(self.classification),
            "eigenvalue_bound": dict(self.eigenvalue_bound),
            "grid": dict(self.grid),
        }


class HyperbolicityAnalyzer:
    """双曲性分析器：在方向×频率×时间网格上汇总分类、GR1m 与 Levi 检验"""

    def __init__(self, spec, grid=None, pool=None):
        """
        初始化分析器

        Args:
            spec: 算子描述
            grid: GridConfig，默认网格
            pool: 可选 ModeTaskPool
        """
        self.spec = spec
        self.grid = grid or GridConfig()
        self.pool = _make_pool(self.grid, pool, "analyze")
        self.report = None
        logger.info(f"双曲性分析器初始化完成: m={spec.m}, n={spec.n}")

    def _zeros_at(self, xi):
        field_ = SymmetriserField(self.spec, xi)
        if field_.is_degenerate:
            return np.array([])
        return np.asarray(find_zeros(self.spec, xi, field_), dtype=float)

    def classify_grid(self, t_samples=65):
        """在粗网格加上 Δ 的零点处逐点分类，返回整体分类与 Q 最小特征值下界检查"""
        spec = self.spec
        grid_ts = np.linspace(spec.a, spec.b, min(t_samples, self.grid.t_nodes))
        worst = {"label": "strict", "r": spec.m, "witness": None}
        mismatches = 0
        eig_min, det_q, eig_max = [], [], []
        for direction in sample_directions(spec.n, self.grid.directions):
            for s in self.grid.magnitudes():
                xi = s * direction
                ts = np.union1d(grid_ts, self._zeros_at(xi))
                for t in ts:
                    frame = build_frame(spec, t, xi)
                    sym = build_symmetriser(frame)
                    cls = classify_from_minors(sym.minors, np.linalg.eigvals(frame.A), log_mismatch=False)
                    if not cls.oracle_agrees:
                        mismatches += 1
                    if cls.kind == "not_hyperbolic":
                        if worst["label"] != "not_hyperbolic":
                            worst = {"label": "not_hyperbolic", "r": None, "witness": (float(t), xi.tolist())}
                        continue
                    eigs = np.linalg.eigvalsh(sym.Q)
                    eig_min.append(eigs[0])
                    eig_max.append(eigs[-1])
                    det_q.append(sym.delta)
                    if worst["label"] != "not_hyperbolic" and cls.kind == "weak" and cls.r < worst["r"]:
                        worst = {"label": cls.label, "r": cls.r, "witness": (float(t), xi.tolist())}
        if mismatches:
            logger.warning(f"{mismatches} 个网格点上主子式模式与根聚类数不一致（通常位于零点附近）")

        bound = {}
        if eig_min:
            c0 = float(np.max(eig_max))
            margins = np.asarray(eig_min) - np.asarray(det_q) / c0 ** (spec.m - 1)
            bound = {
                "c0": c0,
                "min_margin": float(np.min(margins)),
                "holds": bool(np.min(margins) >= -CLASSIFY_TOL * max(1.0, c0)),
                "min_eigenvalue": float(np.min(eig_min)),
            }
        worst["oracle_mismatches"] = mismatches
        return worst, bound

    def analyze(self):
        """执行完整分析并返回 AnalysisReport"""
        spec = self.spec
        logger.info("开始双曲性分析...")
        classification, eig_bound = self.classify_grid()
        m = spec.m
        if classification["label"] == "not_hyperbolic":
            logger.error(f"算子非双曲，见证点 (t, ξ) = {classification['witness']}")
            self.report = AnalysisReport(
                hyperbolicity="not_hyperbolic",
                C1_estimate=math.nan,
                levi_constants=np.full((m, m), np.nan),
                verdicts={"gr1m_holds": False, "levi_holds": False, "degenerate_direction_found": False},
                witnesses={"hyperbolicity": classification["witness"]},
                classification=classification,
                eigenvalue_bound=eig_bound,
                grid=self.grid.to_dict(),
            )
            return self.report

        directions, degenerate = _prepare_directions(spec, self.grid)
        gr1m = check_gr1m(spec, self.grid, self.pool, directions)
        levi = check_levi(spec, self.grid, "complex", pool=self.pool, directions=directions)
        self.report = AnalysisReport(
            hyperbolicity=classification["label"],
            C1_estimate=gr1m.C1_estimate,
            levi_constants=levi.constants,
            verdicts={
                "gr1m_holds": gr1m.verdict,
                "levi_holds": levi.verdict,
                "degenerate_direction_found": bool(degenerate),
            },
            witnesses={
                "hyperbolicity": classification["witness"],
                "gr1m": gr1m.witness,
                "levi": levi.witness,
            },
            gr1m=replace(gr1m, degenerate_directions=degenerate),
            levi=replace(levi, degenerate_directions=degenerate),
            classification=classification,
            eigenvalue_bound=eig_bound,
            grid=self.grid.to_dict(),
        )
        logger.info(f"双曲性分析完成: {self.report.hyperbolicity}, GR1m={gr1m.verdict}, Levi={levi.verdict}")
        return self.report

    def get_analysis_results(self):
        """获取分析结果（字典形式）"""
        if self.report is None:
            self.analyze()
        return self.report.to_dict()
