#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
算子模型模块
描述 D_t^m u - Σ a_{ν,j}(t) D_t^{m-j} D_x^ν u = 0 形式的算子，
计算伪微分约化后的伴随矩阵 A(t,ξ)、低阶矩阵 B(t,ξ) 及齐次主系数 h
"""

import json
import math
import logging
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial
from numpy.polynomial import polynomial as npoly

from src.errors import SpecValidationError

logger = logging.getLogger("HypAn.Operator")

# 分段边界与工作区间端点的比较容差
BOUNDARY_TOL = 1e-12


def _parse_number(value, where):
    """解析实数或 [re, im] 复数对"""
    if isinstance(value, bool):
        raise SpecValidationError(f"{where}: 系数不能是布尔值")
    if isinstance(value, (int, float)):
        return complex(float(value), 0.0)
    if isinstance(value, (list, tuple)) and len(value) == 2 \
            and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
        return complex(float(value[0]), float(value[1]))
    raise SpecValidationError(f"{where}: 系数必须是数字或 [re, im] 对，收到 {value!r}")


def _parse_coefficients(values, where):
    if not isinstance(values, (list, tuple)) or len(values) == 0:
        raise SpecValidationError(f"{where}: 多项式系数列表不能为空")
    coeffs = np.array([_parse_number(v, f"{where}[{i}]") for i, v in enumerate(values)], dtype=complex)
    if not np.all(np.isfinite(coeffs)):
        raise SpecValidationError(f"{where}: 多项式系数必须有限")
    return coeffs


@dataclass(frozen=True, eq=False)
class TimeCoefficient:
    """时间系数：多项式或分段多项式

    pieces 为 ((lo, hi), 升幂系数数组) 组成的元组；多项式类型只有一段。
    """
    kind: str
    pieces: tuple

    @classmethod
    def polynomial(cls, coeffs):
        coeffs = np.asarray(coeffs, dtype=complex)
        return cls("polynomial", (((-math.inf, math.inf), coeffs),))

    @classmethod
    def piecewise(cls, pieces):
        """由 [((lo, hi), coeffs), ...] 构造分段多项式，区间须首尾相接"""
        ordered = sorted(
            (((float(lo), float(hi)), np.asarray(c, dtype=complex)) for (lo, hi), c in pieces),
            key=lambda piece: piece[0])
        if not ordered:
            raise SpecValidationError("分段系数至少需要一段")
        for (lo, hi), _ in ordered:
            if not lo < hi:
                raise SpecValidationError(f"分段区间 [{lo}, {hi}] 非法")
        for ((_, hi), _), ((lo, _), _) in zip(ordered[:-1], ordered[1:]):
            if abs(hi - lo) > BOUNDARY_TOL:
                raise SpecValidationError(f"分段区间不连续: {hi} 与 {lo} 之间有间隙或重叠")
        return cls("piecewise_polynomial", tuple(ordered))

    @property
    def is_real(self):
        return all(np.all(c.imag == 0.0) for _, c in self.pieces)

    @property
    def span(self):
        return self.pieces[0][0][0], self.pieces[-1][0][1]

    def breakpoints(self):
        """内部断点（相邻分段的交界）"""
        return tuple(hi for (_, hi), _ in self.pieces[:-1])

    def piece_index(self, t, side="right"):
        """返回包含 t 的分段下标；side='left' 时断点归属左段"""
        bounds = np.array(self.breakpoints())
        if bounds.size == 0:
            return 0
        return int(np.searchsorted(bounds, t, side="right" if side == "right" else "left"))

    def coefficients(self, t=None, side="right"):
        if self.kind == "polynomial" or t is None:
            return self.pieces[0][1]
        return self.pieces[self.piece_index(t, side)][1]

    def as_polynomial(self, t=None, side="right"):
        return Polynomial(self.coefficients(t, side))

    def __call__(self, t, side="right"):
        return complex(npoly.polyval(t, self.coefficients(t, side)))


@dataclass(frozen=True, eq=False)
class CoefficientEntry:
    """系数项 a_{ν,j}(t)"""
    nu: tuple
    j: int
    coeff: TimeCoefficient

    @property
    def order(self):
        return int(sum(self.nu))


@dataclass(frozen=True, eq=False)
class OperatorSpec:
    """算子 M 的完整描述

    Args:
        m: 时间导数阶数
        n: 空间维数
        interval: 开区间 (δ, T+δ)
        work: 闭工作区间 [a, b]，δ < a < b < T+δ
        t0: 初始时刻
        principal: 主部系数项，|ν| = j，实值多项式
        lower: 低阶系数项，|ν| ≤ j-1，可为复值或分段多项式
    """
    m: int
    n: int
    interval: tuple
    work: tuple
    t0: float
    principal: tuple
    lower: tuple = ()
    name: str = ""

    def __post_init__(self):
        self._validate()

    @property
    def a(self):
        return float(self.work[0])

    @property
    def b(self):
        return float(self.work[1])

    def _validate(self):
        if not isinstance(self.m, int) or self.m < 1:
            raise SpecValidationError(f"m 必须是 ≥1 的整数，收到 {self.m!r}")
        if not isinstance(self.n, int) or self.n < 1:
            raise SpecValidationError(f"n 必须是 ≥1 的整数，收到 {self.n!r}")
        lo, hi = (float(v) for v in self.interval)
        a, b = self.a, self.b
        if not lo < a < b < hi:
            raise SpecValidationError(
                f"interval/work 必须满足 δ < a < b < T+δ，收到 interval=({lo}, {hi}), work=[{a}, {b}]")
        if not a <= float(self.t0) <= b:
            raise SpecValidationError(f"t0={self.t0} 不在工作区间 [{a}, {b}] 内")

        seen = set()
        for kind, entries in (("principal", self.principal), ("lower", self.lower)):
            for idx, entry in enumerate(entries):
                where = f"{kind}[{idx}]"
                if len(entry.nu) != self.n or any((not isinstance(v, int)) or v < 0 for v in entry.nu):
                    raise SpecValidationError(f"{where}.nu 必须是长度为 n={self.n} 的非负整数多重指标，收到 {entry.nu}")
                if not 1 <= entry.j <= self.m:
                    raise SpecValidationError(f"{where}.j 必须在 1..{self.m} 之间，收到 {entry.j}")
                key = (tuple(entry.nu), entry.j)
                if key in seen:
                    raise SpecValidationError(f"{where}: 重复的 (nu, j) 键 {key}")
                seen.add(key)
                if kind == "principal":
                    if entry.order != entry.j:
                        raise SpecValidationError(f"{where}: 主部项要求 |nu| = j，收到 |nu|={entry.order}, j={entry.j}")
                    if entry.coeff.kind != "polynomial":
                        raise SpecValidationError(f"{where}: 主部系数必须是解析的多项式，不允许分段")
                    if not entry.coeff.is_real:
                        raise SpecValidationError(f"{where}: 主部系数必须是实值多项式")
                else:
                    if entry.order > entry.j - 1:
                        raise SpecValidationError(f"{where}: 低阶项要求 |nu| ≤ j-1，收到 |nu|={entry.order}, j={entry.j}")
                    if entry.coeff.kind == "piecewise_polynomial":
                        start, stop = entry.coeff.span
                        if start > a + BOUNDARY_TOL or stop < b - BOUNDARY_TOL:
                            raise SpecValidationError(
                                f"{where}.pieces 必须覆盖工作区间 [{a}, {b}]，实际覆盖 [{start}, {stop}]")

    @property
    def lower_is_real(self):
        return all(entry.coeff.is_real for entry in self.lower)

    @property
    def has_piecewise_lower(self):
        return any(entry.coeff.kind == "piecewise_polynomial" for entry in self.lower)

    @property
    def principal_is_constant(self):
        return all(np.all(entry.coeff.coefficients()[1:] == 0) for entry in self.principal)

    def breakpoints(self):
        """工作区间内部的所有分段断点（升序去重）"""
        points = set()
        for entry in self.lower:
            for t in entry.coeff.breakpoints():
                if self.a + BOUNDARY_TOL < t < self.b - BOUNDARY_TOL:
                    points.add(float(t))
        return tuple(sorted(points))

    def check_time(self, t):
        if not self.a - BOUNDARY_TOL <= t <= self.b + BOUNDARY_TOL:
            raise SpecValidationError(f"t={t} 不在工作区间 [{self.a}, {self.b}] 内")


def _parse_entry(raw, where, n):
    if not isinstance(raw, dict):
        raise SpecValidationError(f"{where}: 系数项必须是对象")
    if "nu" not in raw or "j" not in raw:
        raise SpecValidationError(f"{where}: 缺少 nu 或 j 字段")
    nu = raw["nu"]
    if not isinstance(nu, (list, tuple)) or any(isinstance(v, bool) or not isinstance(v, int) for v in nu):
        raise SpecValidationError(f"{where}.nu 必须是整数列表，收到 {nu!r}")
    j = raw["j"]
    if isinstance(j, bool) or not isinstance(j, int):
        raise SpecValidationError(f"{where}.j 必须是整数，收到 {j!r}")
    if "pieces" in raw:
        pieces = []
        for p_idx, piece in enumerate(raw["pieces"]):
            p_where = f"{where}.pieces[{p_idx}]"
            if not isinstance(piece, dict) or "interval" not in piece or "poly" not in piece:
                raise SpecValidationError(f"{p_where}: 分段必须包含 interval 与 poly")
            lo, hi = piece["interval"]
            pieces.append(((lo, hi), _parse_coefficients(piece["poly"], f"{p_where}.poly")))
        try:
            coeff = TimeCoefficient.piecewise(pieces)
        except SpecValidationError as e:
            raise SpecValidationError(f"{where}.pieces: {e}")
    elif "poly" in raw:
        coeff = TimeCoefficient.polynomial(_parse_coefficients(raw["poly"], f"{where}.poly"))
    else:
        raise SpecValidationError(f"{where}: 需要 poly 或 pieces 字段")
    return CoefficientEntry(tuple(nu), j, coeff)


def operator_spec_from_dict(data, name=""):
    """由 JSON 字典构造 OperatorSpec

    Args:
        data: 解析后的算子描述字典
        name: 可选名称（通常是文件名）

    Returns:
        OperatorSpec: 校验后的算子描述
    """
    if not isinstance(data, dict):
        raise SpecValidationError("算子描述必须是 JSON 对象")
    for key in ("m", "n", "interval", "work", "principal"):
        if key not in data:
            raise SpecValidationError(f"算子描述缺少字段 {key}")
    for key in ("interval", "work"):
        value = data[key]
        if not isinstance(value, (list, tuple)) or len(value) != 2:
            raise SpecValidationError(f"{key} 必须是长度为 2 的数组，收到 {value!r}")
    n = data["n"]
    principal = tuple(_parse_entry(raw, f"principal[{i}]", n) for i, raw in enumerate(data["principal"]))
    lower = tuple(_parse_entry(raw, f"lower[{i}]", n) for i, raw in enumerate(data.get("lower", [])))
    work = (float(data["work"][0]), float(data["work"][1]))
    return OperatorSpec(
        m=data["m"],
        n=n,
        interval=(float(data["interval"][0]), float(data["interval"][1])),
        work=work,
        t0=float(data.get("t0", work[0])),
        principal=principal,
        lower=lower,
        name=name,
    )


def load_operator_spec(path):
    """从 JSON 文件读取算子描述"""
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError:
        raise SpecValidationError(f"找不到算子描述文件: {path}")
    except json.JSONDecodeError as e:
        raise SpecValidationError(f"算子描述文件 {path} 不是合法 JSON: {e}")
    spec = operator_spec_from_dict(data, name=str(path))
    logger.info(f"已加载算子描述 {path}: m={spec.m}, n={spec.n}, 工作区间 [{spec.a}, {spec.b}]")
    return spec


def japanese_bracket(xi):
    """⟨ξ⟩ = sqrt(1 + |ξ|²)"""
    xi = np.asarray(xi, dtype=float)
    return math.sqrt(1.0 + float(np.dot(xi, xi)))


def _as_xi(spec, xi, allow_zero=False):
    arr = np.atleast_1d(np.asarray(xi, dtype=float))
    if arr.shape != (spec.n,):
        raise SpecValidationError(f"ξ 的维数必须为 n={spec.n}，收到 {arr.tolist()}")
    if not np.all(np.isfinite(arr)):
        raise SpecValidationError(f"ξ 必须有限，收到 {arr.tolist()}")
    if not allow_zero and not np.any(arr):
        raise SpecValidationError("ξ = 0 不允许用于符号求值")
    return arr


def _monomial_weight(nu, r):
    """r^ν，其中 r = ξ/⟨ξ⟩"""
    weight = 1.0
    for r_i, power in zip(r, nu):
        weight *= r_i ** power
    return weight


def _principal_polys(spec, xi):
    bracket = japanese_bracket(xi)
    r = xi / bracket
    rows = [np.zeros(1) for _ in range(spec.m)]
    for entry in spec.principal:
        idx = spec.m - entry.j
        coeffs = entry.coeff.coefficients().real * _monomial_weight(entry.nu, r)
        rows[idx] = npoly.polyadd(rows[idx], coeffs)
    return [Polynomial(c) for c in rows]


def _lower_polys(spec, xi, t_mid, grade=None):
    bracket = japanese_bracket(xi)
    r = xi / bracket
    rows = [np.zeros(1, dtype=complex) for _ in range(spec.m)]
    for entry in spec.lower:
        l = entry.j - 1 - entry.order
        if grade is not None and l != grade:
            continue
        idx = spec.m - entry.j
        coeffs = entry.coeff.coefficients(t_mid) * (_monomial_weight(entry.nu, r) * bracket ** (-l))
        rows[idx] = npoly.polyadd(rows[idx], coeffs)
    return [Polynomial(c) for c in rows]


def principal_row_polynomials(spec, xi):
    """固定 ξ 时 a_1(t,ξ), ..., a_m(t,ξ) 作为 t 的实多项式"""
    return _principal_polys(spec, _as_xi(spec, xi))


def eval_principal_row(spec, t, xi):
    """计算 a_j = Σ_{|ν|=m-j+1} a_{ν,m-j+1}(t) ξ^ν ⟨ξ⟩^{j-m-1}

    Args:
        spec: 算子描述
        t: 时刻，须在工作区间内
        xi: 非零频率向量

    Returns:
        np.ndarray: (a_1, ..., a_m)
    """
    xi = _as_xi(spec, xi)
    spec.check_time(t)
    return np.array([p(t) for p in _principal_polys(spec, xi)], dtype=float)


def eval_lower_row(spec, t, xi, side="right"):
    """计算 b_j = Σ_{|ν|≤m-j} a_{ν,m-j+1}(t) ξ^ν ⟨ξ⟩^{j-m}

    side 指定 t 恰在分段断点上时取右段还是左段。
    """
    xi = _as_xi(spec, xi)
    spec.check_time(t)
    bracket = japanese_bracket(xi)
    r = xi / bracket
    row = np.zeros(spec.m, dtype=complex)
    for entry in spec.lower:
        l = entry.j - 1 - entry.order
        row[spec.m - entry.j] += entry.coeff(t, side) * _monomial_weight(entry.nu, r) * bracket ** (-l)
    return row


def eval_graded_lower_rows(spec, t, xi):
    """低阶项按符号阶分解 B = Σ_l B_{-l}

    Returns:
        np.ndarray: 形状 (m, m)，第 l 行为 B_{-l} 的末行 (b_{-l,1}, ..., b_{-l,m})
    """
    xi = _as_xi(spec, xi)
    spec.check_time(t)
    bracket = japanese_bracket(xi)
    r = xi / bracket
    rows = np.zeros((spec.m, spec.m), dtype=complex)
    for entry in spec.lower:
        l = entry.j - 1 - entry.order
        rows[l, spec.m - entry.j] += entry.coeff(t) * _monomial_weight(entry.nu, r) * bracket ** (-l)
    return rows


@dataclass(frozen=True, eq=False)
class SymbolFrame:
    """单点 (t, ξ) 上的符号矩阵"""
    t: float
    xi: np.ndarray
    bracket: float
    A: np.ndarray
    B: np.ndarray
    h: np.ndarray

    @property
    def m(self):
        return self.A.shape[0]


def companion_matrix(row):
    """末行为 row、上对角线为 1 的伴随矩阵"""
    m = len(row)
    A = np.zeros((m, m), dtype=np.result_type(np.asarray(row), float))
    A[np.arange(m - 1), np.arange(1, m)] = 1.0
    A[-1, :] = row
    return A


def build_frame(spec, t, xi):
    """组装 A(t,ξ)、B(t,ξ) 与齐次主系数 h"""
    xi = _as_xi(spec, xi)
    a_row = eval_principal_row(spec, t, xi)
    b_row = eval_lower_row(spec, t, xi)
    bracket = japanese_bracket(xi)
    ratio = bracket / math.sqrt(float(np.dot(xi, xi)))
    # h_k = a_{m-k+1} (⟨ξ⟩/|ξ|)^k
    h = np.array([a_row[spec.m - k] * ratio ** k for k in range(1, spec.m + 1)])
    B = np.zeros((spec.m, spec.m), dtype=complex)
    B[-1, :] = b_row
    return SymbolFrame(t=float(t), xi=xi, bracket=bracket, A=companion_matrix(a_row), B=B, h=h)


class ModeGenerator:
    """固定频率 ξ 的模态方程 ∂ₜV = i(⟨ξ⟩A + B)V

    末行系数预先展开为 t 的多项式，按分段断点切成若干段；
    ξ = 0 也允许（此时只有 ν = 0 的低阶项起作用）。
    """

    def __init__(self, spec, xi):
        self.spec = spec
        self.xi = _as_xi(spec, xi, allow_zero=True)
        self.m = spec.m
        self.bracket = japanese_bracket(self.xi)
        principal = _principal_polys(spec, self.xi)
        edges = [spec.a, *spec.breakpoints(), spec.b]
        self.segments = []
        for lo, hi in zip(edges[:-1], edges[1:]):
            lower = _lower_polys(spec, self.xi, 0.5 * (lo + hi))
            rows = [npoly.polyadd(1j * self.bracket * p.coef, 1j * q.coef) for p, q in zip(principal, lower)]
            degree = max(len(r) for r in rows)
            coef = np.zeros((degree, self.m), dtype=complex)
            for col, r in enumerate(rows):
                coef[:len(r), col] = r
            self.segments.append((lo, hi, coef))
        self.breakpoints = tuple(edges[1:-1])

    def segment_index(self, t):
        for idx, (lo, hi, _) in enumerate(self.segments):
            if t < hi or idx == len(self.segments) - 1:
                return idx
        return len(self.segments) - 1

    def row(self, t, segment=None):
        idx = self.segment_index(t) if segment is None else segment
        return npoly.polyval(t, self.segments[idx][2])

    def matrix(self, t, segment=None):
        """完整生成元 i(⟨ξ⟩A + B)"""
        M = np.zeros((self.m, self.m), dtype=complex)
        M[np.arange(self.m - 1), np.arange(1, self.m)] = 1j * self.bracket
        M[-1, :] = self.row(t, segment)
        return M

    def rhs(self, segment):
        """返回分段 segment 上的向量场 f(t, V)"""
        coef = self.segments[segment][2]
        shift = 1j * self.bracket

        def field(t, V):
            dV = np.empty_like(V)
            dV[:-1] = shift * V[1:]
            dV[-1] = npoly.polyval(t, coef) @ V
            return dV

        return field
