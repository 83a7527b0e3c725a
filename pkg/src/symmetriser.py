#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
标准对称化子模块
由伴随矩阵末行构造 (p, p') 的 Bezout 矩阵 Q，计算主子式 Δ_j、∂ₜQ、
广义 Hamilton-Cayley 系数 d_h、Δ̃ 以及检验函数 ψ
"""

import math
import logging
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial

from src.errors import SpecValidationError
from src.operator_model import principal_row_polynomials, _as_xi

logger = logging.getLogger("HypAn.Symmetriser")

# 多项式系数的截断阈值（相对于系数尺度），用于消除抵消噪声
CHOP_TOL = 1e-13
# |Δ| < ZERO_TOL·‖Δ‖∞ 视为零点
ZERO_TOL = 1e-12
# Hamilton-Cayley 交叉校验的相对容差
HC_CHECK_TOL = 1e-8


def bezout_matrix(f):
    """(p, p') 的 Bezout 矩阵

    Args:
        f: p 的升幂系数 f_0..f_m，元素可以是浮点数或 Polynomial

    Returns:
        list: m×m 嵌套列表，下标按幂次排列，Q[m-1][m-1] = m·f_m²
    """
    m = len(f) - 1
    g = [(i + 1) * f[i + 1] for i in range(m)] + [0 * f[0]]
    C = [[f[i] * g[j] - f[j] * g[i] for j in range(m + 1)] for i in range(m + 1)]
    B = [[None] * m for _ in range(m)]
    for q in range(m):
        B[m - 1][q] = C[m][q]
    for i in range(m - 2, -1, -1):
        for q in range(m):
            B[i][q] = C[i + 1][q] + B[i + 1][q - 1] if q > 0 else C[i + 1][q]
    return B


def generic_det(M):
    """按第一行展开的行列式，对子列集合做缓存，元素支持任意环运算"""
    n = len(M)
    if n == 0:
        return 1.0
    cache = {}

    def expand(cols):
        row = n - len(cols)
        if len(cols) == 1:
            return M[row][cols[0]]
        if cols in cache:
            return cache[cols]
        total = None
        for pos, c in enumerate(cols):
            term = M[row][c] * expand(cols[:pos] + cols[pos + 1:])
            if total is None:
                total = term
            elif pos % 2 == 0:
                total = total + term
            else:
                total = total - term
        cache[cols] = total
        return total

    return expand(tuple(range(n)))


def cofactor_matrix(M):
    """余子式矩阵 (Q^co)_{ij} = (-1)^{i+j} det(去掉第 i 行第 j 列)"""
    n = len(M)
    if n == 1:
        return [[1.0 + 0 * M[0][0]]]
    cof = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            sub = [[M[r][c] for c in range(n) if c != j] for r in range(n) if r != i]
            value = generic_det(sub)
            cof[i][j] = value if (i + j) % 2 == 0 else -value
    return cof


def adjugate(M):
    M = np.asarray(M, dtype=float)
    return np.array(cofactor_matrix(M.tolist()), dtype=float).T


def real_critical_points(poly, lo, hi):
    """poly' 在 [lo, hi] 内的实根"""
    roots = poly.deriv().roots()
    if roots.size == 0:
        return np.array([])
    real = roots[np.abs(roots.imag) <= 1e-9 * np.maximum(1.0, np.abs(roots.real))].real
    return np.sort(real[(real > lo) & (real < hi)])


def poly_extrema(poly, lo, hi):
    """多项式在 [lo, hi] 上的 (最小值, 最大绝对值)，由端点与驻点精确给出"""
    points = np.concatenate(([lo, hi], real_critical_points(poly, lo, hi)))
    values = poly(points)
    return float(np.min(values)), float(np.max(np.abs(values)))


def _chop(poly, scale):
    coef = np.array(poly.coef, dtype=float)
    coef[np.abs(coef) <= CHOP_TOL * scale] = 0.0
    return Polynomial(coef)


def delta_tilde_value(delta, d_delta, zero_tol=0.0):
    """Δ̃ = Δ + (∂ₜΔ)²/Δ；Δ 在零点容差内时返回 math.inf 作为未定义标记"""
    if not delta > zero_tol:
        return math.inf
    return delta + d_delta * d_delta / delta


@dataclass(frozen=True, eq=False)
class Symmetriser:
    """单点 (t, ξ) 上的对称化子数据

    只由伴随矩阵构造时 (build_symmetriser) 时间导数相关字段为 None。
    """
    Q: np.ndarray
    minors: np.ndarray
    delta: float
    dQ: np.ndarray = None
    d_delta: float = None
    delta_tilde: float = None
    psi: float = None
    hc: np.ndarray = None
    t: float = None
    xi: np.ndarray = None

    @property
    def m(self):
        return self.Q.shape[0]


def build_symmetriser(frame):
    """由 SymbolFrame 的伴随矩阵末行构造 Q 及其尾部主子式

    p(λ) = λ^m - Σ_j a_j λ^{j-1}，即升幂系数 f_{j-1} = -a_j，f_m = 1。
    """
    a_row = np.asarray(frame.A[-1], dtype=float)
    f = [-float(v) for v in a_row] + [1.0]
    Q = np.array(bezout_matrix(f), dtype=float)
    m = Q.shape[0]
    minors = np.array([np.linalg.det(Q[m - j:, m - j:]) for j in range(1, m + 1)])
    return Symmetriser(Q=Q, minors=minors, delta=float(minors[-1]), t=frame.t, xi=frame.xi)


def hamilton_cayley(Q, dQ, dcof=None):
    """det(λQ - ∂ₜQ) = Σ d_h λ^{m-h} 的系数

    在 m+1 个缩放后的 Chebyshev 节点上求行列式，再解 Vandermonde 方程组。

    Args:
        Q: 对称化子
        dQ: ∂ₜQ
        dcof: 可选 ∂ₜ(Q^co)，给出时用迹公式交叉校验 d_2

    Returns:
        tuple: (d 数组 d_0..d_m, ψ)
    """
    Q = np.asarray(Q, dtype=float)
    dQ = np.asarray(dQ, dtype=float)
    m = Q.shape[0]
    norm_q = np.linalg.norm(Q, 2)
    norm_d = np.linalg.norm(dQ, 2)

    d = np.zeros(m + 1)
    if norm_d == 0.0:
        d[0] = np.linalg.det(Q)
    else:
        rho = norm_d / norm_q if norm_q > 0 else 1.0
        nodes = 2.0 * np.cos((2 * np.arange(m + 1) + 1) * np.pi / (2 * (m + 1)))
        values = np.array([np.linalg.det(x * Q - dQ / rho) for x in nodes])
        c = np.linalg.solve(np.vander(nodes, m + 1), values)
        d = c * rho ** np.arange(m + 1)

    reference = max(1.0, norm_q + norm_d) ** m
    checks = {
        "d0": (d[0], np.linalg.det(Q)),
        "d1": (d[1], -np.trace(adjugate(Q) @ dQ)),
        "dm": (d[m], (-1) ** m * np.linalg.det(dQ)),
    }
    if dcof is not None and m >= 2:
        checks["d2"] = (d[2], 0.5 * np.trace(dQ @ np.asarray(dcof, dtype=float)))
    for name, (value, expected) in checks.items():
        if abs(value - expected) > HC_CHECK_TOL * reference:
            logger.warning(f"Hamilton-Cayley 校验 {name} 不一致: 插值 {value!r}，直接计算 {expected!r}")

    psi = float(d[2]) if m >= 2 else 0.0
    return d, psi


class SymmetriserField:
    """固定 ξ 时把 Q(t) 作为 t 的多项式矩阵

    ∂ₜQ、主子式、Δ、∂ₜ(Q^co) 与 ψ = ½·tr(∂ₜQ ∂ₜ(Q^co)) 都在多项式层面精确求得。
    """

    def __init__(self, spec, xi):
        self.spec = spec
        self.xi = _as_xi(spec, xi)
        for idx, entry in enumerate(spec.principal):
            if entry.coeff.kind != "polynomial":
                raise SpecValidationError(f"principal[{idx}]: 主部系数必须是多项式才能对 t 求导")
        rows = principal_row_polynomials(spec, self.xi)
        m = spec.m
        self.m = m
        self.coef_scale = max(1.0, max(float(np.max(np.abs(p.coef))) for p in rows))
        s = self.coef_scale

        f = [-p for p in rows] + [Polynomial([1.0])]
        raw = bezout_matrix(f)
        self.Q_poly = [[_chop(raw[i][j], s ** 2) for j in range(m)] for i in range(m)]
        self.dQ_poly = [[q.deriv() for q in row] for row in self.Q_poly]

        self.minor_polys = []
        for j in range(1, m + 1):
            block = [row[m - j:] for row in self.Q_poly[m - j:]]
            self.minor_polys.append(_chop(generic_det(block), s ** (2 * j)))
        self.delta_poly = self.minor_polys[-1]
        self.d_delta_poly = self.delta_poly.deriv()

        cof = cofactor_matrix(self.Q_poly)
        self.dcof_poly = [[_chop(c, s ** (2 * (m - 1))).deriv() for c in row] for row in cof]
        if m >= 2:
            psi = Polynomial([0.0])
            for i in range(m):
                for j in range(m):
                    psi = psi + self.dQ_poly[i][j] * self.dcof_poly[j][i]
            self.psi_poly = _chop(0.5 * psi, s ** (2 * m))
        else:
            self.psi_poly = Polynomial([0.0])

        _, self.delta_sup = poly_extrema(self.delta_poly, spec.a, spec.b)
        self.delta_scale = s ** (2 * m)

    @staticmethod
    def _eval(polys, ts):
        ts = np.asarray(ts, dtype=float)
        m = len(polys)
        out = np.empty(ts.shape + (m, m))
        for i in range(m):
            for j in range(m):
                out[..., i, j] = polys[i][j](ts)
        return out

    def Q(self, t):
        return self._eval(self.Q_poly, t)

    def dQ(self, t):
        return self._eval(self.dQ_poly, t)

    def dcof(self, t):
        return self._eval(self.dcof_poly, t)

    def minors(self, t):
        return np.array([p(t) for p in self.minor_polys])

    def delta(self, t):
        return self.delta_poly(t)

    def d_delta(self, t):
        return self.d_delta_poly(t)

    def psi(self, t):
        return self.psi_poly(t)

    @property
    def zero_tol(self):
        return ZERO_TOL * self.delta_sup

    @property
    def is_degenerate(self):
        """Δ(·,ξ) 在工作区间上恒为零（容差内）"""
        return self.delta_sup <= ZERO_TOL * self.delta_scale

    def delta_tilde(self, t):
        return delta_tilde_value(float(self.delta(t)), float(self.d_delta(t)), self.zero_tol)

    def at(self, t):
        """计算 t 处完整的 Symmetriser"""
        Q = self.Q(t)
        dQ = self.dQ(t)
        hc, psi = hamilton_cayley(Q, dQ, self.dcof(t))
        delta = float(self.delta(t))
        d_delta = float(self.d_delta(t))
        return Symmetriser(
            Q=Q,
            minors=self.minors(t),
            delta=delta,
            dQ=dQ,
            d_delta=d_delta,
            delta_tilde=delta_tilde_value(delta, d_delta, self.zero_tol),
            psi=psi,
            hc=hc,
            t=float(t),
            xi=self.xi,
        )


def differentiate_symmetriser(spec, t, xi):
    """∂ₜQ(t, ξ)，由 Q 的多项式元素精确求导"""
    spec.check_time(t)
    return SymmetriserField(spec, xi).dQ(t)


def delta_tilde(spec, t, xi):
    """Δ̃(t, ξ)；Δ 为零时返回 math.inf"""
    spec.check_time(t)
    return SymmetriserField(spec, xi).delta_tilde(t)


def compute_symmetriser(spec, t, xi):
    """(t, ξ) 处的完整对称化子数据"""
    spec.check_time(t)
    return SymmetriserField(spec, xi).at(t)
