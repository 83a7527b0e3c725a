#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
异常定义模块
HypAn 所有模块抛出的异常类型，CLI 根据类型映射退出码
"""


class HypAnError(Exception):
    """HypAn 异常基类"""


class SpecValidationError(HypAnError):
    """算子描述、初始数据或运行配置不合法（退出码 2）"""


class DegenerateDirectionError(SpecValidationError):
    """Δ(·,ξ) 在某个方向上恒为零（退化方向）"""

    def __init__(self, message, xi_dir=None):
        super().__init__(message)
        self.xi_dir = xi_dir


class NumericalAbort(HypAnError):
    """数值计算失败：步长下溢、NaN、溢出或交叉校验不一致（退出码 3）"""

    def __init__(self, message, t=None, xi=None):
        super().__init__(message)
        self.t = t
        self.xi = xi
