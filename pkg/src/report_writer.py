#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
报告输出模块
把分析结果写成 JSON 快照与 CSV 明细，每个产物都附带版本号与运行配置
"""

import os
import json
import math
import logging

import numpy as np
import pandas as pd

from src import __version__

logger = logging.getLogger("HypAn.ReportWriter")


def to_jsonable(value):
    """递归转换为可 JSON 序列化的对象

    非有限浮点数写为 None，复数写为 [re, im]，numpy 数组与标量转为内置类型。
    """
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (complex, np.complexfloating)):
        return [to_jsonable(float(value.real)), to_jsonable(float(value.imag))]
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    if hasattr(value, "to_dict"):
        return to_jsonable(value.to_dict())
    return value


class ReportWriter:
    """按运行配置写出 JSON/CSV 产物"""

    def __init__(self, output_dir, config=None):
        """
        初始化报告输出器

        Args:
            output_dir: 输出目录（不存在时自动创建）
            config: 运行配置字典，写入每个产物
        """
        self.output_dir = output_dir
        self.config = to_jsonable(config or {})
        os.makedirs(self.output_dir, exist_ok=True)
        self.written = []

    def path(self, filename):
        return os.path.join(self.output_dir, filename)

    def write_json(self, filename, payload):
        """写出 JSON 快照，键排序、缩进 4"""
        document = {"hypan_version": __version__, "config": self.config}
        document.update(to_jsonable(payload))
        filepath = self.path(filename)
        with open(filepath, "w", encoding="utf-8") as f:
            json.dump(document, f, ensure_ascii=False, indent=4, sort_keys=True, allow_nan=False)
            f.write("\n")
        self.written.append(filepath)
        logger.info(f"结果已保存到: {filepath}")
        return filepath

    def write_csv(self, filename, frame):
        """写出 CSV 明细：先写注释头（版本与配置），再写 %.17g 格式的数据"""
        if not isinstance(frame, pd.DataFrame):
            frame = pd.DataFrame(frame)
        filepath = self.path(filename)
        with open(filepath, "w", encoding="utf-8", newline="") as f:
            f.write(f"# hypan_version: {__version__}\n")
            f.write(f"# config: {json.dumps(self.config, ensure_ascii=False, sort_keys=True)}\n")
            frame.to_csv(f, index=False, float_format="%.17g")
        self.written.append(filepath)
        logger.info(f"数据已保存到: {filepath}")
        return filepath
