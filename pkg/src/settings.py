#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
配置模块
从环境变量（可由 .env 文件提供）读取运行配置
"""

import os
import logging
from dataclasses import dataclass

from src.errors import SpecValidationError

logger = logging.getLogger("HypAn.Settings")


@dataclass(frozen=True)
class Settings:
    """运行配置

    Args:
        threads: 并行工作线程上限 (HYPAN_THREADS)
        progress: 是否显示 tqdm 进度条 (HYPAN_PROGRESS)
        output_dir: 默认输出目录 (HYPAN_OUTPUT_DIR)
        log_dir: 日志目录 (HYPAN_LOG_DIR)
    """
    threads: int
    progress: bool
    output_dir: str
    log_dir: str


def _parse_bool(value):
    return str(value).strip().lower() not in ("0", "false", "no", "off", "")


def load_settings(environ=None):
    """读取环境变量生成 Settings

    Args:
        environ: 环境变量映射，默认 os.environ

    Returns:
        Settings: 配置对象
    """
    env = os.environ if environ is None else environ

    raw_threads = env.get("HYPAN_THREADS")
    if raw_threads is None or raw_threads == "":
        threads = os.cpu_count() or 1
    else:
        try:
            threads = int(raw_threads)
        except ValueError:
            raise SpecValidationError(f"HYPAN_THREADS 必须是正整数，当前值: {raw_threads!r}")
        if threads < 1:
            raise SpecValidationError(f"HYPAN_THREADS 必须是正整数，当前值: {raw_threads!r}")

    settings = Settings(
        threads=threads,
        progress=_parse_bool(env.get("HYPAN_PROGRESS", "1")),
        output_dir=env.get("HYPAN_OUTPUT_DIR", "output"),
        log_dir=env.get("HYPAN_LOG_DIR", "logs"),
    )
    logger.debug(f"加载配置: {settings}")
    return settings
