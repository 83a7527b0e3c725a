#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
HypAn - 弱双曲 Cauchy 问题分析工具
主程序入口
"""

import os
import logging
from dotenv import load_dotenv

# 加载环境变量
load_dotenv()

LOG_DIR = os.environ.get("HYPAN_LOG_DIR", "logs")

# 确保日志目录存在
os.makedirs(LOG_DIR, exist_ok=True)

# 配置日志
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    handlers=[
        logging.FileHandler(os.path.join(LOG_DIR, "hypan.log"), encoding="utf-8"),
        logging.StreamHandler()
    ]
)
logger = logging.getLogger("HypAn")

from src.cli import main

if __name__ == "__main__":
    try:
        raise SystemExit(main())
    except KeyboardInterrupt:
        logger.info("接收到中断信号，退出")
        raise SystemExit(130)
