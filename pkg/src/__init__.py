"""HypAn：弱双曲 Cauchy 问题的对称化子分析与逐模态求解工具"""

__version__ = "0.1.0"
