#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
任务池模块
用 threading.Thread + queue.Queue 实现的有序并行 map，
用于方向网格分析、频率扫描与逐模态求解
"""

import logging
import threading
from queue import Queue, Empty

from tqdm import tqdm

from src.settings import load_settings

logger = logging.getLogger("HypAn.TaskPool")


class ModeTaskPool:
    """有序并行 map：结果顺序与输入一致，线程数受 HYPAN_THREADS 限制"""

    def __init__(self, threads=None, progress=None, desc="HypAn"):
        """
        初始化任务池

        Args:
            threads: 工作线程数，默认取配置 HYPAN_THREADS
            progress: 是否显示进度条，默认取配置 HYPAN_PROGRESS
            desc: 进度条标题
        """
        if threads is None or progress is None:
            settings = load_settings()
            threads = settings.threads if threads is None else threads
            progress = settings.progress if progress is None else progress
        self.threads = max(1, int(threads))
        self.progress = bool(progress)
        self.desc = desc

    def map(self, func, items, desc=None):
        """对 items 逐个调用 func，返回按输入顺序排列的结果列表

        任一任务抛出异常时，在所有线程结束后重新抛出下标最小的那个异常。
        """
        items = list(items)
        if not items:
            return []
        bar = tqdm(total=len(items), desc=desc or self.desc, disable=not self.progress, leave=False)
        results = [None] * len(items)
        errors = {}

        if self.threads == 1 or len(items) == 1:
            try:
                for idx, item in enumerate(items):
                    results[idx] = func(item)
                    bar.update(1)
            finally:
                bar.close()
            return results

        task_queue = Queue()
        for idx, item in enumerate(items):
            task_queue.put((idx, item))
        lock = threading.Lock()
        stop = threading.Event()

        def worker():
            while not stop.is_set():
                try:
                    idx, item = task_queue.get_nowait()
                except Empty:
                    return
                try:
                    results[idx] = func(item)
                except Exception as e:
                    with lock:
                        errors[idx] = e
                    stop.set()
                finally:
                    with lock:
                        bar.update(1)
                    task_queue.task_done()

        workers = [threading.Thread(target=worker, daemon=True) for _ in range(min(self.threads, len(items)))]
        for thread in workers:
            thread.start()
        for thread in workers:
            thread.join()
        bar.close()

        if errors:
            first = min(errors)
            logger.error(f"任务 {first} 失败: {errors[first]}")
            raise errors[first]
        return results
