#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
分块并行工具

分块边界与线程数无关，结果按块序拼接，因此任何线程数下输出都相同。
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, TypeVar

import numpy as np

T = TypeVar("T")

logger = logging.getLogger(__name__)

DEFAULT_CHUNK_SIZE = 4096

_default_threads = 1


def set_default_threads(threads: int) -> None:
    """设置进程级默认线程数（由 CLI 调用一次）"""
    global _default_threads
    _default_threads = max(1, int(threads))


def get_default_threads() -> int:
    """获取默认线程数"""
    return _default_threads


def chunk_bounds(n_items: int, chunk_size: int = DEFAULT_CHUNK_SIZE) -> List[range]:
    """把 [0, n_items) 切成固定大小的块"""
    return [range(start, min(start + chunk_size, n_items)) for start in range(0, n_items, chunk_size)]


def chunk_rng(seed: int, chunk_index: int) -> np.random.Generator:
    """由 (seed, 块序号) 派生独立的随机数生成器"""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, int(chunk_index)]))


def derive_seed(seed: int, *keys: int) -> int:
    """由主种子和若干整数键派生子种子"""
    state = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, *[int(k) for k in keys]]).generate_state(1)
    return int(state[0])


def chunked_map(fn: Callable[[int, range], T],
                n_items: int,
                chunk_size: int = DEFAULT_CHUNK_SIZE,
                threads: Optional[int] = None) -> List[T]:
    """
    对每个块调用 fn(块序号, 下标范围)，按块序返回结果

    Args:
        fn: 块处理函数，必须是纯函数
        n_items: 元素总数
        chunk_size: 块大小（与线程数无关）
        threads: 线程数，默认使用进程级设置

    Returns:
        按块序排列的结果列表
    """
    chunks = chunk_bounds(n_items, chunk_size)
    workers = threads or _default_threads
    if workers <= 1 or len(chunks) <= 1:
        return [fn(i, rng) for i, rng in enumerate(chunks)]

    logger.debug(f"并行处理 {len(chunks)} 个块, 线程数 {workers}")
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, i, rng) for i, rng in enumerate(chunks)]
        return [f.result() for f in futures]
