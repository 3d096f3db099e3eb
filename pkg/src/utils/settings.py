#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
运行配置（环境变量 + .env）
"""

import os
from typing import Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Field


class Settings(BaseModel):
    """全局运行配置"""
    output_dir: str = "reports"  # run 子命令的默认输出目录
    threads: int = Field(1, ge=1)  # 默认工作线程数
    tol: float = Field(1e-9, ge=0)  # 默认容差
    log_level: str = "INFO"
    log_file: Optional[str] = None


def load_settings(env_file: Optional[str] = None) -> Settings:
    """
    从环境变量读取配置

    Args:
        env_file: 可选的 .env 文件路径，默认搜索当前目录

    Returns:
        配置对象
    """
    load_dotenv(env_file)
    return Settings(
        output_dir=os.getenv("QCV_OUTPUT_DIR", "reports"),
        threads=int(os.getenv("QCV_THREADS", 1)),
        tol=float(os.getenv("QCV_TOL", 1e-9)),
        log_level=os.getenv("LOG_LEVEL", "INFO"),
        log_file=os.getenv("LOG_FILE") or None,
    )
