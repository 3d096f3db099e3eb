#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
验证器异常定义
"""

from typing import Any, List, Optional


class VerifierError(Exception):
    """验证器异常基类"""


class UsageError(VerifierError, ValueError):
    """参数使用错误（如 eps ≤ 0、网格过粗、未知目录名）"""


class DimensionMismatchError(UsageError):
    """维度不一致"""

    def __init__(self, expected: int, actual: int, what: str = "对象"):
        self.expected = expected
        self.actual = actual
        super().__init__(f"{what}维度不一致: 期望 {expected}, 实际 {actual}")


class PreconditionError(VerifierError):
    """定理检查的前提条件不成立（区别于结论失败）"""

    def __init__(self, message: str, witness: Optional[Any] = None):
        super().__init__(message)
        self.witness = witness


class ConfigError(VerifierError):
    """场景配置校验失败，携带全部错误信息"""

    def __init__(self, errors: List[str]):
        self.errors = list(errors)
        super().__init__("场景配置无效:\n" + "\n".join(f"- {e}" for e in self.errors))


def check_dim(expected: int, actual: int, what: str = "对象") -> None:
    """维度检查，不一致时抛出 DimensionMismatchError"""
    if expected != actual:
        raise DimensionMismatchError(expected, actual, what)
