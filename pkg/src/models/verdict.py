#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
检查结论模型定义
"""

from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field, model_validator

from src.core.linalg import FullJet


class VerdictStatus(str, Enum):
    """三值结论"""
    HOLDS = "holds"                # 成立
    FAILS = "fails"                # 不成立（附反例）
    INCONCLUSIVE = "inconclusive"  # 无法判定


class WitnessJet(BaseModel):
    """可序列化的带基点 jet"""
    x: List[float]
    r: Optional[float] = None
    p: Optional[List[float]] = None
    A: Optional[List[List[float]]] = None

    @classmethod
    def from_full_jet(cls, jet: FullJet) -> "WitnessJet":
        return cls(**jet.to_dict())

    @classmethod
    def from_point(cls, x, value: Optional[float] = None) -> "WitnessJet":
        return cls(x=[float(t) for t in x], r=value)


class ScanDiagnostics(BaseModel):
    """扫描计数器"""
    points_scanned: int = 0
    points_skipped: int = 0           # 不可微点（测度零）
    points_unknown: int = 0           # 三值判定为 unknown 的点
    points_inconclusive: int = 0
    worst_margin: Optional[float] = None
    extra: Dict[str, Any] = Field(default_factory=dict)


class Verdict(BaseModel):
    """定理检查结论"""
    check: str
    status: VerdictStatus
    vacuous: bool = False  # 前件不成立，蕴含式平凡成立
    witness: Optional[WitnessJet] = None
    diagnostics: ScanDiagnostics = Field(default_factory=ScanDiagnostics)
    message: Optional[str] = None

    @model_validator(mode="after")
    def fails_requires_witness(self) -> "Verdict":
        """fails 必须附带可复核的反例"""
        if self.status == VerdictStatus.FAILS and self.witness is None:
            raise ValueError("fails 结论必须附带 witness")
        return self

    @property
    def holds(self) -> bool:
        return self.status == VerdictStatus.HOLDS


class Violation(BaseModel):
    """审计中发现的一个违例"""
    index: int
    jet: WitnessJet
    drop: float  # f(j) − f(j+P) 或凸性缺口


class ScanReport(BaseModel):
    """统计审计报告（正性审计、拟凸性审计）"""
    name: str
    n_samples: int
    tol: float
    violations: List[Violation] = Field(default_factory=list)
    violation_count: int = 0
    worst: float = 0.0  # 最大违例量，无违例时 ≤ tol

    @property
    def passed(self) -> bool:
        return self.violation_count == 0
