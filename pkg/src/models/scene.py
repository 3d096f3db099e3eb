#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
场景配置与运行报告模型定义
"""

import hashlib
import json
from enum import Enum
from typing import Annotated, Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, Field, model_validator

from src.models.geometry import Box
from src.models.verdict import Verdict, WitnessJet


# ---------------------------------------------------------------------------
# 函数与子方程
# ---------------------------------------------------------------------------

class QuadraticPiece(BaseModel):
    """c + ⟨p, y⟩ + ½⟨Ay, y⟩"""
    c: float = 0.0
    p: List[float]
    A: List[List[float]]


class MaxQuadSpec(BaseModel):
    """二次函数的最大值"""
    kind: Literal["max_quad"] = "max_quad"
    pieces: List[QuadraticPiece] = Field(..., min_length=1)


class SampledSpec(BaseModel):
    """采样数据的上卷积：sites/values 内联或 csv 文件二选一"""
    kind: Literal["sampled"] = "sampled"
    sites: Optional[List[List[float]]] = None
    values: Optional[List[float]] = None
    csv: Optional[str] = None
    eps: float = Field(..., gt=0)

    @model_validator(mode="after")
    def check_source(self) -> "SampledSpec":
        inline = self.sites is not None or self.values is not None
        if inline == (self.csv is not None):
            raise ValueError("sampled 函数需要 sites/values 或 csv 之一")
        if inline and (self.sites is None or self.values is None):
            raise ValueError("sites 与 values 必须同时给出")
        return self


class SumSpec(BaseModel):
    """两个已命名函数之和"""
    kind: Literal["sum"] = "sum"
    u: str
    v: str


FunctionSpec = Annotated[Union[MaxQuadSpec, SampledSpec, SumSpec], Field(discriminator="kind")]


class SubequationSpec(BaseModel):
    """目录引用"""
    name: str
    params: Dict[str, Any] = Field(default_factory=dict)
    dual: bool = False


# ---------------------------------------------------------------------------
# 检查
# ---------------------------------------------------------------------------

class CheckBase(BaseModel):
    label: Optional[str] = None
    grid: Optional[int] = Field(None, ge=3)  # 覆盖场景网格
    tol: Optional[float] = Field(None, ge=0)  # 覆盖场景容差

    def function_refs(self) -> List[str]:
        return []

    def subequation_refs(self) -> List[str]:
        return []

    def vectors(self) -> Dict[str, Any]:
        """需要与场景维数一致的向量/矩阵字段"""
        return {}


class AeCheck(CheckBase):
    type: Literal["ae"] = "ae"
    function: str
    subequation: str
    domain: Box

    def function_refs(self) -> List[str]:
        return [self.function]

    def subequation_refs(self) -> List[str]:
        return [self.subequation]

    def vectors(self) -> Dict[str, Any]:
        return {"domain.lo": self.domain.lo}


class ViscosityCheck(AeCheck):
    type: Literal["viscosity"] = "viscosity"


class AdditionCheck(CheckBase):
    type: Literal["addition"] = "addition"
    u: str
    v: str
    F: str
    G: str
    domain: Box
    split_budget: int = Field(256, ge=1)

    def function_refs(self) -> List[str]:
        return [self.u, self.v]

    def subequation_refs(self) -> List[str]:
        return [self.F, self.G]

    def vectors(self) -> Dict[str, Any]:
        return {"domain.lo": self.domain.lo}


class DecomposeCheck(CheckBase):
    type: Literal["decompose"] = "decompose"
    u: str
    v: str
    x0: List[float]
    p0: List[float]
    A0: List[List[float]]
    rho: float = Field(0.5, gt=0)
    budget: int = Field(100_000, ge=1)
    eps_schedule: Optional[List[float]] = None

    def function_refs(self) -> List[str]:
        return [self.u, self.v]

    def vectors(self) -> Dict[str, Any]:
        return {"x0": self.x0, "p0": self.p0, "A0": self.A0}


class ZmpCheck(CheckBase):
    type: Literal["zmp"] = "zmp"
    u: str
    v: Optional[str] = None  # 缺省为零函数
    domain: Box

    def function_refs(self) -> List[str]:
        return [self.u] + ([self.v] if self.v else [])

    def vectors(self) -> Dict[str, Any]:
        return {"domain.lo": self.domain.lo}


class StrictComparisonCheck(CheckBase):
    type: Literal["strict_comparison"] = "strict_comparison"
    G: str
    F: str
    u: str
    v: str
    domain: Box
    margin: float = Field(1e-6, gt=0)
    n_audit: int = Field(10_000, ge=1)

    def function_refs(self) -> List[str]:
        return [self.u, self.v]

    def subequation_refs(self) -> List[str]:
        return [self.G, self.F]

    def vectors(self) -> Dict[str, Any]:
        return {"domain.lo": self.domain.lo}


class ContactMeasureCheck(CheckBase):
    type: Literal["contact_measure"] = "contact_measure"
    function: str
    x0: List[float]
    A0: List[List[float]]
    rhos: List[float] = Field(..., min_length=1)
    n_samples: int = Field(10_000, ge=1)
    probes_per_axis: Optional[int] = Field(None, ge=3)

    @model_validator(mode="after")
    def check_rhos(self) -> "ContactMeasureCheck":
        if any(r <= 0 for r in self.rhos):
            raise ValueError(f"rho 必须为正: {self.rhos}")
        return self

    def function_refs(self) -> List[str]:
        return [self.function]

    def vectors(self) -> Dict[str, Any]:
        return {"x0": self.x0, "A0": self.A0}


class PositivityAuditCheck(CheckBase):
    type: Literal["positivity_audit"] = "positivity_audit"
    subequation: str
    n_samples: int = Field(100_000, ge=1)

    def subequation_refs(self) -> List[str]:
        return [self.subequation]


class WitnessCheck(CheckBase):
    type: Literal["witness"] = "witness"
    function: str
    x0: List[float]
    p0: List[float]
    A0: List[List[float]]
    budget: int = Field(100_000, ge=1)
    eps_schedule: Optional[List[float]] = None

    def function_refs(self) -> List[str]:
        return [self.function]

    def vectors(self) -> Dict[str, Any]:
        return {"x0": self.x0, "p0": self.p0, "A0": self.A0}


CheckSpec = Annotated[
    Union[AeCheck, ViscosityCheck, AdditionCheck, DecomposeCheck, ZmpCheck,
          StrictComparisonCheck, ContactMeasureCheck, PositivityAuditCheck, WitnessCheck],
    Field(discriminator="type"),
]


class SceneConfig(BaseModel):
    """场景配置（JSON）"""
    dim: int = Field(..., ge=1)
    seed: int = 0
    grid: Optional[int] = Field(None, ge=3)
    tol: Optional[float] = Field(None, ge=0)
    functions: Dict[str, FunctionSpec] = Field(default_factory=dict)
    subequations: Dict[str, SubequationSpec] = Field(default_factory=dict)
    checks: List[CheckSpec] = Field(default_factory=list)

    def normal_form(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")

    def config_hash(self) -> str:
        """规范 JSON 的 sha256"""
        canonical = json.dumps(self.normal_form(), sort_keys=True, separators=(",", ":"), ensure_ascii=False)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# 报告
# ---------------------------------------------------------------------------

class CheckStatus(str, Enum):
    """单个检查的运行状态"""
    HOLDS = "holds"
    FAILS = "fails"
    INCONCLUSIVE = "inconclusive"
    PRECONDITION_ERROR = "precondition_error"  # 前提不成立
    ERROR = "error"                            # 运行异常


class CheckResult(BaseModel):
    """单个检查的结果"""
    index: int
    type: str
    label: Optional[str] = None
    status: CheckStatus
    vacuous: bool = False
    verdict: Optional[Verdict] = None
    detail: Optional[Dict[str, Any]] = None
    witness: Optional[WitnessJet] = None
    error: Optional[str] = None
    rows: List[Dict[str, Any]] = Field(default_factory=list, exclude=True)  # CSV 行，不进入 JSON


class RunReport(BaseModel):
    """运行报告：同配置同种子逐字节一致（wall_time 仅在 --timings 时记录）"""
    seed: int
    config_hash: str
    exit_code: int
    checks: List[CheckResult] = Field(default_factory=list)
    wall_time: Optional[float] = None

    def to_json(self) -> str:
        data = self.model_dump(mode="json")
        if self.wall_time is None:
            data.pop("wall_time")
        return json.dumps(data, indent=2, ensure_ascii=False) + "\n"
