#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
区域、接触查询与接触集估计模型定义
"""

from typing import List, Optional

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from src.core.linalg import SymMatrix
from src.models.verdict import VerdictStatus, WitnessJet


# 各维数的默认每轴网格点数
DEFAULT_GRID = {1: 201, 2: 101, 3: 41}


def default_grid(n: int) -> int:
    """定理扫描的默认每轴网格点数"""
    return DEFAULT_GRID.get(n, 11)


class Box(BaseModel):
    """紧集 K = [lo, hi]，开区域 X 为其内部"""
    lo: List[float]
    hi: List[float]

    @model_validator(mode="after")
    def check_bounds(self) -> "Box":
        if len(self.lo) != len(self.hi) or not self.lo:
            raise ValueError(f"lo/hi 维度不一致: {len(self.lo)} vs {len(self.hi)}")
        if any(a >= b for a, b in zip(self.lo, self.hi)):
            raise ValueError(f"需要 lo < hi（逐分量）: lo={self.lo}, hi={self.hi}")
        return self

    @classmethod
    def cube(cls, n: int, half_width: float = 1.0, center: Optional[List[float]] = None) -> "Box":
        c = np.zeros(n) if center is None else np.asarray(center, dtype=float)
        return cls(lo=(c - half_width).tolist(), hi=(c + half_width).tolist())

    @property
    def dim(self) -> int:
        return len(self.lo)

    def axes(self, points_per_axis: int) -> List[np.ndarray]:
        if points_per_axis < 3:
            raise ValueError(f"每轴网格点数必须 ≥ 3: {points_per_axis}")
        return [np.linspace(a, b, points_per_axis) for a, b in zip(self.lo, self.hi)]

    def grid(self, points_per_axis: int) -> np.ndarray:
        """含边界的完整网格，形状 (N, n)，字典序"""
        mesh = np.meshgrid(*self.axes(points_per_axis), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def boundary_mask(self, points_per_axis: int) -> np.ndarray:
        """网格点是否位于某个面上"""
        idx = np.stack(np.meshgrid(*[np.arange(points_per_axis)] * self.dim, indexing="ij"), axis=-1)
        idx = idx.reshape(-1, self.dim)
        return np.any((idx == 0) | (idx == points_per_axis - 1), axis=1)

    def translate(self, shift: List[float]) -> "Box":
        s = np.asarray(shift, dtype=float)
        return Box(lo=(np.asarray(self.lo) + s).tolist(), hi=(np.asarray(self.hi) + s).tolist())


class ContactQuery(BaseModel):
    """上接触 jet 查询：在 B_rho(x0) 的有限探针集上检验 (1.1)"""
    x0: List[float]
    p: List[float]
    A: List[List[float]]
    rho: float = Field(..., gt=0)
    grid_per_axis: int = Field(41, ge=3)
    strict_margin: float = Field(0.0, ge=0)
    tol: float = Field(1e-9, ge=0)
    extra_probes: int = Field(64, ge=0)  # 集中在 rho/100 以内的附加探针

    @model_validator(mode="after")
    def check_dims(self) -> "ContactQuery":
        n = len(self.x0)
        if len(self.p) != n or len(self.A) != n or any(len(row) != n for row in self.A):
            raise ValueError(f"x0/p/A 维度不一致 (n={n})")
        return self

    @classmethod
    def build(cls, x0, p, A, rho: float, **kwargs) -> "ContactQuery":
        A_arr = A.array if isinstance(A, SymMatrix) else np.asarray(A, dtype=float)
        return cls(
            x0=np.atleast_1d(np.asarray(x0, dtype=float)).tolist(),
            p=np.atleast_1d(np.asarray(p, dtype=float)).tolist(),
            A=np.atleast_2d(A_arr).tolist(),
            rho=rho,
            **kwargs,
        )

    @property
    def dim(self) -> int:
        return len(self.x0)

    @property
    def strict(self) -> bool:
        return self.strict_margin > 0

    def x0_array(self) -> np.ndarray:
        return np.asarray(self.x0, dtype=float)

    def p_array(self) -> np.ndarray:
        return np.asarray(self.p, dtype=float)

    def A_matrix(self) -> SymMatrix:
        return SymMatrix(self.A)

    def with_jet(self, p, A) -> "ContactQuery":
        A_arr = A.array if isinstance(A, SymMatrix) else np.asarray(A, dtype=float)
        return self.model_copy(update={"p": np.asarray(p, dtype=float).tolist(), "A": A_arr.tolist()})


class ContactResult(BaseModel):
    """接触检验结果：网格证书 + 最坏违例诊断"""
    is_contact: bool
    max_violation: float
    worst_point: Optional[List[float]] = None
    n_probes: int


class ContactSetEstimate(BaseModel):
    """C(w, B_rho, A0) 测度占比的蒙特卡罗估计"""
    fraction: float = Field(..., ge=0, le=1)
    n_samples: int
    witnesses: List[List[float]] = Field(default_factory=list)
    witness_count: int = 0
    rho: float

    @field_validator("witnesses")
    @classmethod
    def cap_witnesses(cls, v: List[List[float]]) -> List[List[float]]:
        return v[:64]


class WitnessPoint(BaseModel):
    """见证序列中的一项"""
    eps: float
    x: List[float]
    r: float
    p: List[float]
    A: List[List[float]]
    gradient_gap: float  # ‖p_j − p0‖


class WitnessSequence(BaseModel):
    """上接触 jet 定理的见证序列"""
    status: VerdictStatus
    points: List[WitnessPoint] = Field(default_factory=list)
    samples_used: List[int] = Field(default_factory=list)
    lambda_qc: float = 0.0
    best_candidate: Optional[List[float]] = None
    message: Optional[str] = None

    @property
    def found(self) -> bool:
        return self.status == VerdictStatus.HOLDS


def ball_probes(x0: np.ndarray, rho: float, grid_per_axis: int, extra: int = 0) -> np.ndarray:
    """
    B_rho(x0) 内的探针集：立方网格截取到球内，加上靠近 x0 的附加探针

    Args:
        x0: 球心
        rho: 半径
        grid_per_axis: 每轴网格点数
        extra: 附加探针数（半径 ≤ rho/100，按几何级数递减）

    Returns:
        探针坐标 (M, n)
    """
    n = x0.shape[0]
    axes = [np.linspace(-rho, rho, grid_per_axis)] * n
    offsets = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=-1)
    offsets = offsets[np.linalg.norm(offsets, axis=1) <= rho * (1 + 1e-12)]
    if extra > 0:
        offsets = np.vstack([offsets, _near_offsets(n, rho, extra)])
    return x0[None, :] + offsets


def _near_offsets(n: int, rho: float, count: int) -> np.ndarray:
    # 方向：±e_i 加上固定种子的随机单位向量
    basis = [s * e for e in np.eye(n) for s in (1.0, -1.0)]
    n_dirs = max(2, min(len(basis) + 6, count))
    rng = np.random.default_rng(0)
    extra_dirs = rng.standard_normal((max(0, n_dirs - len(basis)), n))
    extra_dirs /= np.linalg.norm(extra_dirs, axis=1, keepdims=True)
    dirs = np.vstack([np.array(basis), extra_dirs])[:n_dirs]
    n_radii = int(np.ceil(count / len(dirs)))
    radii = (rho / 100.0) * 0.5 ** np.arange(n_radii)
    out = np.array([r * d for r in radii for d in dirs])
    return out[:count]



class Decomposition(BaseModel):
    """和的接触 jet 分解为 u、v 两个分量的 jet"""
    status: VerdictStatus
    x0: List[float]
    u_jet: Optional[WitnessJet] = None  # (u(x0), Du(x0), A′)
    v_jet: Optional[WitnessJet] = None  # (v(x0), Dv(x0), B)
    P: Optional[List[List[float]]] = None  # A′ − A，应 ⪰ 0
    lambda_min_P: Optional[float] = None
    p_gap: Optional[float] = None  # |Du(x0) + Dv(x0) − p0|
    lambda_qc: float = 0.0  # 夹逼所用的公共 λ
    sandwich_ok: Optional[bool] = None
    components_contact: Optional[bool] = None  # u、v 各自的接触 jet 网格校验
    witnesses: Optional[WitnessSequence] = None
    message: Optional[str] = None
