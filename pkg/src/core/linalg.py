#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
对称矩阵与 2-jet 基础运算

所有值在构造后不可变，所有运算都是纯函数。
"""

import logging
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np

from src.core.exceptions import UsageError, check_dim

logger = logging.getLogger(__name__)

# Loewner 比较的默认相对容差：tol = DEFAULT_REL_TOL * (1 + 最大范数)
DEFAULT_REL_TOL = 1e-9

ArrayLike = Union[Sequence[float], Sequence[Sequence[float]], np.ndarray]


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


class SymMatrix:
    """n×n 实对称矩阵"""

    __slots__ = ("_m",)

    def __init__(self, entries: ArrayLike):
        m = np.array(entries, dtype=float)
        if m.ndim == 0:
            m = m.reshape(1, 1)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
            raise UsageError(f"对称矩阵需要 n×n 方阵, 得到形状 {m.shape}")
        # 按构造对称
        self._m = _frozen(0.5 * (m + m.T))

    @classmethod
    def zeros(cls, n: int) -> "SymMatrix":
        return cls(np.zeros((n, n)))

    @classmethod
    def identity(cls, n: int, scale: float = 1.0) -> "SymMatrix":
        return cls(scale * np.eye(n))

    @classmethod
    def diag(cls, values: Iterable[float]) -> "SymMatrix":
        return cls(np.diag(np.asarray(list(values), dtype=float)))

    @property
    def dim(self) -> int:
        return self._m.shape[0]

    @property
    def array(self) -> np.ndarray:
        """只读的 numpy 数组视图"""
        return self._m

    def packed(self) -> np.ndarray:
        """上三角 n(n+1)/2 个系数"""
        return self._m[np.triu_indices(self.dim)].copy()

    def eigenvalues(self) -> np.ndarray:
        """升序特征值"""
        return np.linalg.eigvalsh(self._m)

    @property
    def lambda_min(self) -> float:
        return float(self.eigenvalues()[0])

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues()[-1])

    @property
    def trace(self) -> float:
        return float(np.trace(self._m))

    def norm_inf(self) -> float:
        """最大范数 max|a_ij|"""
        return float(np.max(np.abs(self._m)))

    def quad_form(self, h: np.ndarray) -> np.ndarray:
        """⟨A h, h⟩，h 可以是 (n,) 或 (N, n)"""
        h = np.asarray(h, dtype=float)
        return np.einsum("...i,ij,...j->...", h, self._m, h)

    def __add__(self, other: "SymMatrix") -> "SymMatrix":
        check_dim(self.dim, other.dim, "矩阵")
        return SymMatrix(self._m + other._m)

    def __sub__(self, other: "SymMatrix") -> "SymMatrix":
        check_dim(self.dim, other.dim, "矩阵")
        return SymMatrix(self._m - other._m)

    def __neg__(self) -> "SymMatrix":
        return SymMatrix(-self._m)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, SymMatrix) and np.array_equal(self._m, other._m)

    def __hash__(self) -> int:
        return hash(self._m.tobytes())

    def to_list(self) -> List[List[float]]:
        return self._m.tolist()

    def __repr__(self) -> str:
        return f"SymMatrix({self._m.tolist()})"


def default_tol(*mats: SymMatrix) -> float:
    """相对于 1 + 最大范数的默认容差"""
    return DEFAULT_REL_TOL * (1.0 + max((m.norm_inf() for m in mats), default=0.0))


def loewner_leq(A: SymMatrix, B: SymMatrix, tol: Optional[float] = None) -> bool:
    """
    Loewner 序比较 A ⪯ B

    Args:
        A: 左侧矩阵
        B: 右侧矩阵
        tol: 容差（≥ 0），默认 1e-9·(1+最大范数)

    Returns:
        λ_min(B − A) ≥ −tol 时为 True
    """
    check_dim(A.dim, B.dim, "矩阵")
    if tol is None:
        tol = default_tol(A, B)
    if tol < 0:
        raise UsageError(f"容差必须非负: {tol}")
    return bool(np.linalg.eigvalsh(B.array - A.array)[0] >= -tol)


def batch_loewner_leq(A: np.ndarray, B: np.ndarray, tol: float) -> np.ndarray:
    """批量 Loewner 比较，A、B 形状 (N, n, n)"""
    return np.linalg.eigvalsh(B - A)[..., 0] >= -tol


class Jet2:
    """2-jet (r, p, A)"""

    __slots__ = ("_r", "_p", "_A")

    def __init__(self, r: float, p: ArrayLike, A: Union[SymMatrix, ArrayLike]):
        self._r = float(r)
        self._p = _frozen(np.atleast_1d(np.array(p, dtype=float)))
        self._A = A if isinstance(A, SymMatrix) else SymMatrix(A)
        check_dim(self._A.dim, self._p.shape[0], "梯度")

    @classmethod
    def zeros(cls, n: int) -> "Jet2":
        return cls(0.0, np.zeros(n), SymMatrix.zeros(n))

    @property
    def r(self) -> float:
        return self._r

    @property
    def p(self) -> np.ndarray:
        return self._p

    @property
    def A(self) -> SymMatrix:
        return self._A

    @property
    def dim(self) -> int:
        return self._p.shape[0]

    def __add__(self, other: "Jet2") -> "Jet2":
        return jet_add(self, other)

    def __neg__(self) -> "Jet2":
        return jet_negate(self)

    def __eq__(self, other: object) -> bool:
        return (isinstance(other, Jet2) and self._r == other._r
                and np.array_equal(self._p, other._p) and self._A == other._A)

    def allclose(self, other: "Jet2", atol: float = 1e-12) -> bool:
        return (self.dim == other.dim and abs(self._r - other._r) <= atol
                and np.allclose(self._p, other._p, atol=atol, rtol=0)
                and np.allclose(self._A.array, other._A.array, atol=atol, rtol=0))

    def to_dict(self) -> dict:
        return {"r": self._r, "p": self._p.tolist(), "A": self._A.to_list()}

    def __repr__(self) -> str:
        return f"Jet2(r={self._r}, p={self._p.tolist()}, A={self._A.to_list()})"


class FullJet:
    """带基点的 2-jet (x, r, p, A) ∈ J²(X)"""

    __slots__ = ("_x", "_jet")

    def __init__(self, x: ArrayLike, jet: Jet2):
        self._x = _frozen(np.atleast_1d(np.array(x, dtype=float)))
        self._jet = jet
        check_dim(jet.dim, self._x.shape[0], "基点")

    @property
    def x(self) -> np.ndarray:
        return self._x

    @property
    def jet(self) -> Jet2:
        return self._jet

    @property
    def dim(self) -> int:
        return self._x.shape[0]

    def to_dict(self) -> dict:
        return {"x": self._x.tolist(), **self._jet.to_dict()}

    def __repr__(self) -> str:
        return f"FullJet(x={self._x.tolist()}, {self._jet!r})"


def jet_add(a: Jet2, b: Jet2) -> Jet2:
    """分量相加"""
    check_dim(a.dim, b.dim, "jet")
    return Jet2(a.r + b.r, a.p + b.p, a.A + b.A)


def jet_negate(a: Jet2) -> Jet2:
    """分量取负（对合）"""
    return Jet2(-a.r, -a.p, -a.A)


def random_psd(n: int, scale: float, seed: int) -> SymMatrix:
    """
    生成半正定矩阵 GᵀG

    Args:
        n: 维数（≥ 1）
        scale: 尺度（> 0）
        seed: 随机种子，同种子结果相同

    Returns:
        λ_min ≥ 0 的对称矩阵
    """
    if n < 1:
        raise UsageError(f"维数必须 ≥ 1: {n}")
    if scale <= 0:
        raise UsageError(f"尺度必须为正: {scale}")
    rng = np.random.default_rng(seed)
    return SymMatrix(psd_stack(n, scale, rng, 1)[0])


def psd_stack(n: int, scale: float, rng: np.random.Generator, count: int) -> np.ndarray:
    """批量生成 GᵀG 形式的半正定矩阵，形状 (count, n, n)"""
    g = rng.standard_normal((count, n, n))
    return scale * np.einsum("kji,kjl->kil", g, g) / n


def random_jet_batch(n: int, rng: np.random.Generator, count: int, scale: float = 1.0):
    """批量随机 jet：返回 (x, r, p, A) 数组"""
    x = rng.uniform(-1.0, 1.0, (count, n))
    r = rng.normal(0.0, scale, count)
    p = rng.normal(0.0, scale, (count, n))
    g = rng.standard_normal((count, n, n)) * scale
    A = 0.5 * (g + np.swapaxes(g, 1, 2))
    return x, r, p, A
