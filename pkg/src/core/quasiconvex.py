#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
拟凸函数表示：二次函数的有限最大值、采样数据的上卷积、以及两者之和

在可微点处 2-jet 有闭式，不做数值微分。
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Protocol, Sequence, Union

import numpy as np
import pandas as pd

from src.core.exceptions import UsageError, check_dim
from src.core.linalg import Jet2, SymMatrix
from src.models.verdict import ScanReport, Violation, WitnessJet
from src.utils.parallel import chunk_rng, chunked_map

logger = logging.getLogger(__name__)

# 活跃集的相对并列容差
DEFAULT_TIE_TOL = 1e-9
# 判定活跃片 jet 一致的容差
GRADIENT_AGREE_TOL = 1e-8
HESSIAN_AGREE_TOL = 1e-8

# 点的分类
SMOOTH = 0             # 二阶可微
FIRST_ORDER_KINK = 1   # 活跃梯度不一致
SECOND_ORDER_KINK = 2  # 梯度一致但 Hessian 不一致


class Quadratic:
    """q(y) = c + ⟨p, y⟩ + ½⟨Ay, y⟩"""

    __slots__ = ("c", "p", "A")

    def __init__(self, c: float, p: Sequence[float], A: Union[SymMatrix, Sequence[Sequence[float]]]):
        self.c = float(c)
        self.p = np.atleast_1d(np.array(p, dtype=float))
        self.p.setflags(write=False)
        self.A = A if isinstance(A, SymMatrix) else SymMatrix(A)
        check_dim(self.A.dim, self.p.shape[0], "二次函数梯度")

    @classmethod
    def centered(cls, x0, value: float, grad, A) -> "Quadratic":
        """由 x0 处的 jet 构造 value + ⟨grad, y−x0⟩ + ½⟨A(y−x0), y−x0⟩"""
        A = A if isinstance(A, SymMatrix) else SymMatrix(A)
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        grad = np.atleast_1d(np.asarray(grad, dtype=float))
        Ax0 = A.array @ x0
        return cls(value - grad @ x0 + 0.5 * x0 @ Ax0, grad - Ax0, A)

    @classmethod
    def zero(cls, n: int) -> "Quadratic":
        return cls(0.0, np.zeros(n), SymMatrix.zeros(n))

    @property
    def dim(self) -> int:
        return self.p.shape[0]

    def value(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return self.c + X @ self.p + 0.5 * self.A.quad_form(X)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.p + self.A.array @ np.asarray(x, dtype=float)

    def __add__(self, other: "Quadratic") -> "Quadratic":
        check_dim(self.dim, other.dim, "二次函数")
        return Quadratic(self.c + other.c, self.p + other.p, self.A + other.A)

    def to_dict(self) -> dict:
        return {"c": self.c, "p": self.p.tolist(), "A": self.A.to_list()}

    def __repr__(self) -> str:
        return f"Quadratic(c={self.c}, p={self.p.tolist()}, A={self.A.to_list()})"


@dataclass(frozen=True)
class JetBatch:
    """批量 jet：mask 标记二阶可微点，kind 为点分类"""
    mask: np.ndarray
    kind: np.ndarray
    r: np.ndarray
    p: np.ndarray
    A: np.ndarray
    active: Optional[np.ndarray] = None  # (N, m) 活跃片

    def __len__(self) -> int:
        return self.mask.shape[0]


class QuasiConvexFunction(Protocol):
    """扫描与接触运算所需的函数接口"""

    @property
    def dim(self) -> int: ...

    @property
    def lambda_qc(self) -> float: ...

    def evaluate(self, X: np.ndarray) -> np.ndarray: ...

    def jets(self, X: np.ndarray, tie_tol: float = DEFAULT_TIE_TOL) -> JetBatch: ...

    def jet_at(self, x, tie_tol: float = DEFAULT_TIE_TOL) -> Optional[Jet2]: ...

    def gradient_at(self, x, tie_tol: float = DEFAULT_TIE_TOL) -> Optional[np.ndarray]: ...


class MaxQuadFunction:
    """w(y) = max_i q_i(y)，λ-拟凸，λ = max_i max(0, −λ_min(A_i))"""

    def __init__(self, pieces: Sequence[Quadratic]):
        """
        初始化

        Args:
            pieces: 非空二次函数列表（维数一致）
        """
        if not pieces:
            raise UsageError("MaxQuadFunction 至少需要一个二次片")
        n = pieces[0].dim
        for q in pieces:
            check_dim(n, q.dim, "二次片")
        self.pieces = tuple(pieces)
        self._C = np.array([q.c for q in pieces])
        self._P = np.stack([q.p for q in pieces])
        self._A = np.stack([q.A.array for q in pieces])
        for arr in (self._C, self._P, self._A):
            arr.setflags(write=False)
        # 片间 Hessian 是否一致 (m, m)
        diff = np.max(np.abs(self._A[:, None] - self._A[None, :]), axis=(2, 3))
        self._hess_equal = diff <= HESSIAN_AGREE_TOL
        self._lambda_qc = float(max(0.0, np.max(-np.linalg.eigvalsh(self._A)[:, 0])))

    @classmethod
    def from_dicts(cls, pieces: Sequence[dict]) -> "MaxQuadFunction":
        return cls([Quadratic(d["c"], d["p"], d["A"]) for d in pieces])

    @property
    def dim(self) -> int:
        return self._P.shape[1]

    @property
    def n_pieces(self) -> int:
        return len(self.pieces)

    @property
    def lambda_qc(self) -> float:
        return self._lambda_qc

    @property
    def hessians(self) -> np.ndarray:
        """各片 Hessian (m, n, n)，只读"""
        return self._A

    def piece_values(self, X: np.ndarray) -> np.ndarray:
        """各片取值 (N, m)"""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        check_dim(self.dim, X.shape[1], "求值点")
        return self._C[None, :] + X @ self._P.T + 0.5 * np.einsum("ni,mij,nj->nm", X, self._A, X)

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        """批量求值 (N, n) → (N,)"""
        return self.piece_values(X).max(axis=1)

    def eval(self, x) -> float:
        """单点求值"""
        return float(self.evaluate(np.atleast_1d(np.asarray(x, dtype=float))[None, :])[0])

    def _active(self, V: np.ndarray, tie_tol: float) -> np.ndarray:
        w = V.max(axis=1)
        return V >= (w - tie_tol * (1.0 + np.abs(w)))[:, None]

    def active_set(self, x, tie_tol: float = DEFAULT_TIE_TOL) -> List[int]:
        """
        活跃片下标（从 0 开始）

        Args:
            x: 点
            tie_tol: 相对并列容差（≥ 0）

        Returns:
            满足 q_i(x) ≥ w(x) − tie_tol·(1+|w(x)|) 的下标
        """
        if tie_tol < 0:
            raise UsageError(f"tie_tol 必须非负: {tie_tol}")
        V = self.piece_values(np.atleast_1d(np.asarray(x, dtype=float))[None, :])
        return [int(i) for i in np.flatnonzero(self._active(V, tie_tol)[0])]

    def jets(self, X: np.ndarray, tie_tol: float = DEFAULT_TIE_TOL) -> JetBatch:
        """
        批量 2-jet

        Args:
            X: 点 (N, n)
            tie_tol: 相对并列容差

        Returns:
            JetBatch；mask 为真处 (r, p, A) 是一致的 jet
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        V = self.piece_values(X)
        active = self._active(V, tie_tol)
        k = V.argmax(axis=1)
        rows = np.arange(X.shape[0])
        G = self._P[None, :, :] + np.einsum("mij,nj->nmi", self._A, X)
        Gk = G[rows, k]
        grad_tol = GRADIENT_AGREE_TOL * (1.0 + np.max(np.abs(Gk), axis=1))
        grad_ok = np.max(np.abs(G - Gk[:, None, :]), axis=2) <= grad_tol[:, None]
        hess_ok = self._hess_equal[k]
        first_order = np.all(~active | grad_ok, axis=1)
        smooth = first_order & np.all(~active | hess_ok, axis=1)
        kind = np.where(smooth, SMOOTH, np.where(first_order, SECOND_ORDER_KINK, FIRST_ORDER_KINK))
        return JetBatch(mask=smooth, kind=kind, r=V[rows, k], p=Gk, A=self._A[k], active=active)

    def jet_at(self, x, tie_tol: float = DEFAULT_TIE_TOL) -> Optional[Jet2]:
        """
        单点 2-jet：活跃片一致时返回 (w(x), Dq_i(x), A_i)，否则返回 None（一阶或二阶折点）
        """
        batch = self.jets(np.atleast_1d(np.asarray(x, dtype=float))[None, :], tie_tol)
        if not batch.mask[0]:
            return None
        return Jet2(batch.r[0], batch.p[0], batch.A[0])

    def gradient_at(self, x, tie_tol: float = DEFAULT_TIE_TOL) -> Optional[np.ndarray]:
        """一阶可微时返回梯度，否则 None"""
        batch = self.jets(np.atleast_1d(np.asarray(x, dtype=float))[None, :], tie_tol)
        if batch.kind[0] == FIRST_ORDER_KINK:
            return None
        return batch.p[0].copy()

    def add_quadratic(self, psi: Quadratic) -> "MaxQuadFunction":
        """w + ψ（仍是二次函数的最大值）"""
        return MaxQuadFunction([q + psi for q in self.pieces])

    def translate(self, shift) -> "MaxQuadFunction":
        """y ↦ w(y − shift)"""
        s = np.atleast_1d(np.asarray(shift, dtype=float))
        check_dim(self.dim, s.shape[0], "平移向量")
        out = []
        for q in self.pieces:
            As = q.A.array @ s
            out.append(Quadratic(q.c - q.p @ s + 0.5 * s @ As, q.p - As, q.A))
        return MaxQuadFunction(out)

    def to_dicts(self) -> List[dict]:
        return [q.to_dict() for q in self.pieces]

    def __repr__(self) -> str:
        return f"MaxQuadFunction(n={self.dim}, pieces={self.n_pieces}, lambda={self._lambda_qc:g})"


def quasiconvexity_constant(w: MaxQuadFunction) -> float:
    """
    拟凸常数 λ = max_i max(0, −λ_min(A_i))

    每片加上 (λ/2)|y|² 后为凸，故最大值为凸。
    """
    return w.lambda_qc


class PiecewiseQuadSum:
    """u + v，拟凸常数 ≤ λ_u + λ_v"""

    def __init__(self, u: MaxQuadFunction, v: MaxQuadFunction):
        check_dim(u.dim, v.dim, "函数")
        self.u = u
        self.v = v
        self._expanded: Optional[MaxQuadFunction] = None

    @property
    def dim(self) -> int:
        return self.u.dim

    @property
    def lambda_qc(self) -> float:
        return self.u.lambda_qc + self.v.lambda_qc

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        return self.u.evaluate(X) + self.v.evaluate(X)

    def eval(self, x) -> float:
        return self.u.eval(x) + self.v.eval(x)

    def jets(self, X: np.ndarray, tie_tol: float = DEFAULT_TIE_TOL) -> JetBatch:
        ju = self.u.jets(X, tie_tol)
        jv = self.v.jets(X, tie_tol)
        kind = np.where((ju.kind == FIRST_ORDER_KINK) | (jv.kind == FIRST_ORDER_KINK), FIRST_ORDER_KINK,
                        np.where((ju.kind == SECOND_ORDER_KINK) | (jv.kind == SECOND_ORDER_KINK),
                                 SECOND_ORDER_KINK, SMOOTH))
        return JetBatch(mask=ju.mask & jv.mask, kind=kind, r=ju.r + jv.r, p=ju.p + jv.p, A=ju.A + jv.A)

    def jet_at(self, x, tie_tol: float = DEFAULT_TIE_TOL) -> Optional[Jet2]:
        """两者都有 jet 时返回 jet 之和，否则 None"""
        a = self.u.jet_at(x, tie_tol)
        b = self.v.jet_at(x, tie_tol)
        if a is None or b is None:
            return None
        return a + b

    def gradient_at(self, x, tie_tol: float = DEFAULT_TIE_TOL) -> Optional[np.ndarray]:
        gu = self.u.gradient_at(x, tie_tol)
        gv = self.v.gradient_at(x, tie_tol)
        if gu is None or gv is None:
            return None
        return gu + gv

    def expand(self) -> MaxQuadFunction:
        """展开为单个 MaxQuadFunction（片两两相加）"""
        if self._expanded is None:
            self._expanded = MaxQuadFunction([a + b for a in self.u.pieces for b in self.v.pieces])
        return self._expanded


def function_sum(u: MaxQuadFunction, v: MaxQuadFunction) -> PiecewiseQuadSum:
    """w ≡ u + v"""
    return PiecewiseQuadSum(u, v)


class SampledFunction:
    """采样数据 (sites, values)，站点两两不同"""

    def __init__(self, sites, values):
        self.sites = np.atleast_2d(np.asarray(sites, dtype=float))
        self.values = np.atleast_1d(np.asarray(values, dtype=float))
        if self.sites.shape[0] != self.values.shape[0]:
            raise UsageError(f"站点数与取值数不一致: {self.sites.shape[0]} vs {self.values.shape[0]}")
        if self.sites.shape[0] == 0:
            raise UsageError("采样数据为空")
        if np.unique(self.sites, axis=0).shape[0] != self.sites.shape[0]:
            raise UsageError("采样站点必须两两不同")

    @property
    def dim(self) -> int:
        return self.sites.shape[1]

    @classmethod
    def from_csv(cls, path: str) -> "SampledFunction":
        """
        从 CSV 读取：每行 n 个坐标加一个取值，必须有表头，UTF-8，小数点为 '.'

        Args:
            path: 文件路径

        Returns:
            采样数据
        """
        df = pd.read_csv(path, encoding="utf-8", header=0)
        if df.shape[1] < 2:
            raise UsageError(f"CSV 至少需要一个坐标列和一个取值列: {path}")
        try:
            data = df.apply(pd.to_numeric, errors="raise").to_numpy(dtype=float)
        except (ValueError, TypeError) as e:
            raise UsageError(f"CSV 含有非数值数据（是否缺少表头？）: {path}: {e}") from e
        logger.info(f"读取采样数据: {path}, {data.shape[0]} 个站点, 维数 {data.shape[1] - 1}")
        return cls(data[:, :-1], data[:, -1])

    def to_csv(self, path: str) -> None:
        cols = [f"x{i + 1}" for i in range(self.dim)] + ["value"]
        pd.DataFrame(np.column_stack([self.sites, self.values]), columns=cols).to_csv(path, index=False)


def sup_convolution(s: SampledFunction, eps: float) -> MaxQuadFunction:
    """
    上卷积 uᵉ(x) = max_j [values_j − |x − sites_j|²/(2·eps)]

    Args:
        s: 采样数据
        eps: 正参数

    Returns:
        每个站点一片、A = −I/eps 的 MaxQuadFunction（(1/eps)-拟凸）
    """
    if eps <= 0:
        raise UsageError(f"eps 必须为正: {eps}")
    n = s.dim
    A = SymMatrix.identity(n, -1.0 / eps)
    pieces = [
        Quadratic(v - (site @ site) / (2.0 * eps), site / eps, A)
        for site, v in zip(s.sites, s.values)
    ]
    return MaxQuadFunction(pieces)


def audit_quasiconvexity(w: QuasiConvexFunction,
                         n_triples: int = 10_000,
                         seed: int = 0,
                         radius: float = 1.0,
                         center=None,
                         tol: float = 1e-9,
                         lam: Optional[float] = None,
                         threads: Optional[int] = None) -> ScanReport:
    """
    随机中点凸性证书：检查 w + (λ/2)|y|² 沿随机线段的凸性

    Args:
        w: 函数
        n_triples: (x, y, t) 三元组数
        seed: 随机种子
        radius: 采样立方体半宽
        center: 采样中心
        tol: 容差
        lam: 拟凸常数，默认取 w.lambda_qc
        threads: 线程数

    Returns:
        审计报告
    """
    n = w.dim
    lam = w.lambda_qc if lam is None else lam
    c = np.zeros(n) if center is None else np.asarray(center, dtype=float)

    def u(X: np.ndarray) -> np.ndarray:
        return w.evaluate(X) + 0.5 * lam * np.sum(X * X, axis=1)

    def audit_chunk(chunk_index: int, indices: range):
        rng = chunk_rng(seed, chunk_index)
        count = len(indices)
        x = c + rng.uniform(-radius, radius, (count, n))
        y = c + rng.uniform(-radius, radius, (count, n))
        t = rng.uniform(0.0, 1.0, count)
        z = t[:, None] * x + (1.0 - t)[:, None] * y
        defect = u(z) - (t * u(x) + (1.0 - t) * u(y))
        bad = np.flatnonzero(defect > tol)
        found = [Violation(index=indices.start + int(k), jet=WitnessJet(x=z[k].tolist()), drop=float(defect[k]))
                 for k in bad[:20]]
        return len(bad), float(defect.max()), found

    results = chunked_map(audit_chunk, n_triples, threads=threads)
    violations = [v for r in results for v in r[2]]
    return ScanReport(
        name=f"quasiconvexity(lambda={lam:g})",
        n_samples=n_triples,
        tol=tol,
        violations=violations[:20],
        violation_count=sum(r[0] for r in results),
        worst=max(r[1] for r in results),
    )


def finite_difference_jet(w: QuasiConvexFunction, x, h: float = 1e-3) -> Jet2:
    """
    中心差分的梯度与 Hessian（用于校验闭式 jet）

    Args:
        w: 函数
        x: 点
        h: 步长

    Returns:
        差分 jet
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = x.shape[0]
    E = h * np.eye(n)
    f0 = w.evaluate(x[None, :])[0]
    plus = w.evaluate(x + E)
    minus = w.evaluate(x - E)
    grad = (plus - minus) / (2.0 * h)
    hess = np.zeros((n, n))
    for i in range(n):
        hess[i, i] = (plus[i] - 2.0 * f0 + minus[i]) / h ** 2
        for j in range(i + 1, n):
            pts = np.stack([x + E[i] + E[j], x + E[i] - E[j], x - E[i] + E[j], x - E[i] - E[j]])
            fp = w.evaluate(pts)
            hess[i, j] = hess[j, i] = (fp[0] - fp[1] - fp[2] + fp[3]) / (4.0 * h ** 2)
    return Jet2(f0, grad, hess)
