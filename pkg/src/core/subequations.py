#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
原始子方程 F ⊂ J²(X)

每个子方程由连续定义函数 f(x, r, p, A) 给出，纤维 F_x = {f ≥ 0}。
定义函数按批计算：x (N,n), r (N,), p (N,n), A (N,n,n) → (N,)。
"""

import logging
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from src.core.exceptions import DimensionMismatchError, UsageError, check_dim
from src.core.linalg import FullJet, Jet2, psd_stack, random_jet_batch
from src.models.verdict import ScanReport, Violation, WitnessJet
from src.utils.parallel import chunk_rng, chunked_map

logger = logging.getLogger(__name__)

DefiningFn = Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray], np.ndarray]

# 审计报告中保留的违例条数
MAX_REPORTED_VIOLATIONS = 20


def _trace(A: np.ndarray) -> np.ndarray:
    return np.trace(A, axis1=-2, axis2=-1)


class Subequation:
    """由定义函数给出的原始子方程"""

    __slots__ = ("name", "dim", "_f", "constant_coefficient", "pure_second_order",
                 "negativity", "family", "params", "formula")

    def __init__(self,
                 name: str,
                 dim: int,
                 defining: DefiningFn,
                 constant_coefficient: bool = True,
                 pure_second_order: bool = False,
                 negativity: bool = False,
                 family: Optional[str] = None,
                 params: Optional[Dict[str, Any]] = None,
                 formula: str = ""):
        """
        初始化子方程

        Args:
            name: 标识名
            dim: 空间维数 n
            defining: 批量定义函数
            constant_coefficient: f 是否与 x 无关
            pure_second_order: f 是否只依赖 A
            negativity: f 是否关于 r 不增（仅严格比较需要）
            family: 目录族名，用于识别和的闭式
            params: 目录参数
            formula: 人类可读的公式
        """
        if dim < 1:
            raise UsageError(f"维数必须 ≥ 1: {dim}")
        self.name = name
        self.dim = dim
        self._f = defining
        self.constant_coefficient = constant_coefficient
        self.pure_second_order = pure_second_order
        self.negativity = negativity
        self.family = family
        self.params = dict(params or {})
        self.formula = formula

    def evaluate(self, x: np.ndarray, r: np.ndarray, p: np.ndarray, A: np.ndarray) -> np.ndarray:
        """批量计算定义函数值"""
        return np.asarray(self._f(x, r, p, A), dtype=float)

    def value(self, j: FullJet) -> float:
        """单个 jet 的定义函数值"""
        check_dim(self.dim, j.dim, "jet")
        jet = j.jet
        return float(self.evaluate(j.x[None, :], np.array([jet.r]), jet.p[None, :], jet.A.array[None, :, :])[0])

    def contains(self, j: FullJet, tol: float = 0.0) -> bool:
        return contains(self, j, tol)

    def in_interior(self, j: FullJet, margin: float) -> bool:
        return in_interior(self, j, margin)

    def dual(self) -> "Subequation":
        return dual(self)

    def __repr__(self) -> str:
        return f"Subequation({self.name!r}, n={self.dim})"


def contains(F: Subequation, j: FullJet, tol: float = 0.0) -> bool:
    """
    纤维成员判定

    Args:
        F: 子方程
        j: 带基点 jet
        tol: 容差

    Returns:
        f(j) ≥ −tol 时为 True
    """
    return F.value(j) >= -tol


def in_interior(F: Subequation, j: FullJet, margin: float) -> bool:
    """
    内部成员判定：f(j) ≥ margin 是 Int F = {f > 0} 的充分证书

    Args:
        F: 子方程
        j: 带基点 jet
        margin: 正的裕量

    Returns:
        是否在内部
    """
    if margin <= 0:
        raise UsageError(f"margin 必须为正: {margin}")
    return F.value(j) >= margin


def dual(F: Subequation) -> Subequation:
    """
    对偶子方程 F̃_x = {J : −J ∉ Int F_x}，定义函数 f̃(x,r,p,A) = −f(x,−r,−p,−A)

    Args:
        F: 子方程

    Returns:
        对偶子方程（标志位保持不变）
    """
    f = F._f

    def dual_f(x, r, p, A):
        return -f(x, -r, -p, -A)

    family, params, formula = None, {}, f"−f(x,−r,−p,−A) for {F.name}"
    if F.family == "laplace":
        # tr A − c 的对偶是 tr A + c
        family, params = "laplace", {"c": -float(F.params.get("c", 0.0))}
        formula = f"tr(A) - ({params['c']})"
    name = F.name[len("dual(") : -1] if F.name.startswith("dual(") and F.name.endswith(")") else f"dual({F.name})"
    return Subequation(
        name=name,
        dim=F.dim,
        defining=dual_f,
        constant_coefficient=F.constant_coefficient,
        pure_second_order=F.pure_second_order,
        negativity=F.negativity,
        family=family,
        params=params,
        formula=formula,
    )


def check_positivity(F: Subequation,
                     n_samples: int,
                     seed: int = 0,
                     tol: float = 1e-9,
                     scale: float = 1.0,
                     threads: Optional[int] = None) -> ScanReport:
    """
    正性条件的统计审计：随机 jet j 与随机 P ⪰ 0，报告 f(j + P) < f(j) − tol 的实例

    Args:
        F: 子方程
        n_samples: 样本数（≥ 1）
        seed: 随机种子
        tol: 容差
        scale: 随机 jet 和 P 的尺度
        threads: 线程数

    Returns:
        审计报告，违例列表为空即审计通过
    """
    if n_samples < 1:
        raise UsageError(f"样本数必须 ≥ 1: {n_samples}")
    n = F.dim
    logger.info(f"开始正性审计: {F.name}, 样本数 {n_samples}")

    def audit_chunk(chunk_index: int, indices: range) -> Tuple[int, float, List[Violation]]:
        rng = chunk_rng(seed, chunk_index)
        count = len(indices)
        x, r, p, A = random_jet_batch(n, rng, count, scale)
        P = psd_stack(n, scale, rng, count)
        drop = F.evaluate(x, r, p, A) - F.evaluate(x, r, p, A + P)
        bad = np.flatnonzero(drop > tol)
        found = [
            Violation(
                index=indices.start + int(k),
                jet=WitnessJet(x=x[k].tolist(), r=float(r[k]), p=p[k].tolist(), A=A[k].tolist()),
                drop=float(drop[k]),
            )
            for k in bad[:MAX_REPORTED_VIOLATIONS]
        ]
        return len(bad), float(drop.max()), found

    results = chunked_map(audit_chunk, n_samples, threads=threads)
    violations: List[Violation] = []
    for _, _, found in results:
        violations.extend(found)
    count = sum(r[0] for r in results)
    worst = max(r[1] for r in results)

    if count:
        logger.warning(f"正性审计发现 {count} 个违例: {F.name}, 最大下降 {worst:.3e}")
    else:
        logger.info(f"正性审计通过: {F.name}")
    return ScanReport(
        name=F.name,
        n_samples=n_samples,
        tol=tol,
        violations=violations[:MAX_REPORTED_VIOLATIONS],
        violation_count=count,
        worst=worst,
    )


# ---------------------------------------------------------------------------
# 目录
# ---------------------------------------------------------------------------

def _real_param(params: Dict[str, Any], key: str, default: Optional[float] = None) -> float:
    value = params.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float, np.integer, np.floating)):
        raise UsageError(f"参数 {key} 必须是实数, 得到 {value!r}")
    return float(value)


def _convex(dim: int, params: Dict[str, Any]) -> Subequation:
    return Subequation("convex", dim, lambda x, r, p, A: np.linalg.eigvalsh(A)[..., 0],
                       pure_second_order=True, family="convex", formula="lambda_min(A)")


def _laplace(dim: int, params: Dict[str, Any]) -> Subequation:
    c = _real_param(params, "c", 0.0)
    return Subequation(f"laplace_{c:g}", dim, lambda x, r, p, A: _trace(A) - c,
                       pure_second_order=True, family="laplace", params={"c": c},
                       formula=f"tr(A) - {c:g}")


def _kth_eig(dim: int, params: Dict[str, Any]) -> Subequation:
    k = params.get("k", 1)
    if isinstance(k, bool) or not isinstance(k, (int, np.integer)):
        raise UsageError(f"kth_eig 的 k 必须是整数, 得到 {k!r}")
    k = int(k)
    if not 1 <= k <= dim:
        raise UsageError(f"kth_eig 需要 1 ≤ k ≤ {dim}, 得到 k={k}")
    return Subequation(f"kth_eig_{k}", dim, lambda x, r, p, A: np.linalg.eigvalsh(A)[..., k - 1],
                       pure_second_order=True, family="kth_eig", params={"k": k},
                       formula=f"lambda_{k}(A) (ascending)")


def _grad_laplace(dim: int, params: Dict[str, Any]) -> Subequation:
    return Subequation("grad_laplace", dim, lambda x, r, p, A: _trace(A) - np.sum(p * p, axis=-1),
                       family="grad_laplace", formula="tr(A) - |p|^2")


def _proper_laplace(dim: int, params: Dict[str, Any]) -> Subequation:
    return Subequation("proper_laplace", dim, lambda x, r, p, A: _trace(A) - r,
                       negativity=True, family="proper_laplace", formula="tr(A) - r")


def polynomial(terms: List[Dict[str, Any]], dim: int) -> Callable[[np.ndarray], np.ndarray]:
    """
    多元多项式 c(x) = Σ coef · Π x_i^powers_i

    Args:
        terms: [{"coef": float, "powers": [int] * n}]
        dim: 维数

    Returns:
        批量求值函数 (N, n) → (N,)
    """
    coefs = np.zeros(len(terms))
    powers = np.zeros((len(terms), dim), dtype=int)
    for i, t in enumerate(terms):
        if not isinstance(t, dict) or "coef" not in t:
            raise UsageError(f"多项式第 {i} 项需要 coef 字段: {t!r}")
        coefs[i] = _real_param(t, "coef")
        pw = t.get("powers", [0] * dim)
        if not isinstance(pw, (list, tuple)) or any(isinstance(e, bool) or not isinstance(e, int) for e in pw):
            raise UsageError(f"多项式第 {i} 项的 powers 必须是整数列表: {pw!r}")
        if len(pw) != dim:
            raise DimensionMismatchError(dim, len(pw), f"多项式第 {i} 项的 powers ")
        powers[i] = pw
    if np.any(powers < 0):
        raise UsageError("多项式指数必须非负")

    def c(x: np.ndarray) -> np.ndarray:
        if not len(coefs):
            return np.zeros(x.shape[0])
        monomials = np.prod(x[:, None, :] ** powers[None, :, :], axis=-1)
        return monomials @ coefs

    return c


def _variable_laplace(dim: int, params: Dict[str, Any]) -> Subequation:
    terms = params.get("terms", [])
    if not isinstance(terms, list):
        raise UsageError(f"variable_laplace 的 terms 必须是列表: {terms!r}")
    c = polynomial(terms, dim)
    return Subequation("variable_laplace", dim, lambda x, r, p, A: _trace(A) - c(x),
                       constant_coefficient=False, pure_second_order=False,
                       family="variable_laplace", params={"terms": terms}, formula="tr(A) - c(x)")


CATALOG: Dict[str, Tuple[Callable[[int, Dict[str, Any]], Subequation], str, Dict[str, str]]] = {
    "convex": (_convex, "lambda_min(A) >= 0", {}),
    "laplace": (_laplace, "tr(A) - c >= 0", {"c": "float, default 0"}),
    "kth_eig": (_kth_eig, "lambda_k(A) >= 0 (ascending k)", {"k": "int in [1, n]"}),
    "grad_laplace": (_grad_laplace, "tr(A) - |p|^2 >= 0", {}),
    "proper_laplace": (_proper_laplace, "tr(A) - r >= 0", {}),
    "variable_laplace": (_variable_laplace, "tr(A) - c(x) >= 0",
                         {"terms": "list of {coef, powers}"}),
}

_ALIASES = {"laplace_c": "laplace"}


def build_subequation(name: str, dim: int, params: Optional[Dict[str, Any]] = None) -> Subequation:
    """
    按目录名构造子方程

    Args:
        name: 目录名（支持 laplace_<c> 简写，如 laplace_0）
        dim: 维数
        params: 参数

    Returns:
        子方程
    """
    if params is not None and not isinstance(params, dict):
        raise UsageError(f"子方程参数必须是对象: {params!r}")
    params = dict(params or {})
    key = _ALIASES.get(name, name)
    if key not in CATALOG and name.startswith("laplace_"):
        try:
            params.setdefault("c", float(name[len("laplace_"):]))
            key = "laplace"
        except ValueError:
            pass
    if key not in CATALOG:
        raise UsageError(f"未知的子方程目录名: {name}")
    return CATALOG[key][0](dim, params)


def catalog_entries(dim: int = 2) -> List[Dict[str, Any]]:
    """目录条目说明（公式、标志、参数）"""
    entries = []
    for name, (factory, formula, param_doc) in CATALOG.items():
        defaults = {"k": 1} if name == "kth_eig" else {}
        F = factory(dim, defaults)
        entries.append({
            "name": name,
            "formula": formula,
            "params": param_doc,
            "constant_coefficient": F.constant_coefficient,
            "pure_second_order": F.pure_second_order,
            "negativity": F.negativity,
        })
    return entries


# ---------------------------------------------------------------------------
# 纤维和 H = closure(F + G)
# ---------------------------------------------------------------------------

class SumMembership(str, Enum):
    """纤维和成员的三值判定"""
    IN = "in"
    OUT_CERTIFIED = "out_certified"
    UNKNOWN = "unknown"


def _closed_form(left: Subequation, right: Subequation) -> Optional[DefiningFn]:
    pair = {left.family, right.family}
    if pair == {"convex"}:
        return lambda x, r, p, A: np.linalg.eigvalsh(A)[..., 0]
    if pair == {"convex", "laplace"}:
        lap = left if left.family == "laplace" else right
        c = float(lap.params.get("c", 0.0))
        return lambda x, r, p, A: _trace(A) - c
    if pair == {"laplace"}:
        c = float(left.params.get("c", 0.0)) + float(right.params.get("c", 0.0))
        return lambda x, r, p, A: _trace(A) - c
    if pair == {"grad_laplace"}:
        # min_{p1+p2=p} |p1|² + |p2|² = |p|²/2
        return lambda x, r, p, A: _trace(A) - 0.5 * np.sum(p * p, axis=-1)
    if pair == {"proper_laplace"}:
        return lambda x, r, p, A: _trace(A) - r
    return None


class SumSubequation:
    """H ≡ closure(F + G)，纤维逐点求和"""

    def __init__(self, left: Subequation, right: Subequation, split_budget: int = 256, seed: int = 0):
        """
        初始化

        Args:
            left: F
            right: G
            split_budget: 拆分搜索的候选数
            seed: 随机拆分的种子
        """
        check_dim(left.dim, right.dim, "子方程")
        if split_budget < 1:
            raise UsageError(f"split_budget 必须 ≥ 1: {split_budget}")
        self.left = left
        self.right = right
        self.split_budget = split_budget
        self.seed = seed
        self.closed_form = _closed_form(left, right)
        self.logger = logging.getLogger(__name__)

    @property
    def dim(self) -> int:
        return self.left.dim

    @property
    def name(self) -> str:
        return f"closure({self.left.name} + {self.right.name})"

    def _split_candidates(self) -> np.ndarray:
        """
        拆分候选参数 (t_r, t_p, t_A, s, d_r)：
        j1 = (t_r·r + d_r·σ, t_p·p, t_A·A + s·σ·I)，j2 = j − j1，σ = 1 + |j| 的尺度
        """
        fixed = [(t, t, t, 0.0, 0.0) for t in (0.5, 0.0, 1.0, 0.25, 0.75)]
        for s in np.geomspace(1e-3, 1e2, 12):
            fixed.append((0.5, 0.5, 0.5, s, 0.0))
            fixed.append((0.5, 0.5, 0.5, -s, 0.0))
        for d in (-1.0, 1.0, -10.0, 10.0):
            fixed.append((0.5, 0.5, 0.5, 0.0, d))
        rng = np.random.default_rng(self.seed)
        n_random = max(0, self.split_budget - len(fixed))
        rand = np.column_stack([
            rng.uniform(-0.5, 1.5, n_random),
            rng.uniform(-0.5, 1.5, n_random),
            rng.uniform(-0.5, 1.5, n_random),
            rng.normal(0.0, 1.0, n_random) * 10.0 ** rng.uniform(-3, 2, n_random),
            rng.normal(0.0, 1.0, n_random) * 10.0 ** rng.uniform(-3, 2, n_random),
        ]) if n_random else np.zeros((0, 5))
        return np.vstack([np.array(fixed), rand])[: self.split_budget]

    def contains_batch(self, x: np.ndarray, r: np.ndarray, p: np.ndarray, A: np.ndarray,
                       tol: float = 1e-9) -> np.ndarray:
        """
        批量成员判定

        Args:
            x, r, p, A: 批量 jet
            tol: 容差

        Returns:
            SumMembership 取值的对象数组
        """
        N = x.shape[0]
        out = np.full(N, SumMembership.UNKNOWN.value, dtype=object)
        if N == 0:
            return out
        if self.closed_form is not None:
            h = np.asarray(self.closed_form(x, r, p, A), dtype=float)
            out[:] = np.where(h >= -tol, SumMembership.IN.value, SumMembership.OUT_CERTIFIED.value)
            return out

        n = self.dim
        eye = np.eye(n)
        sigma = 1.0 + np.abs(r) + np.max(np.abs(p), axis=1) + np.max(np.abs(A), axis=(1, 2))
        found = np.zeros(N, dtype=bool)
        for t_r, t_p, t_A, s, d_r in self._split_candidates():
            todo = np.flatnonzero(~found)
            if not len(todo):
                break
            xs, rs, ps, As, sg = x[todo], r[todo], p[todo], A[todo], sigma[todo]
            r1 = t_r * rs + d_r * sg
            p1 = t_p * ps
            A1 = t_A * As + (s * sg)[:, None, None] * eye
            ok = ((self.left.evaluate(xs, r1, p1, A1) >= -tol)
                  & (self.right.evaluate(xs, rs - r1, ps - p1, As - A1) >= -tol))
            found[todo[ok]] = True
        out[found] = SumMembership.IN.value
        return out


def sum_contains(H: SumSubequation, j: FullJet, tol: float = 1e-9) -> SumMembership:
    """
    纤维和成员判定（三值）

    Args:
        H: 纤维和子方程
        j: 带基点 jet
        tol: 容差

    Returns:
        in / out_certified / unknown
    """
    check_dim(H.dim, j.dim, "jet")
    jet: Jet2 = j.jet
    code = H.contains_batch(j.x[None, :], np.array([jet.r]), jet.p[None, :], jet.A.array[None, :, :], tol)[0]
    return SumMembership(code)
