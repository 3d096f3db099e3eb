#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
上接触点与上接触 jet

- 局部/严格接触检验（有限探针集上的网格证书）
- 全局接触集 C(w, Ω, A) 与其测度的蒙特卡罗估计
- 上接触 jet 的见证序列（拒绝采样）
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from src.core.exceptions import PreconditionError, UsageError, check_dim
from src.core.linalg import FullJet, Jet2, SymMatrix, batch_loewner_leq
from src.core.quasiconvex import (
    MaxQuadFunction,
    Quadratic,
    QuasiConvexFunction,
)
from src.models.geometry import (
    Box,
    ContactQuery,
    ContactResult,
    ContactSetEstimate,
    WitnessPoint,
    WitnessSequence,
    ball_probes,
)
from src.models.verdict import VerdictStatus
from src.utils.parallel import chunk_rng, chunked_map, derive_seed

logger = logging.getLogger(__name__)

# 全局接触检验时每轴探针数
GLOBAL_PROBE_GRID = {1: 201, 2: 41, 3: 15}
# 见证搜索：每个 ε_j 的默认采样预算与批大小
DEFAULT_WITNESS_BUDGET = 100_000
WITNESS_BATCH = 4096
# 全局接触判定时的候选分块（控制 (块, 探针) 矩阵大小）
_CANDIDATE_BLOCK = 256

PointPredicate = Callable[[np.ndarray], np.ndarray]


def global_probe_grid(n: int) -> int:
    return GLOBAL_PROBE_GRID.get(n, 9)


def default_eps_schedule(count: int = 12) -> List[float]:
    """ε_j = 2^(−j), j = 1..count"""
    return [2.0 ** -j for j in range(1, count + 1)]


def _to_array(A) -> np.ndarray:
    return A.array if isinstance(A, SymMatrix) else np.atleast_2d(np.asarray(A, dtype=float))


def is_upper_contact_jet(w: QuasiConvexFunction, q: ContactQuery, threads: Optional[int] = None) -> ContactResult:
    """
    检验 (p, A) 是否为 w 在 x0 处的上接触 jet

    对每个探针 y 要求
        w(y) ≤ w(x0) + ⟨p, y−x0⟩ + ½⟨A(y−x0), y−x0⟩ + tol − strict_margin·|y−x0|²

    Args:
        w: 函数
        q: 接触查询
        threads: 线程数

    Returns:
        接触结果。True 只是网格证书，False 附带的违例点是精确反例。
    """
    check_dim(w.dim, q.dim, "接触查询")
    x0 = q.x0_array()
    p = q.p_array()
    A = q.A_matrix()
    probes = ball_probes(x0, q.rho, q.grid_per_axis, q.extra_probes)
    w0 = float(w.evaluate(x0[None, :])[0])

    def scan(chunk_index: int, indices: range) -> Tuple[float, int]:
        Y = probes[indices.start:indices.stop]
        H = Y - x0
        bound = w0 + H @ p + 0.5 * A.quad_form(H) + q.tol - q.strict_margin * np.sum(H * H, axis=1)
        viol = w.evaluate(Y) - bound
        k = int(np.argmax(viol))
        return float(viol[k]), indices.start + k

    results = chunked_map(scan, probes.shape[0], threads=threads)
    # 并列时取最小下标
    worst, idx = max(results, key=lambda t: (t[0], -t[1]))
    return ContactResult(
        is_contact=worst <= 0.0,
        max_violation=worst,
        worst_point=probes[idx].tolist(),
        n_probes=int(probes.shape[0]),
    )


def shift_by_quadratic(w: MaxQuadFunction, psi: Quadratic) -> Tuple[MaxQuadFunction, Callable[[ContactQuery], ContactQuery]]:
    """
    加上二次函数 ψ 不改变上接触点集合

    Args:
        w: 函数
        psi: 二次函数

    Returns:
        (w + ψ, 查询映射 (x0, p, A) ↦ (x0, p + Dψ(x0), A + D²ψ))
    """
    check_dim(w.dim, psi.dim, "二次函数")

    def shift_query(q: ContactQuery) -> ContactQuery:
        grad = psi.gradient(q.x0_array())
        return q.with_jet(q.p_array() + grad, q.A_matrix() + psi.A)

    return w.add_quadratic(psi), shift_query


def _contact_violation(w: QuasiConvexFunction,
                       X: np.ndarray,
                       Q: np.ndarray,
                       A: np.ndarray,
                       probes: np.ndarray,
                       center: np.ndarray) -> np.ndarray:
    """
    对每个候选点 x（梯度 q）计算 max_y w(y) − [w(x) + ⟨q, y−x⟩ + ½⟨A(y−x), y−x⟩]

    坐标以 center 为原点展开，避免大坐标下的抵消误差。
    """
    Yc = probes - center
    a = w.evaluate(probes) - 0.5 * np.einsum("mi,ij,mj->m", Yc, A, Yc)
    Xc = X - center
    wX = w.evaluate(X)
    worst = np.empty(X.shape[0])
    for start in range(0, X.shape[0], _CANDIDATE_BLOCK):
        sl = slice(start, start + _CANDIDATE_BLOCK)
        xc, qc = Xc[sl], Q[sl]
        b = -wX[sl] + np.sum(qc * xc, axis=1) - 0.5 * np.einsum("ni,ij,nj->n", xc, A, xc)
        lin = xc @ A - qc
        worst[sl] = np.max(a[None, :] + b[:, None] + lin @ Yc.T, axis=1)
    return worst


def global_contact_mask(w: QuasiConvexFunction,
                        X: np.ndarray,
                        A,
                        probes: np.ndarray,
                        tol: float = 1e-9,
                        center: Optional[np.ndarray] = None) -> np.ndarray:
    """
    批量全局接触判定：x 二阶可微且 q = Dw(x) 时的二次函数在所有探针上控制 w

    Args:
        w: 函数
        X: 候选点 (N, n)
        A: 类型矩阵
        probes: 区域探针 (M, n)
        tol: 容差
        center: 展开原点，默认取探针均值

    Returns:
        布尔数组 (N,)
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    A_arr = _to_array(A)
    ok = np.zeros(X.shape[0], dtype=bool)
    jets = w.jets(X)
    idx = np.flatnonzero(jets.mask)
    if not len(idx):
        return ok
    c = probes.mean(axis=0) if center is None else np.asarray(center, dtype=float)
    worst = _contact_violation(w, X[idx], jets.p[idx], A_arr, probes, c)
    ok[idx] = worst <= tol
    return ok


def global_contact_test(w: QuasiConvexFunction,
                        x,
                        A,
                        domain: Box,
                        grid: int = 41,
                        tol: float = 1e-9) -> bool:
    """
    x 是否为 w 在区域上的 A 型全局上接触点

    不可微点不可能是拟凸函数的全局接触点，直接返回 False。

    Args:
        w: 函数
        x: 点
        A: 类型矩阵
        domain: 区域（盒子）
        grid: 每轴网格点数
        tol: 容差

    Returns:
        网格上的判定
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    check_dim(w.dim, x.shape[0], "点")
    check_dim(domain.dim, x.shape[0], "区域")
    if w.jet_at(x) is None:
        return False
    probes = domain.grid(grid)
    return bool(global_contact_mask(w, x[None, :], A, probes, tol, center=x)[0])


def sample_ball(rng: np.random.Generator, x0: np.ndarray, rho: float, count: int) -> np.ndarray:
    """B_rho(x0) 内的均匀样本"""
    n = x0.shape[0]
    g = rng.standard_normal((count, n))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    radii = rho * rng.uniform(0.0, 1.0, count) ** (1.0 / n)
    return x0[None, :] + radii[:, None] * g


def contact_measure_fraction(w: QuasiConvexFunction,
                             x0,
                             A0,
                             rho: float,
                             n_samples: int = 10_000,
                             seed: int = 0,
                             probes_per_axis: Optional[int] = None,
                             tol: float = 1e-9,
                             threads: Optional[int] = None) -> ContactSetEstimate:
    """
    |C(w, B_rho(x0), A0)| / |B_rho| 的蒙特卡罗估计

    Args:
        w: 函数
        x0: 球心
        A0: 类型矩阵
        rho: 半径（> 0）
        n_samples: 样本数
        seed: 随机种子
        probes_per_axis: 球内探针的每轴点数
        tol: 容差
        threads: 线程数

    Returns:
        接触集估计（最多保留 64 个见证点）
    """
    if rho <= 0:
        raise UsageError(f"rho 必须为正: {rho}")
    if n_samples < 1:
        raise UsageError(f"样本数必须 ≥ 1: {n_samples}")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    check_dim(w.dim, x0.shape[0], "球心")
    ppa = probes_per_axis or global_probe_grid(x0.shape[0])
    if ppa < 3:
        raise UsageError(f"每轴探针数必须 ≥ 3: {ppa}")
    probes = ball_probes(x0, rho, ppa)
    A_arr = _to_array(A0)

    def estimate_chunk(chunk_index: int, indices: range) -> np.ndarray:
        rng = chunk_rng(seed, chunk_index)
        X = sample_ball(rng, x0, rho, len(indices))
        ok = global_contact_mask(w, X, A_arr, probes, tol, center=x0)
        return X[ok]

    hits = chunked_map(estimate_chunk, n_samples, threads=threads)
    found = np.vstack(hits) if hits else np.zeros((0, x0.shape[0]))
    fraction = found.shape[0] / n_samples
    logger.debug(f"接触集估计: rho={rho:g}, 命中 {found.shape[0]}/{n_samples}")
    return ContactSetEstimate(
        fraction=fraction,
        n_samples=n_samples,
        witnesses=found[:64].tolist(),
        witness_count=int(found.shape[0]),
        rho=rho,
    )


def gradient_trend(gaps: Sequence[float], window: int = 5, tol: float = 1e-12) -> bool:
    """
    梯度收敛趋势：最后 window 个间隙单调不增，且末项不超过首项
    """
    g = np.asarray(list(gaps), dtype=float)
    if g.size < 2:
        return True
    tail = g[-window:]
    return bool(np.all(np.diff(tail) <= tol) and g[-1] <= g[0] + tol)


def witness_sequence(w: QuasiConvexFunction,
                     x0,
                     p0,
                     A0,
                     eps_schedule: Optional[Sequence[float]] = None,
                     predicate: Optional[PointPredicate] = None,
                     budget: int = DEFAULT_WITNESS_BUDGET,
                     seed: int = 0,
                     tol: float = 1e-8,
                     probes_per_axis: Optional[int] = None,
                     check_precondition: bool = True,
                     threads: Optional[int] = None) -> WitnessSequence:
    """
    上接触 jet 定理的见证序列

    对每个 ε_j 在 B_{ε_j}(x0) 内拒绝采样，寻找满足以下条件的 x_j：
    predicate(x_j) 为真；w 在 x_j 二阶可微；x_j ∈ C(w, B_{ε_j}(x0), A0 + ε_j I)；
    −λI ⪯ D²w(x_j) ⪯ A0 + ε_j I（容差 tol）。

    Args:
        w: 函数
        x0: 基点
        p0: 接触 jet 的梯度部分
        A0: 接触 jet 的 Hessian 部分
        eps_schedule: 递减正数序列，默认 2^(−j), j=1..12
        predicate: 满测度点集的过滤器 X (N, n) → bool (N,)
        budget: 每个 ε_j 的采样预算
        seed: 随机种子
        tol: Loewner 夹逼的容差
        probes_per_axis: 球内探针的每轴点数
        check_precondition: 是否先检验 (p0, A0) 为接触 jet
        threads: 线程数

    Returns:
        见证序列；预算耗尽时为 inconclusive 并带最佳候选点
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    p0 = np.atleast_1d(np.asarray(p0, dtype=float))
    A0 = A0 if isinstance(A0, SymMatrix) else SymMatrix(A0)
    n = x0.shape[0]
    check_dim(w.dim, n, "基点")
    check_dim(n, p0.shape[0], "梯度")
    check_dim(n, A0.dim, "Hessian")
    schedule = list(eps_schedule) if eps_schedule is not None else default_eps_schedule()
    if not schedule or any(e <= 0 for e in schedule):
        raise UsageError(f"eps_schedule 必须是非空正数序列: {schedule}")
    if any(b >= a for a, b in zip(schedule, schedule[1:])):
        raise UsageError(f"eps_schedule 必须严格递减: {schedule}")
    if budget < 1:
        raise UsageError(f"采样预算必须 ≥ 1: {budget}")

    if check_precondition:
        pre = is_upper_contact_jet(w, ContactQuery.build(x0, p0, A0, rho=schedule[0]), threads=threads)
        if not pre.is_contact:
            raise PreconditionError(
                f"(p0, A0) 不是 x0 处的上接触 jet，最大违例 {pre.max_violation:.3e}",
                witness=pre.worst_point,
            )

    lam = w.lambda_qc
    ppa = probes_per_axis or global_probe_grid(n)
    eye = np.eye(n)
    points: List[WitnessPoint] = []
    samples_used: List[int] = []
    best: Optional[Tuple[float, np.ndarray]] = None

    for j, eps in enumerate(schedule):
        A_eps = A0.array + eps * eye
        probes = ball_probes(x0, eps, ppa)
        step_seed = derive_seed(seed, j)
        used = 0
        hit: Optional[WitnessPoint] = None
        batch_index = 0
        while used < budget and hit is None:
            count = min(WITNESS_BATCH, budget - used)
            X = sample_ball(chunk_rng(step_seed, batch_index), x0, eps, count)
            batch_index += 1
            used += count
            jets = w.jets(X)
            keep = jets.mask.copy()
            if predicate is not None:
                keep &= np.asarray(predicate(X), dtype=bool)
            idx = np.flatnonzero(keep)
            if not len(idx):
                continue
            worst = _contact_violation(w, X[idx], jets.p[idx], A_eps, probes, x0)
            k_best = int(np.argmin(worst))
            if best is None or worst[k_best] < best[0]:
                best = (float(worst[k_best]), X[idx[k_best]])
            Hs = jets.A[idx]
            upper = batch_loewner_leq(Hs, A_eps[None, :, :], tol)
            lower = batch_loewner_leq(-lam * eye[None, :, :], Hs, tol)
            good = np.flatnonzero((worst <= tol) & upper & lower)
            if len(good):
                k = idx[good[0]]
                hit = WitnessPoint(
                    eps=eps,
                    x=X[k].tolist(),
                    r=float(jets.r[k]),
                    p=jets.p[k].tolist(),
                    A=jets.A[k].tolist(),
                    gradient_gap=float(np.linalg.norm(jets.p[k] - p0)),
                )
        samples_used.append(used)
        if hit is None:
            logger.warning(f"见证搜索预算耗尽: eps={eps:g}, 采样 {used}")
            return WitnessSequence(
                status=VerdictStatus.INCONCLUSIVE,
                points=points,
                samples_used=samples_used,
                lambda_qc=lam,
                best_candidate=None if best is None else best[1].tolist(),
                message=f"eps={eps:g} 时采样预算 {budget} 耗尽",
            )
        points.append(hit)

    logger.info(f"见证序列完成: {len(points)} 项, 末项梯度间隙 {points[-1].gradient_gap:.3e}")
    return WitnessSequence(
        status=VerdictStatus.HOLDS,
        points=points,
        samples_used=samples_used,
        lambda_qc=lam,
    )


@dataclass(frozen=True)
class ComponentJets:
    """和的接触 jet 在两个分量上诱导的上接触 jet"""
    u_jet: FullJet
    v_jet: FullJet
    u_check: ContactResult
    v_check: ContactResult

    @property
    def both_contact(self) -> bool:
        return self.u_check.is_contact and self.v_check.is_contact


def component_contact_jets(u: MaxQuadFunction,
                           v: MaxQuadFunction,
                           x0,
                           p0,
                           A0,
                           rho: float = 0.5,
                           grid_per_axis: int = 41) -> ComponentJets:
    """
    若 (p0, A0) 是 u+v 在 x0 处的上接触 jet，则 x0 同时是 u 和 v 的上接触点：
    由 v(y) ≥ v(x0) + ⟨Dv(x0), y−x0⟩ − (λ_v/2)|y−x0|²，
    (p0 − Dv(x0), A0 + λ_v I) 是 u 的上接触 jet（v 对称）。

    Args:
        u, v: 两个分量
        x0: 基点
        p0, A0: 和的接触 jet
        rho: 校验球半径
        grid_per_axis: 校验网格

    Returns:
        两个分量的 jet 及其网格校验结果
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    p0 = np.atleast_1d(np.asarray(p0, dtype=float))
    A0 = A0 if isinstance(A0, SymMatrix) else SymMatrix(A0)
    gu = u.gradient_at(x0)
    gv = v.gradient_at(x0)
    if gu is None or gv is None:
        raise PreconditionError("x0 处分量不可微，(p0, A0) 不是和的上接触 jet", witness=x0.tolist())
    n = x0.shape[0]
    ju = Jet2(u.eval(x0), p0 - gv, A0 + SymMatrix.identity(n, v.lambda_qc))
    jv = Jet2(v.eval(x0), p0 - gu, A0 + SymMatrix.identity(n, u.lambda_qc))
    u_check = is_upper_contact_jet(u, ContactQuery.build(x0, ju.p, ju.A, rho=rho, grid_per_axis=grid_per_axis))
    v_check = is_upper_contact_jet(v, ContactQuery.build(x0, jv.p, jv.A, rho=rho, grid_per_axis=grid_per_axis))
    return ComponentJets(FullJet(x0, ju), FullJet(x0, jv), u_check, v_check)

