#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
定理检查：几乎处处判定、粘性判定、加法定理、接触 jet 分解、严格比较（零最大值原理）

每个检查返回带反例的 Verdict；前提不成立时抛出 PreconditionError。
网格扫描代替“几乎所有 x”，不可微点跳过并计数。
"""

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.core.contact import (
    DEFAULT_WITNESS_BUDGET,
    component_contact_jets,
    gradient_trend,
    is_upper_contact_jet,
    witness_sequence,
)
from src.core.exceptions import PreconditionError, UsageError, check_dim
from src.core.linalg import FullJet, Jet2, SymMatrix, random_jet_batch
from src.core.quasiconvex import (
    FIRST_ORDER_KINK,
    SECOND_ORDER_KINK,
    MaxQuadFunction,
    PiecewiseQuadSum,
    QuasiConvexFunction,
    function_sum,
)
from src.core.subequations import Subequation, SumMembership, SumSubequation, dual
from src.models.geometry import Box, ContactQuery, Decomposition, default_grid
from src.models.verdict import (
    ScanDiagnostics,
    ScanReport,
    Verdict,
    VerdictStatus,
    Violation,
    WitnessJet,
)
from src.utils.parallel import chunk_rng, chunked_map

logger = logging.getLogger(__name__)

# 分解检查中 P ⪰ 0 与夹逼的容差
DECOMPOSITION_TOL = 1e-6
# 梯度之和的容差
GRADIENT_SUM_TOL = 1e-8
# 二阶折点处 Loewner 比较的容差
KINK_LOEWNER_TOL = 1e-10


def _grid_points(domain: Box, grid: Optional[int]) -> np.ndarray:
    ppa = grid or default_grid(domain.dim)
    if ppa < 3:
        raise UsageError(f"每轴网格点数必须 ≥ 3: {ppa}")
    return domain.grid(ppa)


def _witness(x: np.ndarray, r: float, p: np.ndarray, A: np.ndarray) -> WitnessJet:
    return WitnessJet(x=x.tolist(), r=float(r), p=p.tolist(), A=A.tolist())


def _min_or_none(values: Sequence[Optional[float]]) -> Optional[float]:
    vals = [v for v in values if v is not None]
    return min(vals) if vals else None


def _first_hit(hits: Sequence[Optional[Tuple[int, WitnessJet]]]) -> Optional[WitnessJet]:
    # 块按序排列，第一个非空即最小下标
    for h in hits:
        if h is not None:
            return h[1]
    return None


def ae_check(w: QuasiConvexFunction,
             F: Subequation,
             domain: Box,
             grid: Optional[int] = None,
             tol: float = 1e-9,
             threads: Optional[int] = None) -> Verdict:
    """
    几乎处处判定：在二阶可微的网格点上要求 J²ₓw ∈ Fₓ

    Args:
        w: 拟凸函数
        F: 子方程
        domain: 区域
        grid: 每轴网格点数，默认按维数取
        tol: 容差
        threads: 线程数

    Returns:
        holds 表示 w 在区域上是 F-次调和的；fails 附带违例 jet
    """
    check_dim(w.dim, F.dim, "子方程")
    check_dim(w.dim, domain.dim, "区域")
    X = _grid_points(domain, grid)

    def scan(chunk_index: int, indices: range):
        Xc = X[indices.start:indices.stop]
        jets = w.jets(Xc)
        sel = np.flatnonzero(jets.mask)
        f = F.evaluate(Xc[sel], jets.r[sel], jets.p[sel], jets.A[sel])
        bad = sel[f < -tol]
        hit = None
        if len(bad):
            k = bad[0]
            hit = (indices.start + int(k), _witness(Xc[k], jets.r[k], jets.p[k], jets.A[k]))
        return len(Xc) - len(sel), len(bad), (float(f.min()) if len(f) else None), hit

    results = chunked_map(scan, X.shape[0], threads=threads)
    skipped = sum(r[0] for r in results)
    failures = sum(r[1] for r in results)
    diagnostics = ScanDiagnostics(
        points_scanned=int(X.shape[0]),
        points_skipped=skipped,
        worst_margin=_min_or_none([r[2] for r in results]),
        extra={"failures": failures},
    )
    logger.info(f"ae_check({F.name}): 扫描 {X.shape[0]} 点, 跳过 {skipped}, 失败 {failures}")
    if failures:
        return Verdict(check="ae", status=VerdictStatus.FAILS, witness=_first_hit([r[3] for r in results]),
                       diagnostics=diagnostics, message=f"{failures} 个网格点的 jet 不在 {F.name} 中")
    if skipped == X.shape[0]:
        return Verdict(check="ae", status=VerdictStatus.INCONCLUSIVE, diagnostics=diagnostics,
                       message="没有二阶可微的网格点")
    return Verdict(check="ae", status=VerdictStatus.HOLDS, diagnostics=diagnostics)


def _classify_second_order_kink(F: Subequation,
                                x: np.ndarray,
                                r: float,
                                p: np.ndarray,
                                Hs: np.ndarray,
                                tol: float) -> Tuple[str, Optional[np.ndarray]]:
    """
    二阶折点处的接触 Hessian 恰为活跃 Hessian 的公共 Loewner 上界

    Returns:
        ("pass" | "fail" | "inconclusive", 失败时的接触 Hessian)
    """
    k = Hs.shape[0]
    n = x.shape[0]
    xs = np.repeat(x[None, :], k, axis=0)
    f = F.evaluate(xs, np.full(k, r), np.repeat(p[None, :], k, axis=0), Hs)
    if np.any(f >= -tol):
        # 某个活跃 Hessian 在 F 中，其所有上界也在 F 中
        return "pass", None
    for i in range(k):
        if np.all(np.linalg.eigvalsh(Hs[i][None, :, :] - Hs)[:, 0] >= -KINK_LOEWNER_TOL):
            # Loewner 最大元本身就是接触 Hessian
            return "fail", Hs[i]
    s = max(0.0, float(np.max(np.linalg.eigvalsh(Hs - Hs[0][None, :, :])[:, -1])))
    bound = Hs[0] + s * np.eye(n)
    fb = F.evaluate(x[None, :], np.array([r]), p[None, :], bound[None, :, :])[0]
    if fb < -tol:
        return "fail", bound
    return "inconclusive", None


def viscosity_check(w: QuasiConvexFunction,
                    F: Subequation,
                    domain: Box,
                    grid: Optional[int] = None,
                    tol: float = 1e-9,
                    threads: Optional[int] = None) -> Verdict:
    """
    按定义的粘性判定：检验每个网格点处的全部上接触 jet

    - 二阶可微点：只需检验最小接触 jet (w, Dw, D²w)
    - 一阶折点（活跃梯度不同）：不存在上接触 jet，不构成约束
    - 二阶折点：接触 Hessian 为活跃 Hessian 的公共上界

    Args:
        w: 拟凸函数
        F: 子方程
        domain: 区域
        grid: 每轴网格点数
        tol: 容差
        threads: 线程数

    Returns:
        判定结论
    """
    check_dim(w.dim, F.dim, "子方程")
    check_dim(w.dim, domain.dim, "区域")
    mq = w.expand() if isinstance(w, PiecewiseQuadSum) else w
    X = _grid_points(domain, grid)

    def scan(chunk_index: int, indices: range):
        Xc = X[indices.start:indices.stop]
        jets = mq.jets(Xc)
        sel = np.flatnonzero(jets.mask)
        f = F.evaluate(Xc[sel], jets.r[sel], jets.p[sel], jets.A[sel])
        bad = list(sel[f < -tol])
        hits = {int(k): _witness(Xc[k], jets.r[k], jets.p[k], jets.A[k]) for k in bad[:1]}
        inconclusive = 0
        for k in np.flatnonzero(jets.kind == SECOND_ORDER_KINK):
            Hs = mq.hessians[np.flatnonzero(jets.active[k])]
            outcome, H = _classify_second_order_kink(F, Xc[k], jets.r[k], jets.p[k], Hs, tol)
            if outcome == "fail":
                bad.append(k)
                hits.setdefault(int(k), _witness(Xc[k], jets.r[k], jets.p[k], H))
            elif outcome == "inconclusive":
                inconclusive += 1
        hit = None
        if hits:
            k = min(hits)
            hit = (indices.start + k, hits[k])
        first_order = int(np.sum(jets.kind == FIRST_ORDER_KINK))
        second_order = int(np.sum(jets.kind == SECOND_ORDER_KINK))
        return (first_order, second_order, len(bad), inconclusive,
                (float(f.min()) if len(f) else None), hit)

    results = chunked_map(scan, X.shape[0], threads=threads)
    first_order = sum(r[0] for r in results)
    second_order = sum(r[1] for r in results)
    failures = sum(r[2] for r in results)
    inconclusive = sum(r[3] for r in results)
    diagnostics = ScanDiagnostics(
        points_scanned=int(X.shape[0]),
        points_skipped=first_order,
        points_inconclusive=inconclusive,
        worst_margin=_min_or_none([r[4] for r in results]),
        extra={"failures": failures, "second_order_kinks": second_order},
    )
    logger.info(f"viscosity_check({F.name}): 扫描 {X.shape[0]} 点, 一阶折点 {first_order}, "
                f"二阶折点 {second_order}, 失败 {failures}")
    if failures:
        return Verdict(check="viscosity", status=VerdictStatus.FAILS,
                       witness=_first_hit([r[5] for r in results]), diagnostics=diagnostics,
                       message=f"{failures} 个网格点存在不在 {F.name} 中的上接触 jet")
    if inconclusive:
        logger.warning(f"viscosity_check({F.name}): {inconclusive} 个二阶折点无法判定")
        return Verdict(check="viscosity", status=VerdictStatus.INCONCLUSIVE, diagnostics=diagnostics,
                       message=f"{inconclusive} 个二阶折点的接触 Hessian 无法完全检验")
    return Verdict(check="viscosity", status=VerdictStatus.HOLDS, diagnostics=diagnostics)


def _require_holds(verdict: Verdict, what: str) -> None:
    if verdict.status != VerdictStatus.HOLDS:
        raise PreconditionError(f"前提不成立: {what} 为 {verdict.status.value}", witness=verdict.witness)


def addition_check(u: QuasiConvexFunction,
                   v: QuasiConvexFunction,
                   F: Subequation,
                   G: Subequation,
                   domain: Box,
                   grid: Optional[int] = None,
                   tol: float = 1e-9,
                   split_budget: int = 256,
                   seed: int = 0,
                   threads: Optional[int] = None) -> Verdict:
    """
    基本加法定理：u ∈ F(X)、v ∈ G(X) ⇒ u+v ∈ H(X)，H = closure(F + G)

    Args:
        u, v: 拟凸函数
        F, G: 子方程
        domain: 区域
        grid: 每轴网格点数
        tol: 容差
        split_budget: 纤维和拆分搜索的候选数
        seed: 随机拆分的种子
        threads: 线程数

    Returns:
        out_certified 的点使结论为 fails；unknown 点只计数
    """
    check_dim(u.dim, v.dim, "函数")
    _require_holds(ae_check(u, F, domain, grid, tol, threads), f"ae_check(u, {F.name})")
    _require_holds(ae_check(v, G, domain, grid, tol, threads), f"ae_check(v, {G.name})")
    H = SumSubequation(F, G, split_budget=split_budget, seed=seed)
    X = _grid_points(domain, grid)

    def scan(chunk_index: int, indices: range):
        Xc = X[indices.start:indices.stop]
        ju = u.jets(Xc)
        jv = v.jets(Xc)
        sel = np.flatnonzero(ju.mask & jv.mask)
        r = ju.r[sel] + jv.r[sel]
        p = ju.p[sel] + jv.p[sel]
        A = ju.A[sel] + jv.A[sel]
        codes = H.contains_batch(Xc[sel], r, p, A, tol)
        out = np.flatnonzero(codes == SumMembership.OUT_CERTIFIED.value)
        hit = None
        if len(out):
            k = out[0]
            hit = (indices.start + int(sel[k]), _witness(Xc[sel[k]], r[k], p[k], A[k]))
        n_in = int(np.sum(codes == SumMembership.IN.value))
        n_unknown = int(np.sum(codes == SumMembership.UNKNOWN.value))
        return len(Xc) - len(sel), n_in, len(out), n_unknown, hit

    results = chunked_map(scan, X.shape[0], threads=threads)
    skipped = sum(r[0] for r in results)
    n_in = sum(r[1] for r in results)
    n_out = sum(r[2] for r in results)
    n_unknown = sum(r[3] for r in results)
    diagnostics = ScanDiagnostics(
        points_scanned=int(X.shape[0]),
        points_skipped=skipped,
        points_unknown=n_unknown,
        extra={"in": n_in, "out_certified": n_out, "closed_form": H.closed_form is not None, "sum": H.name},
    )
    logger.info(f"addition_check({H.name}): in {n_in}, out {n_out}, unknown {n_unknown}, 跳过 {skipped}")
    if n_out:
        return Verdict(check="addition", status=VerdictStatus.FAILS,
                       witness=_first_hit([r[4] for r in results]), diagnostics=diagnostics,
                       message=f"{n_out} 个网格点的 jet 之和确定不在 {H.name} 中")
    if n_in == 0:
        return Verdict(check="addition", status=VerdictStatus.INCONCLUSIVE, diagnostics=diagnostics,
                       message="没有任何网格点找到纤维拆分")
    return Verdict(check="addition", status=VerdictStatus.HOLDS, diagnostics=diagnostics)


def decompose_contact_jet(u: MaxQuadFunction,
                          v: MaxQuadFunction,
                          x0,
                          p0,
                          A0,
                          rho: float = 0.5,
                          grid_per_axis: int = 41,
                          eps_schedule: Optional[Sequence[float]] = None,
                          budget: int = DEFAULT_WITNESS_BUDGET,
                          seed: int = 0,
                          threads: Optional[int] = None) -> Decomposition:
    """
    强加法定理：u+v 在 x0 处的上接触 jet (p0, A0) 分解为
    (u(x0), Du(x0), A′) 与 (v(x0), Dv(x0), B)，A′ + B = A0，A′ = A + P，P ⪰ 0

    A、B 取自 u、v 同时二阶可微点上的见证序列末项。

    Args:
        u, v: 拟凸函数
        x0: 基点
        p0, A0: 和的接触 jet
        rho: 接触校验半径
        grid_per_axis: 接触校验网格
        eps_schedule: 见证序列的 ε 序列
        budget: 每个 ε 的采样预算
        seed: 随机种子
        threads: 线程数

    Returns:
        分解结果；见证预算耗尽时 status 为 inconclusive
    """
    check_dim(u.dim, v.dim, "函数")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    p0 = np.atleast_1d(np.asarray(p0, dtype=float))
    A0 = A0 if isinstance(A0, SymMatrix) else SymMatrix(A0)
    n = x0.shape[0]
    s = function_sum(u, v)

    pre = is_upper_contact_jet(s.expand(), ContactQuery.build(x0, p0, A0, rho=rho, grid_per_axis=grid_per_axis),
                               threads=threads)
    if not pre.is_contact:
        raise PreconditionError(f"(p0, A0) 不是 u+v 在 x0 处的上接触 jet，最大违例 {pre.max_violation:.3e}",
                                witness=pre.worst_point)
    gu = u.gradient_at(x0)
    gv = v.gradient_at(x0)
    if gu is None or gv is None:
        raise PreconditionError("x0 处分量不可微", witness=x0.tolist())
    p_gap = float(np.linalg.norm(gu + gv - p0))
    if p_gap > GRADIENT_SUM_TOL * (1.0 + float(np.max(np.abs(p0)))):
        raise PreconditionError(f"Du(x0) + Dv(x0) 与 p0 相差 {p_gap:.3e}", witness=x0.tolist())

    components = component_contact_jets(u, v, x0, p0, A0, rho=rho, grid_per_axis=grid_per_axis)
    lam = max(u.lambda_qc, v.lambda_qc)

    def both_twice_differentiable(X: np.ndarray) -> np.ndarray:
        return u.jets(X).mask & v.jets(X).mask

    seq = witness_sequence(s, x0, p0, A0, eps_schedule=eps_schedule, predicate=both_twice_differentiable,
                           budget=budget, seed=seed, check_precondition=False, threads=threads)
    base = dict(x0=x0.tolist(), p_gap=p_gap, lambda_qc=lam, components_contact=components.both_contact,
                witnesses=seq)
    if not seq.found:
        return Decomposition(status=VerdictStatus.INCONCLUSIVE, message=seq.message, **base)

    last = seq.points[-1]
    xj = np.asarray(last.x)
    A = u.jet_at(xj).A.array
    B = v.jet_at(xj).A.array
    P = A0.array - A - B
    A_prime = A0.array - B
    lam_min_P = float(np.linalg.eigvalsh(P)[0])
    shift = lam * np.eye(n)
    sandwich_ok = bool(np.linalg.eigvalsh(A + shift)[0] >= -DECOMPOSITION_TOL
                       and np.linalg.eigvalsh(B + shift)[0] >= -DECOMPOSITION_TOL)

    if lam_min_P >= -DECOMPOSITION_TOL and sandwich_ok:
        status, message = VerdictStatus.HOLDS, None
    elif lam_min_P >= -(last.eps + DECOMPOSITION_TOL) and sandwich_ok:
        # 末项只满足 A + B ⪯ A0 + εI，极限尚未分辨
        status, message = VerdictStatus.INCONCLUSIVE, f"λ_min(P) = {lam_min_P:.3e}，需更小的 ε"
    else:
        status, message = VerdictStatus.FAILS, f"λ_min(P) = {lam_min_P:.3e}，夹逼 {sandwich_ok}"

    logger.info(f"接触 jet 分解: λ_min(P)={lam_min_P:.3e}, 梯度间隙 {p_gap:.3e}, 状态 {status.value}")
    return Decomposition(
        status=status,
        u_jet=WitnessJet.from_full_jet(FullJet(x0, Jet2(u.eval(x0), gu, A_prime))),
        v_jet=WitnessJet.from_full_jet(FullJet(x0, Jet2(v.eval(x0), gv, B))),
        P=P.tolist(),
        lambda_min_P=lam_min_P,
        sandwich_ok=sandwich_ok,
        message=message,
        **base,
    )


def zmp_check(u: QuasiConvexFunction,
              v: QuasiConvexFunction,
              K: Box,
              grid: Optional[int] = None,
              tol: float = 1e-9) -> Verdict:
    """
    零最大值原理：∂K 上 u+v ≤ 0 ⇒ K 上 u+v ≤ 0

    边界最大值 > tol 时蕴含式平凡成立（vacuous）。
    """
    check_dim(u.dim, v.dim, "函数")
    check_dim(u.dim, K.dim, "区域")
    ppa = grid or default_grid(K.dim)
    X = _grid_points(K, ppa)
    S = u.evaluate(X) + v.evaluate(X)
    on_boundary = K.boundary_mask(ppa)
    b_max = float(S[on_boundary].max())
    interior = np.flatnonzero(~on_boundary)
    k = int(interior[np.argmax(S[interior])])
    i_max = float(S[k])
    diagnostics = ScanDiagnostics(
        points_scanned=int(X.shape[0]),
        worst_margin=-i_max,
        extra={"boundary_max": b_max, "interior_max": i_max},
    )
    if b_max > tol:
        return Verdict(check="zmp", status=VerdictStatus.HOLDS, vacuous=True, diagnostics=diagnostics,
                       message=f"边界最大值 {b_max:.3e} > 0，蕴含式平凡成立")
    if i_max > tol:
        return Verdict(check="zmp", status=VerdictStatus.FAILS, witness=WitnessJet.from_point(X[k], i_max),
                       diagnostics=diagnostics, message=f"内部最大值 {i_max:.3e} > 0 而边界 ≤ 0")
    return Verdict(check="zmp", status=VerdictStatus.HOLDS, diagnostics=diagnostics)


def audit_interior_inclusion(G: Subequation,
                             F: Subequation,
                             domain: Box,
                             margin: float = 1e-6,
                             n_samples: int = 10_000,
                             seed: int = 0,
                             scale: float = 1.0,
                             threads: Optional[int] = None) -> ScanReport:
    """
    G ⊂ Int F 的统计审计

    随机 jet 落在 G 中时直接检验；不在 G 中时沿 A + sI 二分到 G 的边界再检验，
    边界上的 jet 最接近 F 的边界。要求 f_F ≥ margin。

    Args:
        G, F: 子方程
        domain: 基点取样区域
        margin: 内部裕量（> 0）
        n_samples: 样本数
        seed: 随机种子
        scale: 随机 jet 的尺度
        threads: 线程数

    Returns:
        审计报告，drop 字段为 margin − f_F
    """
    check_dim(G.dim, F.dim, "子方程")
    if margin <= 0:
        raise UsageError(f"margin 必须为正: {margin}")
    n = G.dim
    lo, hi = np.asarray(domain.lo), np.asarray(domain.hi)
    eye = np.eye(n)

    def audit_chunk(chunk_index: int, indices: range):
        rng = chunk_rng(seed, chunk_index)
        count = len(indices)
        _, r, p, A = random_jet_batch(n, rng, count, scale)
        x = lo + (hi - lo) * rng.uniform(0.0, 1.0, (count, n))
        A = A.copy()
        outside = G.evaluate(x, r, p, A) < 0
        if np.any(outside):
            idx = np.flatnonzero(outside)
            s_lo = np.zeros(len(idx))
            s_hi = np.ones(len(idx))
            for _ in range(40):
                reached = G.evaluate(x[idx], r[idx], p[idx], A[idx] + s_hi[:, None, None] * eye) >= 0
                if np.all(reached):
                    break
                s_hi = np.where(reached, s_hi, 2.0 * s_hi)
            reached = G.evaluate(x[idx], r[idx], p[idx], A[idx] + s_hi[:, None, None] * eye) >= 0
            for _ in range(60):
                mid = 0.5 * (s_lo + s_hi)
                ok = G.evaluate(x[idx], r[idx], p[idx], A[idx] + mid[:, None, None] * eye) >= 0
                s_hi = np.where(ok, mid, s_hi)
                s_lo = np.where(ok, s_lo, mid)
            # 无法到达 G 的样本不参与检验
            A[idx] = A[idx] + s_hi[:, None, None] * eye
            keep = np.ones(count, dtype=bool)
            keep[idx[~reached]] = False
        else:
            keep = np.ones(count, dtype=bool)
        sel = np.flatnonzero(keep)
        deficit = margin - F.evaluate(x[sel], r[sel], p[sel], A[sel])
        pos = np.flatnonzero(deficit > 0)
        found = [
            Violation(index=indices.start + int(sel[i]),
                      jet=WitnessJet(x=x[sel[i]].tolist(), r=float(r[sel[i]]), p=p[sel[i]].tolist(),
                                     A=A[sel[i]].tolist()),
                      drop=float(deficit[i]))
            for i in pos[:20]
        ]
        return len(pos), (float(deficit.max()) if len(deficit) else -margin), found

    results = chunked_map(audit_chunk, n_samples, threads=threads)
    violations: List[Violation] = [v for r in results for v in r[2]]
    return ScanReport(
        name=f"{G.name} ⊂ Int {F.name}",
        n_samples=n_samples,
        tol=margin,
        violations=violations[:20],
        violation_count=sum(r[0] for r in results),
        worst=max(r[1] for r in results),
    )


def strict_comparison_test(G: Subequation,
                           F: Subequation,
                           u: QuasiConvexFunction,
                           v: QuasiConvexFunction,
                           K: Box,
                           grid: Optional[int] = None,
                           margin: float = 1e-6,
                           n_audit: int = 10_000,
                           seed: int = 0,
                           tol: float = 1e-9,
                           threads: Optional[int] = None) -> Verdict:
    """
    严格比较：G ⊂ Int F，u ∈ G(K)，v ∈ F̃(K) ⇒ u+v 满足零最大值原理

    前提依次为 G ⊂ Int F 的统计审计、ae_check(u, G)、ae_check(v, dual(F))，
    任何一项不成立都抛出 PreconditionError，不运行 ZMP。

    Returns:
        ZMP 的判定（fails 表示实现或容差问题）
    """
    check_dim(G.dim, F.dim, "子方程")
    check_dim(u.dim, G.dim, "函数")
    audit = audit_interior_inclusion(G, F, K, margin=margin, n_samples=n_audit, seed=seed, threads=threads)
    if not audit.passed:
        raise PreconditionError(f"G ⊄ Int F: {audit.violation_count} 个 G 中的 jet 不在 Int {F.name} 中",
                                witness=audit.violations[0].jet)
    _require_holds(ae_check(u, G, K, grid, tol, threads), f"ae_check(u, {G.name})")
    F_dual = dual(F)
    _require_holds(ae_check(v, F_dual, K, grid, tol, threads), f"ae_check(v, {F_dual.name})")
    verdict = zmp_check(u, v, K, grid, tol)
    verdict.diagnostics.extra["interior_audit_samples"] = n_audit
    if verdict.status == VerdictStatus.FAILS:
        logger.error(f"严格比较失败: {verdict.message}")
    return verdict.model_copy(update={"check": "strict_comparison"})


def witness_check(w: QuasiConvexFunction,
                  x0,
                  p0,
                  A0,
                  eps_schedule: Optional[Sequence[float]] = None,
                  budget: int = DEFAULT_WITNESS_BUDGET,
                  seed: int = 0,
                  threads: Optional[int] = None) -> Verdict:
    """
    上接触 jet 定理的独立检查：见证序列存在，Hessian 夹逼成立，梯度趋于 p0

    Returns:
        holds / inconclusive（预算耗尽）；(p0, A0) 不是接触 jet 时抛出 PreconditionError
    """
    seq = witness_sequence(w, x0, p0, A0, eps_schedule=eps_schedule, budget=budget, seed=seed,
                           threads=threads)
    gaps = [pt.gradient_gap for pt in seq.points]
    diagnostics = ScanDiagnostics(
        points_scanned=sum(seq.samples_used),
        extra={
            "witnesses": len(seq.points),
            "gradient_gaps": gaps,
            "gradient_trend": gradient_trend(gaps),
            "lambda_qc": seq.lambda_qc,
        },
    )
    if not seq.found:
        witness = None if seq.best_candidate is None else WitnessJet(x=seq.best_candidate)
        return Verdict(check="witness", status=VerdictStatus.INCONCLUSIVE, witness=witness,
                       diagnostics=diagnostics, message=seq.message)
    return Verdict(check="witness", status=VerdictStatus.HOLDS, diagnostics=diagnostics)
