#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
场景运行器：解析配置、构造对象、依次执行检查、输出 JSON 报告与 CSV 表
"""

import json
import logging
import os
import time
from typing import Any, Dict, List, Optional, Union
import pandas as pd
from pydantic import ValidationError

from src.core.exceptions import ConfigError, PreconditionError, VerifierError
from src.core.quasiconvex import (
    MaxQuadFunction,
    PiecewiseQuadSum,
    Quadratic,
    SampledFunction,
    function_sum,
    sup_convolution,
)
from src.core.subequations import Subequation, build_subequation, check_positivity, dual
from src.core.contact import contact_measure_fraction
from src.core.theorems import (
    addition_check,
    ae_check,
    decompose_contact_jet,
    strict_comparison_test,
    viscosity_check,
    witness_check,
    zmp_check,
)
from src.models.scene import (
    AdditionCheck,
    AeCheck,
    CheckResult,
    CheckStatus,
    ContactMeasureCheck,
    DecomposeCheck,
    MaxQuadSpec,
    PositivityAuditCheck,
    RunReport,
    SampledSpec,
    SceneConfig,
    StrictComparisonCheck,
    SumSpec,
    ViscosityCheck,
    WitnessCheck,
    ZmpCheck,
)
from src.models.verdict import Verdict, VerdictStatus, WitnessJet
from src.utils.parallel import derive_seed

logger = logging.getLogger(__name__)

# CSV 表头（固定顺序）
CSV_COLUMNS = ["check_index", "check_type", "label", "rho", "fraction", "n_samples", "point", "value", "status"]

SceneFunction = Union[MaxQuadFunction, PiecewiseQuadSum]


def _format_loc(loc) -> str:
    return ".".join(str(part) for part in loc)


def _vector_errors(name: str, value: Any, dim: int) -> List[str]:
    is_matrix = any(isinstance(row, (list, tuple)) for row in value)
    if is_matrix and (len(value) != dim or any(len(row) != dim for row in value)):
        return [f"{name}: 矩阵形状与场景维数 {dim} 不一致"]
    if not is_matrix and len(value) != dim:
        return [f"{name}: 长度 {len(value)} 与场景维数 {dim} 不一致"]
    return []


def _as_witness(obj: Any) -> Optional[WitnessJet]:
    if isinstance(obj, WitnessJet):
        return obj
    if isinstance(obj, (list, tuple)) and obj and all(isinstance(t, (int, float)) for t in obj):
        return WitnessJet(x=[float(t) for t in obj])
    return None


def _load_sampled(spec: SampledSpec) -> SampledFunction:
    if spec.csv is not None:
        return SampledFunction.from_csv(spec.csv)
    return SampledFunction(spec.sites, spec.values)


def validate_config(config: SceneConfig) -> List[str]:
    """
    结构校验：悬空引用、维数一致、目录名存在

    Returns:
        全部错误信息（空列表表示通过）
    """
    errors: List[str] = []
    n = config.dim

    for name, spec in config.functions.items():
        if isinstance(spec, MaxQuadSpec):
            for i, piece in enumerate(spec.pieces):
                errors += _vector_errors(f"functions.{name}.pieces.{i}.p", piece.p, n)
                errors += _vector_errors(f"functions.{name}.pieces.{i}.A", piece.A, n)
        elif isinstance(spec, SampledSpec):
            try:
                sampled = _load_sampled(spec)
                if sampled.dim != n:
                    errors.append(f"functions.{name}: 维数 {sampled.dim} 与场景维数 {n} 不一致")
            except (VerifierError, OSError, ValueError) as e:
                errors.append(f"functions.{name}: {e}")
        elif isinstance(spec, SumSpec):
            for part in (spec.u, spec.v):
                target = config.functions.get(part)
                if target is None:
                    errors.append(f"functions.{name}: 未定义的函数 '{part}'")
                elif isinstance(target, SumSpec):
                    errors.append(f"functions.{name}: 分量 '{part}' 不能再是和")

    for name, spec in config.subequations.items():
        try:
            build_subequation(spec.name, n, spec.params)
        except VerifierError as e:
            errors.append(f"subequations.{name}: {e}")

    for i, check in enumerate(config.checks):
        where = f"checks.{i}({check.type})"
        for ref in check.function_refs():
            if ref not in config.functions:
                errors.append(f"{where}: 未定义的函数 '{ref}'")
        for ref in check.subequation_refs():
            if ref not in config.subequations:
                errors.append(f"{where}: 未定义的子方程 '{ref}'")
        for field, value in check.vectors().items():
            errors += _vector_errors(f"{where}.{field}", value, n)
        if isinstance(check, DecomposeCheck):
            for ref in (check.u, check.v):
                if isinstance(config.functions.get(ref), SumSpec):
                    errors.append(f"{where}: 分解的分量 '{ref}' 不能是和")
    return errors


def parse_config_data(data: Dict[str, Any]) -> SceneConfig:
    """由已解析的 JSON 对象构造配置，收集全部错误后一次性抛出 ConfigError"""
    try:
        config = SceneConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError([f"{_format_loc(err['loc'])}: {err['msg']}" for err in e.errors()]) from e
    errors = validate_config(config)
    if errors:
        raise ConfigError(errors)
    return config


def parse_config(path: str) -> SceneConfig:
    """
    读取并校验场景配置

    Args:
        path: JSON 文件路径

    Returns:
        校验通过的配置
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError([f"JSON 解析失败: {path}: {e}"]) from e
    except OSError as e:
        raise ConfigError([f"无法读取配置文件: {path}: {e}"]) from e
    return parse_config_data(data)


def dump_config(config: SceneConfig, path: str) -> None:
    """写出配置的规范形式（parse_config 的逆）"""
    with open(path, "w", encoding="utf-8") as f:
        json.dump(config.normal_form(), f, indent=2, ensure_ascii=False)
        f.write("\n")


def exit_code_for(results: List[CheckResult]) -> int:
    """3（前提错误）> 1（失败或异常）> 2（无法判定）> 0"""
    statuses = {r.status for r in results}
    if CheckStatus.PRECONDITION_ERROR in statuses:
        return 3
    if CheckStatus.FAILS in statuses or CheckStatus.ERROR in statuses:
        return 1
    if CheckStatus.INCONCLUSIVE in statuses:
        return 2
    return 0


class SceneRunner:
    """场景运行器"""

    def __init__(self,
                 config: SceneConfig,
                 grid: Optional[int] = None,
                 tol: Optional[float] = None,
                 threads: Optional[int] = None,
                 timings: bool = False,
                 default_tol: float = 1e-9):
        """
        初始化

        Args:
            config: 场景配置
            grid: 覆盖场景网格
            tol: 覆盖场景容差
            threads: 线程数
            timings: 是否记录耗时（记录后报告不再逐字节可复现）
            default_tol: 命令行、检查和场景都未指定容差时使用
        """
        self.config = config
        self.grid_override = grid
        self.tol_override = tol
        self.threads = threads
        self.timings = timings
        self.default_tol = default_tol
        self.logger = logging.getLogger(__name__)
        self._functions: Dict[str, SceneFunction] = {}
        self._subequations: Dict[str, Subequation] = {}

    def function(self, name: str) -> SceneFunction:
        if name not in self._functions:
            spec = self.config.functions[name]
            if isinstance(spec, MaxQuadSpec):
                fn: SceneFunction = MaxQuadFunction([Quadratic(p.c, p.p, p.A) for p in spec.pieces])
            elif isinstance(spec, SampledSpec):
                fn = sup_convolution(_load_sampled(spec), spec.eps)
            else:
                fn = function_sum(self.function(spec.u), self.function(spec.v))
            self._functions[name] = fn
        return self._functions[name]

    def subequation(self, name: str) -> Subequation:
        if name not in self._subequations:
            spec = self.config.subequations[name]
            F = build_subequation(spec.name, self.config.dim, spec.params)
            self._subequations[name] = dual(F) if spec.dual else F
        return self._subequations[name]

    def _zero(self) -> MaxQuadFunction:
        return MaxQuadFunction([Quadratic.zero(self.config.dim)])

    def run(self) -> RunReport:
        """按序执行全部检查"""
        started = time.perf_counter()
        results = []
        for index, check in enumerate(self.config.checks):
            seed = derive_seed(self.config.seed, index)
            self.logger.info(f"开始检查 #{index}: {check.type} {check.label or ''}")
            try:
                result = self._run_check(index, check, seed)
            except PreconditionError as e:
                self.logger.warning(f"检查 #{index} 前提不成立: {e}")
                witness = _as_witness(e.witness)
                result = CheckResult(index=index, type=check.type, label=check.label,
                                     status=CheckStatus.PRECONDITION_ERROR, error=str(e), witness=witness)
            except Exception as e:
                self.logger.error(f"检查 #{index} 运行异常: {e}", exc_info=True)
                result = CheckResult(index=index, type=check.type, label=check.label,
                                     status=CheckStatus.ERROR, error=f"{type(e).__name__}: {e}")
            if not result.rows:
                result.rows = [self._summary_row(result)]
            self.logger.info(f"检查 #{index} 完成: {result.status.value}")
            results.append(result)

        report = RunReport(
            seed=self.config.seed,
            config_hash=self.config.config_hash(),
            exit_code=exit_code_for(results),
            checks=results,
            wall_time=round(time.perf_counter() - started, 6) if self.timings else None,
        )
        return report

    def _summary_row(self, result: CheckResult) -> Dict[str, Any]:
        point, value = None, None
        witness = result.witness or (result.verdict.witness if result.verdict else None)
        if witness is not None:
            point = ";".join(repr(float(t)) for t in witness.x)
            value = witness.r
        elif result.verdict is not None:
            value = result.verdict.diagnostics.worst_margin
        return {"check_index": result.index, "check_type": result.type, "label": result.label,
                "point": point, "value": value, "status": result.status.value}

    def _from_verdict(self, index: int, check, verdict: Verdict) -> CheckResult:
        return CheckResult(index=index, type=check.type, label=check.label,
                           status=CheckStatus(verdict.status.value), vacuous=verdict.vacuous,
                           verdict=verdict, witness=verdict.witness)

    def _run_check(self, index: int, check, seed: int) -> CheckResult:
        grid = self.grid_override or check.grid or self.config.grid
        tol = next((t for t in (self.tol_override, check.tol, self.config.tol) if t is not None), self.default_tol)

        if isinstance(check, ViscosityCheck):
            verdict = viscosity_check(self.function(check.function), self.subequation(check.subequation),
                                      check.domain, grid, tol, self.threads)
            return self._from_verdict(index, check, verdict)

        if isinstance(check, AeCheck):
            verdict = ae_check(self.function(check.function), self.subequation(check.subequation),
                               check.domain, grid, tol, self.threads)
            return self._from_verdict(index, check, verdict)

        if isinstance(check, AdditionCheck):
            verdict = addition_check(self.function(check.u), self.function(check.v),
                                     self.subequation(check.F), self.subequation(check.G),
                                     check.domain, grid, tol, split_budget=check.split_budget,
                                     seed=seed, threads=self.threads)
            return self._from_verdict(index, check, verdict)

        if isinstance(check, DecomposeCheck):
            dec = decompose_contact_jet(self.function(check.u), self.function(check.v),
                                        check.x0, check.p0, check.A0, rho=check.rho,
                                        eps_schedule=check.eps_schedule, budget=check.budget,
                                        seed=seed, threads=self.threads)
            detail = dec.model_dump(mode="json", exclude={"witnesses"})
            detail["witness_count"] = len(dec.witnesses.points) if dec.witnesses else 0
            return CheckResult(index=index, type=check.type, label=check.label,
                               status=CheckStatus(dec.status.value), detail=detail,
                               witness=dec.u_jet if dec.status == VerdictStatus.FAILS else None)

        if isinstance(check, ZmpCheck):
            v = self.function(check.v) if check.v else self._zero()
            verdict = zmp_check(self.function(check.u), v, check.domain, grid, tol)
            return self._from_verdict(index, check, verdict)

        if isinstance(check, StrictComparisonCheck):
            verdict = strict_comparison_test(self.subequation(check.G), self.subequation(check.F),
                                             self.function(check.u), self.function(check.v),
                                             check.domain, grid, margin=check.margin,
                                             n_audit=check.n_audit, seed=seed, tol=tol, threads=self.threads)
            return self._from_verdict(index, check, verdict)

        if isinstance(check, ContactMeasureCheck):
            w = self.function(check.function)
            rows, estimates = [], []
            for i, rho in enumerate(check.rhos):
                est = contact_measure_fraction(w, check.x0, check.A0, rho, n_samples=check.n_samples,
                                               seed=derive_seed(seed, i), probes_per_axis=check.probes_per_axis,
                                               tol=tol, threads=self.threads)
                estimates.append({"rho": rho, "fraction": est.fraction, "witness_count": est.witness_count})
                rows.append({"check_index": index, "check_type": check.type, "label": check.label,
                             "rho": rho, "fraction": est.fraction, "n_samples": est.n_samples})
            # 蒙特卡罗估计不能否定正测度，零占比只能记为无法判定
            positive = all(e["fraction"] > 0 for e in estimates)
            status = CheckStatus.HOLDS if positive else CheckStatus.INCONCLUSIVE
            for row in rows:
                row["status"] = status.value
            return CheckResult(index=index, type=check.type, label=check.label, status=status,
                               detail={"estimates": estimates}, rows=rows)

        if isinstance(check, PositivityAuditCheck):
            report = check_positivity(self.subequation(check.subequation), check.n_samples, seed=seed,
                                      tol=tol, threads=self.threads)
            status = CheckStatus.HOLDS if report.passed else CheckStatus.FAILS
            witness = report.violations[0].jet if report.violations else None
            return CheckResult(index=index, type=check.type, label=check.label, status=status,
                               detail=report.model_dump(mode="json"), witness=witness)

        if isinstance(check, WitnessCheck):
            verdict = witness_check(self.function(check.function), check.x0, check.p0, check.A0,
                                    eps_schedule=check.eps_schedule, budget=check.budget, seed=seed,
                                    threads=self.threads)
            return self._from_verdict(index, check, verdict)

        raise ConfigError([f"未知的检查类型: {check.type}"])


def run(config: SceneConfig, **kwargs) -> RunReport:
    """执行场景，参数同 SceneRunner"""
    return SceneRunner(config, **kwargs).run()


def emit_csv(report: RunReport, path: str) -> None:
    """
    写出绘图用 CSV：contact_measure 每个 rho 一行，其余检查每个一行；空检查列表只写表头
    """
    rows = [row for result in report.checks for row in result.rows]
    df = pd.DataFrame(rows, columns=CSV_COLUMNS)
    out_dir = os.path.dirname(path)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    df.to_csv(path, index=False, encoding="utf-8", float_format="%.17g")


def write_report(report: RunReport, path: str) -> None:
    out_dir = os.path.dirname(path)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(report.to_json())
