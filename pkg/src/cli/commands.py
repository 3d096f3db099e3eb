#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
命令行入口

子命令：run <config>、catalog、audit-positivity <name>、version
退出码：0 全部成立，1 存在失败，2 仅有无法判定，3 前提错误或配置无效
"""

import argparse
import json
import logging
import os
import sys
from typing import List, Optional

from src import __version__
from src.cli.scene_runner import SceneRunner, emit_csv, parse_config, write_report
from src.core.exceptions import ConfigError, UsageError
from src.core.subequations import build_subequation, catalog_entries, check_positivity
from src.utils.logger_config import setup_logger
from src.utils.parallel import set_default_threads
from src.utils.settings import Settings, load_settings

logger = logging.getLogger(__name__)

EXIT_PRECONDITION = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qcv", description="拟凸函数与子方程定理的数值验证")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="运行场景配置")
    run_p.add_argument("config", help="场景 JSON 文件")
    run_p.add_argument("--seed", type=int, default=None, help="覆盖配置中的种子")
    run_p.add_argument("--grid", type=int, default=None, help="覆盖每轴网格点数")
    run_p.add_argument("--tol", type=float, default=None, help="覆盖容差")
    run_p.add_argument("--threads", type=int, default=None, help="工作线程数")
    run_p.add_argument("--out", default=None, help="输出目录（默认 QCV_OUTPUT_DIR）")
    run_p.add_argument("--timings", action="store_true", help="在报告中记录耗时")

    cat_p = sub.add_parser("catalog", help="列出子方程目录")
    cat_p.add_argument("--dim", type=int, default=2)

    audit_p = sub.add_parser("audit-positivity", help="正性条件的统计审计")
    audit_p.add_argument("name", help="目录名，如 convex、laplace_0、kth_eig")
    audit_p.add_argument("--dim", type=int, default=2)
    audit_p.add_argument("--params", default="{}", help="JSON 格式的目录参数")
    audit_p.add_argument("--samples", type=int, default=100_000)
    audit_p.add_argument("--seed", type=int, default=0)
    audit_p.add_argument("--tol", type=float, default=None)
    audit_p.add_argument("--threads", type=int, default=None)

    sub.add_parser("version", help="打印版本号")
    return parser


def _cmd_run(args: argparse.Namespace, settings: Settings) -> int:
    try:
        config = parse_config(args.config)
    except ConfigError as e:
        for err in e.errors:
            print(err, file=sys.stderr)
        return EXIT_PRECONDITION
    if args.seed is not None:
        config = config.model_copy(update={"seed": args.seed})

    runner = SceneRunner(config, grid=args.grid, tol=args.tol, threads=args.threads,
                         timings=args.timings, default_tol=settings.tol)
    report = runner.run()

    out_dir = args.out or settings.output_dir
    stem = os.path.splitext(os.path.basename(args.config))[0]
    json_path = os.path.join(out_dir, f"{stem}.report.json")
    csv_path = os.path.join(out_dir, f"{stem}.csv")
    write_report(report, json_path)
    emit_csv(report, csv_path)
    logger.info(f"报告已写入: {json_path}, {csv_path}")
    sys.stdout.write(report.to_json())
    return report.exit_code


def _cmd_catalog(args: argparse.Namespace) -> int:
    print(json.dumps(catalog_entries(args.dim), indent=2, ensure_ascii=False))
    return 0


def _cmd_audit(args: argparse.Namespace, settings: Settings) -> int:
    try:
        F = build_subequation(args.name, args.dim, json.loads(args.params))
        report = check_positivity(F, args.samples, seed=args.seed,
                                  tol=args.tol if args.tol is not None else settings.tol,
                                  threads=args.threads)
    except (UsageError, json.JSONDecodeError) as e:
        print(str(e), file=sys.stderr)
        return EXIT_PRECONDITION
    print(json.dumps(report.model_dump(mode="json"), indent=2, ensure_ascii=False))
    return 0 if report.passed else 1


def main(argv: Optional[List[str]] = None) -> int:
    """
    命令行主函数

    Args:
        argv: 参数列表，默认取 sys.argv[1:]

    Returns:
        进程退出码
    """
    args = build_parser().parse_args(argv)
    settings = load_settings()
    # stdout 只输出 JSON
    setup_logger(log_level=settings.log_level, log_file=settings.log_file, stream=sys.stderr)
    set_default_threads(getattr(args, "threads", None) or settings.threads)

    if args.command == "run":
        return _cmd_run(args, settings)
    if args.command == "catalog":
        return _cmd_catalog(args)
    if args.command == "audit-positivity":
        return _cmd_audit(args, settings)
    print(__version__)
    return 0
