#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
拟凸函数与原始子方程的数值验证器 - 主入口
"""

from dotenv import load_dotenv

from src.cli.commands import main

# 加载环境变量
load_dotenv()

if __name__ == "__main__":
    raise SystemExit(main())
