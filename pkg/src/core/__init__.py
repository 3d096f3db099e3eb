# 核心模块 