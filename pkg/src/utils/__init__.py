# 工具模块 