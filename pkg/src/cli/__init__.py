# 命令行与场景运行
