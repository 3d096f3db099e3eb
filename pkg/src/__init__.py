# 拟凸函数与原始子方程的数值验证

__version__ = "0.1.0"
