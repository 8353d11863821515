"""
可分解马尔可夫网络(DMN)结构学习工具
多链接前瞻搜索、管理者/探索者/边缘服务器并行运行时、PI模型生成与基准测试
"""

__version__ = "1.0.0"
