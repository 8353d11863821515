"""
执行器工厂类
根据配置创建对应的候选评估执行器
"""
import logging
from typing import Any, Dict

from base_executor import BaseExecutor, SequentialExecutor
from explorer_executor import ExplorerExecutor
from server_executor import ServerExecutor
from messages import BACKENDS

logger = logging.getLogger(__name__)

MODES = ("sequential", "even", "two-stage")


class ExecutorFactory:
    """执行器工厂类"""

    @staticmethod
    def create_executor(runtime_config: Dict[str, Any]) -> BaseExecutor:
        """
        根据配置创建执行器

        Args:
            runtime_config: 运行时配置字典，包含：
                - mode: "sequential", "even" 或 "two-stage"
                - explorers: 探索者数 n
                - servers: 边缘服务器数 m（仅 two-stage）
                - backend: "thread" 或 "process"
                - timeout: 等待工作者消息的超时（秒）
                - cache_size: 每个探索者的熵缓存条目数

        Returns:
            执行器实例

        Raises:
            ValueError: 参数组合不可行
        """
        mode = str(runtime_config.get("mode", "two-stage")).lower()
        explorers = int(runtime_config.get("explorers", 1))
        servers = int(runtime_config.get("servers", 0))
        backend = str(runtime_config.get("backend", "thread")).lower()
        timeout = float(runtime_config.get("timeout", 300.0))
        cache_size = int(runtime_config.get("cache_size", 4096))

        if mode not in MODES:
            raise ValueError(f"未知执行模式: {mode}（可选 {', '.join(MODES)}）")
        if backend not in BACKENDS:
            raise ValueError(f"未知后端: {backend}（可选 {', '.join(BACKENDS)}）")
        if explorers < 1:
            raise ValueError(f"探索者数必须为正: {explorers}")
        if servers < 0:
            raise ValueError(f"服务器数不能为负: {servers}")
        if servers > 0 and mode != "two-stage":
            raise ValueError(f"边缘服务器（m={servers}）需要 two-stage 模式，当前为 {mode}")

        if mode == "sequential":
            if explorers != 1:
                logger.warning(f"sequential 模式忽略探索者数 {explorers}")
            return SequentialExecutor(cache_size=cache_size, timeout=timeout)
        if servers > 0:
            return ServerExecutor(explorers, servers, backend=backend, cache_size=cache_size, timeout=timeout)
        return ExplorerExecutor(explorers, two_stage=(mode == "two-stage"), backend=backend,
                                cache_size=cache_size, timeout=timeout)

    @staticmethod
    def create_from_config(config: Dict[str, Any]) -> BaseExecutor:
        """
        从完整配置字典创建执行器

        Args:
            config: 完整配置字典

        Returns:
            执行器实例
        """
        return ExecutorFactory.create_executor(config.get("runtime", {}))
