"""
消息与传输模块
管理者、探索者、边缘服务器之间只通过这里定义的消息通信
"""
import logging
import queue
import threading
import multiprocessing as mp
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Callable, Optional, Sequence, Tuple

from discrete_data import FrequencyTable, MarginalTable
from chordal import Graph
from search import CandidateMove

logger = logging.getLogger(__name__)

BACKENDS = ("thread", "process")


class WorkerError(RuntimeError):
    """工作者失败、超时或回复不符合协议"""


@dataclass(frozen=True)
class Init:
    """分发数据分片与参数"""
    data: FrequencyTable
    eta: int
    cache_size: int = 4096


@dataclass(frozen=True)
class Job:
    """
    一段候选序号区间

    score=True 时检验并评分（均匀分配），否则只做第一阶段检验（两阶段分配）。
    """
    pass_id: int
    graph: Graph
    level: int
    start: int
    stop: int
    score: bool = True


@dataclass(frozen=True)
class StageOneReport:
    worker: str
    pass_id: int
    valid: Tuple[int, ...]
    busy: float = 0.0


@dataclass(frozen=True)
class StageTwoJob:
    pass_id: int
    graph: Graph
    level: int
    indices: Tuple[int, ...]


@dataclass(frozen=True)
class Report:
    """最优候选 dh* 与 G*；best 为 None 表示没有合法候选"""
    worker: str
    pass_id: int
    best: Optional[CandidateMove]
    valid_count: int
    graph_star: Optional[Graph] = None
    busy: float = 0.0


@dataclass(frozen=True)
class MarginalRequest:
    """沿服务器流水线传递的边缘请求，partial 为已累加的子边缘"""
    request_id: Tuple[str, int]
    explorer: str
    subset: Tuple[int, ...]
    partial: Optional[MarginalTable] = None


@dataclass(frozen=True)
class SubMarginal:
    request_id: Tuple[str, int]
    marginal: MarginalTable


@dataclass(frozen=True)
class Terminate:
    pass


@dataclass(frozen=True)
class Failure:
    worker: str
    error: str


class Mailbox:
    """单角色收件箱：send 不阻塞，receive 阻塞直到超时"""

    def __init__(self, channel):
        self._channel = channel

    def send(self, message):
        self._channel.put(message)

    def receive(self, timeout: Optional[float] = None):
        try:
            return self._channel.get(timeout=timeout)
        except queue.Empty:
            raise WorkerError(f"等待消息超时（{timeout} 秒）") from None


class Transport(ABC):
    """收件箱与工作者的创建方式"""

    @abstractmethod
    def mailbox(self) -> Mailbox:
        pass

    @abstractmethod
    def start(self, name: str, target: Callable, args: Sequence) -> Any:
        pass

    def join(self, handles: Sequence[Any], timeout: float = 5.0):
        for handle in handles:
            handle.join(timeout)
            if handle.is_alive():
                logger.warning(f"工作者 {handle.name} 未在 {timeout} 秒内退出")


class ThreadTransport(Transport):
    """进程内线程 + queue.Queue"""

    def mailbox(self) -> Mailbox:
        return Mailbox(queue.Queue())

    def start(self, name: str, target: Callable, args: Sequence) -> threading.Thread:
        worker = threading.Thread(target=target, args=tuple(args), name=name, daemon=True)
        worker.start()
        return worker


class ProcessTransport(Transport):
    """spawn 子进程 + multiprocessing.Queue，消息即线上格式"""

    def __init__(self):
        self._context = mp.get_context("spawn")

    def mailbox(self) -> Mailbox:
        return Mailbox(self._context.Queue())

    def start(self, name: str, target: Callable, args: Sequence):
        worker = self._context.Process(target=target, args=tuple(args), name=name, daemon=True)
        worker.start()
        return worker

    def join(self, handles: Sequence[Any], timeout: float = 5.0):
        super().join(handles, timeout)
        for handle in handles:
            if handle.is_alive():
                handle.terminate()
                handle.join(timeout)


def create_transport(backend: str) -> Transport:
    if backend == "thread":
        return ThreadTransport()
    if backend == "process":
        return ProcessTransport()
    raise ValueError(f"未知后端: {backend}（可选 {', '.join(BACKENDS)}）")
