"""
边缘服务器执行器
数据按行轮转切成 m+1 个分片：m 个服务器组成流水线逐个累加子边缘，
探索者持有最后一个分片并把流水线结果与本地边缘相加
"""
import time
import logging
from dataclasses import replace
from typing import Dict, List, Optional, Sequence, Tuple

from discrete_data import FrequencyTable, MarginalTable, merge_counts, project
from scoring import LocalMarginals
from explorer_executor import ExplorerExecutor, PipelineMarginals, stage_one
from messages import (
    BACKENDS, Failure, Init, Job, Mailbox, MarginalRequest, StageOneReport, SubMarginal, Terminate,
    WorkerError, create_transport,
)

logger = logging.getLogger(__name__)


def server_step(partial: Optional[MarginalTable], shard: FrequencyTable, subset: Sequence[int]) -> MarginalTable:
    """计算本分片的子边缘并与上游累加结果相加"""
    own = project(shard, subset)
    return own if partial is None else merge_counts(partial, own)


def serve_marginal(subset: Sequence[int], shards: Sequence[FrequencyTable]) -> MarginalTable:
    """
    流水线语义：服务器 1..m 依次累加，最后加上探索者分片

    Args:
        subset: 变量子集
        shards: m+1 个分片，最后一个属于探索者
    """
    if not shards:
        raise ValueError("至少需要一个分片")
    subset = shards[0].scheme.resolve(subset)
    partial = None
    for shard in shards[:-1]:
        partial = server_step(partial, shard, subset)
    local = project(shards[-1], subset)
    return local if partial is None else merge_counts(partial, local)


class MarginalServer:
    """边缘服务器：应答边缘请求，并参与第一阶段检验"""

    def __init__(self, name: str, inbox: Mailbox, downstream: Optional[Mailbox], explorers: Dict[str, Mailbox],
                 manager: Optional[Mailbox]):
        self.name = name
        self.inbox = inbox
        self.downstream = downstream
        self.explorers = explorers
        self.manager = manager
        self.shard: Optional[FrequencyTable] = None
        self.eta: Optional[int] = None
        self.served = 0

    def run(self):
        logger.debug(f"{self.name} 启动")
        try:
            while True:
                message = self.inbox.receive()
                if isinstance(message, Terminate):
                    break
                self.handle(message)
        except Exception as e:
            logger.error(f"{self.name} 失败: {e}", exc_info=True)
            if self.manager is not None:
                self.manager.send(Failure(self.name, f"{type(e).__name__}: {e}"))
            return
        logger.debug(f"{self.name} 退出，共应答 {self.served} 个边缘请求")

    def handle(self, message):
        if isinstance(message, Init):
            self.shard = message.data
            self.eta = message.eta
        elif isinstance(message, MarginalRequest):
            if self.shard is None:
                raise WorkerError(f"{self.name} 在初始化前收到边缘请求")
            partial = server_step(message.partial, self.shard, message.subset)
            self.served += 1
            if self.downstream is not None:
                self.downstream.send(replace(message, partial=partial))
            else:
                self.explorers[message.explorer].send(SubMarginal(message.request_id, partial))
        elif isinstance(message, Job) and not message.score:
            started = time.perf_counter()
            valid = stage_one(message, self.eta)
            self.manager.send(StageOneReport(self.name, message.pass_id, tuple(valid),
                                             time.perf_counter() - started))
        else:
            raise WorkerError(f"{self.name} 收到意外消息: {type(message).__name__}")


def server_main(name: str, inbox: Mailbox, downstream: Optional[Mailbox], explorers: Dict[str, Mailbox],
                manager: Optional[Mailbox]):
    """服务器入口（线程或子进程）"""
    MarginalServer(name, inbox, downstream, explorers, manager).run()


def launch_servers(transport, shards: Sequence[FrequencyTable], explorers: Dict[str, Mailbox],
                   manager: Optional[Mailbox], eta: int = 2) -> Tuple[List[str], Dict[str, Mailbox], list]:
    """
    按流水线顺序启动 len(shards) 个服务器

    Returns:
        (服务器名, 各服务器收件箱, 线程或进程句柄)
    """
    names = [f"server-{k + 1}" for k in range(len(shards))]
    boxes = {name: transport.mailbox() for name in names}
    handles = []
    for k, name in enumerate(names):
        downstream = boxes[names[k + 1]] if k + 1 < len(names) else None
        handles.append(transport.start(name, server_main, (name, boxes[name], downstream, explorers, manager)))
        boxes[name].send(Init(shards[k], eta, 0))
    return names, boxes, handles


class ServerExecutor(ExplorerExecutor):
    """管理者 + n 个探索者 + m 个边缘服务器，两阶段分配"""

    def __init__(self, explorers: int = 1, servers: int = 1, backend: str = "thread",
                 cache_size: int = 4096, timeout: float = 300.0):
        super().__init__(explorers, two_stage=True, backend=backend, cache_size=cache_size, timeout=timeout)
        if servers < 1:
            raise ValueError(f"服务器数必须为正: {servers}")
        self.m = servers
        self.server_names: List[str] = []
        self._shards: List[FrequencyTable] = []

    def _launch_servers(self, data: FrequencyTable, eta: int) -> Optional[Mailbox]:
        self._shards = data.shards(self.m + 1)
        explorers = {name: self.inboxes[name] for name in self.explorer_names}
        self.server_names, boxes, handles = launch_servers(
            self.transport, self._shards[:-1], explorers, self.manager_box, eta)
        self.inboxes.update(boxes)
        self.handles.extend(handles)
        logger.info(f"已启动 {self.m} 个边缘服务器，探索者持有 {len(self._shards[-1])} 行")
        return boxes[self.server_names[0]]

    def _explorer_data(self, data: FrequencyTable) -> FrequencyTable:
        return self._shards[-1]

    def _stage_one_workers(self) -> List[str]:
        return self.explorer_names + self.server_names


class MarginalPipeline:
    """
    独立的边缘流水线（不经过管理者）

    前 m 个分片交给服务器，调用方持有最后一个分片；m=0 时直接本地投影。
    """

    CLIENT = "pipeline-client"

    def __init__(self, shards: Sequence[FrequencyTable], backend: str = "thread", timeout: float = 60.0):
        if not shards:
            raise ValueError("至少需要一个分片")
        if backend not in BACKENDS:
            raise ValueError(f"未知后端: {backend}")
        self.shards = list(shards)
        self.scheme = self.shards[0].scheme
        self.backend = backend
        self.timeout = timeout
        self._transport = None
        self._boxes: Dict[str, Mailbox] = {}
        self._handles: list = []
        self._source = None

    @property
    def servers(self) -> int:
        return len(self.shards) - 1

    def __enter__(self) -> "MarginalPipeline":
        if self.servers == 0:
            self._source = LocalMarginals(self.shards[0])
            return self
        self._transport = create_transport(self.backend)
        inbox = self._transport.mailbox()
        names, self._boxes, self._handles = launch_servers(
            self._transport, self.shards[:-1], {self.CLIENT: inbox}, None)
        self._source = PipelineMarginals(self.CLIENT, self.shards[-1], self._boxes[names[0]], inbox, self.timeout)
        return self

    def __exit__(self, exc_type, exc, tb):
        for box in self._boxes.values():
            box.send(Terminate())
        if self._transport is not None:
            self._transport.join(self._handles)
        self._boxes, self._handles, self._transport, self._source = {}, [], None, None
        return False

    def marginal(self, subset) -> MarginalTable:
        if self._source is None:
            raise RuntimeError("请在 with MarginalPipeline(...) 内请求边缘")
        return self._source.marginal(self.scheme.resolve(subset))
