"""
探索者执行器
管理者把候选区间分给 n 个探索者：均匀分配，或两阶段分配
（阶段1只做弦性与单团蕴含检验，阶段2把合法候选重新均分后评分）
"""
import time
import logging
from typing import Dict, List, Optional, Sequence, Tuple, Type

from discrete_data import FrequencyTable, MarginalTable, merge_counts, project
from chordal import Graph, JunctionForest, chordal_structure
from scoring import EntropyScorer, LocalMarginals
from search import (
    CandidateMove, PassOutcome, SearchConfig, adopt, candidate_slice, candidates_at, filter_candidates,
    scan_candidates,
)
from base_executor import BaseExecutor, merge_reports, partition_candidates, split_evenly
from messages import (
    BACKENDS, Failure, Init, Job, Mailbox, MarginalRequest, Report, StageOneReport, StageTwoJob,
    SubMarginal, Terminate, WorkerError, create_transport,
)

logger = logging.getLogger(__name__)


class PipelineMarginals:
    """
    探索者侧的边缘来源：请求沿服务器流水线累加，
    等待期间投影本地分片，最后把两份边缘相加
    """

    def __init__(self, explorer: str, local: FrequencyTable, first_server: Mailbox, inbox: Mailbox,
                 timeout: float = 300.0):
        self.explorer = explorer
        self.local = local
        self.scheme = local.scheme
        self.first_server = first_server
        self.inbox = inbox
        self.timeout = timeout
        self._sequence = 0

    def marginal(self, subset: Sequence[int]) -> MarginalTable:
        self._sequence += 1
        request_id = (self.explorer, self._sequence)
        subset = tuple(subset)
        self.first_server.send(MarginalRequest(request_id, self.explorer, subset))
        local = project(self.local, subset)
        reply = self.inbox.receive(self.timeout)
        if not isinstance(reply, SubMarginal) or reply.request_id != request_id:
            raise WorkerError(f"{self.explorer} 等待 {request_id} 时收到 {type(reply).__name__}")
        return merge_counts(reply.marginal, local)


def stage_one(job: Job, eta: int) -> List[int]:
    """第一阶段检验一个候选区间"""
    return filter_candidates(job.graph, candidate_slice(job.graph, job.level, job.start, job.stop), eta)


class Explorer:
    """探索者：检验并评分候选，向管理者汇报 dh* 与 G*"""

    def __init__(self, name: str, inbox: Mailbox, manager: Mailbox, pipeline: Optional[Mailbox] = None,
                 timeout: float = 300.0):
        self.name = name
        self.inbox = inbox
        self.manager = manager
        self.pipeline = pipeline
        self.timeout = timeout
        self.scorer: Optional[EntropyScorer] = None
        self.eta: Optional[int] = None
        self._current: Optional[Tuple[int, Graph, JunctionForest]] = None

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
            self.manager.send(Failure(self.name, f"{type(e).__name__}: {e}"))
            return
        logger.debug(f"{self.name} 退出")

    def handle(self, message):
        if isinstance(message, Init):
            if self.pipeline is None:
                source = LocalMarginals(message.data)
            else:
                source = PipelineMarginals(self.name, message.data, self.pipeline, self.inbox, self.timeout)
            self.scorer = EntropyScorer(source, message.cache_size)
            self.eta = message.eta
        elif isinstance(message, Job):
            started = time.perf_counter()
            if message.score:
                forest = self._forest(message.pass_id, message.graph)
                candidates = candidate_slice(message.graph, message.level, message.start, message.stop)
                best, valid = scan_candidates(message.graph, forest, candidates, self.eta, self.scorer)
                self._report(message.pass_id, message.graph, best, valid, started)
            else:
                valid = stage_one(message, self.eta)
                self.manager.send(StageOneReport(self.name, message.pass_id, tuple(valid),
                                                 time.perf_counter() - started))
        elif isinstance(message, StageTwoJob):
            started = time.perf_counter()
            forest = self._forest(message.pass_id, message.graph)
            candidates = candidates_at(message.graph, message.level, message.indices)
            best, valid = scan_candidates(message.graph, forest, candidates, self.eta, self.scorer)
            self._report(message.pass_id, message.graph, best, valid, started)
        else:
            raise WorkerError(f"{self.name} 收到意外消息: {type(message).__name__}")

    def _forest(self, pass_id: int, graph: Graph) -> JunctionForest:
        if self.scorer is None:
            raise WorkerError(f"{self.name} 在初始化前收到任务")
        if self._current is None or self._current[0] != pass_id:
            structure = chordal_structure(graph)
            if structure is None:
                raise WorkerError(f"{self.name} 收到非弦图")
            self._current = (pass_id, graph, structure[1])
        return self._current[2]

    def _report(self, pass_id: int, graph: Graph, best, valid: int, started: float):
        graph_star = graph.with_links(best.links) if best is not None else None
        self.manager.send(Report(self.name, pass_id, best, valid, graph_star, time.perf_counter() - started))


def explorer_main(name: str, inbox: Mailbox, manager: Mailbox, pipeline: Optional[Mailbox] = None,
                  timeout: float = 300.0):
    """探索者入口（线程或子进程）"""
    Explorer(name, inbox, manager, pipeline, timeout).run()


class ExplorerExecutor(BaseExecutor):
    """管理者 + n 个探索者，每个探索者持有完整数据集"""

    def __init__(self, explorers: int = 1, two_stage: bool = True, backend: str = "thread",
                 cache_size: int = 4096, timeout: float = 300.0):
        """
        初始化执行器

        Args:
            explorers: 探索者数 n
            two_stage: 是否两阶段分配
            backend: "thread" 或 "process"
            cache_size: 每个探索者的熵缓存条目数
            timeout: 等待工作者消息的超时（秒）
        """
        super().__init__(cache_size, timeout)
        if explorers < 1:
            raise ValueError(f"探索者数必须为正: {explorers}")
        if backend not in BACKENDS:
            raise ValueError(f"未知后端: {backend}（可选 {', '.join(BACKENDS)}）")
        self.n = explorers
        self.two_stage = two_stage
        self.backend = backend
        self.mode = "two-stage" if two_stage else "even"
        self.transport = None
        self.manager_box: Optional[Mailbox] = None
        self.explorer_names: List[str] = []
        self.inboxes: Dict[str, Mailbox] = {}
        self.handles: list = []
        self._pass_id = 0

    @property
    def explorers(self) -> int:
        return self.n

    def _start(self, data: FrequencyTable, eta: int):
        self.transport = create_transport(self.backend)
        self.manager_box = self.transport.mailbox()
        self.explorer_names = [f"explorer-{k + 1}" for k in range(self.n)]
        self.inboxes = {name: self.transport.mailbox() for name in self.explorer_names}
        self.handles = []
        entry = self._launch_servers(data, eta)
        for name in self.explorer_names:
            self.handles.append(self.transport.start(
                name, explorer_main, (name, self.inboxes[name], self.manager_box, entry, self.timeout)))
        shard = self._explorer_data(data)
        for name in self.explorer_names:
            self.inboxes[name].send(Init(shard, eta, self.cache_size))
        logger.info(f"已启动 {self.n} 个探索者（{self.mode}，后端 {self.backend}）")

    def _launch_servers(self, data: FrequencyTable, eta: int) -> Optional[Mailbox]:
        """启动边缘服务器，返回流水线入口；本类没有服务器"""
        return None

    def _explorer_data(self, data: FrequencyTable) -> FrequencyTable:
        return data

    def _stage_one_workers(self) -> List[str]:
        return self.explorer_names

    def _stop(self):
        for box in self.inboxes.values():
            box.send(Terminate())
        if self.transport is not None:
            self.transport.join(self.handles, timeout=min(self.timeout, 10.0))
        logger.info(f"{len(self.handles)} 个工作者已停止")
        self.handles = []
        self.inboxes = {}
        self.transport = None

    def _collect(self, workers: Sequence[str], kind: Type, pass_id: int) -> Dict[str, object]:
        """
        等待每个工作者的一条汇报

        Raises:
            WorkerError: 工作者失败、超时或收到不符合协议的消息
        """
        pending = set(workers)
        received = {}
        while pending:
            message = self.manager_box.receive(self.timeout)
            if isinstance(message, Failure):
                raise WorkerError(f"工作者 {message.worker} 失败: {message.error}")
            worker = getattr(message, "worker", None)
            if not isinstance(message, kind) or message.pass_id != pass_id or worker not in pending:
                raise WorkerError(f"管理者收到意外消息: {type(message).__name__} 来自 {worker}")
            pending.remove(worker)
            received[worker] = message
        return received

    def _evaluate(self, g: Graph, forest: JunctionForest, level: int, size: int):
        self._pass_id += 1
        if self.two_stage:
            return self._evaluate_two_stage(g, level, size, self._pass_id)
        return self._evaluate_even(g, level, size, self._pass_id)

    def _evaluate_even(self, g: Graph, level: int, size: int, pass_id: int):
        for name, block in zip(self.explorer_names, partition_candidates(size, self.n)):
            self.inboxes[name].send(Job(pass_id, g, level, block.start, block.stop, score=True))
        reports = self._collect(self.explorer_names, Report, pass_id)
        best = merge_reports(report.best for report in reports.values())
        valid = sum(report.valid_count for report in reports.values())
        busy = {name: report.busy for name, report in reports.items()}
        logger.debug(f"层次 {level} 均匀分配完成: {valid}/{size} 个候选合法")
        return PassOutcome(best, size, valid), busy

    def _evaluate_two_stage(self, g: Graph, level: int, size: int, pass_id: int):
        workers = self._stage_one_workers()
        for name, block in zip(workers, partition_candidates(size, len(workers))):
            self.inboxes[name].send(Job(pass_id, g, level, block.start, block.stop, score=False))
        stage_one_reports = self._collect(workers, StageOneReport, pass_id)
        valid = sorted(index for report in stage_one_reports.values() for index in report.valid)
        logger.debug(f"阶段1完成: {len(valid)}/{size} 个候选合法")

        for name, part in zip(self.explorer_names, split_evenly(valid, self.n)):
            self.inboxes[name].send(StageTwoJob(pass_id, g, level, tuple(part)))
        reports = self._collect(self.explorer_names, Report, pass_id)
        best = merge_reports(report.best for report in reports.values())
        busy = {name: report.busy for name, report in stage_one_reports.items()}
        for name, report in reports.items():
            busy[name] = busy.get(name, 0.0) + report.busy
        logger.debug(f"阶段2完成: {len(valid)} 个合法候选分给 {self.n} 个探索者")
        return PassOutcome(best, size, len(valid)), busy


def _single_pass(executor: BaseExecutor, g: Graph, level: int, config: SearchConfig,
                 data: FrequencyTable) -> Optional[CandidateMove]:
    structure = chordal_structure(g)
    if structure is None:
        raise ValueError(f"当前图不是弦图: {g.sorted_edges()}")
    with executor.session(data, config.eta):
        outcome = executor.evaluate_pass(g, structure[1], level, config)
    adopted = adopt(outcome, g, config)
    return adopted[0] if adopted else None


def run_pass_even(g: Graph, level: int, config: SearchConfig, data: FrequencyTable, n: int,
                  backend: str = "thread") -> Optional[CandidateMove]:
    """均匀分配执行一轮，返回与顺序执行相同的最优显著候选"""
    return _single_pass(ExplorerExecutor(n, two_stage=False, backend=backend), g, level, config, data)


def run_pass_two_stage(g: Graph, level: int, config: SearchConfig, data: FrequencyTable, n: int,
                       backend: str = "thread") -> Optional[CandidateMove]:
    """两阶段分配执行一轮，结果与 run_pass_even 相同"""
    return _single_pass(ExplorerExecutor(n, two_stage=True, backend=backend), g, level, config, data)
