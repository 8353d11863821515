"""
候选评估执行器基类
定义统一的评估接口：会话内分发数据，逐轮评估候选并返回最优候选
"""
import time
import logging
from abc import ABC, abstractmethod
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, TypeVar

from discrete_data import FrequencyTable
from chordal import Graph, JunctionForest
from scoring import EntropyScorer, LocalMarginals
from search import (
    CandidateMove, PassOutcome, SearchConfig, candidate_slice, pass_size, scan_candidates, select_best,
)

logger = logging.getLogger(__name__)

T = TypeVar("T")


@dataclass
class ExecutorStats:
    """各工作者忙碌时间与每轮墙钟时间；空闲 = 墙钟 − 忙碌"""
    busy: Dict[str, float] = field(default_factory=dict)
    wall: float = 0.0
    passes: int = 0

    def record_pass(self, wall: float, busy: Dict[str, float]):
        self.wall += wall
        self.passes += 1
        for worker, seconds in busy.items():
            self.busy[worker] = self.busy.get(worker, 0.0) + seconds

    def idle(self) -> Dict[str, float]:
        return {worker: max(0.0, self.wall - seconds) for worker, seconds in sorted(self.busy.items())}

    def reset(self):
        self.busy.clear()
        self.wall = 0.0
        self.passes = 0


def partition_candidates(total: int, n: int) -> List[range]:
    """
    把候选序号 0..total−1 均匀切成 n 段

    Returns:
        n 个互不相交的区间，大小相差不超过1，前面的区间较大
    """
    if n < 1:
        raise ValueError(f"工作者数必须为正: {n}")
    if total < 0:
        raise ValueError(f"候选数为负: {total}")
    size, extra = divmod(total, n)
    ranges, start = [], 0
    for k in range(n):
        stop = start + size + (1 if k < extra else 0)
        ranges.append(range(start, stop))
        start = stop
    return ranges


def split_evenly(items: Sequence[T], n: int) -> List[List[T]]:
    """按 partition_candidates 的切法把列表分成 n 段"""
    return [list(items[r.start:r.stop]) for r in partition_candidates(len(items), n)]


def merge_reports(moves: Iterable[Optional[CandidateMove]]) -> Optional[CandidateMove]:
    """合并各工作者的最优候选：量化后 dh 最大，相同时枚举序号最小，与到达顺序无关"""
    return select_best(moves)


class BaseExecutor(ABC):
    """候选评估执行器基类"""

    mode = "base"

    def __init__(self, cache_size: int = 4096, timeout: float = 300.0):
        """
        初始化执行器

        Args:
            cache_size: 每个评估者的熵缓存条目数（0表示不限）
            timeout: 等待工作者消息的超时（秒）
        """
        self.cache_size = cache_size
        self.timeout = timeout
        self.stats = ExecutorStats()
        self._data: Optional[FrequencyTable] = None
        self._eta: Optional[int] = None

    @property
    def explorers(self) -> int:
        return 1

    @contextmanager
    def session(self, data: FrequencyTable, eta: int) -> Iterator["BaseExecutor"]:
        """
        启动工作者并分发数据；同一数据与 η 的嵌套会话复用已启动的工作者

        Raises:
            ValueError: 执行器已绑定到另一个数据集
        """
        if self._data is not None:
            if self._data is not data or self._eta != eta:
                raise ValueError("执行器已在另一个数据集上运行")
            yield self
            return
        self._data, self._eta = data, eta
        try:
            self._start(data, eta)
            yield self
        finally:
            try:
                self._stop()
            finally:
                self._data, self._eta = None, None

    def _require_session(self):
        if self._data is None:
            raise RuntimeError("请在 session() 内评估候选")

    def evaluate_pass(self, g: Graph, forest: JunctionForest, level: int, config: SearchConfig) -> PassOutcome:
        """
        评估一轮全部候选

        Args:
            g: 当前弦图
            forest: g 的连接森林
            level: 前瞻层次 i
            config: 搜索参数

        Returns:
            最优合法候选及候选数统计
        """
        self._require_session()
        size = pass_size(g, level, config)
        started = time.perf_counter()
        outcome, busy = self._evaluate(g, forest, level, size)
        self.stats.record_pass(time.perf_counter() - started, busy)
        return outcome

    @abstractmethod
    def _start(self, data: FrequencyTable, eta: int):
        pass

    @abstractmethod
    def _stop(self):
        pass

    @abstractmethod
    def _evaluate(self, g: Graph, forest: JunctionForest, level: int, size: int):
        """返回 (PassOutcome, {工作者: 忙碌秒数})"""
        pass


class SequentialExecutor(BaseExecutor):
    """在调用者线程内按枚举顺序评估全部候选"""

    mode = "sequential"

    def _start(self, data: FrequencyTable, eta: int):
        self.scorer = EntropyScorer(LocalMarginals(data), self.cache_size)

    def _stop(self):
        self.scorer = None

    def _evaluate(self, g: Graph, forest: JunctionForest, level: int, size: int):
        started = time.perf_counter()
        best, valid = scan_candidates(g, forest, candidate_slice(g, level, 0, size), self._eta, self.scorer)
        return PassOutcome(best, size, valid), {"sequential": time.perf_counter() - started}
