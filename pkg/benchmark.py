"""
加速比基准模块
对每种分配方式和探索者数重复运行学习，取墙钟时间中位数，计算加速比 S = T(1)/T(n) 与效率 E = S/n
"""
import csv
import io
import time
import logging
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Union

from discrete_data import FrequencyTable
from search import SearchConfig, format_trace, learn
from explorer_executor import ExplorerExecutor
from server_executor import ServerExecutor
from messages import WorkerError

logger = logging.getLogger(__name__)

TSV_COLUMNS = ("mode", "n", "seconds", "speedup", "efficiency", "idle_max", "idle_mean")
BENCH_MODES = ("even", "two-stage")


def speedup(t1: float, tn: float) -> float:
    if t1 <= 0 or tn <= 0:
        raise ValueError(f"运行时间必须为正: T(1)={t1}, T(n)={tn}")
    return t1 / tn


def efficiency(s: float, n: int) -> float:
    if n < 1:
        raise ValueError(f"探索者数必须为正: {n}")
    return s / n


@dataclass(frozen=True)
class BenchRow:
    """一行基准结果；speedup 按输出精度取整，efficiency 由取整后的 speedup 计算"""
    mode: str
    n: int
    seconds: float
    speedup: float
    efficiency: float
    idle_max: float = 0.0
    idle_mean: float = 0.0

    @classmethod
    def measured(cls, mode: str, n: int, seconds: float, t1: float, idle_max: float = 0.0,
                 idle_mean: float = 0.0) -> "BenchRow":
        s = 1.0 if n == 1 else round(speedup(t1, seconds), 6)
        return cls(mode, n, seconds, s, efficiency(s, n), idle_max, idle_mean)


@dataclass
class BenchReport:
    rows: List[BenchRow] = field(default_factory=list)

    def row(self, mode: str, n: int) -> Optional[BenchRow]:
        return next((r for r in self.rows if r.mode == mode and r.n == n), None)

    def to_tsv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, delimiter="\t", lineterminator="\n")
        writer.writerow(TSV_COLUMNS)
        for r in self.rows:
            writer.writerow([r.mode, r.n, repr(r.seconds), repr(r.speedup), repr(r.efficiency),
                             repr(r.idle_max), repr(r.idle_mean)])
        return buffer.getvalue()

    @classmethod
    def from_tsv(cls, text: str) -> "BenchReport":
        """
        解析 to_tsv 的输出

        Raises:
            ValueError: 表头或字段不合法
        """
        reader = csv.reader(io.StringIO(text), delimiter="\t")
        header = next(reader, None)
        if header is None or tuple(header) != TSV_COLUMNS:
            raise ValueError(f"基准报告表头不合法: {header}")
        rows = []
        for fields in reader:
            if not fields:
                continue
            if len(fields) != len(TSV_COLUMNS):
                raise ValueError(f"基准报告行字段数错误: {fields}")
            rows.append(BenchRow(fields[0], int(fields[1]), *(float(v) for v in fields[2:])))
        return cls(rows)

    def write(self, path: Union[str, Path]):
        Path(path).write_text(self.to_tsv(), encoding="utf-8")


def _executor(mode: str, n: int, servers: int, backend: str, cache_size: int, timeout: float):
    if servers > 0:
        if mode != "two-stage":
            raise ValueError(f"边缘服务器（m={servers}）需要 two-stage 模式，当前为 {mode}")
        return ServerExecutor(n, servers, backend=backend, cache_size=cache_size, timeout=timeout)
    return ExplorerExecutor(n, two_stage=(mode == "two-stage"), backend=backend,
                            cache_size=cache_size, timeout=timeout)


def time_learn(config: SearchConfig, data: FrequencyTable, mode: str, n: int, servers: int = 0,
               backend: str = "process", cache_size: int = 4096, timeout: float = 300.0):
    """
    运行一次完整学习

    Returns:
        (墙钟秒数, 学到的图, 轨迹文本, 各工作者空闲秒数)
    """
    executor = _executor(mode, n, servers, backend, cache_size, timeout)
    started = time.perf_counter()
    graph, trace = learn(config, data, executor)
    seconds = time.perf_counter() - started
    return seconds, graph, format_trace(trace), list(executor.stats.idle().values())


def run_bench(config: SearchConfig, data: FrequencyTable, workers: Sequence[int] = (1, 2, 4),
              repetitions: int = 3, modes: Sequence[str] = BENCH_MODES, servers: int = 0,
              backend: str = "process", cache_size: int = 4096, timeout: float = 300.0) -> BenchReport:
    """
    基准测试：每种模式、每个探索者数重复 repetitions 次，取中位数

    n=1 总会测量，作为加速比基准。所有运行学到的图与轨迹必须一致。

    Raises:
        ValueError: 参数不合法
        WorkerError: 某次运行的结果与其他运行不一致
    """
    if not workers:
        raise ValueError("探索者数列表不能为空")
    if repetitions < 1:
        raise ValueError(f"重复次数必须为正: {repetitions}")
    for mode in modes:
        if mode not in BENCH_MODES:
            raise ValueError(f"未知分配方式: {mode}（可选 {', '.join(BENCH_MODES)}）")
    counts = sorted(set(int(n) for n in workers) | {1})
    if counts[0] < 1:
        raise ValueError(f"探索者数必须为正: {counts[0]}")

    report = BenchReport()
    reference: Optional[tuple] = None
    for mode in modes:
        t1 = None
        for n in counts:
            times, idle_max, idle_mean = [], [], []
            for rep in range(repetitions):
                seconds, graph, trace_text, idle = time_learn(config, data, mode, n, servers, backend,
                                                              cache_size, timeout)
                if reference is None:
                    reference = (graph, trace_text)
                elif (graph, trace_text) != reference:
                    raise WorkerError(f"{mode} n={n} 第 {rep + 1} 次运行的结果与基准运行不一致")
                times.append(seconds)
                idle_max.append(max(idle, default=0.0))
                idle_mean.append(statistics.fmean(idle) if idle else 0.0)
            median = statistics.median(times)
            if n == 1:
                t1 = median
            row = BenchRow.measured(mode, n, median, t1, statistics.median(idle_max), statistics.median(idle_mean))
            report.rows.append(row)
            logger.info(f"[*] {mode} n={n}: {median:.3f} 秒，S={row.speedup:.3f}，E={row.efficiency:.3f}")
    return report
