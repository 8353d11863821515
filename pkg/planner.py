"""
运行时规划模块
探索者/边缘服务器划分、网格与三叉树拓扑跳数估计、消息传递时间查表
"""
import math
import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from tabulate import tabulate

logger = logging.getLogger(__name__)

# 实测消息传递时间（秒），行：跳数，列：消息长度（字节）
MESSAGE_LENGTHS = np.array([256.0, 1024.0, 4096.0, 16384.0])
MESSAGE_HOPS = np.array([1.0, 2.0, 3.0, 7.0, 15.0, 31.0])
MESSAGE_TIMES = np.array([
    [0.015, 0.016, 0.023, 0.096],
    [0.016, 0.020, 0.035, 0.129],
    [0.017, 0.022, 0.044, 0.125],
    [0.021, 0.032, 0.081, 0.165],
    [0.030, 0.057, 0.160, 0.241],
    [0.051, 0.105, 0.328, 0.409],
])


@dataclass(frozen=True)
class RuntimePlan:
    """
    工作者划分

    d_m 是每个服务器的数据份额上限，按最近整数个服务器均分 |D| − d_e；
    服务器数 m 向上取整并受 W′ − 1 限制，份数不超过 m，
    所以 (m − 1)·d_m ≤ |D| − d_e ≤ m·d_m。
    """
    n: int
    m: int
    d_total: float
    d_e: float
    d_m: float
    alpha: float
    variables: int
    w_prime: int
    memory_mb: Optional[float]
    n_raw: float
    m_raw: float
    d_m_balanced: float

    @property
    def server_share(self) -> float:
        """m 个服务器实际均分后每个服务器的数据量"""
        return (self.d_total - self.d_e) / self.m if self.m else 0.0


def plan_partition(d_total: float, variables: int, w_prime: int, alpha: float, d_e: float,
                   memory_mb: Optional[float] = None) -> RuntimePlan:
    """
    由 n·k_d·|D_m| = k_g·N + k_d·|D_e| 与 |D| = m·|D_m| + |D_e| 求 n、m、|D_m|

    Args:
        d_total: 数据集大小 |D|（MB）
        variables: 变量数 N
        w_prime: 除管理者外的工作者数 W′
        alpha: α = k_g / k_d
        d_e: 每个探索者的数据量（MB）
        memory_mb: 每个处理器可用于数据的内存上限 M_d（MB）

    Raises:
        ValueError: 输入不可行
    """
    if w_prime < 2:
        raise ValueError(f"W′ 至少为2: {w_prime}")
    if variables < 1:
        raise ValueError(f"变量数必须为正: {variables}")
    if alpha < 0 or d_total <= 0 or d_e <= 0:
        raise ValueError(f"α 不能为负且数据量必须为正: α={alpha}, |D|={d_total}, d_e={d_e}")
    if d_e > d_total:
        raise ValueError(f"探索者数据量 {d_e} MB 超过数据集大小 {d_total} MB")
    if memory_mb is not None and d_e > memory_mb:
        raise ValueError(f"探索者数据量 {d_e} MB 超过内存上限 {memory_mb} MB")

    denominator = alpha * variables + d_total
    n_raw = w_prime * (alpha * variables + d_e) / denominator
    m_raw = w_prime * (d_total - d_e) / denominator
    d_m_balanced = denominator / w_prime

    if d_total - d_e <= 0:
        m, d_m = 0, 0.0
    else:
        m = min(math.ceil(m_raw), w_prime - 1)
        shares = min(m, max(1, math.floor(m_raw + 0.5)))
        d_m = (d_total - d_e) / shares
        if memory_mb is not None and (d_total - d_e) / m > memory_mb:
            raise ValueError(f"{m} 个服务器无法在 {memory_mb} MB 内存内容纳 {d_total - d_e} MB 数据")
    n = w_prime - m
    plan = RuntimePlan(n, m, d_total, d_e, d_m, alpha, variables, w_prime, memory_mb,
                       n_raw, m_raw, d_m_balanced)
    logger.debug(f"划分结果: n={n}, m={m}, d_m={d_m:.4f} MB（未取整 n={n_raw:.3f}, m={m_raw:.3f}）")
    return plan


@dataclass(frozen=True)
class TopologyEstimate:
    processors: int
    mesh_rows: int
    mesh_cols: int
    d_max: int
    t_max: int

    @property
    def explorer_server_hops(self) -> int:
        return 2 * self.t_max


def topology_estimate(processors: int) -> TopologyEstimate:
    """
    二维网格最大跳数与三叉树最大跳数

    非平方数 W 取 ⌈√W⌉ × ⌈W/⌈√W⌉⌉ 网格，D_max = (行 − 1) + (列 − 1)；
    T_max = ⌈log3(2W+1)⌉ − 1，用整数运算避免浮点误差。
    """
    if processors < 1:
        raise ValueError(f"处理器数必须为正: {processors}")
    rows = math.isqrt(processors)
    if rows * rows < processors:
        rows += 1
    cols = -(-processors // rows)
    depth, reach = 0, 1
    while reach < 2 * processors + 1:
        depth += 1
        reach *= 3
    return TopologyEstimate(processors, rows, cols, (rows - 1) + (cols - 1), depth - 1)


def estimate_message_time(length: float, hops: float) -> float:
    """
    消息传递时间（秒）：先按长度、再按跳数线性插值，超出表格范围时取边界值

    Raises:
        ValueError: 长度不为正或跳数小于1
    """
    if length <= 0:
        raise ValueError(f"消息长度必须为正: {length}")
    if hops < 1:
        raise ValueError(f"跳数至少为1: {hops}")
    by_hops = np.array([np.interp(length, MESSAGE_LENGTHS, row) for row in MESSAGE_TIMES])
    return float(np.interp(hops, MESSAGE_HOPS, by_hops))


def plan_report(plan: RuntimePlan, topology: TopologyEstimate) -> str:
    """规划结果、拓扑跳数与各长度消息的估计时间"""
    lines = [
        f"n={plan.n} m={plan.m} d_m={plan.d_m:.3f}",
        "",
        tabulate([
            ["探索者 n", plan.n, f"{plan.n_raw:.3f}"],
            ["服务器 m", plan.m, f"{plan.m_raw:.3f}"],
            ["|D_e| (MB)", f"{plan.d_e:g}", ""],
            ["|D_m| (MB)", f"{plan.d_m:.4f}", f"均衡 {plan.d_m_balanced:.4f}"],
        ], headers=["参数", "取值", "未取整"]),
        "",
        f"W={topology.processors} D_max={topology.d_max} T_max={topology.t_max} "
        f"explorer-server={topology.explorer_server_hops}",
        "",
    ]
    rows: List[list] = []
    for length in MESSAGE_LENGTHS:
        row = [int(length)]
        for hops in (max(1, topology.t_max), max(1, topology.explorer_server_hops), max(1, topology.d_max)):
            row.append(f"{estimate_message_time(length, hops):.4f}")
        rows.append(row)
    lines.append(tabulate(rows, headers=["长度(字节)", "管理者-探索者", "探索者-服务器", "网格 D_max"]))
    return "\n".join(lines)
