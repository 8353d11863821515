"""
模型生成模块
PI模型（四变量PI模型、奇偶模型）、沿连接树组合的团模型、精确边缘、期望计数、采样与PI性质验证
"""
import math
import logging
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import networkx as nx

from discrete_data import FrequencyTable, Scheme, VariableRef, Variable, project

logger = logging.getLogger(__name__)

MODEL_MAGIC = "dmn-model v1"
SUM_TOLERANCE = 1e-9
CONSISTENCY_TOLERANCE = 1e-9
MAX_EXPECTED_STATES = 2 ** 22
EINSUM_LABELS = 52

# 四变量PI模型：(X1, X2, X3, X4) → 概率
TABLE1 = {
    (0, 0, 0, 0): 0.0225, (0, 0, 0, 1): 0.2025, (0, 0, 1, 0): 0.005, (0, 0, 1, 1): 0.02,
    (0, 1, 0, 0): 0.0175, (0, 1, 0, 1): 0.0075, (0, 1, 1, 0): 0.135, (0, 1, 1, 1): 0.09,
    (1, 0, 0, 0): 0.02, (1, 0, 0, 1): 0.18, (1, 0, 1, 0): 0.01, (1, 0, 1, 1): 0.04,
    (1, 1, 0, 0): 0.035, (1, 1, 0, 1): 0.015, (1, 1, 1, 0): 0.12, (1, 1, 1, 1): 0.08,
}

# 变量数与嵌入的奇偶子模型规模
PIM_LIKE = {
    "pim1": (26, (3,)),
    "pim2": (30, (3, 3)),
    "pim3": (35, (3, 3)),
    "pim4": (16, (4,)),
    "pim3-small": (9, (3,)),
}


class ModelError(ValueError):
    """模型不满足团模型约束"""


class ModelFormatError(ValueError):
    """模型文件格式错误"""


@dataclass(frozen=True, eq=False)
class Cluster:
    """团：成员变量下标与成员上的联合概率表（轴顺序同成员顺序）"""
    members: Tuple[int, ...]
    table: np.ndarray

    def marginal(self, variables: Sequence[int]) -> np.ndarray:
        """成员子集上的边缘，轴顺序同 variables"""
        axes = list(range(len(self.members)))
        return np.einsum(self.table, axes, [self.members.index(v) for v in variables])


@dataclass(frozen=True, eq=False)
class ClusterModel:
    """沿连接树链接的团表；联合分布 = Π 团表 / Π 分隔集表"""
    scheme: Scheme
    clusters: Tuple[Cluster, ...]
    edges: Tuple[Tuple[int, int], ...] = ()

    @property
    def tree(self) -> nx.Graph:
        tree = nx.Graph()
        tree.add_nodes_from(range(len(self.clusters)))
        tree.add_edges_from(self.edges)
        return tree

    def sepset(self, i: int, j: int) -> Tuple[int, ...]:
        """团 i 与团 j 的分隔集，按团 i 的成员顺序"""
        other = set(self.clusters[j].members)
        return tuple(v for v in self.clusters[i].members if v in other)


@dataclass(frozen=True)
class PairVerdict:
    independent: bool
    deviation: float


@dataclass(frozen=True)
class PiReport:
    """PI 验证结果：逐对独立性判定与集体相关性"""
    subset: Tuple[str, ...]
    pairwise: Dict[Tuple[str, str], PairVerdict]
    collective: bool
    tolerance: float

    @property
    def independent_pairs(self) -> List[Tuple[str, str]]:
        return [pair for pair, verdict in self.pairwise.items() if verdict.independent]

    @property
    def is_pi(self) -> bool:
        """集体相关且至少一对变量边缘独立"""
        return self.collective and bool(self.independent_pairs)


def make_rng(seed: int) -> np.random.Generator:
    """Philox 计数器型随机源"""
    return np.random.Generator(np.random.Philox(seed))


def compose_model(scheme: Scheme, clusters: Sequence[Tuple[Iterable[VariableRef], object]],
                  edges: Iterable[Tuple[int, int]] = ()) -> ClusterModel:
    """
    组合并校验团模型

    Args:
        scheme: 变量方案
        clusters: (成员, 概率表) 列表，概率表形状为成员基数
        edges: 团下标之间的树边

    Raises:
        ModelError: 概率表不合法、树有环、分隔集边缘不一致或不满足运行交性质
    """
    built = []
    for k, (members, table) in enumerate(clusters):
        members = scheme.resolve(members)
        if not members:
            raise ModelError(f"团 {k} 没有成员")
        table = np.asarray(table, dtype=np.float64)
        shape = tuple(scheme.cardinalities[v] for v in members)
        if table.shape != shape:
            raise ModelError(f"团 {k} 概率表形状 {table.shape} 与成员基数 {shape} 不符")
        if np.any(table < 0) or not np.all(np.isfinite(table)):
            raise ModelError(f"团 {k} 存在负概率或非有限值")
        if abs(float(table.sum()) - 1.0) > SUM_TOLERANCE:
            raise ModelError(f"团 {k} 概率和为 {table.sum():.12g}，不等于1")
        table = table.copy()
        table.setflags(write=False)
        built.append(Cluster(members, table))

    model = ClusterModel(scheme, tuple(built), tuple(sorted((min(i, j), max(i, j)) for i, j in edges)))
    _validate_tree(model)
    return model


def _validate_tree(model: ClusterModel):
    tree = model.tree
    for i, j in model.edges:
        if not (0 <= i < len(model.clusters) and 0 <= j < len(model.clusters)) or i == j:
            raise ModelError(f"树边 ({i}, {j}) 非法")
    if len(set(model.edges)) != len(model.edges) or not nx.is_forest(tree):
        raise ModelError("团之间的边必须构成森林")

    covered = set()
    for cluster in model.clusters:
        covered.update(cluster.members)
    missing = set(range(len(model.scheme))) - covered
    if missing:
        raise ModelError(f"变量未被任何团覆盖: {model.scheme.names_of(sorted(missing))}")

    for i, j in model.edges:
        shared = model.sepset(i, j)
        if not shared:
            raise ModelError(f"团 {i} 与团 {j} 的分隔集为空")
        deviation = np.max(np.abs(model.clusters[i].marginal(shared) - model.clusters[j].marginal(shared)))
        if deviation > CONSISTENCY_TOLERANCE:
            raise ModelError(f"团 {i} 与团 {j} 在分隔集 {model.scheme.names_of(shared)} 上的边缘相差 {deviation:.3g}")

    for v in range(len(model.scheme)):
        holders = [k for k, cluster in enumerate(model.clusters) if v in cluster.members]
        if not nx.is_connected(tree.subgraph(holders)):
            raise ModelError(f"包含 {model.scheme.names[v]} 的团在树上不连通，不满足运行交性质")


def table1_model() -> ClusterModel:
    """X1 与 X2、X3 各自边缘独立但三者集体相关的四变量PI模型"""
    table = np.zeros((2, 2, 2, 2))
    for config, p in TABLE1.items():
        table[config] = p
    return compose_model(Scheme.binary(4), [(range(4), table)])


def parity_table(k: int, epsilon: float) -> np.ndarray:
    """前 k−1 个变量独立均匀，最后一个等于它们的异或，以概率 ε 翻转"""
    grid = np.indices((2,) * k)
    parity = grid.sum(axis=0) % 2
    return np.where(parity == 0, 1.0 - epsilon, epsilon) / 2 ** (k - 1)


def chain_table(size: int, q: float) -> np.ndarray:
    """噪声复制链：首变量均匀，之后每个变量以概率 q 复制前一个"""
    grid = np.indices((2,) * size)
    same = grid[1:] == grid[:-1]
    return 0.5 * np.prod(np.where(same, q, 1.0 - q), axis=0)


def parity_model(k: int, epsilon: float) -> ClusterModel:
    """
    k 变量奇偶模型

    Raises:
        ValueError: k < 3 或 ε 不在 [0, 0.5)
    """
    if k < 3:
        raise ValueError(f"奇偶模型至少需要3个变量: {k}")
    if not 0 <= epsilon < 0.5:
        raise ValueError(f"ε 必须在 [0, 0.5) 内: {epsilon}")
    return compose_model(Scheme.binary(k), [(range(k), parity_table(k, epsilon))])


def chain_model(n_vars: int, parity_sizes: Sequence[int] = (3,), q: float = 0.9,
                epsilon: float = 0.05) -> ClusterModel:
    """
    相邻团共享一个变量的链式团模型，奇偶子模型嵌入在均匀间隔的位置

    Args:
        n_vars: 变量总数
        parity_sizes: 各奇偶子模型的变量数
        q: 链团中相邻变量相同的概率
        epsilon: 奇偶子模型噪声
    """
    if any(size < 3 for size in parity_sizes):
        raise ValueError(f"奇偶子模型至少3个变量: {list(parity_sizes)}")
    if not 0.5 < q <= 1.0:
        raise ValueError(f"q 必须在 (0.5, 1] 内: {q}")
    remaining = n_vars - 1 - sum(size - 1 for size in parity_sizes)
    if remaining < 0:
        raise ValueError(f"{n_vars} 个变量放不下奇偶子模型 {list(parity_sizes)}")
    chains, tail = divmod(remaining, 2)
    body = chains + len(parity_sizes)
    positions = {(t + 1) * body // (len(parity_sizes) + 1): size for t, size in enumerate(parity_sizes)}
    if len(positions) != len(parity_sizes):
        raise ValueError(f"{n_vars} 个变量不足以分隔 {len(parity_sizes)} 个奇偶子模型")

    sizes = [positions.get(j, 3) for j in range(body)] + ([2] if tail else [])
    clusters, start = [], 0
    for j, size in enumerate(sizes):
        members = range(start, start + size)
        table = parity_table(size, epsilon) if j in positions else chain_table(size, q)
        clusters.append((members, table))
        start += size - 1
    edges = [(j, j + 1) for j in range(len(clusters) - 1)]
    return compose_model(Scheme.binary(n_vars), clusters, edges)


def pim_like_model(name: str) -> ClusterModel:
    """变量数与嵌入奇偶子模型规模对应 pim1..pim4 的控制模型"""
    try:
        n_vars, parity_sizes = PIM_LIKE[name]
    except KeyError:
        raise ValueError(f"未知模型: {name}（可选 {', '.join(PIM_LIKE)}）") from None
    return chain_model(n_vars, parity_sizes)


def _conditional(cluster: Cluster, given: Sequence[int]) -> np.ndarray:
    """P(团 | 分隔集)，分隔集概率为0处取0"""
    axes = tuple(k for k, v in enumerate(cluster.members) if v not in given)
    denominator = cluster.table.sum(axis=axes, keepdims=True)
    return np.divide(cluster.table, denominator, out=np.zeros_like(cluster.table), where=denominator > 0)


def _rooted(model: ClusterModel, component: Iterable[int], root: int) -> Tuple[List[int], Dict[int, int]]:
    """从根出发按邻居升序的广度优先顺序与父节点"""
    tree = model.tree.subgraph(component)
    order, parent = [root], {}
    for u, v in nx.bfs_edges(tree, root, sort_neighbors=sorted):
        order.append(v)
        parent[v] = u
    return order, parent


def _elimination_factors(model: ClusterModel, targets: set) -> List[Tuple[Tuple[int, ...], np.ndarray]]:
    """剪掉不含目标变量的叶子团后剩余的 (变量, 因子)"""
    factors = []
    for component in sorted(nx.connected_components(model.tree), key=min):
        nodes = sorted(component)
        root = next((c for c in nodes if targets & set(model.clusters[c].members)), None)
        if root is None:
            continue
        order, parent = _rooted(model, nodes, root)
        kept = set(order)
        for c in reversed(order):
            if c == root:
                continue
            has_child = any(parent.get(d) == c for d in kept)
            private = set(model.clusters[c].members) - set(model.sepset(c, parent[c]))
            if not has_child and not private & targets:
                kept.remove(c)
        for c in order:
            if c not in kept:
                continue
            cluster = model.clusters[c]
            if c == root:
                factors.append((cluster.members, cluster.table))
            else:
                factors.append((cluster.members, _conditional(cluster, model.sepset(c, parent[c]))))
    return factors


def exact_marginal(model: ClusterModel, subset: Iterable[VariableRef]) -> np.ndarray:
    """
    模型联合分布在子集上的精确边缘（轴顺序同 subset）

    子集落在单个团内时直接对团表求和，否则沿团树消元。
    """
    indices = model.scheme.resolve(subset)
    if not indices:
        return np.array(1.0)
    for cluster in model.clusters:
        if set(indices) <= set(cluster.members):
            return cluster.marginal(indices)
    factors = _elimination_factors(model, set(indices))
    variables = sorted({v for members, _ in factors for v in members})
    if len(variables) > EINSUM_LABELS:
        raise ValueError(f"消元涉及 {len(variables)} 个变量，超过 {EINSUM_LABELS}")
    label = {v: k for k, v in enumerate(variables)}
    operands = []
    for members, factor in factors:
        operands += [factor, [label[v] for v in members]]
    return np.einsum(*operands, [label[v] for v in indices], optimize=True)


def expected_counts(model: ClusterModel, total: float) -> FrequencyTable:
    """
    每个联合配置的计数 = 概率 × total（按频数表的 1e-6 定点分辨率保存）
    """
    if not total > 0:
        raise ValueError(f"总数必须为正: {total}")
    cards = model.scheme.cardinalities
    if math.prod(cards) > MAX_EXPECTED_STATES:
        raise ValueError(f"状态空间 {math.prod(cards)} 超过 {MAX_EXPECTED_STATES}，请使用采样")
    joint = exact_marginal(model, range(len(cards)))
    configs = np.indices(cards).reshape(len(cards), -1).T
    return FrequencyTable(model.scheme, configs, joint.reshape(-1) * total)


def _draw_cluster(rng: np.random.Generator, cluster: Cluster, given: Tuple[int, ...], cases: np.ndarray):
    members = cluster.members
    given_axes = [members.index(v) for v in given]
    free_axes = [k for k in range(len(members)) if k not in given_axes]
    table = np.transpose(cluster.table, given_axes + free_axes)
    given_shape = table.shape[:len(given_axes)]
    free_shape = table.shape[len(given_axes):]
    rows = table.reshape(math.prod(given_shape), math.prod(free_shape))
    sums = rows.sum(axis=1, keepdims=True)
    cdf = np.cumsum(np.divide(rows, sums, out=np.zeros_like(rows), where=sums > 0), axis=1)
    cdf[:, -1] = 1.0

    u = rng.random(len(cases))
    if given_axes:
        row_index = np.ravel_multi_index(tuple(cases[:, v] for v in given), given_shape)
    else:
        row_index = np.zeros(len(cases), dtype=np.int64)
    picks = np.zeros(len(cases), dtype=np.int64)
    for r in np.unique(row_index):
        mask = row_index == r
        picks[mask] = np.searchsorted(cdf[r], u[mask], side="right")
    picks = np.minimum(picks, rows.shape[1] - 1)
    for axis, values in zip(free_axes, np.unravel_index(picks, free_shape)):
        cases[:, members[axis]] = values


def sample(model: ClusterModel, count: int, seed: int) -> FrequencyTable:
    """
    沿团树前向采样：根团联合分布，之后按分隔集条件采样各团

    Args:
        model: 团模型
        count: 样本数
        seed: 随机种子
    """
    if count < 1:
        raise ValueError(f"样本数必须为正: {count}")
    rng = make_rng(seed)
    cases = np.zeros((count, len(model.scheme)), dtype=np.int64)
    for component in sorted(nx.connected_components(model.tree), key=min):
        order, parent = _rooted(model, component, min(component))
        for c in order:
            given = model.sepset(c, parent[c]) if c in parent else ()
            _draw_cluster(rng, model.clusters[c], given, cases)
    return FrequencyTable.from_cases(model.scheme, cases)


def _empirical_joint(table: FrequencyTable, indices: Tuple[int, ...]) -> np.ndarray:
    marginal = project(table, indices)
    if marginal.total <= 0:
        raise ValueError("频数表总数为0")
    joint = np.zeros(tuple(table.scheme.cardinalities[v] for v in indices))
    for config, count in zip(marginal.configs, marginal.values):
        joint[tuple(config)] = count / marginal.total
    return joint


def _collectively_dependent(joint: np.ndarray, x: int, tolerance: float) -> bool:
    """x 在给定其余全部变量时的条件分布，与给定任一真子集时都相差超过容差"""
    others = [a for a in range(joint.ndim) if a != x]
    rest = joint.sum(axis=x, keepdims=True)
    full = np.divide(joint, rest, out=np.zeros_like(joint), where=rest > 0)
    support = np.broadcast_to(rest > 0, joint.shape)
    for size in range(len(others)):
        for kept in combinations(others, size):
            dropped = tuple(a for a in others if a not in kept)
            with_x = joint.sum(axis=dropped, keepdims=True)
            given = with_x.sum(axis=x, keepdims=True)
            partial = np.divide(with_x, given, out=np.zeros_like(with_x), where=given > 0)
            deviation = np.max(np.abs(full - partial)[support])
            if deviation <= tolerance:
                return False
    return True


def verify_pi(model: Union[ClusterModel, FrequencyTable], subset: Iterable[VariableRef],
              tol: Optional[float] = None) -> PiReport:
    """
    检验子集的逐对独立性与集体相关性

    Args:
        model: 团模型（精确边缘）或经验频数表
        subset: 至少3个变量
        tol: 容差；精确模型默认 1e-9，经验频数表必须显式给出

    Raises:
        ValueError: 子集不足3个变量、变量未知或经验表缺少容差
    """
    scheme = model.scheme
    indices = scheme.resolve(subset)
    if len(indices) < 3:
        raise ValueError(f"PI 验证至少需要3个变量: {scheme.names_of(indices)}")
    if isinstance(model, FrequencyTable):
        if tol is None:
            raise ValueError("经验频数表必须显式给出容差")
        joint = _empirical_joint(model, indices)
    else:
        tol = 1e-9 if tol is None else tol
        joint = exact_marginal(model, indices)

    names = scheme.names_of(indices)
    pairwise = {}
    axes = list(range(len(indices)))
    for a, b in combinations(axes, 2):
        pair = np.einsum(joint, axes, [a, b])
        product = np.outer(pair.sum(axis=1), pair.sum(axis=0))
        deviation = float(np.max(np.abs(pair - product)))
        pairwise[(names[a], names[b])] = PairVerdict(deviation <= tol, deviation)
    collective = any(_collectively_dependent(joint, x, tol) for x in axes)
    return PiReport(names, pairwise, collective, tol)


def write_model(model: ClusterModel, path: Union[str, Path]):
    lines = [MODEL_MAGIC, f"vars {len(model.scheme)}"]
    lines += [f"{v.name} {v.cardinality}" for v in model.scheme]
    lines.append(f"clusters {len(model.clusters)}")
    for cluster in model.clusters:
        lines.append("cluster " + " ".join(model.scheme.names_of(cluster.members)))
        nonzero = [(config, p) for config, p in np.ndenumerate(cluster.table) if p > 0]
        lines.append(f"rows {len(nonzero)}")
        lines += [" ".join(str(v) for v in config) + f" {float(p)!r}" for config, p in nonzero]
    lines.append(f"edges {len(model.edges)}")
    lines += [f"{i} {j}" for i, j in model.edges]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_model(path: Union[str, Path]) -> ClusterModel:
    """
    读取模型文件

    Raises:
        ModelFormatError: 格式错误
        ModelError: 内容不满足团模型约束
    """
    path = Path(path)
    lines = [(number, line.split('#', 1)[0].strip())
             for number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1)]
    lines = iter([(number, line) for number, line in lines if line])

    def take(keyword: Optional[str] = None) -> Tuple[int, List[str]]:
        try:
            number, line = next(lines)
        except StopIteration:
            raise ModelFormatError(f"{path}: 文件提前结束" + (f"，缺少 {keyword!r}" if keyword else "")) from None
        fields = line.split()
        if keyword is not None and fields[0] != keyword:
            raise ModelFormatError(f"{path}:{number} 期望 {keyword!r}，实际为 {line!r}")
        return number, fields

    number = 0
    try:
        number, fields = take()
        if " ".join(fields) != MODEL_MAGIC:
            raise ModelFormatError(f"{path}:{number} 缺少文件头 {MODEL_MAGIC!r}")
        number, fields = take("vars")
        variables = []
        for _ in range(int(fields[1])):
            number, fields = take()
            variables.append(Variable(fields[0], int(fields[1])))
        scheme = Scheme(variables)

        number, fields = take("clusters")
        clusters = []
        for _ in range(int(fields[1])):
            number, fields = take("cluster")
            members = scheme.resolve(fields[1:])
            table = np.zeros(tuple(scheme.cardinalities[v] for v in members))
            number, fields = take("rows")
            seen = set()
            for _ in range(int(fields[1])):
                number, fields = take()
                if len(fields) != len(members) + 1:
                    raise ModelFormatError(f"{path}:{number} 期望 {len(members) + 1} 个字段")
                index = tuple(int(v) for v in fields[:-1])
                if any(v < 0 for v in index):
                    raise ModelFormatError(f"{path}:{number} 取值下标为负: {index}")
                if index in seen:
                    raise ModelFormatError(f"{path}:{number} 配置重复: {index}")
                seen.add(index)
                table[index] = float(fields[-1])
            clusters.append((members, table))

        number, fields = take("edges")
        edges = []
        for _ in range(int(fields[1])):
            number, fields = take()
            edges.append((int(fields[0]), int(fields[1])))
    except (ModelFormatError, ModelError):
        raise
    except (IndexError, ValueError) as exc:
        raise ModelFormatError(f"{path}:{number} 模型格式错误: {exc}") from exc
    if next(lines, None) is not None:
        raise ModelFormatError(f"{path}: 文件末尾有多余内容")
    return compose_model(scheme, clusters, edges)
