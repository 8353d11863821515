"""
弦图模块
无向图结构、弦图识别、极大团枚举、连接森林构造以及单团蕴含检验
"""
import logging
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple, Union

import networkx as nx
from networkx.utils import UnionFind

logger = logging.getLogger(__name__)

GRAPH_MAGIC = "dmn-graph v1"
ORACLE_MAX_NODES = 10

Edge = Tuple[int, int]
Clique = FrozenSet[int]


class GraphFormatError(ValueError):
    """图文件格式错误"""


def normalize_edge(u: int, v: int) -> Edge:
    u, v = int(u), int(v)
    if u == v:
        raise ValueError(f"不允许自环: ({u}, {v})")
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True)
class Graph:
    """节点为 0..n-1 的无向简单图，节点顺序与变量方案对齐"""
    n: int
    edges: FrozenSet[Edge] = field(default_factory=frozenset)

    def __post_init__(self):
        if self.n < 0:
            raise ValueError(f"节点数为负: {self.n}")
        edges = frozenset(normalize_edge(u, v) for u, v in self.edges)
        for u, v in edges:
            if v >= self.n or u < 0:
                raise ValueError(f"边 ({u}, {v}) 超出节点范围 0..{self.n - 1}")
        object.__setattr__(self, "edges", edges)

    @classmethod
    def empty(cls, n: int) -> "Graph":
        return cls(n)

    @classmethod
    def complete(cls, n: int) -> "Graph":
        return cls(n, frozenset(combinations(range(n), 2)))

    @cached_property
    def adjacency(self) -> Tuple[FrozenSet[int], ...]:
        neighbors: List[set] = [set() for _ in range(self.n)]
        for u, v in self.edges:
            neighbors[u].add(v)
            neighbors[v].add(u)
        return tuple(frozenset(s) for s in neighbors)

    def to_networkx(self) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(range(self.n))
        graph.add_edges_from(self.edges)
        return graph

    @cached_property
    def components(self) -> Tuple[int, ...]:
        """每个节点所在连通分量的标签（分量内最小节点）"""
        label = [0] * self.n
        for component in nx.connected_components(self.to_networkx()):
            smallest = min(component)
            for v in component:
                label[v] = smallest
        return tuple(label)

    def neighbors(self, v: int) -> FrozenSet[int]:
        return self.adjacency[v]

    def has_edge(self, u: int, v: int) -> bool:
        return normalize_edge(u, v) in self.edges

    def sorted_edges(self) -> List[Edge]:
        return sorted(self.edges)

    def non_edges(self) -> List[Edge]:
        """按字典序列出所有非边"""
        return [pair for pair in combinations(range(self.n), 2) if pair not in self.edges]

    def with_links(self, links: Iterable[Edge]) -> "Graph":
        return Graph(self.n, self.edges | frozenset(normalize_edge(u, v) for u, v in links))

    def region(self, nodes: Iterable[int]) -> Tuple[int, ...]:
        """给定节点所在连通分量的并集"""
        labels = {self.components[v] for v in nodes}
        return tuple(v for v in range(self.n) if self.components[v] in labels)


def _elimination_order(g: Graph, nodes: Sequence[int]) -> List[int]:
    """最大基数搜索，同权重取最小下标；返回访问顺序的逆序"""
    remaining = set(nodes)
    weight = dict.fromkeys(nodes, 0)
    visit = []
    while remaining:
        v = min(remaining, key=lambda u: (-weight[u], u))
        remaining.remove(v)
        visit.append(v)
        for w in g.adjacency[v]:
            if w in remaining:
                weight[w] += 1
    visit.reverse()
    return visit


def _later_neighbors(g: Graph, order: Sequence[int]) -> Dict[int, List[int]]:
    position = {v: k for k, v in enumerate(order)}
    if len(position) != len(order):
        raise ValueError("消去序中存在重复节点")
    later = {}
    for v in order:
        if not 0 <= v < g.n:
            raise ValueError(f"消去序中的节点越界: {v}")
        outside = [w for w in g.adjacency[v] if w not in position]
        if outside:
            raise ValueError(f"消去序未覆盖节点 {v} 的邻居 {sorted(outside)}")
        later[v] = sorted((w for w in g.adjacency[v] if position[w] > position[v]),
                          key=position.__getitem__)
    return later


def _is_perfect(g: Graph, later: Dict[int, List[int]]) -> bool:
    for v, after in later.items():
        if len(after) < 2:
            continue
        parent = after[0]
        if not set(after[1:]) <= g.adjacency[parent]:
            return False
    return True


def is_chordal(g: Graph, nodes: Optional[Iterable[int]] = None) -> Tuple[bool, Optional[List[int]]]:
    """
    弦图识别

    Args:
        g: 图
        nodes: 只检查这些节点（须为若干完整连通分量的并集），默认全部节点

    Returns:
        (是否弦图, 完美消去序或None)
    """
    nodes = list(range(g.n)) if nodes is None else list(nodes)
    order = _elimination_order(g, nodes)
    if _is_perfect(g, _later_neighbors(g, order)):
        return True, order
    return False, None


def oracle_is_chordal(g: Graph) -> bool:
    """穷举所有长度不小于4的简单环并检查弦，仅用于小图"""
    if g.n > ORACLE_MAX_NODES:
        raise ValueError(f"穷举检验最多支持 {ORACLE_MAX_NODES} 个节点，实际 {g.n}")
    for cycle in nx.simple_cycles(g.to_networkx()):
        k = len(cycle)
        if k < 4:
            continue
        chorded = any(g.has_edge(cycle[i], cycle[j])
                      for i, j in combinations(range(k), 2)
                      if (j - i) % k not in (1, k - 1))
        if not chorded:
            return False
    return True


def maximal_cliques(g: Graph, order: Sequence[int]) -> List[Clique]:
    """
    由完美消去序枚举极大团

    Raises:
        ValueError: order 不是完美消去序
    """
    later = _later_neighbors(g, order)
    if not _is_perfect(g, later):
        raise ValueError("给定顺序不是完美消去序")
    candidates = {frozenset([v, *after]) for v, after in later.items()}
    cliques = [c for c in candidates if not any(c < other for other in candidates)]
    return sorted(cliques, key=lambda c: tuple(sorted(c)))


@dataclass(frozen=True)
class JunctionForest:
    """连接森林：极大团、团间树边及对应的分隔集"""
    cliques: Tuple[Clique, ...]
    edges: Tuple[Edge, ...]
    sepsets: Tuple[Clique, ...]

    @cached_property
    def graph(self) -> nx.Graph:
        forest = nx.Graph()
        forest.add_nodes_from(range(len(self.cliques)))
        forest.add_edges_from(self.edges)
        return forest

    @property
    def trees(self) -> List[Tuple[int, ...]]:
        return sorted(tuple(sorted(c)) for c in nx.connected_components(self.graph))

    def path(self, i: int, j: int) -> List[int]:
        """团 i 到团 j 的树上路径"""
        try:
            return nx.shortest_path(self.graph, i, j)
        except nx.NetworkXNoPath:
            raise ValueError(f"团 {i} 与团 {j} 不在同一棵树上") from None

    def satisfies_rip(self) -> bool:
        """检查运行交性质：同一树上两团之交包含于路径上每个团"""
        if any(not s for s in self.sepsets):
            return False
        for tree in self.trees:
            for i, j in combinations(tree, 2):
                shared = self.cliques[i] & self.cliques[j]
                if shared and not all(shared <= self.cliques[k] for k in self.path(i, j)):
                    return False
        return True

    def terms(self, nodes: Optional[Iterable[int]] = None) -> Tuple[Tuple[Clique, ...], Tuple[Clique, ...]]:
        """
        熵项：(团, 分隔集)

        Args:
            nodes: 只保留包含于这些节点的团及其树边
        """
        if nodes is None:
            return self.cliques, self.sepsets
        keep = frozenset(nodes)
        inside = {i for i, c in enumerate(self.cliques) if c <= keep}
        cliques = tuple(self.cliques[i] for i in sorted(inside))
        sepsets = tuple(s for (i, j), s in zip(self.edges, self.sepsets) if i in inside and j in inside)
        return cliques, sepsets


def junction_forest(cliques: Sequence[Iterable[int]], reverse_ties: bool = False) -> JunctionForest:
    """
    以交集大小为权的最大生成森林

    Args:
        cliques: 弦图的极大团
        reverse_ties: 同权边按较大团下标优先（用于验证分隔集多重集不变）

    Raises:
        ValueError: 团集合无法满足运行交性质
    """
    cliques = tuple(frozenset(c) for c in cliques)
    if any(not c for c in cliques):
        raise ValueError("团不能为空")
    pairs = []
    for i, j in combinations(range(len(cliques)), 2):
        weight = len(cliques[i] & cliques[j])
        if weight:
            pairs.append((weight, i, j))
    if reverse_ties:
        pairs.sort(key=lambda p: (-p[0], -p[1], -p[2]))
    else:
        pairs.sort(key=lambda p: (-p[0], p[1], p[2]))

    components = UnionFind(range(len(cliques)))
    edges, sepsets = [], []
    for _, i, j in pairs:
        if components[i] != components[j]:
            components.union(i, j)
            edges.append((i, j))
            sepsets.append(cliques[i] & cliques[j])
    forest = JunctionForest(cliques, tuple(edges), tuple(sepsets))
    if not forest.satisfies_rip():
        raise ValueError("团集合不满足运行交性质")
    return forest


def chordal_structure(g: Graph, nodes: Optional[Iterable[int]] = None) -> Optional[Tuple[List[Clique], JunctionForest]]:
    """弦图的 (极大团, 连接森林)；非弦图返回None"""
    chordal, order = is_chordal(g, nodes)
    if not chordal:
        return None
    cliques = maximal_cliques(g, order)
    return cliques, junction_forest(cliques)


def implied_by_single_clique(g_star: Graph, links: Iterable[Edge], eta: int,
                             cliques: Optional[Sequence[Clique]] = None) -> Optional[Clique]:
    """
    查找包含全部新链接端点、规模不超过 eta 的极大团

    Args:
        g_star: 加入链接后的弦图
        links: 链接集合
        eta: 团规模上限
        cliques: 已知的 g_star 极大团（可只含链接所在区域）

    Returns:
        按确定性团顺序的第一个满足条件的团，没有则返回None
    """
    endpoints = frozenset(u for link in links for u in link)
    if len(endpoints) > eta:
        return None
    if cliques is None:
        structure = chordal_structure(g_star, g_star.region(endpoints))
        if structure is None:
            raise ValueError("g_star 不是弦图")
        cliques = structure[0]
    for clique in cliques:
        if endpoints <= clique and len(clique) <= eta:
            return clique
    return None


def format_graph(g: Graph) -> str:
    lines = [GRAPH_MAGIC, f"nodes {g.n}"]
    lines += [f"{u} {v}" for u, v in g.sorted_edges()]
    return "\n".join(lines) + "\n"


def parse_graph(text: str, source: str = "<string>") -> Graph:
    """
    解析图文本格式

    Raises:
        GraphFormatError: 格式错误
    """
    lines = [(number, line.strip()) for number, line in enumerate(text.splitlines(), start=1)
             if line.strip()]
    if not lines or lines[0][1] != GRAPH_MAGIC:
        raise GraphFormatError(f"{source}: 缺少文件头 {GRAPH_MAGIC!r}")
    number = lines[0][0]
    try:
        number, line = lines[1]
        keyword, count = line.split()
        if keyword != "nodes":
            raise GraphFormatError(f"{source}:{number} 期望 'nodes n'，实际为 {line!r}")
        edges = []
        for number, line in lines[2:]:
            u, v = line.split()
            edges.append(normalize_edge(int(u), int(v)))
        if len(set(edges)) != len(edges):
            raise GraphFormatError(f"{source}: 存在重复边")
        return Graph(int(count), frozenset(edges))
    except GraphFormatError:
        raise
    except (IndexError, ValueError) as exc:
        raise GraphFormatError(f"{source}:{number} 图格式错误: {exc}") from exc


def write_graph(g: Graph, path: Union[str, Path]):
    Path(path).write_text(format_graph(g), encoding="utf-8")


def read_graph(path: Union[str, Path]) -> Graph:
    path = Path(path)
    return parse_graph(path.read_text(encoding="utf-8"), str(path))
