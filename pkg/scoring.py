"""
评分模块
弦结构的模型熵与熵减量 dh，局部增量计算与全局重算等价
"""
import math
import logging
from collections import Counter, OrderedDict
from dataclasses import dataclass
from typing import Dict, Iterable, Optional, Protocol, Sequence, Tuple, Union

from discrete_data import FrequencyTable, MarginalTable, Scheme, entropy, project
from chordal import (
    Clique, Edge, Graph, JunctionForest, chordal_structure, implied_by_single_clique, normalize_edge,
)

logger = logging.getLogger(__name__)


class MarginalSource(Protocol):
    """边缘计数来源：本地投影或边缘服务器流水线"""
    scheme: Scheme

    def marginal(self, subset: Sequence[int]) -> MarginalTable:
        """
        按变量子集返回边缘计数

        Args:
            subset: 有序变量下标

        Returns:
            与整个数据集投影逐位相同的边缘表
        """
        pass


class LocalMarginals:
    """直接投影本地频数表"""

    def __init__(self, table: FrequencyTable):
        self.table = table
        self.scheme = table.scheme

    def marginal(self, subset: Sequence[int]) -> MarginalTable:
        return project(self.table, subset)


class EntropyScorer:
    """
    带LRU缓存的子集熵计算器

    每个探索者持有一个实例；同一子集的熵只向边缘来源请求一次，
    超过 cache_size 时淘汰最久未使用的条目（0表示不限）。
    """

    def __init__(self, source: MarginalSource, cache_size: int = 4096):
        if cache_size < 0:
            raise ValueError(f"缓存大小不能为负: {cache_size}")
        self.source = source
        self.scheme = source.scheme
        self.cache_size = cache_size
        self._cache: "OrderedDict[Tuple[int, ...], float]" = OrderedDict()
        self.hits = 0
        self.misses = 0

    def entropy_of(self, subset: Iterable[int]) -> float:
        key = tuple(sorted(subset))
        if key in self._cache:
            self._cache.move_to_end(key)
            self.hits += 1
            return self._cache[key]
        self.misses += 1
        value = entropy(self.source.marginal(key))
        self._cache[key] = value
        if self.cache_size and len(self._cache) > self.cache_size:
            self._cache.popitem(last=False)
        return value

    def get_stats(self) -> Dict[str, int]:
        return {"hits": self.hits, "misses": self.misses, "entries": len(self._cache)}


ScoreData = Union[FrequencyTable, EntropyScorer]


def as_scorer(data: ScoreData, cache_size: int = 0) -> EntropyScorer:
    if isinstance(data, EntropyScorer):
        return data
    if isinstance(data, FrequencyTable):
        return EntropyScorer(LocalMarginals(data), cache_size)
    raise TypeError(f"不支持的数据类型: {type(data).__name__}")


@dataclass(frozen=True)
class Threshold:
    """熵减阈值 δh（比特/样本）"""
    delta_h: float

    def __post_init__(self):
        if not self.delta_h >= 0:
            raise ValueError(f"阈值必须非负: {self.delta_h}")


@dataclass(frozen=True)
class ScoredStructure:
    graph: Graph
    forest: JunctionForest
    h: float


def _require_structure(g: Graph) -> Tuple[Sequence[Clique], JunctionForest]:
    structure = chordal_structure(g)
    if structure is None:
        raise ValueError(f"图不是弦图: {g.sorted_edges()}")
    return structure


def forest_entropy(forest: JunctionForest, data: ScoreData) -> float:
    """Σ Ĥ(团) − Σ Ĥ(分隔集)"""
    scorer = as_scorer(data)
    cliques, sepsets = forest.terms()
    signed = [scorer.entropy_of(c) for c in cliques] + [-scorer.entropy_of(s) for s in sepsets]
    return math.fsum(signed)


def score_structure(g: Graph, data: ScoreData) -> ScoredStructure:
    _, forest = _require_structure(g)
    return ScoredStructure(g, forest, forest_entropy(forest, data))


def model_entropy(g: Graph, data: ScoreData) -> float:
    """
    弦图在数据上的模型熵

    Raises:
        ValueError: 非弦图
    """
    return score_structure(g, data).h


def entropy_decrement_global(g: Graph, g_prime: Graph, data: ScoreData) -> float:
    """全局重算的熵减量 h(g) − h(g')"""
    if g.n != g_prime.n or not g.edges <= g_prime.edges:
        raise ValueError("g' 的边集必须包含 g 的边集")
    scorer = as_scorer(data)
    return model_entropy(g, scorer) - model_entropy(g_prime, scorer)


def decrement_terms(old: Tuple[Sequence[Clique], Sequence[Clique]],
                    new: Tuple[Sequence[Clique], Sequence[Clique]]) -> Dict[Clique, int]:
    """
    两组熵项的带符号多重集差

    Args:
        old: 原森林的 (团, 分隔集)
        new: 新森林的 (团, 分隔集)

    Returns:
        {项: 系数}，dh = Σ 系数·Ĥ(项)，只保留非零系数
    """
    diff: Counter = Counter()
    for clique in old[0]:
        diff[clique] += 1
    for sepset in old[1]:
        diff[sepset] -= 1
    for clique in new[0]:
        diff[clique] -= 1
    for sepset in new[1]:
        diff[sepset] += 1
    return {term: coef for term, coef in sorted(diff.items(), key=lambda kv: tuple(sorted(kv[0])))
            if coef}


def local_decrement(scorer: EntropyScorer, terms: Dict[Clique, int]) -> float:
    return math.fsum(coef * scorer.entropy_of(term) for term, coef in terms.items())


def region_decrement(scorer: EntropyScorer, forest: JunctionForest, region: Iterable[int],
                     forest_star: JunctionForest) -> float:
    """只用链接所在连通区域内的团与分隔集计算熵减量"""
    return local_decrement(scorer, decrement_terms(forest.terms(region), forest_star.terms()))


def entropy_decrement_local(g: Graph, forest: JunctionForest, links: Iterable[Edge], data: ScoreData,
                            eta: Optional[int] = None) -> float:
    """
    局部计算的熵减量，与 entropy_decrement_global(g, g ∪ L) 等价

    Raises:
        ValueError: 链接与已有边相交、g ∪ L 非弦图，或给定 eta 时 L 不被单团蕴含
    """
    links = tuple(sorted(normalize_edge(u, v) for u, v in links))
    if not links:
        raise ValueError("链接集合为空")
    if any(link in g.edges for link in links):
        raise ValueError(f"链接与已有边相交: {links}")
    g_star = g.with_links(links)
    region = g.region(u for link in links for u in link)
    structure = chordal_structure(g_star, region)
    if structure is None:
        raise ValueError(f"加入 {links} 后不是弦图")
    cliques_star, forest_star = structure
    if eta is not None and implied_by_single_clique(g_star, links, eta, cliques_star) is None:
        raise ValueError(f"{links} 不被规模不超过 {eta} 的单个团蕴含")
    return region_decrement(as_scorer(data), forest, region, forest_star)


def is_significant(dh: float, threshold: Union[Threshold, float]) -> bool:
    """严格大于阈值才显著"""
    delta_h = threshold.delta_h if isinstance(threshold, Threshold) else threshold
    return dh > delta_h
