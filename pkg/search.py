"""
多链接前瞻搜索模块
按前瞻层次 i = 1..κ 逐轮加入 i 条链接，每轮选取熵减量最大的合法候选
"""
import logging
import math
from dataclasses import dataclass, field
from itertools import combinations, islice
from pathlib import Path
from typing import Any, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

from config import Config
from discrete_data import FrequencyTable, Scheme
from chordal import (
    Clique, Edge, Graph, JunctionForest, chordal_structure, format_graph, implied_by_single_clique,
)
from scoring import (
    EntropyScorer, Threshold, as_scorer, entropy_decrement_global, is_significant, region_decrement,
)

logger = logging.getLogger(__name__)

LinkSet = Tuple[Edge, ...]

# 比较 dh 时的量化步长（比特），差异小于一步的候选按枚举序号决胜
DH_RESOLUTION = 1e-9


@dataclass(frozen=True)
class SearchConfig:
    """搜索参数：最大团规模 η、最大前瞻链接数 κ、阈值 δh、每轮候选上限"""
    eta: int = 3
    kappa: int = 1
    delta_h: float = 0.003
    max_candidates: Optional[int] = None

    def __post_init__(self):
        if self.eta < 2:
            raise ValueError(f"η 必须不小于2: {self.eta}")
        if not 1 <= self.kappa <= self.eta * (self.eta - 1) // 2:
            raise ValueError(f"κ 必须在 1..η(η−1)/2 = {self.eta * (self.eta - 1) // 2} 之间: {self.kappa}")
        if not self.delta_h >= 0:
            raise ValueError(f"δh 必须非负: {self.delta_h}")
        if self.max_candidates is not None and self.max_candidates < 1:
            raise ValueError(f"候选上限必须为正: {self.max_candidates}")

    @property
    def threshold(self) -> Threshold:
        return Threshold(self.delta_h)

    @classmethod
    def from_config(cls, config: Union[Config, dict]) -> "SearchConfig":
        section = config.get("search", {}) if isinstance(config, Config) else config.get("search", config)
        return cls(
            eta=int(section.get("eta", 3)),
            kappa=int(section.get("kappa", 1)),
            delta_h=float(section.get("delta_h", 0.003)),
            max_candidates=section.get("max_candidates"),
        )


@dataclass(frozen=True)
class CandidateMove:
    """候选：i 条链接、合法性、熵减量（仅合法时有）与枚举序号"""
    links: LinkSet
    index: int
    valid: bool
    dh: Optional[float] = None

    def __post_init__(self):
        if self.valid != (self.dh is not None):
            raise ValueError("熵减量只在候选合法时存在")


@dataclass(frozen=True)
class CandidateStructure:
    """通过第一阶段检验的候选：G*、链接所在区域的团与森林、见证团"""
    graph: Graph
    region: Tuple[int, ...]
    cliques: Tuple[Clique, ...]
    forest: JunctionForest
    witness: Clique


@dataclass(frozen=True)
class PassOutcome:
    """执行器返回的一轮结果（尚未做显著性判断）"""
    best: Optional[CandidateMove]
    generated: int
    valid: int


@dataclass(frozen=True)
class PassRecord:
    level: int
    links: LinkSet
    dh: Optional[float]
    generated: int
    valid: int
    adopted: bool


@dataclass
class SearchTrace:
    """搜索轨迹：每轮记录与最终图"""
    records: List[PassRecord] = field(default_factory=list)
    graph: Optional[Graph] = None

    @property
    def adopted(self) -> List[PassRecord]:
        return [r for r in self.records if r.adopted]


def enumerate_candidates(g: Graph, level: int) -> Iterator[LinkSet]:
    """按排序链接对的字典序枚举所有 i 条非边组成的集合"""
    if level < 1:
        raise ValueError(f"层次必须不小于1: {level}")
    return combinations(g.non_edges(), level)


def count_candidates(g: Graph, level: int) -> int:
    return math.comb(len(g.non_edges()), level)


def pass_size(g: Graph, level: int, config: SearchConfig) -> int:
    """本轮实际考察的候选数（受候选上限约束）"""
    total = count_candidates(g, level)
    if config.max_candidates is not None and total > config.max_candidates:
        logger.warning(f"层次 {level} 共 {total} 个候选，仅考察前 {config.max_candidates} 个")
        return config.max_candidates
    return total


def candidate_slice(g: Graph, level: int, start: int, stop: int) -> Iterator[Tuple[int, LinkSet]]:
    """枚举序号在 [start, stop) 内的候选"""
    return enumerate(islice(enumerate_candidates(g, level), start, stop), start=start)


def candidates_at(g: Graph, level: int, indices: Iterable[int]) -> Iterator[Tuple[int, LinkSet]]:
    """按给定枚举序号取候选"""
    wanted = sorted(set(indices))
    if not wanted:
        return
    pending = iter(wanted)
    target = next(pending)
    for index, links in enumerate(enumerate_candidates(g, level)):
        if index == target:
            yield index, links
            target = next(pending, None)
            if target is None:
                return


def validate_candidate(g: Graph, links: LinkSet, eta: int) -> Optional[CandidateStructure]:
    """
    第一阶段检验：G* = (N, E ∪ L) 为弦图且 L 被规模不超过 η 的单个团蕴含

    端点数超过 η 的候选不可能被单团蕴含，直接判为不合法。
    """
    endpoints = {u for link in links for u in link}
    if len(endpoints) > eta:
        return None
    region = g.region(endpoints)
    g_star = g.with_links(links)
    structure = chordal_structure(g_star, region)
    if structure is None:
        return None
    cliques, forest = structure
    witness = implied_by_single_clique(g_star, links, eta, cliques)
    if witness is None:
        return None
    return CandidateStructure(g_star, region, tuple(cliques), forest, witness)


def score_candidate(forest: JunctionForest, structure: CandidateStructure, scorer: EntropyScorer) -> float:
    return region_decrement(scorer, forest, structure.region, structure.forest)


def evaluate_candidate(g: Graph, forest: JunctionForest, links: LinkSet, eta: int,
                       data: Union[FrequencyTable, EntropyScorer], index: int = 0) -> CandidateMove:
    """检验候选合法性，合法时计算局部熵减量"""
    links = tuple(sorted(links))
    structure = validate_candidate(g, links, eta)
    if structure is None:
        return CandidateMove(links, index, False)
    return CandidateMove(links, index, True, score_candidate(forest, structure, as_scorer(data)))


def quantized_dh(move: CandidateMove) -> int:
    return round(move.dh / DH_RESOLUTION)


def better(a: CandidateMove, b: Optional[CandidateMove]) -> bool:
    """量化后的 dh 更大者更优，相同时枚举序号小者更优"""
    if b is None:
        return True
    qa, qb = quantized_dh(a), quantized_dh(b)
    return qa > qb or (qa == qb and a.index < b.index)


def select_best(moves: Iterable[Optional[CandidateMove]]) -> Optional[CandidateMove]:
    best = None
    for move in moves:
        if move is not None and move.valid and better(move, best):
            best = move
    return best


def scan_candidates(g: Graph, forest: JunctionForest, candidates: Iterable[Tuple[int, LinkSet]], eta: int,
                    scorer: EntropyScorer) -> Tuple[Optional[CandidateMove], int]:
    """
    依次评估候选

    Returns:
        (最优合法候选, 合法候选数)
    """
    best, valid = None, 0
    for index, links in candidates:
        move = evaluate_candidate(g, forest, links, eta, scorer, index)
        if move.valid:
            valid += 1
            if better(move, best):
                best = move
    return best, valid


def filter_candidates(g: Graph, candidates: Iterable[Tuple[int, LinkSet]], eta: int) -> List[int]:
    """第一阶段：只做弦性与单团蕴含检验，返回合法候选序号"""
    return [index for index, links in candidates if validate_candidate(g, links, eta) is not None]


def adopt(outcome: PassOutcome, g: Graph, config: SearchConfig) -> Optional[Tuple[CandidateMove, Graph]]:
    if outcome.best is not None and is_significant(outcome.best.dh, config.threshold):
        return outcome.best, g.with_links(outcome.best.links)
    return None


def _default_executor():
    from base_executor import SequentialExecutor
    return SequentialExecutor()


def run_pass(g: Graph, forest: JunctionForest, level: int, config: SearchConfig, data: FrequencyTable,
             executor=None) -> Optional[Tuple[CandidateMove, Graph]]:
    """
    执行一轮搜索

    Returns:
        熵减量超过 δh 的最优候选及新图；没有显著候选时返回None
    """
    executor = executor or _default_executor()
    with executor.session(data, config.eta):
        outcome = executor.evaluate_pass(g, forest, level, config)
    return adopt(outcome, g, config)


def learn(config: SearchConfig, data: FrequencyTable, executor=None) -> Tuple[Graph, SearchTrace]:
    """
    从空图出发的多链接前瞻搜索

    Args:
        config: 搜索参数
        data: 数据集
        executor: 候选评估执行器，默认顺序执行

    Returns:
        (学习到的图, 搜索轨迹)
    """
    executor = executor or _default_executor()
    g = Graph.empty(len(data.scheme))
    trace = SearchTrace()
    with executor.session(data, config.eta):
        for level in range(1, config.kappa + 1):
            while count_candidates(g, level):
                structure = chordal_structure(g)
                if structure is None:
                    raise RuntimeError(f"中间结构不是弦图: {g.sorted_edges()}")
                outcome = executor.evaluate_pass(g, structure[1], level, config)
                adopted = adopt(outcome, g, config)
                best = outcome.best
                record = PassRecord(
                    level=level,
                    links=best.links if adopted else (),
                    dh=best.dh if best is not None else None,
                    generated=outcome.generated,
                    valid=outcome.valid,
                    adopted=adopted is not None,
                )
                trace.records.append(record)
                logger.info(f"层次 {level}: 候选 {outcome.generated}，合法 {outcome.valid}，"
                            f"{'加入 ' + _links_text(record.links) if adopted else '无显著候选'}"
                            f"{'' if best is None else f'，dh={best.dh:.6f}'}")
                if adopted is None:
                    break
                g = adopted[1]
    trace.graph = g
    return g, trace


def _links_text(links: Sequence[Edge], scheme: Optional[Scheme] = None) -> str:
    if not links:
        return "-"
    if scheme is None:
        return ",".join(f"{u}-{v}" for u, v in links)
    return ",".join(f"{scheme.names[u]}-{scheme.names[v]}" for u, v in links)


def format_trace(trace: SearchTrace, scheme: Optional[Scheme] = None) -> str:
    """每轮一行 `level i | adopted u-v | dh | generated g | valid v`，随后是最终图"""
    lines = []
    for record in trace.records:
        dh = "-" if record.dh is None else f"{record.dh:.10f}"
        lines.append(f"level {record.level} | adopted {_links_text(record.links, scheme)} | {dh} | "
                     f"generated {record.generated} | valid {record.valid}")
    text = "\n".join(lines) + ("\n" if lines else "")
    if trace.graph is not None:
        text += format_graph(trace.graph)
    return text


def write_trace(trace: SearchTrace, path: Union[str, Path], scheme: Optional[Scheme] = None):
    Path(path).write_text(format_trace(trace, scheme), encoding="utf-8")


def trace_is_consistent(trace: SearchTrace, data: Any, config: SearchConfig, tolerance: float = 1e-9) -> bool:
    """复核轨迹：中间图均为弦图、加入的 dh 均超过阈值且可由重新评分复现"""
    g = Graph.empty(trace.graph.n if trace.graph is not None else len(data.scheme))
    for record in trace.adopted:
        if record.dh is None or not is_significant(record.dh, config.threshold):
            return False
        g_next = g.with_links(record.links)
        if chordal_structure(g_next) is None:
            return False
        if abs(entropy_decrement_global(g, g_next, data) - record.dh) > tolerance:
            return False
        g = g_next
    return trace.graph is None or g == trace.graph
