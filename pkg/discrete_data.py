"""
离散数据模块
变量方案、频数表数据集、边缘投影与经验熵
"""
import math
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Mapping, Sequence, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

DATA_MAGIC = "dmn-data v1"
COUNT_SCALE = 10 ** 6  # 计数的定点缩放（分辨率 1e-6）
MAX_FIXED_POINT = 2 ** 62
MAX_BINARY_CARDINALITY = 256

VariableRef = Union[int, str]


class DatasetFormatError(ValueError):
    """数据集文件格式错误"""


@dataclass(frozen=True)
class Variable:
    """离散变量：名称与基数"""
    name: str
    cardinality: int

    def __post_init__(self):
        if not self.name or any(ch.isspace() for ch in self.name):
            raise ValueError(f"变量名不能为空或包含空白: {self.name!r}")
        if int(self.cardinality) != self.cardinality or self.cardinality < 2:
            raise ValueError(f"变量 {self.name} 的基数必须是不小于2的整数: {self.cardinality}")
        object.__setattr__(self, "cardinality", int(self.cardinality))


class Scheme:
    """有序变量方案，顺序即规范顺序"""

    def __init__(self, variables: Iterable[Union[Variable, Tuple[str, int]]]):
        items = tuple(v if isinstance(v, Variable) else Variable(*v) for v in variables)
        names = [v.name for v in items]
        if len(set(names)) != len(names):
            raise ValueError(f"变量名重复: {names}")
        self.variables: Tuple[Variable, ...] = items
        self.names: Tuple[str, ...] = tuple(names)
        self.cardinalities: Tuple[int, ...] = tuple(v.cardinality for v in items)
        self._positions = {name: i for i, name in enumerate(names)}

    @classmethod
    def binary(cls, count: int, prefix: str = "X") -> "Scheme":
        """X1..Xk 二值变量方案"""
        return cls((f"{prefix}{i + 1}", 2) for i in range(count))

    def __len__(self) -> int:
        return len(self.variables)

    def __iter__(self) -> Iterator[Variable]:
        return iter(self.variables)

    def __getitem__(self, index: int) -> Variable:
        return self.variables[index]

    def __eq__(self, other) -> bool:
        return isinstance(other, Scheme) and self.variables == other.variables

    def __hash__(self) -> int:
        return hash(self.variables)

    def __repr__(self) -> str:
        body = ", ".join(f"{v.name}:{v.cardinality}" for v in self.variables)
        return f"Scheme({body})"

    def index(self, name: str) -> int:
        """变量名对应的位置"""
        try:
            return self._positions[name]
        except KeyError:
            raise ValueError(f"未知变量: {name}") from None

    def resolve(self, subset: Iterable[VariableRef]) -> Tuple[int, ...]:
        """
        把变量名或下标组成的子集解析为下标元组（保持给定顺序）

        Raises:
            ValueError: 未知变量或重复变量
        """
        indices = []
        for ref in subset:
            if isinstance(ref, (int, np.integer)) and not isinstance(ref, bool):
                if not 0 <= ref < len(self):
                    raise ValueError(f"变量下标越界: {ref}")
                indices.append(int(ref))
            else:
                indices.append(self.index(str(ref)))
        if len(set(indices)) != len(indices):
            raise ValueError(f"子集中存在重复变量: {list(subset)}")
        return tuple(indices)

    def names_of(self, indices: Iterable[int]) -> Tuple[str, ...]:
        return tuple(self.names[i] for i in indices)

    def state_space(self, indices: Iterable[int]) -> int:
        return math.prod(self.cardinalities[i] for i in indices)


def _canonical(configs: np.ndarray, counts: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """按配置字典序排序，丢弃零计数行"""
    keep = counts > 0
    configs, counts = configs[keep], counts[keep]
    if len(configs) and configs.shape[1]:
        order = np.lexsort(configs.T[::-1])
        configs, counts = configs[order], counts[order]
    return configs, counts


def _freeze(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def _group(configs: np.ndarray, cards: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    """
    对配置行分组

    Returns:
        (按字典序排列的不同配置, 每行对应的分组下标)
    """
    if configs.shape[1] == 0:
        return np.zeros((1, 0), dtype=np.int64), np.zeros(len(configs), dtype=np.int64)
    if math.prod(cards) < 2 ** 62:
        keys = np.ravel_multi_index(tuple(configs.T), tuple(cards))
        unique_keys, inverse = np.unique(keys, return_inverse=True)
        unique = np.stack(np.unravel_index(unique_keys, tuple(cards)), axis=1)
    else:
        unique, inverse = np.unique(configs, axis=0, return_inverse=True)
    return unique.astype(np.int64), np.asarray(inverse).reshape(-1)


def to_fixed_point(counts) -> np.ndarray:
    """
    实数计数转为 1e-6 定点整数（就近取整）

    定点整数的求和与顺序无关，分片边缘之和与整体投影逐位相同。

    Raises:
        ValueError: 计数为负、非有限或总数超出定点范围
    """
    counts = np.asarray(counts, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(counts)) or np.any(counts < 0):
        raise ValueError("计数必须是有限的非负数")
    if math.fsum(counts.tolist()) * COUNT_SCALE >= MAX_FIXED_POINT:
        raise ValueError(f"计数总数超出定点范围（上限 {MAX_FIXED_POINT / COUNT_SCALE:g}）")
    return np.rint(counts * COUNT_SCALE).astype(np.int64)


def _sum_groups(inverse: np.ndarray, scaled: np.ndarray, size: int) -> np.ndarray:
    sums = np.zeros(size, dtype=np.int64)
    np.add.at(sums, inverse, scaled)
    return sums


def _real(scaled: np.ndarray) -> np.ndarray:
    return scaled / COUNT_SCALE


def _total(scaled: np.ndarray) -> float:
    return int(scaled.sum()) / COUNT_SCALE


class FrequencyTable:
    """
    压缩数据集：不同的配置及其出现次数

    计数可以是非负整数（采样数据）或非负实数（期望计数数据），
    内部以 1e-6 定点整数保存，counts 为对应的实数视图。
    构造后不可变，可在并发任务间只读共享。
    """

    def __init__(self, scheme: Scheme, configs, counts=None, scaled=None):
        k = len(scheme)
        configs = np.asarray(configs, dtype=np.int64).reshape(-1, k)
        if (counts is None) == (scaled is None):
            raise ValueError("counts 与 scaled 必须且只能给出一个")
        if scaled is None:
            scaled = to_fixed_point(counts)
        else:
            scaled = np.asarray(scaled, dtype=np.int64).reshape(-1)
            if np.any(scaled < 0):
                raise ValueError("计数必须是有限的非负数")
        if len(configs) != len(scaled):
            raise ValueError(f"配置行数 {len(configs)} 与计数个数 {len(scaled)} 不一致")
        if len(configs):
            low = configs.min(axis=0)
            high = configs.max(axis=0)
            for i, card in enumerate(scheme.cardinalities):
                if low[i] < 0 or high[i] >= card:
                    raise ValueError(f"变量 {scheme.names[i]} 的取值越界（基数 {card}）")
        configs, scaled = _canonical(configs, scaled)
        if len(configs) > 1 and k:
            same = np.all(configs[1:] == configs[:-1], axis=1)
            if same.any():
                row = tuple(int(v) for v in configs[1:][same][0])
                raise ValueError(f"配置重复: {row}")
        self.scheme = scheme
        self.configs = _freeze(configs)
        self.scaled = _freeze(scaled)
        self.counts = _freeze(_real(scaled))
        self.total = _total(scaled)

    @classmethod
    def from_rows(cls, scheme: Scheme, rows: Mapping[Tuple[int, ...], float]) -> "FrequencyTable":
        """由 {配置: 计数} 映射构造"""
        configs = np.array(list(rows.keys()), dtype=np.int64).reshape(-1, len(scheme))
        counts = np.array(list(rows.values()), dtype=np.float64)
        return cls(scheme, configs, counts)

    @classmethod
    def from_cases(cls, scheme: Scheme, cases) -> "FrequencyTable":
        """由逐条样本（每行一个配置）聚合构造"""
        cases = np.asarray(cases, dtype=np.int64).reshape(-1, len(scheme))
        if len(cases) == 0:
            return cls(scheme, cases, np.zeros(0))
        unique, inverse = _group(cases, scheme.cardinalities)
        counts = np.bincount(inverse, minlength=len(unique)).astype(np.float64)
        return cls(scheme, unique, counts)

    @property
    def rows(self) -> Dict[Tuple[int, ...], float]:
        return {tuple(int(v) for v in config): float(count)
                for config, count in zip(self.configs, self.counts)}

    @property
    def is_integral(self) -> bool:
        return bool(np.all(self.scaled % COUNT_SCALE == 0))

    def __len__(self) -> int:
        return len(self.scaled)

    def __eq__(self, other) -> bool:
        return (isinstance(other, FrequencyTable)
                and self.scheme == other.scheme
                and np.array_equal(self.configs, other.configs)
                and np.array_equal(self.scaled, other.scaled))

    __hash__ = None

    def __repr__(self) -> str:
        return f"FrequencyTable({self.scheme!r}, rows={len(self)}, total={self.total:g})"

    def shards(self, parts: int) -> List["FrequencyTable"]:
        """按行轮转切分为 parts 个分片（计数可加，分片投影之和等于整体投影）"""
        if parts < 1:
            raise ValueError(f"分片数必须为正: {parts}")
        return [FrequencyTable(self.scheme, self.configs[i::parts], scaled=self.scaled[i::parts])
                for i in range(parts)]


class MarginalTable:
    """频数表在有序变量子集上的边缘计数（定点整数 scaled 与实数视图 values）"""

    def __init__(self, scheme: Scheme, subset: Sequence[int], configs, scaled):
        self.scheme = scheme
        self.subset: Tuple[int, ...] = tuple(int(i) for i in subset)
        configs = np.asarray(configs, dtype=np.int64).reshape(-1, len(self.subset))
        scaled = np.asarray(scaled, dtype=np.int64).reshape(-1)
        configs, scaled = _canonical(configs, scaled)
        self.configs = _freeze(configs)
        self.scaled = _freeze(scaled)
        self.values = _freeze(_real(scaled))
        self.total = _total(scaled)

    @property
    def counts(self) -> Dict[Tuple[int, ...], float]:
        return {tuple(int(v) for v in config): float(count)
                for config, count in zip(self.configs, self.values)}

    @property
    def names(self) -> Tuple[str, ...]:
        return self.scheme.names_of(self.subset)

    def __len__(self) -> int:
        return len(self.scaled)

    def __eq__(self, other) -> bool:
        return (isinstance(other, MarginalTable)
                and self.scheme == other.scheme
                and self.subset == other.subset
                and np.array_equal(self.configs, other.configs)
                and np.array_equal(self.scaled, other.scaled))

    __hash__ = None

    def __repr__(self) -> str:
        return f"MarginalTable({','.join(self.names)}, rows={len(self)}, total={self.total:g})"


def project(table: Union[FrequencyTable, MarginalTable], subset: Iterable[VariableRef]) -> MarginalTable:
    """
    把频数表（或边缘表）投影到变量子集上

    Args:
        table: 频数表，或包含 subset 全部变量的边缘表
        subset: 有序变量子集（变量名或下标）

    Returns:
        边缘计数表，总数与原表相同
    """
    indices = table.scheme.resolve(subset)
    if isinstance(table, MarginalTable):
        missing = [i for i in indices if i not in table.subset]
        if missing:
            raise ValueError(f"边缘表 {table.names} 不含变量 {list(table.scheme.names_of(missing))}")
        positions = [table.subset.index(i) for i in indices]
    else:
        positions = list(indices)
    if len(table) == 0:
        return MarginalTable(table.scheme, indices, np.zeros((0, len(indices))), np.zeros(0))
    columns = table.configs[:, positions]
    unique, inverse = _group(columns, [table.scheme.cardinalities[i] for i in indices])
    return MarginalTable(table.scheme, indices, unique, _sum_groups(inverse, table.scaled, len(unique)))


def entropy(marginal: MarginalTable) -> float:
    """
    经验熵（比特/样本）

    Raises:
        ValueError: 总数为0
    """
    if marginal.total <= 0:
        raise ValueError(f"总数为0的边缘表无法计算熵: {marginal!r}")
    p = marginal.values / marginal.total
    p = p[p > 0]
    return 0.0 - math.fsum((p * np.log2(p)).tolist())


def merge_counts(a: MarginalTable, b: MarginalTable) -> MarginalTable:
    """逐配置相加两个边缘表（定点整数相加，结果与合并顺序无关）"""
    if a.scheme != b.scheme or a.subset != b.subset:
        raise ValueError(f"边缘表子集不一致: {a.names} vs {b.names}")
    configs = np.concatenate([a.configs, b.configs])
    scaled = np.concatenate([a.scaled, b.scaled])
    if len(configs) == 0:
        return MarginalTable(a.scheme, a.subset, configs, scaled)
    unique, inverse = _group(configs, [a.scheme.cardinalities[i] for i in a.subset])
    return MarginalTable(a.scheme, a.subset, unique, _sum_groups(inverse, scaled, len(unique)))


def _format_count(count: float) -> str:
    if count == int(count):
        return str(int(count))
    return repr(float(count))


def _header_lines(scheme: Scheme, rows: int) -> List[str]:
    lines = [DATA_MAGIC, f"vars {len(scheme)}"]
    lines += [f"{v.name} {v.cardinality}" for v in scheme]
    lines.append(f"rows {rows}")
    return lines


def _binary_dtype(k: int) -> np.dtype:
    return np.dtype([("values", "u1", (k,)), ("count", "<u8")])


def write_dataset(table: FrequencyTable, path: Union[str, Path], format: str = "text"):
    """
    写出数据集文件

    Args:
        table: 频数表
        path: 输出路径
        format: "text" 或 "binary"
    """
    path = Path(path)
    header = _header_lines(table.scheme, len(table))
    if format == "text":
        body = [" ".join(str(int(v)) for v in config) + (" " if len(config) else "") + _format_count(count)
                for config, count in zip(table.configs, table.counts)]
        path.write_text("\n".join(header + body) + "\n", encoding="utf-8")
    elif format == "binary":
        if any(card > MAX_BINARY_CARDINALITY for card in table.scheme.cardinalities):
            raise ValueError(f"二进制格式要求基数不超过 {MAX_BINARY_CARDINALITY}")
        records = np.zeros(len(table), dtype=_binary_dtype(len(table.scheme)))
        records["values"] = table.configs
        records["count"] = table.scaled.astype(np.uint64)
        with open(path, "wb") as f:
            f.write(("\n".join(header) + "\n").encode("utf-8"))
            f.write(records.tobytes())
    else:
        raise ValueError(f"未知数据集格式: {format}")
    logger.debug(f"已写出数据集 {path}（{len(table)} 行，格式 {format}）")


def _read_header(lines: Iterator[Tuple[int, str]], path: Path) -> Tuple[Scheme, int]:
    def expect(prefix: str) -> Tuple[int, str]:
        try:
            number, line = next(lines)
        except StopIteration:
            raise DatasetFormatError(f"{path}: 文件提前结束，缺少 {prefix!r}") from None
        if not line.startswith(prefix):
            raise DatasetFormatError(f"{path}:{number} 期望 {prefix!r}，实际为 {line!r}")
        return number, line

    expect(DATA_MAGIC)
    number, line = expect("vars ")
    try:
        k = int(line.split()[1])
        variables = []
        for _ in range(k):
            number, line = next(lines)
            name, card = line.split()
            variables.append(Variable(name, int(card)))
        scheme = Scheme(variables)
        number, line = expect("rows ")
        rows = int(line.split()[1])
    except StopIteration:
        raise DatasetFormatError(f"{path}: 变量声明不完整") from None
    except ValueError as exc:
        if isinstance(exc, DatasetFormatError):
            raise
        raise DatasetFormatError(f"{path}:{number} 文件头格式错误: {exc}") from exc
    if rows < 0:
        raise DatasetFormatError(f"{path}:{number} 行数为负: {rows}")
    return scheme, rows


def read_dataset(path: Union[str, Path], format: str = "text") -> FrequencyTable:
    """
    读取数据集文件

    Raises:
        DatasetFormatError: 文件头错误、取值越界或配置重复
        OSError: 文件不可读
    """
    path = Path(path)
    if format == "text":
        text = path.read_text(encoding="utf-8")
        lines = ((number, line.strip()) for number, line in enumerate(text.splitlines(), start=1)
                 if line.strip())
        scheme, rows = _read_header(lines, path)
        configs, counts = [], []
        for number, line in lines:
            fields = line.split()
            if len(fields) != len(scheme) + 1:
                raise DatasetFormatError(f"{path}:{number} 期望 {len(scheme) + 1} 个字段: {line!r}")
            try:
                configs.append([int(v) for v in fields[:-1]])
                counts.append(float(fields[-1]))
            except ValueError as exc:
                raise DatasetFormatError(f"{path}:{number} 数值无法解析: {line!r}") from exc
        if len(configs) != rows:
            raise DatasetFormatError(f"{path}: 声明 {rows} 行，实际 {len(configs)} 行")
        configs = np.array(configs, dtype=np.int64).reshape(-1, len(scheme))
        source = {"counts": np.array(counts, dtype=np.float64)}
    elif format == "binary":
        with open(path, "rb") as f:
            header = [f.readline().decode("utf-8").strip() for _ in range(2)]
            try:
                k = int(header[1].split()[1]) if header[1].startswith("vars ") else 0
            except (IndexError, ValueError):
                k = 0
            header += [f.readline().decode("utf-8").strip() for _ in range(k + 1)]
            header = [line for line in header if line]
            scheme, rows = _read_header(iter(enumerate(header, start=1)), path)
            payload = f.read()
        dtype = _binary_dtype(len(scheme))
        if len(payload) != rows * dtype.itemsize:
            raise DatasetFormatError(f"{path}: 记录区长度 {len(payload)} 与 {rows} 行不符")
        records = np.frombuffer(payload, dtype=dtype, count=rows)
        configs = records["values"].astype(np.int64).reshape(-1, len(scheme))
        source = {"scaled": records["count"].astype(np.int64)}
    else:
        raise ValueError(f"未知数据集格式: {format}")

    try:
        table = FrequencyTable(scheme, configs, **source)
    except ValueError as exc:
        raise DatasetFormatError(f"{path}: {exc}") from exc
    if len(table) != rows:
        raise DatasetFormatError(f"{path}: 不允许零计数行（计数分辨率为 1e-6）")
    logger.debug(f"已读取数据集 {path}（{len(table)} 行，总数 {table.total:g}）")
    return table
