"""
测试共用的构造函数与脚本运行器
"""
import sys
import inspect
import tempfile
import traceback
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np
import networkx as nx
import pytest

ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from discrete_data import FrequencyTable, Scheme  # noqa: E402
from chordal import Graph  # noqa: E402
from modelgen import expected_counts, parity_model, pim_like_model, sample, table1_model  # noqa: E402

MODELS = ROOT / "models"

# 按 0 起始下标
TABLE1_KAPPA1 = {(1, 2), (1, 3), (2, 3)}
TABLE1_KAPPA2 = {(0, 1), (0, 2), (1, 2), (1, 3), (2, 3)}
PARITY_TRIANGLE = {(0, 1), (0, 2), (1, 2)}


def table1_data(total: float = 10000) -> FrequencyTable:
    """四变量PI模型的期望计数数据集"""
    return expected_counts(table1_model(), total)


def parity_data(count: int = 1000, seed: int = 7) -> FrequencyTable:
    return sample(parity_model(3, 0.05), count, seed)


def pim_small_data() -> FrequencyTable:
    return expected_counts(pim_like_model("pim3-small"), 10000)


def random_chordal_graph(rng: np.random.Generator, n: int, p: float = 0.3) -> Graph:
    """随机图补全为弦图"""
    graph = nx.gnp_random_graph(n, p, seed=int(rng.integers(2 ** 31)))
    chordal, _ = nx.complete_to_chordal_graph(graph)
    return Graph(n, frozenset(chordal.edges()))


def random_dataset(rng: np.random.Generator, n_vars: int, cases: int = 500, cardinality: int = 2) -> FrequencyTable:
    """
    带相关性的随机数据集：每个变量以一定概率复制前一个变量
    """
    scheme = Scheme((f"V{i + 1}", cardinality) for i in range(n_vars))
    values = rng.integers(0, cardinality, size=(cases, n_vars))
    for j in range(1, n_vars):
        copy = rng.random(cases) < 0.4
        values[copy, j] = values[copy, j - 1]
    return FrequencyTable.from_cases(scheme, values)


def _parametrize(func) -> List[Tuple[str, Dict[str, object]]]:
    """展开 pytest.mark.parametrize 标记（多个标记取笛卡尔积）"""
    cases = [("", {})]
    for mark in getattr(func, "pytestmark", []):
        if mark.name != "parametrize":
            continue
        argnames, argvalues = mark.args[0], mark.args[1]
        names = [n.strip() for n in argnames.split(",")] if isinstance(argnames, str) else list(argnames)
        expanded = []
        for k, values in enumerate(argvalues):
            values = values if len(names) > 1 else (values,)
            for label, params in cases:
                expanded.append((f"{label}[{k}]", {**params, **dict(zip(names, values))}))
        cases = expanded
    return cases


def run_tests(namespace: Dict[str, object], title: str) -> int:
    """以脚本方式运行一个测试文件中的全部 test_ 函数，打印汇总"""
    print("\n" + "=" * 80)
    print(title)
    print("=" * 80)

    tests = [(name, obj) for name, obj in namespace.items()
             if name.startswith("test_") and callable(obj)]
    passed = failed = skipped = 0
    for name, func in tests:
        for label, params in _parametrize(func):
            kwargs = dict(params)
            if "tmp_path" in inspect.signature(func).parameters:
                kwargs["tmp_path"] = Path(tempfile.mkdtemp(prefix="dmn_test_"))
            try:
                func(**kwargs)
            except pytest.skip.Exception as e:
                print(f"⚠ {name}{label}: 跳过（{e}）")
                skipped += 1
            except Exception:
                print(f"✗ {name}{label}: 失败")
                traceback.print_exc()
                failed += 1
            else:
                print(f"✓ {name}{label}: 通过")
                passed += 1

    print(f"\n总计: {passed} 通过, {failed} 失败, {skipped} 跳过")
    return 1 if failed else 0
