"""
离散数据模块测试
"""
import sys

import numpy as np
import pytest

from helpers import parity_data, run_tests, table1_data

from discrete_data import (
    DatasetFormatError, FrequencyTable, Scheme, entropy, merge_counts, project, read_dataset, write_dataset,
)

TWO_ROWS = """dmn-data v1
vars 2
X 2
Y 2
rows 2
0 0 5
1 1 5
"""


def test_read_text_fixture(tmp_path):
    path = tmp_path / "xy.data"
    path.write_text(TWO_ROWS, encoding="utf-8")
    table = read_dataset(path)
    assert table.scheme.names == ("X", "Y")
    assert table.total == 10
    assert table.rows == {(0, 0): 5.0, (1, 1): 5.0}


def test_read_empty_rows(tmp_path):
    path = tmp_path / "empty.data"
    path.write_text("dmn-data v1\nvars 2\nX 2\nY 3\nrows 0\n", encoding="utf-8")
    table = read_dataset(path)
    assert len(table) == 0
    assert table.total == 0


def test_table1_expected_counts():
    table = table1_data()
    assert len(table) == 16
    assert table.total == pytest.approx(10000)
    assert table.rows[(0, 0, 0, 0)] == 225
    assert table.rows[(0, 0, 0, 1)] == 2025
    assert table.is_integral


@pytest.mark.parametrize("fmt", ["text", "binary"])
def test_round_trip(tmp_path, fmt):
    one_row = FrequencyTable.from_rows(Scheme.binary(3), {(1, 0, 1): 4})
    for name, table in [("table1", table1_data()), ("one", one_row), ("parity", parity_data(1000, 7))]:
        path = tmp_path / f"{name}.{fmt}"
        write_dataset(table, path, fmt)
        assert read_dataset(path, fmt) == table


def test_round_trip_non_integral_text(tmp_path):
    table = FrequencyTable.from_rows(Scheme.binary(2), {(0, 0): 0.1, (1, 1): 2.0 / 3.0})
    write_dataset(table, tmp_path / "real.data")
    assert read_dataset(tmp_path / "real.data") == table


def test_counts_use_fixed_point_resolution(tmp_path):
    table = FrequencyTable.from_rows(Scheme.binary(2), {(0, 0): 2.0 / 3.0, (1, 1): 1e-8, (0, 1): 3.0})
    assert table.rows == {(0, 0): 0.666667, (0, 1): 3.0}
    assert table.scaled.tolist() == [666667, 3000000]
    assert not table.is_integral
    write_dataset(table, tmp_path / "real.bin", "binary")
    assert read_dataset(tmp_path / "real.bin", "binary") == table
    with pytest.raises(ValueError):
        FrequencyTable.from_rows(Scheme.binary(1), {(0,): 1e13})


def _random_table(rng: np.random.Generator) -> FrequencyTable:
    """每个配置以 0.7 的概率带一个正实数计数"""
    scheme = Scheme((f"V{i + 1}", int(rng.integers(2, 5))) for i in range(int(rng.integers(1, 6))))
    configs = np.indices(scheme.cardinalities).reshape(len(scheme), -1).T
    weights = rng.random(len(configs)) * 10 * (rng.random(len(configs)) < 0.7)
    weights[0] += 1
    return FrequencyTable(scheme, configs, weights)


def test_entropy_bounds_on_random_tables():
    rng = np.random.default_rng(31)
    for _ in range(100):
        table = _random_table(rng)
        k = len(table.scheme)
        subset = [int(v) for v in rng.permutation(k)[:int(rng.integers(1, k + 1))]]
        h = entropy(project(table, subset))
        assert 0.0 <= h <= np.log2(table.scheme.state_space(subset)) + 1e-12


def test_projection_commutes_with_nesting():
    rng = np.random.default_rng(32)
    for _ in range(50):
        table = _random_table(rng)
        k = len(table.scheme)
        outer = [int(v) for v in rng.permutation(k)[:int(rng.integers(1, k + 1))]]
        inner = [outer[i] for i in rng.permutation(len(outer))[:int(rng.integers(1, len(outer) + 1))]]
        assert project(project(table, outer), inner) == project(table, inner)
    x1 = project(table1_data(), ["X1", "X2"])
    with pytest.raises(ValueError):
        project(x1, ["X3"])


@pytest.mark.parametrize("body", [
    "dmn-data v2\nvars 1\nX 2\nrows 1\n0 1\n",
    "dmn-data v1\nvars 1\nX 2\nrows 1\n2 1\n",
    "dmn-data v1\nvars 1\nX 2\nrows 2\n0 1\n0 3\n",
    "dmn-data v1\nvars 1\nX 2\nrows 1\n0 0\n",
    "dmn-data v1\nvars 1\nX 2\nrows 2\n0 1\n",
])
def test_malformed_files(tmp_path, body):
    path = tmp_path / "bad.data"
    path.write_text(body, encoding="utf-8")
    with pytest.raises(DatasetFormatError):
        read_dataset(path)


def test_table_invariants():
    scheme = Scheme.binary(2)
    with pytest.raises(ValueError):
        FrequencyTable(scheme, [[0, 2]], [1])
    with pytest.raises(ValueError):
        FrequencyTable(scheme, [[0, 1], [0, 1]], [1, 2])
    with pytest.raises(ValueError):
        Scheme([("A", 2), ("A", 3)])
    with pytest.raises(ValueError):
        Scheme([("A", 1)])
    table = FrequencyTable(scheme, [[1, 1], [0, 0], [0, 1]], [3, 0, 2])
    assert len(table) == 2
    assert table.configs.tolist() == [[0, 1], [1, 1]]


def test_project_and_entropy():
    table = table1_data()
    x1 = project(table, ["X1"])
    assert x1.counts == {(0,): pytest.approx(5000), (1,): pytest.approx(5000)}
    assert entropy(x1) == pytest.approx(1.0, abs=1e-12)
    assert entropy(project(table, ["X4"])) == pytest.approx(0.946755, abs=1e-6)
    pair = project(table, ["X3", "X1"])
    assert pair.names == ("X3", "X1")
    assert pair.total == pytest.approx(table.total)
    with pytest.raises(ValueError):
        project(table, ["X9"])


def test_entropy_of_zero_total():
    empty = FrequencyTable(Scheme.binary(2), np.zeros((0, 2)), np.zeros(0))
    with pytest.raises(ValueError):
        entropy(project(empty, [0]))


def test_marginals_additive_over_shards():
    table = parity_data(1000, 7)
    for parts in (1, 2, 3, 5):
        shards = table.shards(parts)
        assert sum(len(s) for s in shards) == len(table)
        for subset in ([0], [2, 0], [0, 1, 2]):
            merged = project(shards[0], subset)
            for shard in shards[1:]:
                merged = merge_counts(merged, project(shard, subset))
            assert merged == project(table, subset)


def main():
    return run_tests(globals(), "离散数据模块测试")


if __name__ == "__main__":
    sys.exit(main())
