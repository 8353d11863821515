"""
模型生成模块测试
"""
import sys

import numpy as np
import pytest

from helpers import MODELS, run_tests

from discrete_data import Scheme, project
from modelgen import (
    ModelError, ModelFormatError, PIM_LIKE, chain_model, compose_model, exact_marginal, expected_counts,
    make_rng, parity_model, pim_like_model, read_model, sample, table1_model, verify_pi, write_model,
)

UNIFORM2 = np.full((2, 2), 0.25)


def independent_triple():
    return compose_model(Scheme.binary(3), [([v], [0.5, 0.5]) for v in range(3)])


def test_table1_is_pi():
    report = verify_pi(table1_model(), ["X1", "X2", "X3"])
    assert report.pairwise[("X1", "X2")].independent
    assert report.pairwise[("X1", "X3")].independent
    assert not report.pairwise[("X2", "X3")].independent
    assert report.collective
    assert report.is_pi


def test_parity_is_pi():
    report = verify_pi(parity_model(3, 0.05), ["X1", "X2", "X3"])
    assert all(v.independent for v in report.pairwise.values())
    assert report.collective and report.is_pi
    assert verify_pi(parity_model(4, 0.1), ["X1", "X2", "X3", "X4"]).is_pi


def test_independent_triple_is_not_pi():
    report = verify_pi(independent_triple(), ["X1", "X2", "X3"])
    assert all(v.independent for v in report.pairwise.values())
    assert not report.collective
    assert not report.is_pi


def test_verify_pi_arguments():
    with pytest.raises(ValueError):
        verify_pi(table1_model(), ["X1", "X2"])
    with pytest.raises(ValueError):
        verify_pi(table1_model(), ["X1", "X2", "X7"])
    data = sample(parity_model(3, 0.05), 20000, 3)
    with pytest.raises(ValueError):
        verify_pi(data, ["X1", "X2", "X3"])
    assert verify_pi(data, ["X1", "X2", "X3"], tol=0.02).is_pi


def test_parity_arguments():
    with pytest.raises(ValueError):
        parity_model(2, 0.05)
    with pytest.raises(ValueError):
        parity_model(3, 0.5)
    with pytest.raises(ValueError):
        parity_model(3, -0.1)
    table = parity_model(3, 0.0).clusters[0].table
    assert table[0, 1, 1] == 0.25 and table[0, 1, 0] == 0.0


def test_compose_model_validation():
    scheme = Scheme.binary(3)
    with pytest.raises(ModelError):
        compose_model(scheme, [([0, 1], np.full((2, 2), 0.3)), ([2], [0.5, 0.5])])
    with pytest.raises(ModelError):
        compose_model(scheme, [([0, 1, 2], UNIFORM2)])
    with pytest.raises(ModelError):
        compose_model(scheme, [([0, 1], UNIFORM2)])
    with pytest.raises(ModelError):
        compose_model(scheme, [([0], [0.5, 0.5]), ([1], [0.5, 0.5]), ([2], [0.5, 0.5])], [(0, 1)])
    skewed = np.array([[0.4, 0.1], [0.1, 0.4]])
    with pytest.raises(ModelError):
        compose_model(scheme, [([0, 1], skewed), ([1, 2], np.array([[0.1, 0.2], [0.3, 0.4]]))], [(0, 1)])
    with pytest.raises(ModelError):
        compose_model(scheme, [([0, 1], UNIFORM2), ([1, 2], UNIFORM2), ([0, 2], UNIFORM2)], [(0, 1), (1, 2)])
    with pytest.raises(ModelError):
        compose_model(scheme, [([0, 1], UNIFORM2), ([1, 2], UNIFORM2), ([0, 2], UNIFORM2)],
                      [(0, 1), (1, 2), (0, 2)])
    model = compose_model(scheme, [([0, 1], skewed), ([1, 2], skewed)], [(0, 1)])
    assert model.sepset(0, 1) == (1,)


def test_pim_like_shapes():
    for name, (n_vars, parity_sizes) in PIM_LIKE.items():
        model = pim_like_model(name)
        assert len(model.scheme) == n_vars
        assert model.tree.number_of_edges() == len(model.clusters) - 1
    model = pim_like_model("pim3")
    assert len(model.clusters) == 17
    parity = parity_model(3, 0.05).clusters[0].table
    assert np.allclose(model.clusters[5].table, parity)
    assert np.allclose(model.clusters[11].table, parity)
    with pytest.raises(ValueError):
        pim_like_model("alarm")
    with pytest.raises(ValueError):
        chain_model(4, (3, 3))


def test_embedded_parity_is_pi():
    model = pim_like_model("pim3")
    members = model.clusters[5].members
    assert verify_pi(model, members).is_pi
    assert not verify_pi(model, [0, 1, 2]).is_pi


def test_exact_marginal_matches_joint():
    model = pim_like_model("pim3-small")
    total = 1e9
    joint = expected_counts(model, total)
    for subset in ([0], [0, 8], [3, 5, 7], [8, 2, 4, 6]):
        exact = exact_marginal(model, subset)
        assert exact.sum() == pytest.approx(1.0)
        marginal = project(joint, subset)
        for config, count in marginal.counts.items():
            assert exact[config] == pytest.approx(count / total, abs=1e-12)
    far = exact_marginal(pim_like_model("pim3"), [0, 34])
    assert far.shape == (2, 2) and far.sum() == pytest.approx(1.0)


def test_expected_counts():
    table = expected_counts(table1_model(), 10000)
    assert table.total == pytest.approx(10000)
    assert table.rows[(1, 1, 1, 1)] == 800
    with pytest.raises(ValueError):
        expected_counts(table1_model(), 0)
    with pytest.raises(ValueError):
        expected_counts(chain_model(23, (3,)), 1000)


def test_sampling_is_reproducible():
    model = pim_like_model("pim3-small")
    a = sample(model, 2000, 7)
    assert a == sample(model, 2000, 7)
    assert a != sample(model, 2000, 8)
    assert a.total == 2000 and a.is_integral
    big = sample(table1_model(), 200000, 1)
    empirical = project(big, [0, 1, 2, 3])
    for config, count in empirical.counts.items():
        assert count / big.total == pytest.approx(exact_marginal(table1_model(), [0, 1, 2, 3])[config], abs=0.005)
    with pytest.raises(ValueError):
        sample(model, 0, 1)


def test_sampling_converges_at_root_n_rate():
    model = table1_model()
    exact = exact_marginal(model, [0, 1, 2, 3])
    ladder = (10 ** 2, 10 ** 4, 10 ** 6)
    deviations = []
    for count in ladder:
        empirical = np.zeros_like(exact)
        for config, c in project(sample(model, count, 11), [0, 1, 2, 3]).counts.items():
            empirical[config] = c / count
        deviations.append(float(np.abs(empirical - exact).max()))
    assert deviations[0] > deviations[1] > deviations[2]
    for count, deviation in zip(ladder, deviations):
        assert deviation * np.sqrt(count) < 2.5, (count, deviation)


def test_random_source_is_philox():
    # Philox4x64-10，计数器与密钥全零时的第一个输出块
    zero_block = [0x16554D9ECA36314C, 0xDB20FE9D672D0FDC, 0xD7E772CEE186176B, 0x7E68B68AEC7BA23B]
    # 生成前计数器先加1，从全1开始回绕到0
    bit_generator = np.random.Philox(counter=2 ** 256 - 1, key=0)
    assert bit_generator.random_raw(4).tolist() == zero_block

    rng = make_rng(5)
    assert isinstance(rng.bit_generator, np.random.Philox)
    assert rng.random(8).tolist() == make_rng(5).random(8).tolist()
    assert make_rng(5).random(8).tolist() != make_rng(6).random(8).tolist()


def test_model_file_round_trip(tmp_path):
    for model in (table1_model(), pim_like_model("pim2")):
        write_model(model, tmp_path / "m.model")
        loaded = read_model(tmp_path / "m.model")
        assert loaded.scheme == model.scheme
        assert loaded.edges == model.edges
        for a, b in zip(loaded.clusters, model.clusters):
            assert a.members == b.members
            assert np.array_equal(a.table, b.table)


def test_shipped_fixtures():
    table1 = read_model(MODELS / "table1.model")
    assert np.allclose(table1.clusters[0].table, table1_model().clusters[0].table)
    parity = read_model(MODELS / "parity3.model")
    assert np.allclose(parity.clusters[0].table, parity_model(3, 0.05).clusters[0].table)
    pim = read_model(MODELS / "pim3-like.model")
    reference = pim_like_model("pim3")
    assert pim.edges == reference.edges
    for a, b in zip(pim.clusters, reference.clusters):
        assert a.members == b.members
        assert np.allclose(a.table, b.table)


@pytest.mark.parametrize("text", [
    "dmn-model v2\n",
    "dmn-model v1\nvars 1\nX1 2\nclusters 1\ncluster X1\nrows 1\n0\nedges 0\n",
    "dmn-model v1\nvars 1\nX1 2\nclusters 1\ncluster X1\nrows 2\n0 0.5\n",
    "dmn-model v1\nvars 1\nX1 2\nclusters 1\ncluster X1\nrows 2\n0 0.5\n1 0.5\nedges 0\nextra\n",
    "dmn-model v1\nvars 1\nX1 2\nclusters 1\ncluster X1\nrows 3\n0 0.5\n1 0.5\n1 0.5\nedges 0\n",
    "dmn-model v1\nvars 1\nX1 2\nclusters 1\ncluster X1\nrows 2\n0 0.5\n-1 0.5\nedges 0\n",
])
def test_read_model_errors(tmp_path, text):
    path = tmp_path / "bad.model"
    path.write_text(text, encoding="utf-8")
    with pytest.raises(ModelFormatError):
        read_model(path)


def test_read_model_rejects_invalid_tables(tmp_path):
    path = tmp_path / "bad.model"
    path.write_text("dmn-model v1\nvars 1\nX1 2\nclusters 1\ncluster X1\nrows 1\n0 0.7\nedges 0\n", encoding="utf-8")
    with pytest.raises(ModelError):
        read_model(path)


def main():
    return run_tests(globals(), "模型生成模块测试")


if __name__ == "__main__":
    sys.exit(main())
