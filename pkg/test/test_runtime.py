"""
并行运行时测试：分配、消息、执行器与边缘服务器流水线
"""
import os
import sys
import time
import pickle
import logging

import numpy as np
import pytest

from helpers import parity_data, pim_small_data, random_dataset, run_tests, table1_data

from discrete_data import merge_counts, project
from chordal import Graph, chordal_structure
from search import (
    DH_RESOLUTION, CandidateMove, SearchConfig, better, count_candidates, format_trace, learn, run_pass,
)
from base_executor import ExecutorStats, SequentialExecutor, merge_reports, partition_candidates, split_evenly
from explorer_executor import ExplorerExecutor, run_pass_even, run_pass_two_stage, stage_one
from server_executor import MarginalPipeline, ServerExecutor, serve_marginal
from executor_factory import ExecutorFactory
from messages import Init, Job, Report, ThreadTransport, WorkerError, create_transport

FIXTURES = {
    "table1": (table1_data, SearchConfig(eta=3, kappa=2)),
    "parity3": (lambda: parity_data(1000, 7), SearchConfig(eta=3, kappa=3)),
    "pim3-small": (pim_small_data, SearchConfig(eta=3, kappa=3)),
}


def _sequential(name):
    make, config = FIXTURES[name]
    data = make()
    graph, trace = learn(config, data, SequentialExecutor())
    return data, config, graph, format_trace(trace)


def test_partition_candidates():
    ranges = partition_candidates(10, 4)
    assert [len(r) for r in ranges] == [3, 3, 2, 2]
    assert [i for r in ranges for i in r] == list(range(10))
    assert [len(r) for r in partition_candidates(2, 4)] == [1, 1, 0, 0]
    assert split_evenly(list("abcde"), 2) == [["a", "b", "c"], ["d", "e"]]
    with pytest.raises(ValueError):
        partition_candidates(5, 0)


def test_merge_reports_is_order_independent():
    moves = [CandidateMove(((0, 1),), 7, True, 0.2), CandidateMove(((0, 2),), 3, True, 0.2),
             CandidateMove(((1, 2),), 1, True, 0.1), None]
    assert merge_reports(moves) == merge_reports(reversed(moves)) == moves[1]


def test_merge_reports_under_shuffled_delivery():
    rng = np.random.default_rng(23)
    dhs = rng.choice([0.1, 0.25, 0.3, 0.3 + 1e-13, 0.3 - 1e-13], 40)
    moves = [CandidateMove(((0, 1),), k, True, float(d)) for k, d in enumerate(dhs)] + [None] * 5
    top = round(max(dhs) / DH_RESOLUTION)
    winner = min(k for k, d in enumerate(dhs) if round(d / DH_RESOLUTION) == top)
    for _ in range(200):
        order = rng.permutation(len(moves))
        assert merge_reports(moves[k] for k in order).index == winner


def test_near_equal_decrements_tie_on_index():
    low = CandidateMove(((0, 1),), 2, True, 0.5)
    high = CandidateMove(((0, 2),), 4, True, 0.5 + 1e-13)
    assert better(low, high) and not better(high, low)
    clear = CandidateMove(((0, 3),), 9, True, 0.5 + 1e-6)
    assert better(clear, low) and not better(low, clear)


def test_executor_stats_idle():
    stats = ExecutorStats()
    stats.record_pass(2.0, {"explorer-1": 1.5, "explorer-2": 0.5})
    stats.record_pass(1.0, {"explorer-1": 1.0})
    assert stats.passes == 2
    assert stats.idle() == {"explorer-1": 0.5, "explorer-2": 2.5}
    stats.reset()
    assert stats.idle() == {}


@pytest.mark.parametrize("name", sorted(FIXTURES))
def test_parallel_matches_sequential(name):
    data, config, graph, trace_text = _sequential(name)
    for n in (1, 2, 4, 8):
        for two_stage in (False, True):
            executor = ExplorerExecutor(n, two_stage=two_stage, backend="thread", timeout=60)
            g, trace = learn(config, data, executor)
            assert g == graph, (n, two_stage)
            assert format_trace(trace) == trace_text, (n, two_stage)


@pytest.mark.parametrize("explorers, servers", [(1, 1), (2, 2), (3, 4)])
def test_server_pipeline_matches_sequential(explorers, servers):
    data, config, graph, trace_text = _sequential("parity3")
    executor = ServerExecutor(explorers, servers, backend="thread", timeout=60)
    g, trace = learn(config, data, executor)
    assert g == graph
    assert format_trace(trace) == trace_text


def test_server_pipeline_matches_sequential_on_real_counts():
    data, config, graph, trace_text = _sequential("pim3-small")
    assert not data.is_integral
    for explorers, servers in ((1, 1), (2, 3)):
        executor = ServerExecutor(explorers, servers, backend="thread", timeout=120)
        g, trace = learn(config, data, executor)
        assert g == graph, (explorers, servers)
        assert format_trace(trace) == trace_text, (explorers, servers)


def test_process_backend_matches_sequential():
    data, config, graph, trace_text = _sequential("table1")
    for executor in (ExplorerExecutor(2, two_stage=True, backend="process", timeout=120),
                     ServerExecutor(2, 1, backend="process", timeout=120)):
        g, trace = learn(config, data, executor)
        assert g == graph
        assert format_trace(trace) == trace_text


def test_single_pass_helpers_agree():
    data = table1_data()
    g = Graph.empty(4)
    _, forest = chordal_structure(g)
    config = SearchConfig()
    expected, _ = run_pass(g, forest, 1, config, data)
    assert run_pass_even(g, 1, config, data, 3) == expected
    assert run_pass_two_stage(g, 1, config, data, 3) == expected


def test_two_stage_scores_only_valid_candidates():
    path = Graph(20, frozenset((k, k + 1) for k in range(19)))
    total = count_candidates(path, 1)
    valid = stage_one(Job(1, path, 1, 0, total, score=False), 3)
    assert total == 171 and len(valid) == 18
    assert 0.09 <= len(valid) / total <= 0.11
    parts = split_evenly(valid, 4)
    assert sorted(i for part in parts for i in part) == valid
    assert max(map(len, parts)) - min(map(len, parts)) <= 1

    data = random_dataset(np.random.default_rng(9), 20, 400)
    config = SearchConfig()
    assert run_pass_two_stage(path, 1, config, data, 4) == run_pass_even(path, 1, config, data, 4)


@pytest.mark.parametrize("m", [0, 1, 2, 4])
def test_marginal_pipeline_exact(m):
    data = table1_data()
    rng = np.random.default_rng(m)
    subsets = []
    for _ in range(50):
        size = int(rng.integers(1, 5))
        subsets.append([int(v) for v in rng.permutation(4)[:size]])
    shards = data.shards(m + 1)
    with MarginalPipeline(shards, backend="thread", timeout=30) as pipeline:
        for subset in subsets:
            assert pipeline.marginal(subset) == project(data, subset)
            assert serve_marginal(subset, shards) == project(data, subset)


def test_shard_merge_exact_on_real_counts():
    data = pim_small_data()
    assert not data.is_integral
    rng = np.random.default_rng(17)
    for parts in (2, 3, 5):
        shards = data.shards(parts)
        for _ in range(20):
            subset = [int(v) for v in rng.permutation(9)[:int(rng.integers(1, 5))]]
            whole = project(data, subset)
            assert serve_marginal(subset, shards) == whole
            order = rng.permutation(parts)
            merged = project(shards[order[0]], subset)
            for k in order[1:]:
                merged = merge_counts(merged, project(shards[k], subset))
            assert merged == whole
            assert np.array_equal(merged.values, whole.values) and merged.total == whole.total


def test_worker_failure_raises():
    data = table1_data()
    square = Graph(4, frozenset([(0, 1), (1, 2), (2, 3), (0, 3)]))
    executor = ExplorerExecutor(2, two_stage=False, backend="thread", timeout=30)
    with executor.session(data, 3):
        with pytest.raises(WorkerError):
            executor.evaluate_pass(square, None, 1, SearchConfig())


def test_explorer_reports_failure_before_init():
    from explorer_executor import explorer_main
    from messages import Failure, Terminate
    transport = ThreadTransport()
    inbox, manager = transport.mailbox(), transport.mailbox()
    handle = transport.start("explorer-x", explorer_main, ("explorer-x", inbox, manager))
    inbox.send(Job(1, Graph.empty(3), 1, 0, 3))
    reply = manager.receive(10)
    assert isinstance(reply, Failure) and reply.worker == "explorer-x"
    inbox.send(Terminate())
    transport.join([handle])


def test_receive_timeout():
    box = create_transport("thread").mailbox()
    with pytest.raises(WorkerError):
        box.receive(0.05)
    with pytest.raises(ValueError):
        create_transport("mpi")


def test_session_is_bound_to_one_dataset():
    data = table1_data()
    executor = SequentialExecutor()
    with executor.session(data, 3):
        with executor.session(data, 3):
            pass
        with pytest.raises(ValueError):
            with executor.session(parity_data(), 3):
                pass
    with pytest.raises(RuntimeError):
        executor.evaluate_pass(Graph.empty(4), None, 1, SearchConfig())


def test_messages_are_picklable():
    data = table1_data()
    for message in (Init(data, 3), Job(1, Graph(3, frozenset([(0, 1)])), 2, 0, 5),
                    Report("explorer-1", 1, CandidateMove(((0, 1),), 0, True, 0.5), 3)):
        copy = pickle.loads(pickle.dumps(message))
        assert type(copy) is type(message)
    assert pickle.loads(pickle.dumps(Init(data, 3))).data == data


def test_executor_factory():
    assert isinstance(ExecutorFactory.create_executor({"mode": "sequential"}), SequentialExecutor)
    even = ExecutorFactory.create_executor({"mode": "even", "explorers": 3})
    assert isinstance(even, ExplorerExecutor) and not even.two_stage and even.explorers == 3
    servers = ExecutorFactory.create_from_config({"runtime": {"mode": "two-stage", "explorers": 2, "servers": 2}})
    assert isinstance(servers, ServerExecutor) and servers.m == 2
    with pytest.raises(ValueError):
        ExecutorFactory.create_executor({"mode": "even", "servers": 1})
    with pytest.raises(ValueError):
        ExecutorFactory.create_executor({"mode": "greedy"})
    with pytest.raises(ValueError):
        ExecutorFactory.create_executor({"backend": "mpi"})
    with pytest.raises(ValueError):
        ExecutorFactory.create_executor({"explorers": 0})

    records = []
    handler = logging.Handler(logging.WARNING)
    handler.emit = records.append
    factory_logger = logging.getLogger("executor_factory")
    factory_logger.addHandler(handler)
    try:
        ExecutorFactory.create_executor({"mode": "sequential", "explorers": 4})
    finally:
        factory_logger.removeHandler(handler)
    assert any("sequential" in r.getMessage() for r in records)


def _pass_seconds(executor, data, g, forest, config) -> float:
    with executor.session(data, config.eta):
        started = time.perf_counter()
        executor.evaluate_pass(g, forest, 1, config)
        return time.perf_counter() - started


@pytest.mark.skipif(os.environ.get("DMN_SPEEDUP_TEST") != "1" or (os.cpu_count() or 1) < 4,
                    reason="需要 DMN_SPEEDUP_TEST=1 且至少4个CPU")
def test_parallel_speedup():
    data = random_dataset(np.random.default_rng(0), 110, 3000)
    g = Graph.empty(110)
    _, forest = chordal_structure(g)
    config = SearchConfig()
    times = {}
    for n in (1, 4):
        for two_stage in (False, True):
            executor = ExplorerExecutor(n, two_stage=two_stage, backend="process", timeout=600)
            times[(n, two_stage)] = _pass_seconds(executor, data, g, forest, config)
    assert times[(4, False)] <= 0.5 * times[(1, False)]
    for n in (1, 4):
        assert times[(n, True)] <= 1.1 * times[(n, False)]


def main():
    return run_tests(globals(), "并行运行时测试")


if __name__ == "__main__":
    sys.exit(main())
