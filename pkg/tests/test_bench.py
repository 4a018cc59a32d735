from __future__ import annotations

import numpy as np
import pytest

from rejoin_lab import bench, nn
from rejoin_lab.catalog import generate_catalog
from rejoin_lab.env import EnvConfig, state_vector_length
from rejoin_lab.query import generate_workload


@pytest.fixture(scope="module")
def setup():
    catalog = generate_catalog(seed=6, n_relations=6, row_range=(100, 2000), attrs_per_relation=(2, 3))
    workload = generate_workload(catalog, seed=8, shape="random", q_range=(2, 5), count=6)
    env_config = EnvConfig(n_max=6)
    net = nn.DenseNet(
        input_dim=state_vector_length(catalog, env_config),
        n_actions=env_config.n_max**2,
        seed=3,
    )
    return catalog, workload, env_config, net


def test_decode_plan_is_deterministic(setup):
    catalog, workload, env_config, net = setup
    for query in workload:
        tree_a, decisions_a = bench.decode_plan(catalog, query, net, env_config)
        tree_b, decisions_b = bench.decode_plan(catalog, query, net, env_config)
        assert tree_a == tree_b
        assert decisions_a == decisions_b == query.n_relations - 1


def test_evaluate_report_structure(setup):
    catalog, workload, env_config, net = setup
    report = bench.evaluate(catalog, workload, net, env_config, quickpick_k=10, seed=2)
    assert len(report.rows) == len(workload)
    for row in report.rows:
        assert row.ratio_vs_greedy["greedy"] == 1.0
        for method in bench.EVAL_METHODS:
            assert row.costs[method] is not None
            assert row.ratio_vs_dp[method] >= 1.0
    summary = report.summary()
    assert summary["dp_optimal"]["median_ratio_vs_greedy"] <= 1.0


def test_evaluate_two_relation_queries_agree(setup):
    catalog, workload, env_config, net = setup
    two = generate_workload(catalog, seed=30, shape="chain", q_range=(2, 2), count=3)
    report = bench.evaluate(catalog, two, net, env_config, quickpick_k=5, seed=2)
    for row in report.rows:
        costs = {row.costs[m] for m in bench.EVAL_METHODS}
        assert len(costs) == 1


def test_evaluate_outputs_are_deterministic(setup):
    catalog, workload, env_config, net = setup
    a = bench.evaluate(catalog, workload, net, env_config, quickpick_k=10, seed=2)
    b = bench.evaluate(catalog, workload, net, env_config, quickpick_k=10, seed=2)
    assert a.to_json() == b.to_json()
    assert a.to_csv() == b.to_csv()
    assert a.to_csv().splitlines()[0] == "query_id,q,method,cost,ratio_vs_greedy,ratio_vs_dp,plans_considered"


def test_timings_live_outside_the_canonical_report(setup):
    catalog, workload, env_config, net = setup
    report = bench.evaluate(catalog, workload[:2], net, env_config, quickpick_k=5, seed=2)
    assert "wall" not in report.to_json()
    assert "time" not in report.to_csv().splitlines()[0]
    timings = report.timings_csv()
    assert timings.splitlines()[0] == "query_id,q,method,wall_time_ms"
    assert len(timings.splitlines()) == 2 * len(bench.EVAL_METHODS) + 1


def test_plan_time_bench_rows(setup):
    catalog, workload, env_config, net = setup
    rows = bench.plan_time_bench(catalog, workload[:3], net, env_config, reps=2, quickpick_k=5, seed=1)
    methods = {row["method"] for row in rows}
    assert methods == set(bench.PLAN_TIME_METHODS)
    for row in rows:
        if row["method"] == "rejoin":
            assert row["plans_considered"] == row["q"] - 1
        assert row["mean_ms"] >= 0.0
    csv_text = bench.plan_time_csv(rows)
    assert csv_text.splitlines()[0] == "q,method,mean_ms,plans_considered"


def test_convergence_constant_stream():
    records = [{"kind": "episode", "ratio_greedy": 1.0} for _ in range(10)]
    table = bench.convergence_table(records, window=3)
    assert all(value == 1.0 for _, value in table)
    assert [episode for episode, _ in table] == list(range(3, 11))


def test_convergence_window_larger_than_stream():
    records = [{"kind": "episode", "ratio_greedy": 2.0} for _ in range(4)]
    table = bench.convergence_table(records, window=100)
    assert table == [(4, 2.0)]


def test_convergence_decreasing_stream():
    records = [{"kind": "episode", "ratio_greedy": 10.0 - i} for i in range(10)]
    table = bench.convergence_table(records, window=4)
    means = [value for _, value in table]
    assert all(a > b for a, b in zip(means, means[1:]))


def test_convergence_rejects_empty():
    with pytest.raises(ValueError, match="no episode records"):
        bench.convergence_table([{"kind": "update"}], window=5)


def test_convergence_csv_shape():
    records = [{"kind": "episode", "ratio_greedy": float(i)} for i in range(5)]
    text = bench.convergence_csv(bench.convergence_table(records, window=2))
    lines = text.splitlines()
    assert lines[0] == "episode,mean_ratio_vs_greedy"
    assert len(lines) == 5  # 4 windows + header
