"""Experiment harness: held-out evaluation against the baselines, planning-time
measurement, and convergence tables from training metrics.

Canonical report files (JSON/CSV) contain only deterministic values so that
re-runs with the same seed are byte-identical; measured wall-times go to
separate timing files.
"""

from __future__ import annotations

import io
import json
import time
from dataclasses import dataclass, field
from statistics import mean, median

import numpy as np

from . import nn, rl
from .baselines import (
    DP_GUARD_MAX_RELATIONS,
    PlanResult,
    dp_optimal,
    greedy,
    left_deep_dp,
    quickpick,
)
from .catalog import Catalog
from .env import (
    EnvConfig,
    action_mask,
    apply_action,
    featurize,
    initial_state,
    is_terminal,
    slot_to_action,
)
from .jointree import JoinTree, cost, tree_to_text
from .query import JoinQuery

BASE_METHOD = "greedy"
EVAL_METHODS = ("rejoin", "greedy", "left_deep", "dp_optimal", "quickpick")


def decode_plan(
    catalog: Catalog, query: JoinQuery, net: nn.DenseNet, env_config: EnvConfig
) -> tuple[JoinTree, int]:
    """Greedy decoding: follow the mode of the action distribution, no sampling.

    Returns the final tree and the number of decisions taken (always q - 1).
    """
    state = initial_state(query, env_config)
    decisions = 0
    while not is_terminal(state):
        vec = featurize(state, catalog, env_config).flatten()
        logits, _ = nn.forward(net, vec)
        dist = nn.masked_softmax(logits, action_mask(state, env_config.n_max))
        slot = int(np.argmax(dist.probabilities))
        state = apply_action(state, slot_to_action(slot, env_config.n_max))
        decisions += 1
    return state.forest[0], decisions


@dataclass(frozen=True)
class QueryEval:
    query_id: str
    n_relations: int
    costs: dict[str, float | None]
    plans_considered: dict[str, int | None]
    ratio_vs_greedy: dict[str, float | None]
    ratio_vs_dp: dict[str, float | None]
    times_ms: dict[str, float | None]
    rejoin_tree: str


@dataclass
class EvalReport:
    base_method: str
    quickpick_k: int
    rows: list[QueryEval] = field(default_factory=list)

    def summary(self) -> dict:
        out: dict[str, dict[str, float | None]] = {}
        for method in EVAL_METHODS:
            ratios = [r.ratio_vs_greedy[method] for r in self.rows if r.ratio_vs_greedy[method] is not None]
            out[method] = {
                "median_ratio_vs_greedy": float(median(ratios)) if ratios else None,
                "mean_ratio_vs_greedy": float(mean(ratios)) if ratios else None,
            }
        return out

    def to_json_obj(self) -> dict:
        return {
            "base_method": self.base_method,
            "quickpick_k": self.quickpick_k,
            "summary": self.summary(),
            "queries": [
                {
                    "query_id": r.query_id,
                    "q": r.n_relations,
                    "costs": r.costs,
                    "plans_considered": r.plans_considered,
                    "ratio_vs_greedy": r.ratio_vs_greedy,
                    "ratio_vs_dp": r.ratio_vs_dp,
                    "rejoin_tree": r.rejoin_tree,
                }
                for r in self.rows
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj(), indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("query_id,q,method,cost,ratio_vs_greedy,ratio_vs_dp,plans_considered\n")
        for row in self.rows:
            for method in EVAL_METHODS:
                buf.write(
                    f"{row.query_id},{row.n_relations},{method},"
                    f"{_csv_num(row.costs[method])},{_csv_num(row.ratio_vs_greedy[method])},"
                    f"{_csv_num(row.ratio_vs_dp[method])},{_csv_num(row.plans_considered[method])}\n"
                )
        return buf.getvalue()

    def timings_csv(self) -> str:
        buf = io.StringIO()
        buf.write("query_id,q,method,wall_time_ms\n")
        for row in self.rows:
            for method in EVAL_METHODS:
                buf.write(
                    f"{row.query_id},{row.n_relations},{method},{_csv_num(row.times_ms[method])}\n"
                )
        return buf.getvalue()


def _csv_num(value) -> str:
    if value is None:
        return ""
    return repr(value) if isinstance(value, float) else str(value)


def evaluate(
    catalog: Catalog,
    queries: list[JoinQuery],
    net: nn.DenseNet,
    env_config: EnvConfig,
    quickpick_k: int = 100,
    seed: int = 0,
) -> EvalReport:
    """Plan every query with the trained policy and all baselines."""
    report = EvalReport(base_method=BASE_METHOD, quickpick_k=quickpick_k)
    root = np.random.SeedSequence(seed)
    for query, qp_seed in zip(queries, root.spawn(len(queries))):
        costs: dict[str, float | None] = {}
        plans: dict[str, int | None] = {}
        times: dict[str, float | None] = {}

        started = time.perf_counter()
        tree, decisions = decode_plan(catalog, query, net, env_config)
        times["rejoin"] = (time.perf_counter() - started) * 1e3
        costs["rejoin"] = cost(tree, query, catalog).total_cost
        plans["rejoin"] = decisions

        for method, plan_fn in (
            ("greedy", greedy),
            ("left_deep", left_deep_dp),
            ("quickpick", lambda q, c: quickpick(q, c, k=quickpick_k, rng=np.random.default_rng(qp_seed))),
        ):
            result: PlanResult = plan_fn(query, catalog)
            costs[method] = result.total_cost
            plans[method] = result.plans_considered
            times[method] = result.wall_time_s * 1e3
        if query.n_relations <= DP_GUARD_MAX_RELATIONS:
            result = dp_optimal(query, catalog)
            costs["dp_optimal"] = result.total_cost
            plans["dp_optimal"] = result.plans_considered
            times["dp_optimal"] = result.wall_time_s * 1e3
        else:
            costs["dp_optimal"] = None
            plans["dp_optimal"] = None
            times["dp_optimal"] = None

        base = costs[BASE_METHOD]
        dp_cost = costs["dp_optimal"]
        report.rows.append(
            QueryEval(
                query_id=query.id,
                n_relations=query.n_relations,
                costs=costs,
                plans_considered=plans,
                ratio_vs_greedy={m: (costs[m] / base if costs[m] is not None else None) for m in EVAL_METHODS},
                ratio_vs_dp={
                    m: (costs[m] / dp_cost if costs[m] is not None and dp_cost is not None else None)
                    for m in EVAL_METHODS
                },
                times_ms=times,
                rejoin_tree=tree_to_text(tree),
            )
        )
    return report


PLAN_TIME_METHODS = ("rejoin", "rejoin_update", "dp_optimal", "left_deep", "greedy", "quickpick")


def plan_time_bench(
    catalog: Catalog,
    queries: list[JoinQuery],
    net: nn.DenseNet,
    env_config: EnvConfig,
    reps: int = 10,
    quickpick_k: int = 100,
    seed: int = 0,
) -> list[dict]:
    """Mean planning wall-time per (relation count, method).

    `rejoin` times pure inference (greedy decoding); `rejoin_update` times a
    sampled rollout plus one policy update on that single episode, applied to
    a scratch copy of the network, mirroring planning during training.
    """
    update_config = rl.TrainConfig(
        total_episodes=0, episodes_per_batch=1, epochs_per_update=1, seed=seed
    )
    samples: dict[tuple[int, str], list[float]] = {}
    plan_counts: dict[tuple[int, str], list[int]] = {}
    root = np.random.SeedSequence(seed)

    def record(q: int, method: str, elapsed_s: float, plans: int) -> None:
        samples.setdefault((q, method), []).append(elapsed_s * 1e3)
        plan_counts.setdefault((q, method), []).append(plans)

    for query, query_seed in zip(queries, root.spawn(len(queries))):
        q = query.n_relations
        for rep_seed in query_seed.spawn(reps):
            rng = np.random.default_rng(rep_seed)
            started = time.perf_counter()
            _, decisions = decode_plan(catalog, query, net, env_config)
            record(q, "rejoin", time.perf_counter() - started, decisions)

            scratch = net.copy()
            opt_state = nn.init_adam(scratch)
            started = time.perf_counter()
            traj = rl.collect_episode(catalog, query, scratch, env_config, rng)
            rl.ppo_update(scratch, [traj], update_config, opt_state, rng)
            record(q, "rejoin_update", time.perf_counter() - started, len(traj.steps))

            for method, plan_fn in (
                ("dp_optimal", dp_optimal),
                ("left_deep", left_deep_dp),
                ("greedy", greedy),
                ("quickpick", lambda qu, c: quickpick(qu, c, k=quickpick_k, rng=rng)),
            ):
                result = plan_fn(query, catalog)
                record(q, method, result.wall_time_s, result.plans_considered)

    rows = []
    for (q, method) in sorted(samples, key=lambda key: (key[0], PLAN_TIME_METHODS.index(key[1]))):
        rows.append(
            {
                "q": q,
                "method": method,
                "mean_ms": mean(samples[(q, method)]),
                "plans_considered": mean(plan_counts[(q, method)]),
            }
        )
    return rows


def plan_time_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    buf.write("q,method,mean_ms,plans_considered\n")
    for row in rows:
        plans = row["plans_considered"]
        plans_text = str(int(plans)) if float(plans).is_integer() else repr(float(plans))
        buf.write(f"{row['q']},{row['method']},{row['mean_ms']:.6f},{plans_text}\n")
    return buf.getvalue()


def convergence_table(episode_records: list[dict], window: int = 500) -> list[tuple[int, float]]:
    """Sliding-window mean of the per-episode cost ratio versus greedy.

    One row per episode once the window is full; if the stream is shorter than
    the window, a single row over all episodes.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    ratios = [rec["ratio_greedy"] for rec in episode_records if rec.get("kind") == "episode"]
    if not ratios:
        raise ValueError("metrics stream contains no episode records")
    if window >= len(ratios):
        return [(len(ratios), float(mean(ratios)))]
    out = []
    running = sum(ratios[:window])
    out.append((window, running / window))
    for i in range(window, len(ratios)):
        running += ratios[i] - ratios[i - window]
        out.append((i + 1, running / window))
    return out


def convergence_csv(table: list[tuple[int, float]]) -> str:
    buf = io.StringIO()
    buf.write("episode,mean_ratio_vs_greedy\n")
    for episode, value in table:
        buf.write(f"{episode},{value!r}\n")
    return buf.getvalue()


def read_metrics_jsonl(text: str) -> list[dict]:
    records = []
    for line in text.splitlines():
        line = line.strip()
        if line:
            records.append(json.loads(line))
    return records
