"""Command-line interface.

Subcommands: gen-catalog, gen-workload, train, eval, plan, bench-plan-time,
convergence. Every flag can also be supplied through a JSON config file via
``--config`` (flag names with dashes or underscores); explicit flags win.
Exit codes: 0 ok, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import nn, rl
from .bench import (
    convergence_csv,
    convergence_table,
    evaluate,
    plan_time_bench,
    plan_time_csv,
    read_metrics_jsonl,
)
from .catalog import generate_catalog, load_catalog
from .env import EnvConfig
from .jointree import cost, tree_to_text
from .query import generate_workload, load_workload, parse_query, workload_to_text
from .validation import QueryError

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


class _UsageError(Exception):
    pass


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0, help="master RNG seed")
    parser.add_argument("--config", type=Path, default=None, help="JSON file mirroring the flags")


def _add_train_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--n-max", type=int, default=10, help="maximum relations per query")
    parser.add_argument("--reward-mode", choices=("normalized", "reciprocal"), default="normalized")
    parser.add_argument("--lr", type=float, default=3e-4)
    parser.add_argument("--clip-eps", type=float, default=0.2)
    parser.add_argument("--epochs-per-update", type=int, default=8)
    parser.add_argument("--episodes-per-batch", type=int, default=32)
    parser.add_argument("--minibatch-size", type=int, default=64)
    parser.add_argument("--entropy-coef", type=float, default=0.03)
    parser.add_argument("--entropy-coef-final", type=float, default=0.0)
    parser.add_argument("--value-coef", type=float, default=0.5)


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog="rejoin-lab",
        description="Join-order optimization lab: train and benchmark a learned join enumerator.",
    )
    sub = parser.add_subparsers(dest="command", metavar="command")
    commands: dict[str, argparse.ArgumentParser] = {}

    p = commands["gen-catalog"] = sub.add_parser("gen-catalog", help="generate a synthetic catalog")
    _add_common(p)
    p.add_argument("--relations", type=int, default=10)
    p.add_argument("--rows", type=int, nargs=2, default=[500, 10000], metavar=("MIN", "MAX"))
    p.add_argument("--attrs", type=int, nargs=2, default=[2, 4], metavar=("MIN", "MAX"))
    p.add_argument("--out", type=Path, default=None, help="output file (default: stdout)")

    p = commands["gen-workload"] = sub.add_parser("gen-workload", help="generate a synthetic workload")
    _add_common(p)
    p.add_argument("--catalog", type=Path, default=None)
    p.add_argument("--shape", choices=("chain", "star", "clique", "random"), default="random")
    p.add_argument("--q", type=int, nargs=2, default=[4, 8], metavar=("MIN", "MAX"))
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--out", type=Path, default=None, help="output file (default: stdout)")

    p = commands["train"] = sub.add_parser("train", help="train the policy on a workload")
    _add_common(p)
    p.add_argument("--catalog", type=Path, default=None)
    p.add_argument("--workload", type=Path, default=None)
    p.add_argument("--episodes", type=int, default=5000)
    p.add_argument("--holdout", type=float, default=0.1, help="held-out fraction of the workload")
    p.add_argument("--out", type=Path, default=None, help="output directory")
    _add_train_flags(p)

    p = commands["eval"] = sub.add_parser("eval", help="evaluate a checkpoint on a workload")
    _add_common(p)
    p.add_argument("--catalog", type=Path, default=None)
    p.add_argument("--workload", type=Path, default=None)
    p.add_argument("--checkpoint", type=Path, default=None)
    p.add_argument("--quickpick-k", type=int, default=100)
    p.add_argument("--out", type=Path, default=None, help="output directory")

    p = commands["plan"] = sub.add_parser("plan", help="plan a single query")
    _add_common(p)
    p.add_argument("--catalog", type=Path, default=None)
    p.add_argument("--checkpoint", type=Path, default=None, help="optional; otherwise a fresh seeded net")
    p.add_argument("--n-max", type=int, default=10)
    p.add_argument("query", nargs="?", default=None, help="SQL text of the query")

    p = commands["bench-plan-time"] = sub.add_parser("bench-plan-time", help="planning-time benchmark across methods")
    _add_common(p)
    p.add_argument("--catalog", type=Path, default=None)
    p.add_argument("--workload", type=Path, default=None)
    p.add_argument("--checkpoint", type=Path, default=None, help="optional; otherwise a fresh seeded net")
    p.add_argument("--n-max", type=int, default=None, help="default: largest query in the workload")
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--quickpick-k", type=int, default=100)
    p.add_argument("--out", type=Path, default=None, help="output CSV (default: stdout)")

    p = commands["convergence"] = sub.add_parser("convergence", help="windowed convergence report from metrics")
    _add_common(p)
    p.add_argument("--metrics", type=Path, default=None)
    p.add_argument("--window", type=int, default=500)
    p.add_argument("--out", type=Path, default=None, help="output CSV (default: stdout)")

    return parser, commands


def _apply_config(
    parser: argparse.ArgumentParser,
    command_parser: argparse.ArgumentParser,
    args: argparse.Namespace,
    argv: list[str],
) -> argparse.Namespace:
    """Re-parse with defaults taken from the JSON config, explicit flags winning."""
    if args.config is None:
        return args
    try:
        loaded = json.loads(Path(args.config).read_text())
    except OSError as exc:
        raise _UsageError(f"cannot read config file: {exc}")
    except json.JSONDecodeError as exc:
        raise _UsageError(f"config file is not valid JSON: {exc}")
    if not isinstance(loaded, dict):
        raise _UsageError("config file must hold a JSON object")
    valid = set(vars(args))
    defaults = {}
    for key, value in loaded.items():
        dest = key.replace("-", "_")
        if dest not in valid or dest in ("config", "command"):
            raise _UsageError(f"unknown config key {key!r}")
        if dest in ("catalog", "workload", "checkpoint", "metrics", "out") and value is not None:
            value = Path(value)
        defaults[dest] = value
    command_parser.set_defaults(**defaults)
    return parser.parse_args(argv)


def _require(args: argparse.Namespace, *names: str) -> None:
    for name in names:
        if getattr(args, name) is None:
            raise _UsageError(f"--{name.replace('_', '-')} is required")


def _read_text(path: Path, what: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise RuntimeError(f"cannot read {what} {path}: {exc}") from exc


def _write_output(path: Path | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _load_inputs(args: argparse.Namespace, workload: bool = True):
    catalog = load_catalog(_read_text(args.catalog, "catalog"))
    if not workload:
        return catalog, None
    queries = load_workload(_read_text(args.workload, "workload"), catalog)
    if not queries:
        raise RuntimeError(f"workload {args.workload} contains no queries")
    return catalog, queries


def _env_config_for(args: argparse.Namespace, queries) -> EnvConfig:
    n_max = getattr(args, "n_max", None)
    if n_max is None:
        n_max = max(q.n_relations for q in queries)
    reward_mode = getattr(args, "reward_mode", "normalized")
    return EnvConfig(n_max=n_max, reward_mode=reward_mode)


def _net_for(args: argparse.Namespace, catalog, env_config: EnvConfig):
    from .env import state_vector_length

    if args.checkpoint is not None:
        net, _, meta = nn.load_checkpoint(args.checkpoint, expected_fingerprint=catalog.fingerprint())
        return net, EnvConfig(n_max=int(meta["n_max"]), reward_mode=env_config.reward_mode)
    net = nn.DenseNet(
        input_dim=state_vector_length(catalog, env_config),
        n_actions=env_config.n_max * env_config.n_max,
        seed=np.random.default_rng(args.seed),
    )
    return net, env_config


def _cmd_gen_catalog(args: argparse.Namespace) -> int:
    catalog = generate_catalog(
        seed=args.seed,
        n_relations=args.relations,
        row_range=tuple(args.rows),
        attrs_per_relation=tuple(args.attrs),
    )
    _write_output(args.out, catalog.to_text())
    return EXIT_OK


def _cmd_gen_workload(args: argparse.Namespace) -> int:
    _require(args, "catalog")
    catalog, _ = _load_inputs(args, workload=False)
    queries = generate_workload(
        catalog, seed=args.seed, shape=args.shape, q_range=tuple(args.q), count=args.count
    )
    _write_output(args.out, workload_to_text(queries))
    return EXIT_OK


def split_workload(queries, holdout: float, seed: int):
    """Deterministic train/held-out split; holdout rounds down, keeps >= 1 train query."""
    if not (0.0 <= holdout < 1.0):
        raise _UsageError(f"--holdout must be in [0, 1), got {holdout}")
    n_holdout = min(int(len(queries) * holdout), len(queries) - 1)
    order = np.random.default_rng(seed).permutation(len(queries))
    held = sorted(int(i) for i in order[:n_holdout])
    held_set = set(held)
    train = [q for i, q in enumerate(queries) if i not in held_set]
    return train, [queries[i] for i in held]


def _cmd_train(args: argparse.Namespace) -> int:
    _require(args, "catalog", "workload", "out")
    catalog, queries = _load_inputs(args)
    train_queries, holdout_queries = split_workload(queries, args.holdout, args.seed)
    env_config = EnvConfig(n_max=args.n_max, reward_mode=args.reward_mode)
    train_config = rl.TrainConfig(
        total_episodes=args.episodes,
        lr=args.lr,
        clip_eps=args.clip_eps,
        epochs_per_update=args.epochs_per_update,
        episodes_per_batch=args.episodes_per_batch,
        minibatch_size=args.minibatch_size,
        entropy_coef=args.entropy_coef,
        entropy_coef_final=args.entropy_coef_final,
        value_coef=args.value_coef,
        seed=args.seed,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "train_split.sql").write_text(workload_to_text(train_queries))
    (out_dir / "holdout_split.sql").write_text(workload_to_text(holdout_queries))

    with open(out_dir / "metrics.jsonl", "w") as metrics_file:
        net, metrics, opt_state = rl.train(
            catalog,
            train_queries,
            env_config,
            train_config,
            sink=lambda obj: metrics_file.write(json.dumps(obj) + "\n"),
        )
    with open(out_dir / "update_timings.jsonl", "w") as fh:
        for update in metrics.updates:
            fh.write(json.dumps({"update": update.update, "wall_time_ms": update.wall_time_ms}) + "\n")
    nn.save_checkpoint(
        out_dir / "model.ckpt", net, opt_state, n_max=env_config.n_max,
        catalog_fingerprint=catalog.fingerprint(),
    )
    sys.stderr.write(
        f"trained {train_config.total_episodes} episodes on {len(train_queries)} queries "
        f"({len(holdout_queries)} held out); outputs in {out_dir}\n"
    )
    return EXIT_OK


def _cmd_eval(args: argparse.Namespace) -> int:
    _require(args, "catalog", "workload", "checkpoint", "out")
    catalog, queries = _load_inputs(args)
    net, _, meta = nn.load_checkpoint(args.checkpoint, expected_fingerprint=catalog.fingerprint())
    env_config = EnvConfig(n_max=int(meta["n_max"]))
    for query in queries:
        if query.n_relations > env_config.n_max:
            raise RuntimeError(
                f"query {query.id!r} joins {query.n_relations} relations; checkpoint supports {env_config.n_max}"
            )
    report = evaluate(catalog, queries, net, env_config, quickpick_k=args.quickpick_k, seed=args.seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "eval.json").write_text(report.to_json())
    (out_dir / "eval.csv").write_text(report.to_csv())
    (out_dir / "eval_timings.csv").write_text(report.timings_csv())
    sys.stderr.write(f"evaluated {len(queries)} queries; outputs in {out_dir}\n")
    return EXIT_OK


def _cmd_plan(args: argparse.Namespace) -> int:
    from .bench import decode_plan

    _require(args, "catalog")
    if args.query is None:
        raise _UsageError("a query string is required")
    catalog, _ = _load_inputs(args, workload=False)
    try:
        query = parse_query(args.query, catalog, query_id="cli")
    except QueryError as exc:
        raise _UsageError(str(exc))
    env_config = EnvConfig(n_max=max(args.n_max, query.n_relations) if args.checkpoint is None else args.n_max)
    net, env_config = _net_for(args, catalog, env_config)
    if query.n_relations > env_config.n_max:
        raise RuntimeError(
            f"query joins {query.n_relations} relations; model supports {env_config.n_max}"
        )
    tree, _ = decode_plan(catalog, query, net, env_config)
    report = cost(tree, query, catalog)
    print(tree_to_text(tree))
    print(f"total_cost: {report.total_cost!r}")
    for node, card in report.per_node_cardinality:
        print(f"  {tree_to_text(node)}: {card!r}")
    return EXIT_OK


def _cmd_bench_plan_time(args: argparse.Namespace) -> int:
    _require(args, "catalog", "workload")
    catalog, queries = _load_inputs(args)
    if args.n_max is None:
        args.n_max = max(q.n_relations for q in queries)
    env_config = EnvConfig(n_max=args.n_max)
    net, env_config = _net_for(args, catalog, env_config)
    rows = plan_time_bench(
        catalog, queries, net, env_config,
        reps=args.reps, quickpick_k=args.quickpick_k, seed=args.seed,
    )
    _write_output(args.out, plan_time_csv(rows))
    return EXIT_OK


def _cmd_convergence(args: argparse.Namespace) -> int:
    _require(args, "metrics")
    records = read_metrics_jsonl(_read_text(args.metrics, "metrics"))
    if args.window < 1:
        raise _UsageError(f"--window must be >= 1, got {args.window}")
    try:
        table = convergence_table(records, window=args.window)
    except ValueError as exc:
        raise RuntimeError(str(exc)) from exc
    _write_output(args.out, convergence_csv(table))
    return EXIT_OK


_COMMANDS = {
    "gen-catalog": _cmd_gen_catalog,
    "gen-workload": _cmd_gen_workload,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "plan": _cmd_plan,
    "bench-plan-time": _cmd_bench_plan_time,
    "convergence": _cmd_convergence,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser, command_parsers = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        args = _apply_config(parser, command_parsers[args.command], args, argv)
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    except Exception as exc:  # runtime failures map to exit 1
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
