"""Join-order optimization lab.

A reinforcement-learning join enumerator (episodes over forests of partial
join trees, an MLP policy trained with a clipped policy-gradient objective)
built against an analytic cost model, together with classical enumeration
baselines and a benchmark harness.
"""

from .baselines import (
    PlanResult,
    brute_force_all_trees,
    dp_optimal,
    greedy,
    left_deep_dp,
    quickpick,
)
from .catalog import (
    AttributeStats,
    Catalog,
    CatalogError,
    RelationStats,
    generate_catalog,
    global_attribute_index,
    load_catalog,
)
from .env import (
    Action,
    EnvConfig,
    EpisodeState,
    StateVector,
    action_set,
    apply_action,
    featurize,
    initial_state,
    is_terminal,
    reward,
)
from .jointree import (
    CostReport,
    Join,
    JoinTree,
    Leaf,
    PlanError,
    cost,
    depth_of_leaf,
    estimate_cardinality,
    leaf_set,
    tree_from_text,
    tree_to_text,
)
from .planner import JoinOrderPlanner
from .query import (
    JoinPredicate,
    JoinQuery,
    QueryError,
    SelectionPredicate,
    generate_workload,
    join_graph,
    load_workload,
    parse_query,
    selection_vector,
)
from .rl import TrainConfig, TrainMetrics, Trajectory, train

__version__ = "0.1.0"

__all__ = [
    "Action",
    "AttributeStats",
    "Catalog",
    "CatalogError",
    "CostReport",
    "EnvConfig",
    "EpisodeState",
    "Join",
    "JoinOrderPlanner",
    "JoinPredicate",
    "JoinQuery",
    "JoinTree",
    "Leaf",
    "PlanError",
    "PlanResult",
    "QueryError",
    "RelationStats",
    "SelectionPredicate",
    "StateVector",
    "TrainConfig",
    "TrainMetrics",
    "Trajectory",
    "action_set",
    "apply_action",
    "brute_force_all_trees",
    "cost",
    "depth_of_leaf",
    "dp_optimal",
    "estimate_cardinality",
    "featurize",
    "generate_catalog",
    "generate_workload",
    "global_attribute_index",
    "greedy",
    "initial_state",
    "is_terminal",
    "join_graph",
    "leaf_set",
    "left_deep_dp",
    "load_catalog",
    "load_workload",
    "parse_query",
    "quickpick",
    "reward",
    "selection_vector",
    "train",
    "tree_from_text",
    "tree_to_text",
]
