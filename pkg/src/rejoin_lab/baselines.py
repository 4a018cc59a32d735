"""Classical join enumerators: exhaustive bushy DP, left-deep DP, greedy
pairing, random sampling (quickpick), and a tiny-scale brute-force oracle.

All enumerators share the cardinality model from `jointree`, whose per-subset
evaluation is canonical, so equal-cost comparisons between enumerators are
exact. Tie-breaking is deterministic everywhere: on equal cost the plan with
the lexicographically smallest parenthesized form wins.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .catalog import Catalog
from .jointree import CardinalityModel, Join, JoinTree, Leaf, cost, tree_to_text
from .query import JoinQuery
from .validation import as_rng

DP_GUARD_MAX_RELATIONS = 14
BRUTE_FORCE_MAX_RELATIONS = 5
QUICKPICK_DEFAULT_SAMPLES = 100


@dataclass(frozen=True)
class PlanResult:
    tree: JoinTree
    total_cost: float
    plans_considered: int
    wall_time_s: float


def _finish(tree: JoinTree, query: JoinQuery, catalog: Catalog, plans: int, started: float) -> PlanResult:
    return PlanResult(
        tree=tree,
        total_cost=cost(tree, query, catalog).total_cost,
        plans_considered=plans,
        wall_time_s=time.perf_counter() - started,
    )


def dp_optimal(query: JoinQuery, catalog: Catalog) -> PlanResult:
    """Minimum-cost bushy tree by dynamic programming over relation subsets.

    Considers every split of every subset (subsets without connecting
    predicates simply cost a cross product), so it is exact over the full
    bushy space.
    """
    q = query.n_relations
    if q > DP_GUARD_MAX_RELATIONS:
        raise ValueError(f"query joins {q} relations; bushy DP is guarded at {DP_GUARD_MAX_RELATIONS}")
    started = time.perf_counter()
    model = CardinalityModel(query, catalog)
    full = model.full_mask

    # per subset: accumulated cost of best plan, its text, and its split
    best_cost: list[float] = [0.0] * (full + 1)
    best_text: list[str] = [""] * (full + 1)
    best_split: list[tuple[int, int] | None] = [None] * (full + 1)
    cards: list[float] = [0.0] * (full + 1)
    for i, name in enumerate(model.relations):
        best_text[1 << i] = name

    plans = 0
    for subset in range(1, full + 1):
        if subset & (subset - 1) == 0:  # singleton
            continue
        cards[subset] = model.subset_cardinality(subset)
        chosen_cost = np.inf
        chosen_text = None
        chosen_split = None
        card = cards[subset]
        part = (subset - 1) & subset
        while part:
            rest = subset ^ part
            if part < rest:  # each unordered split once
                plans += 1
                candidate = (best_cost[part] + best_cost[rest]) + card
                if candidate < chosen_cost or (
                    candidate == chosen_cost
                    and chosen_text is not None
                    and min(
                        f"({best_text[part]} {best_text[rest]})",
                        f"({best_text[rest]} {best_text[part]})",
                    )
                    < chosen_text
                ):
                    text_a = f"({best_text[part]} {best_text[rest]})"
                    text_b = f"({best_text[rest]} {best_text[part]})"
                    if text_a <= text_b:
                        chosen_text, chosen_split = text_a, (part, rest)
                    else:
                        chosen_text, chosen_split = text_b, (rest, part)
                    chosen_cost = candidate
            part = (part - 1) & subset
        best_cost[subset] = chosen_cost
        best_text[subset] = chosen_text
        best_split[subset] = chosen_split

    def build(subset: int) -> JoinTree:
        split = best_split[subset]
        if split is None:
            return Leaf(model.relations[subset.bit_length() - 1])
        left, right = split
        return Join(build(left), build(right))

    return _finish(build(full), query, catalog, plans, started)


def left_deep_dp(query: JoinQuery, catalog: Catalog) -> PlanResult:
    """Minimum-cost left-deep tree (every join's right input a base relation)."""
    q = query.n_relations
    if q > DP_GUARD_MAX_RELATIONS:
        raise ValueError(f"query joins {q} relations; left-deep DP is guarded at {DP_GUARD_MAX_RELATIONS}")
    started = time.perf_counter()
    model = CardinalityModel(query, catalog)
    full = model.full_mask

    best_cost: list[float] = [0.0] * (full + 1)
    best_text: list[str] = [""] * (full + 1)
    best_last: list[int | None] = [None] * (full + 1)
    for i, name in enumerate(model.relations):
        best_text[1 << i] = name

    plans = 0
    for subset in range(1, full + 1):
        if subset & (subset - 1) == 0:
            continue
        card = model.subset_cardinality(subset)
        chosen_cost = np.inf
        chosen_text = None
        chosen_last = None
        for i, name in enumerate(model.relations):
            bit = 1 << i
            if not subset & bit:
                continue
            plans += 1
            prev = subset ^ bit
            candidate = (best_cost[prev] + 0.0) + card
            text = f"({best_text[prev]} {name})"
            if candidate < chosen_cost or (candidate == chosen_cost and text < chosen_text):
                chosen_cost, chosen_text, chosen_last = candidate, text, i
        best_cost[subset] = chosen_cost
        best_text[subset] = chosen_text
        best_last[subset] = chosen_last

    def build(subset: int) -> JoinTree:
        if subset & (subset - 1) == 0:
            return Leaf(model.relations[subset.bit_length() - 1])
        last = best_last[subset]
        return Join(build(subset ^ (1 << last)), Leaf(model.relations[last]))

    return _finish(build(full), query, catalog, plans, started)


def greedy(query: JoinQuery, catalog: Catalog) -> PlanResult:
    """Repeatedly join the forest pair whose join has the smallest estimated
    cardinality until a single tree remains."""
    started = time.perf_counter()
    model = CardinalityModel(query, catalog)
    forest: list[JoinTree] = [Leaf(r) for r in query.relations]
    masks = [model.mask_of((r,)) for r in query.relations]
    texts = [r for r in query.relations]
    plans = 0
    while len(forest) > 1:
        chosen = None
        chosen_key = None
        for i in range(len(forest)):
            for j in range(i + 1, len(forest)):
                plans += 1
                card = model.subset_cardinality(masks[i] | masks[j])
                key = (card, f"({texts[i]} {texts[j]})")
                if chosen is None or key < chosen_key:
                    chosen, chosen_key = (i, j), key
        i, j = chosen
        forest[i] = Join(forest[i], forest[j])
        masks[i] |= masks[j]
        texts[i] = chosen_key[1]
        del forest[j], masks[j], texts[j]
    return _finish(forest[0], query, catalog, plans, started)


def quickpick(
    query: JoinQuery,
    catalog: Catalog,
    k: int = QUICKPICK_DEFAULT_SAMPLES,
    rng: int | np.random.Generator | None = None,
) -> PlanResult:
    """Sample k complete join orderings uniformly at random (one random valid
    action per step) and keep the cheapest."""
    from .env import action_set, apply_action, initial_state, is_terminal

    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    generator = as_rng(rng)
    started = time.perf_counter()
    best_tree = None
    best_cost = np.inf
    for _ in range(k):
        state = initial_state(query)
        while not is_terminal(state):
            actions = action_set(state)
            state = apply_action(state, actions[int(generator.integers(len(actions)))])
        candidate = cost(state.forest[0], query, catalog).total_cost
        if candidate < best_cost:
            best_cost = candidate
            best_tree = state.forest[0]
    return _finish(best_tree, query, catalog, k, started)


def _all_shapes(leaf_names: tuple[str, ...]) -> list[JoinTree]:
    if len(leaf_names) == 1:
        return [Leaf(leaf_names[0])]
    shapes = []
    for split in range(1, len(leaf_names)):
        for left in _all_shapes(leaf_names[:split]):
            for right in _all_shapes(leaf_names[split:]):
                shapes.append(Join(left, right))
    return shapes


def brute_force_all_trees(query: JoinQuery, catalog: Catalog) -> PlanResult:
    """Cost every binary tree over every permutation of the query relations.

    Exact oracle for small queries; plans_considered = q! * Catalan(q - 1).
    """
    q = query.n_relations
    if q > BRUTE_FORCE_MAX_RELATIONS:
        raise ValueError(
            f"query joins {q} relations; brute force is guarded at {BRUTE_FORCE_MAX_RELATIONS}"
        )
    started = time.perf_counter()
    plans = 0
    best = None
    best_key = None
    for perm in permutations(query.relations):
        for tree in _all_shapes(perm):
            plans += 1
            key = (cost(tree, query, catalog).total_cost, tree_to_text(tree))
            if best is None or key < best_key:
                best, best_key = tree, key
    return _finish(best, query, catalog, plans, started)
