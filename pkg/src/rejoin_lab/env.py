"""Reinforcement-learning environment for join ordering.

An episode builds one join ordering for one query. The state is an ordered
forest of partial join trees (initially one leaf per query relation); an
action (x, y) joins the x-th and y-th forest entries (1-based) and inserts
the merged tree at position min(x, y). The episode ends when a single tree
covers the whole query; only that terminal state earns a reward.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .catalog import Catalog
from .jointree import Join, JoinTree, Leaf, cost, depth_of_leaf, leaf_set
from .query import JoinQuery, join_graph, selection_vector

REWARD_MODES = ("reciprocal", "normalized")


class EnvError(ValueError):
    """Invalid episode operation (capacity, bad action, terminal misuse)."""


class Action(NamedTuple):
    x: int
    y: int


@dataclass(frozen=True)
class EnvConfig:
    n_max: int = 10
    reward_mode: str = "normalized"

    def __post_init__(self) -> None:
        if self.n_max < 2:
            raise EnvError(f"n_max must be >= 2, got {self.n_max}")
        if self.reward_mode not in REWARD_MODES:
            raise EnvError(f"reward_mode must be one of {REWARD_MODES}, got {self.reward_mode!r}")


@dataclass(frozen=True)
class EpisodeState:
    forest: tuple[JoinTree, ...]
    query: JoinQuery
    step: int = 0


@dataclass(frozen=True)
class StateVector:
    """Fixed-size encoding of an episode state.

    tree_block: one row per forest slot (n_max rows, zero-padded), one column
    per catalog relation; a relation present in the row's tree contributes
    1/depth (1.0 for an unjoined leaf, smaller the deeper it sits).
    join_block: the query's join adjacency over all catalog relations.
    selection_block: per-attribute selection flags.
    """

    tree_block: np.ndarray
    join_block: np.ndarray
    selection_block: np.ndarray

    def flatten(self) -> np.ndarray:
        return np.concatenate(
            [self.tree_block.ravel(), self.join_block.ravel(), self.selection_block]
        )


def state_vector_length(catalog: Catalog, config: EnvConfig) -> int:
    n = catalog.n_relations
    return config.n_max * n + n * n + catalog.n_attributes


def initial_state(query: JoinQuery, config: EnvConfig | None = None) -> EpisodeState:
    """One leaf per query relation, in query order."""
    if config is not None and query.n_relations > config.n_max:
        raise EnvError(
            f"query {query.id!r} joins {query.n_relations} relations, exceeding n_max={config.n_max}"
        )
    return EpisodeState(forest=tuple(Leaf(r) for r in query.relations), query=query, step=0)


def is_terminal(state: EpisodeState) -> bool:
    return len(state.forest) == 1


def action_set(state: EpisodeState) -> list[Action]:
    """All ordered pairs of distinct forest positions, row-major."""
    size = len(state.forest)
    if size < 2:
        raise EnvError("no actions available in a terminal state")
    return [Action(x, y) for x in range(1, size + 1) for y in range(1, size + 1) if x != y]


def apply_action(state: EpisodeState, action: Action) -> EpisodeState:
    size = len(state.forest)
    x, y = action
    if size < 2:
        raise EnvError("cannot apply an action to a terminal state")
    if x == y:
        raise EnvError(f"action ({x}, {y}) would join a tree with itself")
    if not (1 <= x <= size and 1 <= y <= size):
        raise EnvError(f"action ({x}, {y}) out of range for forest of size {size}")
    merged = Join(state.forest[x - 1], state.forest[y - 1])
    keep = [t for i, t in enumerate(state.forest) if i not in (x - 1, y - 1)]
    keep.insert(min(x, y) - 1, merged)
    return EpisodeState(forest=tuple(keep), query=state.query, step=state.step + 1)


@lru_cache(maxsize=None)
def _greedy_cost(query: JoinQuery, catalog: Catalog) -> float:
    from .baselines import greedy  # deferred: baselines builds on this module

    return greedy(query, catalog).total_cost


def reward(state: EpisodeState, catalog: Catalog, config: EnvConfig) -> float:
    """Zero for partial orderings; at the terminal state, the reciprocal of the
    final tree's cost, optionally rescaled by the greedy baseline's cost so
    that matching greedy scores 1.0."""
    if not is_terminal(state):
        return 0.0
    total = cost(state.forest[0], state.query, catalog).total_cost
    if config.reward_mode == "reciprocal":
        return 1.0 / total
    return _greedy_cost(state.query, catalog) / total


def featurize(state: EpisodeState, catalog: Catalog, config: EnvConfig) -> StateVector:
    """Encode a state; rows beyond the live forest stay zero."""
    if len(state.forest) > config.n_max:
        raise EnvError(
            f"forest of size {len(state.forest)} exceeds n_max={config.n_max}"
        )
    n = catalog.n_relations
    tree_block = np.zeros((config.n_max, n), dtype=np.float64)
    for row, tree in enumerate(state.forest):
        for relation in leaf_set(tree):
            col = catalog.relation_index(relation)
            tree_block[row, col] = 1.0 / depth_of_leaf(tree, relation)
    return StateVector(
        tree_block=tree_block,
        join_block=join_graph(state.query, catalog),
        selection_block=selection_vector(state.query, catalog),
    )


def action_to_slot(action: Action, n_max: int) -> int:
    """Flat network-output slot for an action: (x-1)*n_max + (y-1)."""
    return (action.x - 1) * n_max + (action.y - 1)


def slot_to_action(slot: int, n_max: int) -> Action:
    return Action(slot // n_max + 1, slot % n_max + 1)


def action_mask(state: EpisodeState, n_max: int) -> np.ndarray:
    """Binary mask over the n_max*n_max action slots, 1 at legal actions."""
    mask = np.zeros(n_max * n_max, dtype=np.float64)
    for action in action_set(state):
        mask[action_to_slot(action, n_max)] = 1.0
    return mask
