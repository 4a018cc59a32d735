from __future__ import annotations

import numpy as np
import pytest

from rejoin_lab.catalog import generate_catalog
from rejoin_lab.env import (
    Action,
    EnvConfig,
    EnvError,
    action_mask,
    action_set,
    action_to_slot,
    apply_action,
    featurize,
    initial_state,
    is_terminal,
    reward,
    slot_to_action,
    state_vector_length,
)
from rejoin_lab.jointree import Join, Leaf, cost, leaf_set, tree_to_text
from rejoin_lab.query import parse_query
from rejoin_lab.baselines import greedy


@pytest.fixture
def walkthrough_query(abcd_catalog):
    return parse_query(
        "SELECT * FROM A, B, C, D WHERE A.id = B.id AND A.id = D.id2 AND C.id3 = D.id3 AND B.a2 > 100",
        abcd_catalog,
    )


def test_initial_state_one_leaf_per_relation(walkthrough_query):
    state = initial_state(walkthrough_query, EnvConfig(n_max=10))
    assert [tree_to_text(t) for t in state.forest] == ["A", "B", "C", "D"]
    assert state.step == 0
    assert not is_terminal(state)


def test_initial_state_capacity_guard(walkthrough_query):
    with pytest.raises(EnvError, match="exceeding n_max"):
        initial_state(walkthrough_query, EnvConfig(n_max=3))


def test_action_set_pairs():
    catalog = generate_catalog(seed=1, n_relations=4, row_range=(10, 50), attrs_per_relation=(1, 2))
    q = parse_query(f"SELECT * FROM {catalog.relations[0].name}, {catalog.relations[1].name}", catalog)
    state = initial_state(q)
    assert action_set(state) == [Action(1, 2), Action(2, 1)]


def test_action_set_cardinality(walkthrough_query):
    state = initial_state(walkthrough_query)
    actions = action_set(state)
    assert len(actions) == 12
    assert len(set(actions)) == 12
    assert all(a.x != a.y for a in actions)


def test_action_set_terminal_error(walkthrough_query):
    state = initial_state(walkthrough_query)
    for action in ((1, 3), (2, 3), (1, 2)):
        state = apply_action(state, Action(*action))
    with pytest.raises(EnvError, match="terminal"):
        action_set(state)


def test_walkthrough_transitions(walkthrough_query):
    state = initial_state(walkthrough_query)
    state = apply_action(state, Action(1, 3))
    assert [tree_to_text(t) for t in state.forest] == ["(A C)", "B", "D"]
    state = apply_action(state, Action(2, 3))
    assert [tree_to_text(t) for t in state.forest] == ["(A C)", "(B D)"]
    assert not is_terminal(state)
    state = apply_action(state, Action(1, 2))
    assert [tree_to_text(t) for t in state.forest] == ["((A C) (B D))"]
    assert is_terminal(state)
    assert state.step == 3


def test_apply_action_validates(walkthrough_query):
    state = initial_state(walkthrough_query)
    with pytest.raises(EnvError, match="itself"):
        apply_action(state, Action(2, 2))
    with pytest.raises(EnvError, match="out of range"):
        apply_action(state, Action(1, 5))


def test_reward_zero_on_partial(walkthrough_query, abcd_catalog):
    state = initial_state(walkthrough_query)
    assert reward(state, abcd_catalog, EnvConfig()) == 0.0
    state = apply_action(state, Action(1, 3))
    assert reward(state, abcd_catalog, EnvConfig()) == 0.0


def test_reciprocal_reward(abcd_catalog):
    q = parse_query("SELECT * FROM A, B, C WHERE A.id = B.id AND C.id3 = B.id2", abcd_catalog)
    state = initial_state(q)
    state = apply_action(state, Action(1, 2))
    state = apply_action(state, Action(1, 2))
    # total cost = 2000 + 500 (see jointree tests)
    assert reward(state, abcd_catalog, EnvConfig(reward_mode="reciprocal")) == pytest.approx(1.0 / 2500.0)


def test_normalized_reward_is_one_on_the_greedy_plan(abcd_catalog):
    q = parse_query("SELECT * FROM A, B, C WHERE A.id = B.id AND C.id3 = B.id2", abcd_catalog)
    plan = greedy(q, abcd_catalog)

    def replay(target, forest):
        # merge forest entries bottom-up to reproduce the target tree
        order = []

        def visit(node):
            if isinstance(node, Join):
                visit(node.left)
                visit(node.right)
                order.append(node)

        visit(target)
        state_forest = list(forest)
        actions = []
        for node in order:
            x = state_forest.index(node.left) + 1
            y = state_forest.index(node.right) + 1
            actions.append(Action(x, y))
            state_forest = [t for i, t in enumerate(state_forest) if i not in (x - 1, y - 1)]
            state_forest.insert(min(x, y) - 1, node)
        return actions

    state = initial_state(q)
    for action in replay(plan.tree, state.forest):
        state = apply_action(state, action)
    assert tree_to_text(state.forest[0]) == tree_to_text(plan.tree)
    assert reward(state, abcd_catalog, EnvConfig(reward_mode="normalized")) == pytest.approx(1.0)


def test_featurize_tree_rows(walkthrough_query, abcd_catalog):
    config = EnvConfig(n_max=10)
    state = apply_action(initial_state(walkthrough_query, config), Action(1, 3))
    sv = featurize(state, abcd_catalog, config)
    assert sv.tree_block[0].tolist() == [0.5, 0.0, 0.5, 0.0]
    assert sv.tree_block[1].tolist() == [0.0, 1.0, 0.0, 0.0]
    assert sv.tree_block[2].tolist() == [0.0, 0.0, 0.0, 1.0]
    assert not sv.tree_block[3:].any()


def test_featurize_initial_rows_are_one_hot(walkthrough_query, abcd_catalog):
    sv = featurize(initial_state(walkthrough_query), abcd_catalog, EnvConfig(n_max=6))
    live = sv.tree_block[:4]
    assert np.array_equal(live, np.eye(4))
    assert not sv.tree_block[4:].any()


def test_featurize_blocks_and_flatten(walkthrough_query, abcd_catalog):
    config = EnvConfig(n_max=5)
    sv = featurize(initial_state(walkthrough_query), abcd_catalog, config)
    flat = sv.flatten()
    assert flat.shape == (state_vector_length(abcd_catalog, config),)
    n = abcd_catalog.n_relations
    tree_len = config.n_max * n
    assert np.array_equal(flat[:tree_len], sv.tree_block.ravel())
    assert np.array_equal(flat[tree_len : tree_len + n * n], sv.join_block.ravel())
    assert np.array_equal(flat[tree_len + n * n :], sv.selection_block)


def test_entries_are_reciprocal_depths(abcd_catalog, walkthrough_query):
    rng = np.random.default_rng(4)
    config = EnvConfig(n_max=8)
    q = walkthrough_query
    for _ in range(20):
        state = initial_state(q, config)
        while not is_terminal(state):
            actions = action_set(state)
            state = apply_action(state, actions[int(rng.integers(len(actions)))])
            sv = featurize(state, abcd_catalog, config)
            nonzero = sv.tree_block[sv.tree_block > 0]
            assert np.all(nonzero <= 1.0)
            for value in nonzero:
                assert (1.0 / value).is_integer()
                assert 1 <= 1.0 / value <= q.n_relations


def test_episode_length_and_leaf_conservation(abcd_catalog, walkthrough_query):
    rng = np.random.default_rng(11)
    q = walkthrough_query
    for _ in range(25):
        state = initial_state(q)
        seen = 0
        while not is_terminal(state):
            union = frozenset().union(*(leaf_set(t) for t in state.forest))
            assert union == frozenset(q.relations)
            actions = action_set(state)
            state = apply_action(state, actions[int(rng.integers(len(actions)))])
            seen += 1
        assert seen == q.n_relations - 1
        assert leaf_set(state.forest[0]) == frozenset(q.relations)


def test_slot_mapping_roundtrip():
    n_max = 10
    for x in range(1, n_max + 1):
        for y in range(1, n_max + 1):
            slot = action_to_slot(Action(x, y), n_max)
            assert slot_to_action(slot, n_max) == Action(x, y)


def test_action_mask_matches_action_set(walkthrough_query):
    state = initial_state(walkthrough_query)
    mask = action_mask(state, 10)
    legal = {action_to_slot(a, 10) for a in action_set(state)}
    assert set(np.flatnonzero(mask)) == legal
    assert mask.sum() == len(legal)


def test_env_config_validation():
    with pytest.raises(EnvError):
        EnvConfig(n_max=1)
    with pytest.raises(EnvError):
        EnvConfig(reward_mode="bogus")
