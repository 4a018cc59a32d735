"""Binary join trees, textbook cardinality estimation, and the sum-of-
intermediates cost model that scores plans and produces rewards.

Estimator: a leaf's cardinality is its row count scaled by the selectivities
of its selection predicates; a join's cardinality is the product of its
inputs' cardinalities times one 1/max(distinct_left, distinct_right) factor
for every join predicate connecting the two sides (none applicable means a
plain cross product). Each predicate therefore contributes exactly once per
tree, at the node where its endpoints first meet, so a node's cardinality is
fully determined by its set of leaf relations. Cardinalities are evaluated
per relation-set, in a canonical order, which makes the value (including its
floating-point realization) identical across all tree shapes over the same
set. Plan cost is the sum of all join-node cardinalities.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterator, Union

from .catalog import Catalog
from .query import JoinQuery


@dataclass(frozen=True)
class Leaf:
    relation: str


@dataclass(frozen=True)
class Join:
    left: "JoinTree"
    right: "JoinTree"


JoinTree = Union[Leaf, Join]


class PlanError(ValueError):
    """Tree violates a structural precondition (coverage, duplicates)."""


def leaves(tree: JoinTree) -> Iterator[str]:
    """Leaf relation names in left-to-right order."""
    if isinstance(tree, Leaf):
        yield tree.relation
    else:
        yield from leaves(tree.left)
        yield from leaves(tree.right)


def leaf_set(tree: JoinTree) -> frozenset[str]:
    names = list(leaves(tree))
    result = frozenset(names)
    if len(result) != len(names):
        raise PlanError(f"tree contains a repeated base relation: {sorted(names)}")
    return result


def depth_of_leaf(tree: JoinTree, relation: str) -> int:
    """Level of the leaf counting from the root: a bare leaf is at level 1,
    a child of the root at level 2, and each further edge adds one."""
    if isinstance(tree, Leaf):
        if tree.relation == relation:
            return 1
        raise PlanError(f"relation {relation!r} not present in tree")
    for child in (tree.left, tree.right):
        try:
            return 1 + depth_of_leaf(child, relation)
        except PlanError:
            continue
    raise PlanError(f"relation {relation!r} not present in tree")


def tree_to_text(tree: JoinTree) -> str:
    """Parenthesized form, e.g. ``((A C) (B D))``; a bare leaf prints as its name."""
    if isinstance(tree, Leaf):
        return tree.relation
    return f"({tree_to_text(tree.left)} {tree_to_text(tree.right)})"


_TREE_TOKEN_RE = re.compile(r"\(|\)|[A-Za-z_][A-Za-z0-9_]*")


def tree_from_text(text: str) -> JoinTree:
    """Inverse of tree_to_text."""
    tokens = _TREE_TOKEN_RE.findall(text)
    if "".join(tokens) != re.sub(r"\s+", "", text):
        raise PlanError(f"malformed tree text {text!r}")
    pos = 0

    def parse() -> JoinTree:
        nonlocal pos
        if pos >= len(tokens):
            raise PlanError(f"malformed tree text {text!r}")
        tok = tokens[pos]
        pos += 1
        if tok == "(":
            left = parse()
            right = parse()
            if pos >= len(tokens) or tokens[pos] != ")":
                raise PlanError(f"malformed tree text {text!r}")
            pos += 1
            return Join(left, right)
        if tok == ")":
            raise PlanError(f"malformed tree text {text!r}")
        return Leaf(tok)

    tree = parse()
    if pos != len(tokens):
        raise PlanError(f"malformed tree text {text!r}")
    return tree


class CardinalityModel:
    """Per-query cardinality evaluator over relation subsets.

    Relations are numbered in catalog order; subsets are bitmasks over that
    numbering. `subset_cardinality` multiplies base cardinalities in catalog
    order and predicate factors in query order, always the same sequence of
    floating-point operations, so equal subsets produce bit-equal values no
    matter which plan asked.
    """

    def __init__(self, query: JoinQuery, catalog: Catalog):
        self.query = query
        self.catalog = catalog
        ordered = sorted(query.relations, key=catalog.relation_index)
        self.relations = ordered
        self.bit_of = {name: i for i, name in enumerate(ordered)}
        self.base_cards = [self._base_cardinality(name) for name in ordered]
        self.predicate_factors: list[tuple[int, float]] = []
        for jp in query.join_predicates:
            mask = (1 << self.bit_of[jp.left_relation]) | (1 << self.bit_of[jp.right_relation])
            d_left = catalog.distinct_count(jp.left_relation, jp.left_attribute)
            d_right = catalog.distinct_count(jp.right_relation, jp.right_attribute)
            self.predicate_factors.append((mask, 1.0 / max(d_left, d_right)))
        self.full_mask = (1 << len(ordered)) - 1

    def _base_cardinality(self, relation: str) -> float:
        card = float(self.catalog.relation(relation).row_count)
        for sp in self.query.selection_predicates:
            if sp.relation == relation:
                card *= sp.selectivity
        return card

    def mask_of(self, names) -> int:
        mask = 0
        for name in names:
            try:
                mask |= 1 << self.bit_of[name]
            except KeyError:
                raise PlanError(f"relation {name!r} is not part of query {self.query.id!r}") from None
        return mask

    def subset_cardinality(self, mask: int) -> float:
        card = 1.0
        for i, base in enumerate(self.base_cards):
            if mask & (1 << i):
                card *= base
        for pred_mask, factor in self.predicate_factors:
            if pred_mask & mask == pred_mask:
                card *= factor
        return card

    def tree_cost(self, tree: JoinTree) -> tuple[float, int]:
        """(sum of join-node cardinalities, leaf mask) for a subtree."""
        if isinstance(tree, Leaf):
            return 0.0, self.mask_of((tree.relation,))
        left_total, left_mask = self.tree_cost(tree.left)
        right_total, right_mask = self.tree_cost(tree.right)
        if left_mask & right_mask:
            raise PlanError("tree contains a repeated base relation")
        mask = left_mask | right_mask
        total = (left_total + right_total) + self.subset_cardinality(mask)
        return total, mask


@dataclass(frozen=True)
class CostReport:
    total_cost: float
    per_node_cardinality: tuple[tuple[JoinTree, float], ...]


def estimate_cardinality(tree: JoinTree, query: JoinQuery, catalog: Catalog) -> float:
    """Estimated result rows of a (partial) plan whose leaves lie in the query."""
    model = CardinalityModel(query, catalog)
    return model.subset_cardinality(model.mask_of(leaf_set(tree)))


def cost(tree: JoinTree, query: JoinQuery, catalog: Catalog) -> CostReport:
    """Total plan cost: the sum of estimated cardinalities of all join nodes.

    The tree must cover exactly the query's relations.
    """
    covered = leaf_set(tree)
    wanted = frozenset(query.relations)
    if covered != wanted:
        missing = sorted(wanted - covered)
        extra = sorted(covered - wanted)
        raise PlanError(
            f"tree does not cover query {query.id!r} exactly"
            + (f"; missing {missing}" if missing else "")
            + (f"; extra {extra}" if extra else "")
        )
    model = CardinalityModel(query, catalog)
    nodes: list[tuple[JoinTree, float]] = []

    def walk(node: JoinTree) -> tuple[float, int]:
        if isinstance(node, Leaf):
            return 0.0, model.mask_of((node.relation,))
        left_total, left_mask = walk(node.left)
        right_total, right_mask = walk(node.right)
        mask = left_mask | right_mask
        card = model.subset_cardinality(mask)
        nodes.append((node, card))
        return (left_total + right_total) + card, mask

    total, _ = walk(tree)
    return CostReport(total_cost=total, per_node_cardinality=tuple(nodes))
