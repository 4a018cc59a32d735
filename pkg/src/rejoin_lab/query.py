"""SQL-subset join queries: parsing, predicate encodings, workload generation.

Grammar (keywords case-insensitive):

    SELECT * FROM rel (, rel)* [WHERE pred (AND pred)*]
    pred := rel.attr = rel.attr      -- equi-join
          | rel.attr OP number       -- selection, OP in {=, <, >, <=, >=}

Selectivities are assigned at parse time: equality selections get
1/distinct_count of the attribute, range selections get a fixed 1/3.
Workload files hold one query per line; ``--`` starts a comment.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .catalog import Catalog, CatalogError, global_attribute_index

RANGE_SELECTIVITY = 1.0 / 3.0
SELECTION_PROBABILITY = 0.3
EXTRA_EDGE_PROBABILITY = 0.25
COMPARISON_OPS = ("=", "<", ">", "<=", ">=")
WORKLOAD_SHAPES = ("chain", "star", "clique", "random")


class QueryError(ValueError):
    """Query text that cannot be parsed or resolved against the catalog."""


@dataclass(frozen=True)
class SelectionPredicate:
    relation: str
    attribute: str
    op: str
    constant: float
    selectivity: float

    def __post_init__(self) -> None:
        if self.op not in COMPARISON_OPS:
            raise QueryError(f"unsupported selection operator {self.op!r}")
        if not (0.0 < self.selectivity <= 1.0):
            raise QueryError(f"selectivity must be in (0, 1], got {self.selectivity}")

    def unparse(self) -> str:
        const = self.constant
        text = str(int(const)) if float(const).is_integer() else repr(const)
        return f"{self.relation}.{self.attribute} {self.op} {text}"


@dataclass(frozen=True)
class JoinPredicate:
    left_relation: str
    left_attribute: str
    right_relation: str
    right_attribute: str

    def __post_init__(self) -> None:
        if self.left_relation == self.right_relation:
            raise QueryError(
                f"join predicate must connect two distinct relations, got {self.left_relation!r} twice"
            )

    def canonical_key(self) -> tuple[tuple[str, str], tuple[str, str]]:
        """Order-insensitive identity for duplicate detection."""
        a = (self.left_relation, self.left_attribute)
        b = (self.right_relation, self.right_attribute)
        return (a, b) if a <= b else (b, a)

    def unparse(self) -> str:
        return (
            f"{self.left_relation}.{self.left_attribute} = "
            f"{self.right_relation}.{self.right_attribute}"
        )


@dataclass(frozen=True)
class JoinQuery:
    id: str
    relations: tuple[str, ...]
    join_predicates: tuple[JoinPredicate, ...]
    selection_predicates: tuple[SelectionPredicate, ...]

    def __post_init__(self) -> None:
        if len(self.relations) < 2:
            raise QueryError("a join query must reference at least 2 relations")
        if len(set(self.relations)) != len(self.relations):
            raise QueryError("duplicate relation in query (self-joins are not supported)")
        rel_set = set(self.relations)
        seen_joins = set()
        for jp in self.join_predicates:
            if jp.left_relation not in rel_set or jp.right_relation not in rel_set:
                raise QueryError(f"join predicate {jp.unparse()!r} references a relation not in FROM")
            key = jp.canonical_key()
            if key in seen_joins:
                raise QueryError(f"duplicate join predicate {jp.unparse()!r}")
            seen_joins.add(key)
        for sp in self.selection_predicates:
            if sp.relation not in rel_set:
                raise QueryError(f"selection predicate {sp.unparse()!r} references a relation not in FROM")

    @property
    def n_relations(self) -> int:
        return len(self.relations)

    def unparse(self) -> str:
        """Canonical SQL text; parsing it back yields an equal JoinQuery."""
        text = "SELECT * FROM " + ", ".join(self.relations)
        preds = [jp.unparse() for jp in self.join_predicates]
        preds += [sp.unparse() for sp in self.selection_predicates]
        if preds:
            text += " WHERE " + " AND ".join(preds)
        return text


_TOKEN_RE = re.compile(
    r"(?P<ws>\s+)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<number>-?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<sym><=|>=|[=<>,.*])"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise QueryError(f"syntax error at position {pos}: unexpected character {text[pos]!r}")
        if m.lastgroup != "ws":
            tokens.append((m.lastgroup, m.group(), pos))
        pos = m.end()
    return tokens


class _TokenStream:
    def __init__(self, tokens: list[tuple[str, str, int]], length: int):
        self.tokens = tokens
        self.pos = 0
        self.length = length

    def peek(self) -> tuple[str, str, int] | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self, expected: str) -> tuple[str, str, int]:
        tok = self.peek()
        if tok is None:
            raise QueryError(f"syntax error at position {self.length}: expected {expected}, got end of input")
        self.pos += 1
        return tok

    def expect_keyword(self, word: str) -> None:
        kind, value, at = self.next(word.upper())
        if kind != "ident" or value.upper() != word.upper():
            raise QueryError(f"syntax error at position {at}: expected {word.upper()}, got {value!r}")

    def expect_symbol(self, sym: str) -> None:
        kind, value, at = self.next(repr(sym))
        if kind != "sym" or value != sym:
            raise QueryError(f"syntax error at position {at}: expected {sym!r}, got {value!r}")

    def expect_ident(self, what: str) -> tuple[str, int]:
        kind, value, at = self.next(what)
        if kind != "ident":
            raise QueryError(f"syntax error at position {at}: expected {what}, got {value!r}")
        return value, at


def _resolve_column(catalog: Catalog, from_relations: list[str], relation: str, attribute: str, at: int):
    if not catalog.has_relation(relation):
        raise QueryError(f"unknown relation {relation!r} at position {at}")
    if relation not in from_relations:
        raise QueryError(f"relation {relation!r} at position {at} is not listed in FROM")
    try:
        catalog.relation(relation).attribute(attribute)
    except CatalogError:
        raise QueryError(f"unknown attribute {relation}.{attribute} at position {at}") from None


def _selection_selectivity(catalog: Catalog, relation: str, attribute: str, op: str) -> float:
    if op == "=":
        return 1.0 / catalog.distinct_count(relation, attribute)
    return RANGE_SELECTIVITY


def parse_query(text: str, catalog: Catalog, query_id: str = "q") -> JoinQuery:
    """Parse one query against the catalog and assign selectivities."""
    stream = _TokenStream(_tokenize(text), len(text))
    stream.expect_keyword("SELECT")
    stream.expect_symbol("*")
    stream.expect_keyword("FROM")

    relations: list[str] = []
    while True:
        name, at = stream.expect_ident("relation name")
        if not catalog.has_relation(name):
            raise QueryError(f"unknown relation {name!r} at position {at}")
        if name in relations:
            raise QueryError(f"relation {name!r} listed twice in FROM (self-joins are not supported)")
        relations.append(name)
        tok = stream.peek()
        if tok is not None and tok[0] == "sym" and tok[1] == ",":
            stream.next(",")
            continue
        break

    join_preds: list[JoinPredicate] = []
    sel_preds: list[SelectionPredicate] = []
    tok = stream.peek()
    if tok is not None:
        if not (tok[0] == "ident" and tok[1].upper() == "WHERE"):
            raise QueryError(f"syntax error at position {tok[2]}: expected WHERE or end of query, got {tok[1]!r}")
        stream.expect_keyword("WHERE")
        while True:
            lrel, lat = stream.expect_ident("relation name")
            stream.expect_symbol(".")
            lattr, _ = stream.expect_ident("attribute name")
            kind, op, op_at = stream.next("comparison operator")
            if kind != "sym" or op not in COMPARISON_OPS:
                raise QueryError(f"syntax error at position {op_at}: expected comparison operator, got {op!r}")
            rhs = stream.next("attribute reference or number")
            if rhs[0] == "ident":
                rrel, rat = rhs[1], rhs[2]
                stream.expect_symbol(".")
                rattr, _ = stream.expect_ident("attribute name")
                if op != "=":
                    raise QueryError(
                        f"non-equi join at position {op_at}: only '=' is supported between attributes"
                    )
                _resolve_column(catalog, relations, lrel, lattr, lat)
                _resolve_column(catalog, relations, rrel, rattr, rat)
                join_preds.append(JoinPredicate(lrel, lattr, rrel, rattr))
            elif rhs[0] == "number":
                _resolve_column(catalog, relations, lrel, lattr, lat)
                sel_preds.append(
                    SelectionPredicate(
                        relation=lrel,
                        attribute=lattr,
                        op=op,
                        constant=float(rhs[1]),
                        selectivity=_selection_selectivity(catalog, lrel, lattr, op),
                    )
                )
            else:
                raise QueryError(
                    f"syntax error at position {rhs[2]}: expected attribute reference or number, got {rhs[1]!r}"
                )
            tok = stream.peek()
            if tok is not None and tok[0] == "ident" and tok[1].upper() == "AND":
                stream.next("AND")
                continue
            break

    tok = stream.peek()
    if tok is not None:
        raise QueryError(f"syntax error at position {tok[2]}: unexpected trailing input {tok[1]!r}")
    return JoinQuery(
        id=query_id,
        relations=tuple(relations),
        join_predicates=tuple(join_preds),
        selection_predicates=tuple(sel_preds),
    )


def join_graph(query: JoinQuery, catalog: Catalog) -> np.ndarray:
    """Binary symmetric adjacency matrix over all catalog relations.

    Entry (i, j) is 1 iff a join predicate connects catalog relations i and j;
    the matrix covers the full catalog, not just the query's subset.
    """
    n = catalog.n_relations
    m = np.zeros((n, n), dtype=np.float64)
    for jp in query.join_predicates:
        i = catalog.relation_index(jp.left_relation)
        j = catalog.relation_index(jp.right_relation)
        m[i, j] = 1.0
        m[j, i] = 1.0
    return m


def selection_vector(query: JoinQuery, catalog: Catalog) -> np.ndarray:
    """Binary vector over all catalog attributes, 1 where a selection applies."""
    vec = np.zeros(catalog.n_attributes, dtype=np.float64)
    for sp in query.selection_predicates:
        vec[global_attribute_index(catalog, sp.relation, sp.attribute)] = 1.0
    return vec


def _join_key_attribute(catalog: Catalog, relation: str) -> str:
    """The relation's join key: its first attribute whose distinct count equals
    the row count (every generated relation has one), else the first attribute."""
    rel = catalog.relation(relation)
    for attr in rel.attributes:
        if attr.distinct_count == rel.row_count:
            return attr.name
    return rel.attributes[0].name


def _shape_edges(shape: str, relations: list[str], rng: np.random.Generator) -> list[tuple[str, str]]:
    q = len(relations)
    if shape == "chain":
        return [(relations[i], relations[i + 1]) for i in range(q - 1)]
    if shape == "star":
        hub = relations[0]
        return [(hub, other) for other in relations[1:]]
    if shape == "clique":
        return [(relations[i], relations[j]) for i in range(q) for j in range(i + 1, q)]
    if shape == "random":
        # random spanning tree by incremental attachment, then extra edges
        edges = []
        present = set()
        for j in range(1, q):
            parent = relations[int(rng.integers(0, j))]
            edges.append((parent, relations[j]))
            present.add(frozenset((parent, relations[j])))
        for i in range(q):
            for j in range(i + 1, q):
                pair = frozenset((relations[i], relations[j]))
                if pair not in present and rng.random() < EXTRA_EDGE_PROBABILITY:
                    edges.append((relations[i], relations[j]))
                    present.add(pair)
        return edges
    raise QueryError(f"unknown workload shape {shape!r}; expected one of {WORKLOAD_SHAPES}")


def generate_workload(
    catalog: Catalog,
    seed: int,
    shape: str,
    q_range: tuple[int, int],
    count: int,
) -> list[JoinQuery]:
    """Deterministically generate `count` connected queries of the given shape.

    Join predicates connect the participating relations' join-key attributes;
    selection predicates land on a random subset of the relations' attributes,
    each with probability 0.3.
    """
    if shape not in WORKLOAD_SHAPES:
        raise QueryError(f"unknown workload shape {shape!r}; expected one of {WORKLOAD_SHAPES}")
    q_lo, q_hi = q_range
    if q_lo < 2 or q_lo > q_hi or q_hi > catalog.n_relations:
        raise QueryError(
            f"invalid relation-count range [{q_lo}, {q_hi}] for a catalog of {catalog.n_relations} relations"
        )
    if count < 1:
        raise QueryError("count must be >= 1")
    rng = np.random.default_rng(seed)
    queries = []
    for i in range(count):
        q = int(rng.integers(q_lo, q_hi + 1))
        picks = rng.choice(catalog.n_relations, size=q, replace=False)
        relations = [catalog.relations[int(j)].name for j in picks]
        join_preds = []
        for left, right in _shape_edges(shape, relations, rng):
            join_preds.append(
                JoinPredicate(
                    left_relation=left,
                    left_attribute=_join_key_attribute(catalog, left),
                    right_relation=right,
                    right_attribute=_join_key_attribute(catalog, right),
                )
            )
        sel_preds = []
        for rel_name in relations:
            rel = catalog.relation(rel_name)
            for attr in rel.attributes:
                if rng.random() < SELECTION_PROBABILITY:
                    op = COMPARISON_OPS[int(rng.integers(len(COMPARISON_OPS)))]
                    constant = float(rng.integers(1, rel.row_count + 1))
                    sel_preds.append(
                        SelectionPredicate(
                            relation=rel_name,
                            attribute=attr.name,
                            op=op,
                            constant=constant,
                            selectivity=_selection_selectivity(catalog, rel_name, attr.name, op),
                        )
                    )
        queries.append(
            JoinQuery(
                id=f"{shape}_{i:03d}",
                relations=tuple(relations),
                join_predicates=tuple(join_preds),
                selection_predicates=tuple(sel_preds),
            )
        )
    return queries


def workload_to_text(queries: list[JoinQuery]) -> str:
    """One query per line, suitable for workload files."""
    return "".join(q.unparse() + "\n" for q in queries)


def load_workload(text: str, catalog: Catalog) -> list[JoinQuery]:
    """Parse a workload file: one query per line, ``--`` comments allowed."""
    queries = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("--", 1)[0].strip()
        if not line:
            continue
        try:
            queries.append(parse_query(line, catalog, query_id=f"q{len(queries) + 1:03d}"))
        except QueryError as exc:
            raise QueryError(f"line {lineno}: {exc}") from exc
    return queries
