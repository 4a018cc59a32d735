from __future__ import annotations

import numpy as np
import pytest

from rejoin_lab.catalog import generate_catalog, global_attribute_index
from rejoin_lab.query import (
    QueryError,
    generate_workload,
    join_graph,
    load_workload,
    parse_query,
    selection_vector,
    workload_to_text,
)


def fig4_query(abcd_catalog):
    return parse_query(
        "SELECT * FROM A, B, C, D WHERE A.id = B.id AND A.id = D.id2 AND C.id3 = D.id3 AND B.a2 > 100",
        abcd_catalog,
    )


def test_parse_extracts_joins_and_selections(abcd_catalog):
    q = parse_query("SELECT * FROM A, B WHERE A.id = B.id AND B.a2 > 100", abcd_catalog)
    assert q.relations == ("A", "B")
    assert len(q.join_predicates) == 1
    assert len(q.selection_predicates) == 1
    sel = q.selection_predicates[0]
    assert (sel.relation, sel.attribute, sel.op, sel.constant) == ("B", "a2", ">", 100.0)


def test_keywords_are_case_insensitive(abcd_catalog):
    q = parse_query("select * from A, B where A.id = B.id", abcd_catalog)
    assert q.relations == ("A", "B")


def test_selectivity_rules(abcd_catalog):
    q = parse_query("SELECT * FROM A, B WHERE B.a2 > 100 AND B.a2 = 7", abcd_catalog)
    by_op = {sel.op: sel.selectivity for sel in q.selection_predicates}
    assert by_op[">"] == pytest.approx(1.0 / 3.0)
    assert by_op["="] == pytest.approx(1.0 / 500)  # distinct_count of B.a2


def test_non_equi_join_rejected(abcd_catalog):
    with pytest.raises(QueryError, match="non-equi"):
        parse_query("SELECT * FROM A, B WHERE A.id < B.id", abcd_catalog)


def test_unknown_relation_rejected(abcd_catalog):
    with pytest.raises(QueryError, match="unknown relation"):
        parse_query("SELECT * FROM A, Z WHERE A.id = Z.id", abcd_catalog)


def test_self_join_rejected(abcd_catalog):
    with pytest.raises(QueryError, match="twice"):
        parse_query("SELECT * FROM A, A WHERE A.id = A.id", abcd_catalog)


def test_predicate_must_reference_from_clause(abcd_catalog):
    with pytest.raises(QueryError, match="not listed in FROM"):
        parse_query("SELECT * FROM A, B WHERE A.id = C.id3", abcd_catalog)


def test_unknown_attribute_rejected(abcd_catalog):
    with pytest.raises(QueryError, match="unknown attribute"):
        parse_query("SELECT * FROM A, B WHERE A.nope = B.id", abcd_catalog)


def test_duplicate_join_predicate_rejected(abcd_catalog):
    with pytest.raises(QueryError, match="duplicate join predicate"):
        parse_query("SELECT * FROM A, B WHERE A.id = B.id AND B.id = A.id", abcd_catalog)


def test_trailing_garbage_rejected(abcd_catalog):
    with pytest.raises(QueryError, match="syntax error"):
        parse_query("SELECT * FROM A, B WHERE A.id = B.id GROUP", abcd_catalog)


def test_join_graph_matches_documented_entries(abcd_catalog):
    m = join_graph(fig4_query(abcd_catalog), abcd_catalog)
    assert m[0, 1] == 1 and m[1, 0] == 1  # A.id = B.id
    assert m[1, 2] == 0 and m[2, 1] == 0  # no B-C predicate
    assert m[0, 3] == 1 and m[2, 3] == 1
    assert np.array_equal(m, m.T)
    assert np.all(np.diag(m) == 0)


def test_join_graph_zero_without_predicates(abcd_catalog):
    q = parse_query("SELECT * FROM A, C", abcd_catalog)
    assert not join_graph(q, abcd_catalog).any()


def test_selection_vector_marks_global_attribute(abcd_catalog):
    q = fig4_query(abcd_catalog)
    vec = selection_vector(q, abcd_catalog)
    hot = global_attribute_index(abcd_catalog, "B", "a2")
    assert vec[hot] == 1.0
    assert vec.sum() == 1.0


def test_selection_vector_idempotent_on_repeats(abcd_catalog):
    q = parse_query("SELECT * FROM A, B WHERE B.a2 > 100 AND B.a2 > 200", abcd_catalog)
    assert selection_vector(q, abcd_catalog).sum() == 1.0


def test_selection_vector_zero_without_selections(abcd_catalog):
    q = parse_query("SELECT * FROM A, B WHERE A.id = B.id", abcd_catalog)
    assert not selection_vector(q, abcd_catalog).any()


@pytest.fixture(scope="module")
def synth_catalog():
    return generate_catalog(seed=3, n_relations=8, row_range=(100, 5000), attrs_per_relation=(2, 4))


def edges_of(query):
    return {frozenset((jp.left_relation, jp.right_relation)) for jp in query.join_predicates}


def is_connected(query):
    rels = set(query.relations)
    seen = {query.relations[0]}
    frontier = [query.relations[0]]
    adj = edges_of(query)
    while frontier:
        cur = frontier.pop()
        for other in rels - seen:
            if frozenset((cur, other)) in adj:
                seen.add(other)
                frontier.append(other)
    return seen == rels


def test_chain_workload_is_a_path(synth_catalog):
    (q,) = generate_workload(synth_catalog, seed=5, shape="chain", q_range=(4, 4), count=1)
    assert len(q.join_predicates) == 3
    degree = {}
    for jp in q.join_predicates:
        degree[jp.left_relation] = degree.get(jp.left_relation, 0) + 1
        degree[jp.right_relation] = degree.get(jp.right_relation, 0) + 1
    assert sorted(degree.values()) == [1, 1, 2, 2]
    assert is_connected(q)


def test_star_workload_has_a_hub(synth_catalog):
    (q,) = generate_workload(synth_catalog, seed=5, shape="star", q_range=(5, 5), count=1)
    degree = {}
    for jp in q.join_predicates:
        degree[jp.left_relation] = degree.get(jp.left_relation, 0) + 1
        degree[jp.right_relation] = degree.get(jp.right_relation, 0) + 1
    assert sorted(degree.values()) == [1, 1, 1, 1, 4]


def test_clique_workload_edge_count(synth_catalog):
    (q,) = generate_workload(synth_catalog, seed=5, shape="clique", q_range=(4, 4), count=1)
    assert len(q.join_predicates) == 6


def test_random_workload_connected(synth_catalog):
    for q in generate_workload(synth_catalog, seed=5, shape="random", q_range=(3, 8), count=20):
        assert is_connected(q)


def test_workload_is_deterministic(synth_catalog):
    a = generate_workload(synth_catalog, seed=9, shape="chain", q_range=(2, 5), count=10)
    b = generate_workload(synth_catalog, seed=9, shape="chain", q_range=(2, 5), count=10)
    assert a == b


def test_workload_rejects_bad_range(synth_catalog):
    with pytest.raises(QueryError):
        generate_workload(synth_catalog, seed=1, shape="chain", q_range=(2, 99), count=1)


def test_parse_unparse_fixed_point(synth_catalog):
    for shape in ("chain", "star", "clique", "random"):
        for q in generate_workload(synth_catalog, seed=13, shape=shape, q_range=(2, 6), count=5):
            reparsed = parse_query(q.unparse(), synth_catalog, query_id=q.id)
            assert reparsed == q
            assert parse_query(reparsed.unparse(), synth_catalog, query_id=q.id) == reparsed


def test_workload_file_roundtrip(synth_catalog):
    queries = generate_workload(synth_catalog, seed=2, shape="star", q_range=(3, 5), count=4)
    text = "-- header comment\n" + workload_to_text(queries) + "\n  -- trailing comment\n"
    loaded = load_workload(text, synth_catalog)
    assert [q.relations for q in loaded] == [q.relations for q in queries]
    assert [q.id for q in loaded] == ["q001", "q002", "q003", "q004"]


def test_workload_file_reports_line_numbers(synth_catalog):
    with pytest.raises(QueryError, match="line 2"):
        load_workload("-- fine\nSELECT * FROM nope, nope2\n", synth_catalog)
