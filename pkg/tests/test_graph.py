import itertools

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seedset.graph import (
    DisconnectedGraphError,
    GraphError,
    NotDecomposableError,
    added_edges,
    all_decompositions,
    build_graph,
    connected_components,
    format_set,
    is_decomposable,
    junction_tree,
    maximal_cliques,
    mcs_order,
    moralize,
    oracle_graphical_seed_set,
    separates,
    separator_collection,
    sort_labels,
    triangulate,
)

from conftest import FIG1_EDGES, random_chordal


def cycle(n):
    return build_graph(range(1, n + 1), [(i, i % n + 1) for i in range(1, n + 1)])


def complete(n):
    return build_graph(range(1, n + 1), itertools.combinations(range(1, n + 1), 2))


def to_nx(g):
    h = nx.Graph()
    h.add_nodes_from(g.vertices)
    h.add_edges_from(g.edge_list())
    return h


def sets(*groups):
    return [frozenset(str(v) for v in grp) for grp in groups]


# -- construction ----------------------------------------------------------


def test_build_fig1(fig1):
    assert fig1.p == 5 and len(fig1.edges) == 6
    assert fig1.neighbors("3") == frozenset("1245")


def test_build_single_vertex_and_dedup():
    g = build_graph([1], [])
    assert g.vertices == ("1",) and not g.edges
    g = build_graph([1, 2], [(1, 2), (2, 1)])
    assert len(g.edges) == 1


@pytest.mark.parametrize("bad", [[(1, 1)], [(1, 9)]])
def test_build_rejects_bad_edges(bad):
    with pytest.raises(GraphError):
        build_graph([1, 2], bad)


def test_build_rejects_duplicate_labels():
    with pytest.raises(GraphError):
        build_graph(["a", "a"], [])


def test_label_sorting_is_numeric_aware():
    assert sort_labels(["10", "9", "b", "a", "2"]) == ["2", "9", "10", "a", "b"]
    assert format_set({"3", "12", "1"}) == "1,3,12"


@pytest.mark.parametrize(
    "arcs, expected",
    [
        ([("a", "c"), ("b", "c")], {("a", "c"), ("b", "c"), ("a", "b")}),
        ([("a", "b"), ("b", "c")], {("a", "b"), ("b", "c")}),
    ],
)
def test_moralize_small(arcs, expected):
    g = moralize("abc", arcs)
    assert set(g.edge_list()) == expected


def test_moralize_three_parents():
    g = moralize("abcd", [("a", "d"), ("b", "d"), ("c", "d")])
    marriages = {e for e in g.edge_list() if "d" not in e}
    assert marriages == {("a", "b"), ("a", "c"), ("b", "c")}


# -- chordality and triangulation ------------------------------------------


def test_is_decomposable_examples(fig1):
    assert is_decomposable(fig1)
    assert not is_decomposable(cycle(4))
    assert is_decomposable(complete(5))


def test_mcs_order_is_permutation(fig1):
    assert sorted(mcs_order(fig1)) == sorted(fig1.vertices)


def test_triangulate_four_cycle():
    t = triangulate(cycle(4))
    assert is_decomposable(t) and len(added_edges(cycle(4), t)) == 1


def test_triangulate_fixed_point(fig1):
    assert triangulate(fig1).edges == fig1.edges


def test_five_cycle_needs_two_chords():
    c5 = cycle(5)
    chords = [e for e in itertools.combinations(c5.vertices, 2) if not c5.has_edge(*e)]
    # exhaustive: no single chord makes the 5-cycle chordal
    for e in chords:
        assert not is_decomposable(build_graph(c5.vertices, c5.edge_list() + [e]))
    t = triangulate(c5)
    assert len(added_edges(c5, t)) == 2 and is_decomposable(t)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 9), st.floats(0.0, 0.6), st.integers(0, 2**32 - 1))
def test_triangulate_idempotent_monotone(p, density, seed):
    rng = np.random.default_rng(seed)
    edges = [e for e in itertools.combinations(range(p), 2) if rng.random() < density]
    g = build_graph(range(p), edges)
    t = triangulate(g)
    assert g.edges <= t.edges
    assert is_decomposable(t)
    assert triangulate(t).edges == t.edges
    assert is_decomposable(g) == nx.is_chordal(to_nx(g))


# -- cliques, junction trees, decompositions -------------------------------


def test_cliques_examples(fig1):
    assert maximal_cliques(fig1) == sets("123", "345")
    assert maximal_cliques(build_graph("ab", [])) == sets("a", "b")
    assert maximal_cliques(complete(4)) == sets("1234")


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 10), st.integers(0, 2**32 - 1))
def test_cliques_match_networkx(p, seed):
    g = random_chordal(np.random.default_rng(seed), p)
    ours = set(maximal_cliques(g))
    theirs = {frozenset(c) for c in nx.find_cliques(to_nx(g))}
    assert ours == theirs


def test_fig1_decompositions(fig1):
    ds = all_decompositions(fig1)
    assert [d.cliques for d in ds] == [tuple(sets("123", "345")), tuple(sets("345", "123"))]
    assert all(d.separators == (frozenset(), frozenset("3")) for d in ds)


def test_single_clique_decomposition():
    (d,) = all_decompositions(complete(3))
    assert d.k == 1 and d.separators == (frozenset(),)
    assert separator_collection(complete(3)) == []


def test_path_of_three_cliques():
    g = build_graph(range(1, 8), [(1, 2), (1, 3), (2, 3), (3, 4), (3, 5), (4, 5), (5, 6), (5, 7), (6, 7)])
    ds = all_decompositions(g)
    assert len(ds) == 3
    multisets = {tuple(sorted(tuple(sorted(s)) for s in d.separators[1:])) for d in ds}
    assert len(multisets) == 1


def test_shared_face_separator():
    g = build_graph("abcd", [("a", "b"), ("a", "c"), ("b", "c"), ("b", "d"), ("c", "d")])
    assert separator_collection(g) == sets("bc")


def test_fig1_separator_collection(fig1):
    assert separator_collection(fig1) == sets("3")


def test_decomposition_requires_chordal_connected():
    with pytest.raises(NotDecomposableError):
        junction_tree(cycle(4))
    with pytest.raises(DisconnectedGraphError):
        junction_tree(build_graph("abcd", [("a", "b"), ("c", "d")]))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 11), st.integers(0, 2**32 - 1))
def test_rip_and_separator_multiset(p, seed):
    g = random_chordal(np.random.default_rng(seed), p)
    ds = all_decompositions(g)
    assert len(ds) == len(maximal_cliques(g))
    multisets = set()
    for d in ds:
        seen = set()
        for j, c, s in d.slots():
            assert s == c & seen  # separator = clique ∩ earlier cliques
            if j:
                # running intersection: s sits inside one earlier clique
                assert any(s <= d.cliques[i] for i in range(j))
            seen |= c
        multisets.add(tuple(sorted(tuple(sorted(s)) for s in d.separators)))
    assert len(multisets) == 1


# -- separation and the seed set oracle ------------------------------------


def test_separates_fig1(fig1):
    assert separates(fig1, {"3"}, "4", {"1", "3"})
    assert not separates(fig1, {"3"}, "2", {"1", "3"})
    assert not separates(fig1, set(), "1", {"1"})


def test_separates_rejects_vertex_in_s(fig1):
    with pytest.raises(GraphError):
        separates(fig1, {"3"}, "3", {"1"})


def brute_separates(h, s, v, d):
    targets = set(d) - set(s)
    if v in targets:
        return False
    for t in targets:
        for path in nx.all_simple_paths(h, v, t):
            if not set(path) & set(s):
                return False
    return True


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 7), st.integers(0, 2**32 - 1))
def test_separates_matches_path_enumeration(p, seed):
    rng = np.random.default_rng(seed)
    labels = [str(i) for i in range(p)]
    edges = [e for e in itertools.combinations(labels, 2) if rng.random() < 0.4]
    g = build_graph(labels, edges)
    h = to_nx(g)
    for _ in range(15):
        s = {v for v in labels if rng.random() < 0.3}
        d = {v for v in labels if rng.random() < 0.4}
        free = [v for v in labels if v not in s]
        if not free:
            continue
        v = free[int(rng.integers(len(free)))]
        assert separates(g, s, v, d) == brute_separates(h, s, v, d)


@pytest.mark.parametrize(
    "d, expected", [("3", "3"), ("13", "123"), ("14", "12345"), ("12", "123"), ("", "")]
)
def test_oracle_fig1(fig1, d, expected):
    assert oracle_graphical_seed_set(fig1, d) == frozenset(expected)


def test_oracle_unknown_vertex(fig1):
    with pytest.raises(GraphError):
        oracle_graphical_seed_set(fig1, {"9"})


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_oracle_invariants(p, seed):
    rng = np.random.default_rng(seed)
    g = random_chordal(rng, p)
    d = frozenset(v for v in g.vertices if rng.random() < 0.35)
    dg = oracle_graphical_seed_set(g, d)
    assert d <= dg
    for s in separator_collection(g) if len(maximal_cliques(g)) > 1 else []:
        assert oracle_graphical_seed_set(g, s) == s
    cl = maximal_cliques(g)
    for a, b in itertools.combinations(cl, 2):
        inter = a & b
        if inter:
            assert oracle_graphical_seed_set(g, inter) == inter


def test_connected_components():
    g = build_graph("abcd", [("a", "b"), ("c", "d")])
    assert [c.vertices for c in connected_components(g)] == [("a", "b"), ("c", "d")]
    fig1_plus = build_graph(range(1, 7), FIG1_EDGES)
    assert [c.p for c in connected_components(fig1_plus)] == [5, 1]
    assert len(connected_components(cycle(4))) == 1
