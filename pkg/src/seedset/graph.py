"""Undirected graph machinery for decomposable (chordal) graphs.

Everything here is pure: a :class:`Graph` is immutable once built and can be
shared freely between worker threads.
"""
from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence


class GraphError(ValueError):
    """Invalid graph input or an operation that needs a property the graph lacks."""


class NotDecomposableError(GraphError):
    pass


class DisconnectedGraphError(GraphError):
    pass


def label_key(label: str):
    """Sort key that orders integer-like labels numerically, others lexically."""
    try:
        return (0, int(label), "")
    except ValueError:
        return (1, 0, label)


def sort_labels(labels: Iterable[str]) -> list[str]:
    return sorted(labels, key=label_key)


def set_key(vertices: Iterable[str]) -> tuple:
    """Canonical order for vertex sets: lexicographic on sorted labels."""
    return tuple(label_key(v) for v in sort_labels(vertices))


def format_set(vertices: Iterable[str], sep: str = ",") -> str:
    return sep.join(sort_labels(vertices))


@dataclass(frozen=True)
class Graph:
    vertices: tuple[str, ...]
    edges: frozenset[frozenset[str]]
    adjacency: dict[str, frozenset[str]] = field(compare=False, repr=False)

    @property
    def p(self) -> int:
        return len(self.vertices)

    def neighbors(self, v: str) -> frozenset[str]:
        return self.adjacency[v]

    def has_edge(self, u: str, v: str) -> bool:
        return v in self.adjacency[u]

    def edge_list(self) -> list[tuple[str, str]]:
        pairs = [tuple(sort_labels(e)) for e in self.edges]
        return sorted(pairs, key=lambda e: (label_key(e[0]), label_key(e[1])))

    def subgraph(self, keep: Iterable[str]) -> "Graph":
        keep = set(keep)
        verts = [v for v in self.vertices if v in keep]
        edges = [tuple(e) for e in self.edges if e <= keep]
        return build_graph(verts, edges)

    def is_complete(self, vertices: Iterable[str]) -> bool:
        vs = list(vertices)
        return all(self.has_edge(a, b) for a, b in itertools.combinations(vs, 2))

    def __repr__(self) -> str:
        return f"Graph(p={self.p}, |E|={len(self.edges)})"


def build_graph(vertex_labels: Sequence, edge_pairs: Iterable[Sequence]) -> Graph:
    """Build a normalized undirected graph.

    Labels are stored as strings. Duplicate edges (in either orientation) are
    merged; self-loops, unknown endpoints and duplicate labels raise
    :class:`GraphError`.
    """
    verts = [str(v) for v in vertex_labels]
    if len(set(verts)) != len(verts):
        seen, dups = set(), []
        for v in verts:
            if v in seen:
                dups.append(v)
            seen.add(v)
        raise GraphError(f"duplicate vertex label(s): {sorted(set(dups))}")
    vset = set(verts)
    adj: dict[str, set[str]] = {v: set() for v in verts}
    edges = set()
    for pair in edge_pairs:
        u, v = (str(x) for x in pair)
        if u not in vset or v not in vset:
            bad = u if u not in vset else v
            raise GraphError(f"edge ({u}, {v}) has unknown endpoint {bad!r}")
        if u == v:
            raise GraphError(f"self-loop on vertex {u!r}")
        edges.add(frozenset((u, v)))
        adj[u].add(v)
        adj[v].add(u)
    return Graph(tuple(verts), frozenset(edges), {v: frozenset(n) for v, n in adj.items()})


def moralize(vertex_labels: Sequence, directed_edge_pairs: Iterable[Sequence]) -> Graph:
    """Join all parents of each common child, then drop directions."""
    verts = [str(v) for v in vertex_labels]
    vset = set(verts)
    parents: dict[str, set[str]] = {v: set() for v in verts}
    edges = []
    for pair in directed_edge_pairs:
        a, b = (str(x) for x in pair)
        if a not in vset or b not in vset:
            raise GraphError(f"edge ({a}, {b}) has unknown endpoint")
        parents[b].add(a)
        edges.append((a, b))
    for child in verts:
        for a, b in itertools.combinations(sort_labels(parents[child]), 2):
            edges.append((a, b))
    return build_graph(verts, edges)


def _ordered(g: Graph) -> list[str]:
    return sort_labels(g.vertices)


def mcs_order(g: Graph) -> list[str]:
    """Maximum cardinality search; ties go to the smallest label."""
    rank = {v: i for i, v in enumerate(_ordered(g))}
    weight = {v: 0 for v in g.vertices}
    unnumbered = set(g.vertices)
    order = []
    while unnumbered:
        v = max(unnumbered, key=lambda u: (weight[u], -rank[u]))
        order.append(v)
        unnumbered.remove(v)
        for u in g.adjacency[v]:
            if u in unnumbered:
                weight[u] += 1
    return order


def is_decomposable(g: Graph) -> bool:
    # In an MCS order of a chordal graph, the already-numbered neighbours of
    # each vertex form a clique (reverse order is a perfect elimination order).
    order = mcs_order(g)
    pos = {v: i for i, v in enumerate(order)}
    for v in order:
        earlier = [u for u in g.adjacency[v] if pos[u] < pos[v]]
        if not earlier:
            continue
        # checking against the latest earlier neighbour suffices
        last = max(earlier, key=pos.__getitem__)
        for u in earlier:
            if u != last and not g.has_edge(u, last):
                return False
    return True


def _fill_count(adj: dict[str, set[str]], v: str) -> int:
    nbrs = list(adj[v])
    return sum(1 for a, b in itertools.combinations(nbrs, 2) if b not in adj[a])


def triangulate(g: Graph) -> Graph:
    """Chordal supergraph of ``g`` via greedy min-fill elimination.

    Ties in fill count are broken by the canonical label order, so the result
    is deterministic. A decomposable input is returned unchanged.
    """
    if is_decomposable(g):
        return g
    rank = {v: i for i, v in enumerate(_ordered(g))}
    adj = {v: set(n) for v, n in g.adjacency.items()}
    fill = []
    remaining = set(g.vertices)
    while remaining:
        v = min(remaining, key=lambda u: (_fill_count(adj, u), rank[u]))
        nbrs = sort_labels(adj[v])
        for a, b in itertools.combinations(nbrs, 2):
            if b not in adj[a]:
                adj[a].add(b)
                adj[b].add(a)
                fill.append((a, b))
        for u in adj[v]:
            adj[u].discard(v)
        del adj[v]
        remaining.remove(v)
    return build_graph(g.vertices, [tuple(e) for e in g.edges] + fill)


def added_edges(original: Graph, triangulated: Graph) -> list[tuple[str, str]]:
    extra = triangulated.edges - original.edges
    pairs = [tuple(sort_labels(e)) for e in extra]
    return sorted(pairs, key=lambda e: (label_key(e[0]), label_key(e[1])))


def maximal_cliques(g: Graph) -> list[frozenset[str]]:
    """Maximal cliques of a decomposable graph, in canonical order."""
    if not is_decomposable(g):
        raise NotDecomposableError("maximal cliques are only extracted for decomposable graphs")
    order = mcs_order(g)
    pos = {v: i for i, v in enumerate(order)}
    candidates = []
    for v in order:
        candidates.append(frozenset([v, *(u for u in g.adjacency[v] if pos[u] < pos[v])]))
    candidates.sort(key=len, reverse=True)
    cliques: list[frozenset[str]] = []
    for c in candidates:
        if not any(c <= other for other in cliques):
            cliques.append(c)
    return sorted(cliques, key=set_key)


def connected_components(g: Graph) -> list[Graph]:
    """Induced subgraphs of the connected components, ordered by first vertex."""
    seen: set[str] = set()
    comps = []
    for start in g.vertices:
        if start in seen:
            continue
        comp = {start}
        queue = deque([start])
        while queue:
            v = queue.popleft()
            for u in g.adjacency[v]:
                if u not in comp:
                    comp.add(u)
                    queue.append(u)
        seen |= comp
        comps.append(g.subgraph(comp))
    return comps


def is_connected(g: Graph) -> bool:
    return g.p == 0 or len(connected_components(g)) == 1


@dataclass(frozen=True)
class Decomposition:
    """RIP-ordered cliques with their separators; ``separators[0]`` is empty."""

    cliques: tuple[frozenset[str], ...]
    separators: tuple[frozenset[str], ...]
    root_index: int

    @property
    def k(self) -> int:
        return len(self.cliques)

    def slots(self):
        """Yield ``(j, clique, separator)`` for every position of the ordering."""
        for j, (c, s) in enumerate(zip(self.cliques, self.separators)):
            yield j, c, s


@dataclass(frozen=True)
class JunctionTree:
    cliques: tuple[frozenset[str], ...]
    # (i, j, separator) with i < j, indices into ``cliques``
    edges: tuple[tuple[int, int, frozenset[str]], ...]

    def neighbors(self, i: int) -> list[tuple[int, frozenset[str]]]:
        out = []
        for a, b, s in self.edges:
            if a == i:
                out.append((b, s))
            elif b == i:
                out.append((a, s))
        return sorted(out)


def _require_connected_decomposable(g: Graph) -> None:
    if not is_decomposable(g):
        raise NotDecomposableError("graph is not decomposable; triangulate it first")
    if not is_connected(g):
        raise DisconnectedGraphError(
            "graph is disconnected; analyse each connected component separately"
        )


def junction_tree(g: Graph) -> JunctionTree:
    """Maximum-weight spanning tree of the clique graph (Kruskal).

    Weights are intersection sizes; ties go to the lexicographically smallest
    clique index pair.
    """
    _require_connected_decomposable(g)
    cliques = tuple(maximal_cliques(g))
    k = len(cliques)
    candidates = []
    for i, j in itertools.combinations(range(k), 2):
        inter = cliques[i] & cliques[j]
        if inter:
            candidates.append((-len(inter), i, j, inter))
    candidates.sort(key=lambda t: (t[0], t[1], t[2]))
    parent = list(range(k))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    edges = []
    for _, i, j, inter in candidates:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            edges.append((i, j, inter))
            if len(edges) == k - 1:
                break
    return JunctionTree(cliques, tuple(edges))


def decomposition_from_tree(tree: JunctionTree, root: int) -> Decomposition:
    """Breadth-first listing of the tree rooted at clique ``root``."""
    cliques = [tree.cliques[root]]
    seps = [frozenset()]
    visited = {root}
    queue = deque([root])
    while queue:
        i = queue.popleft()
        for j, s in tree.neighbors(i):
            if j not in visited:
                visited.add(j)
                cliques.append(tree.cliques[j])
                seps.append(s)
                queue.append(j)
    return Decomposition(tuple(cliques), tuple(seps), root)


def all_decompositions(g: Graph) -> list[Decomposition]:
    """One RIP decomposition per choice of root clique (canonical clique order)."""
    tree = junction_tree(g)
    return [decomposition_from_tree(tree, i) for i in range(len(tree.cliques))]


def separator_collection(g: Graph) -> list[frozenset[str]]:
    """Distinct separators of a connected decomposable graph, canonically ordered."""
    tree = junction_tree(g)
    return sorted({s for _, _, s in tree.edges}, key=set_key)


def separates(g: Graph, s: Iterable[str], v: str, d: Iterable[str]) -> bool:
    """True iff every path from ``v`` to ``d - s`` meets ``s``.

    Vertices of ``d`` that lie in ``s`` are ignored; ``v`` itself must not be
    in ``s``.
    """
    s = frozenset(s)
    if v in s:
        raise GraphError(f"vertex {v!r} lies in the separating set")
    targets = frozenset(d) - s
    if v in targets:
        return False
    if not targets:
        return True
    seen = {v}
    queue = deque([v])
    while queue:
        u = queue.popleft()
        for w in g.adjacency[u]:
            if w in s or w in seen:
                continue
            if w in targets:
                return False
            seen.add(w)
            queue.append(w)
    return True


def oracle_graphical_seed_set(g: Graph, d: Iterable[str]) -> frozenset[str]:
    """Vertices that no separator of ``g`` (not containing them) cuts off from ``d``."""
    d = frozenset(str(x) for x in d)
    unknown = d - set(g.vertices)
    if unknown:
        raise GraphError(f"seed set contains unknown vertices: {sort_labels(unknown)}")
    # the empty set always counts as a separator; it only matters for d = {}
    seps = [frozenset(), *separator_collection(g)]
    out = set()
    for v in g.vertices:
        if not any(v not in s and separates(g, s, v, d) for s in seps):
            out.add(v)
    return frozenset(out)


@dataclass(frozen=True)
class SeedSetSpec:
    variables: frozenset[str]

    @classmethod
    def of(cls, g: Graph, variables: Iterable) -> "SeedSetSpec":
        vs = frozenset(str(v) for v in variables)
        unknown = vs - set(g.vertices)
        if unknown:
            raise GraphError(f"seed set contains unknown vertices: {sort_labels(unknown)}")
        return cls(vs)
