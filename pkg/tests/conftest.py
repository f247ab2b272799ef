import itertools

import numpy as np
import pytest

from seedset.graph import build_graph, is_connected, triangulate
from seedset.numerics import DataMatrix

ACCEPTANCE = pytest.StashKey[dict]()

FIG1_EDGES = [(1, 2), (1, 3), (2, 3), (3, 4), (3, 5), (4, 5)]


@pytest.fixture
def fig1():
    return build_graph(range(1, 6), FIG1_EDGES)


def random_chordal(rng: np.random.Generator, p: int, density: float = 0.4):
    """Connected chordal graph: a random graph with a spanning path, triangulated."""
    labels = [str(i) for i in range(1, p + 1)]
    order = rng.permutation(p)
    edges = {(labels[order[i]], labels[order[i + 1]]) for i in range(p - 1)}
    for a, b in itertools.combinations(labels, 2):
        if rng.random() < density:
            edges.add((a, b))
    g = triangulate(build_graph(labels, sorted(edges)))
    assert is_connected(g)
    return g


def gaussian_data(rng, n, labels, shift=0.0, scale=1.0):
    p = len(labels)
    a = rng.normal(size=(p, p)) / np.sqrt(p)
    cov = a @ a.T + np.eye(p)
    x = rng.multivariate_normal(np.full(p, shift), scale * cov, size=n)
    return DataMatrix(x, labels)


@pytest.fixture
def verdict(request):
    """Record one acceptance line; returns the pass flag for asserting."""
    lines = request.config.stash.setdefault(ACCEPTANCE, {})

    def record(no: int, ok: bool, detail: str) -> bool:
        line = f"criterion {no:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines[no] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for no in sorted(lines):
            terminalreporter.write_line(lines[no])
