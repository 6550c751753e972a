"""Shared fixtures: small trees and a networkx reference implementation."""

from itertools import combinations

import networkx as nx
import numpy as np
import pytest

from src.config.settings import get_settings
from src.services import tree_core


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "statistical: full-size Monte-Carlo suites (deselected by default, run with -m statistical)"
    )


@pytest.fixture(autouse=True)
def fresh_settings(monkeypatch):
    """Settings are lru_cached; every test starts from the environment it sets up."""
    monkeypatch.delenv("TREEPROBE_THREADS", raising=False)
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def path5():
    return tree_core.generate_tree("path", 5)


@pytest.fixture
def star10():
    return tree_core.generate_tree("star", 10)


@pytest.fixture
def weighted_trees():
    """Uniform random trees with random integer weights, sizes 2..80."""
    scheme = tree_core.WeightScheme.parse("uniform:1:1000")
    return [tree_core.generate_tree("uniform_random", n, seed=n, weights=scheme) for n in (2, 3, 7, 25, 80)]


def as_graph(tree: tree_core.WeightedTree) -> nx.Graph:
    graph = nx.Graph()
    graph.add_nodes_from(range(1, tree.n + 1))
    graph.add_weighted_edges_from((e.u, e.v, e.w) for e in tree.edges)
    return graph


def reference_steiner(graph: nx.Graph, sample):
    """Union of the unique paths between sample pairs, via networkx."""
    members = set(sample)
    for a, b in combinations(sorted(members), 2):
        members.update(nx.shortest_path(graph, a, b))
    return sorted(members)


def reference_anchor(graph: nx.Graph, inside, v, some_member):
    """First vertex of T_X on the path from v towards T_X, with its weighted distance."""
    path = nx.shortest_path(graph, v, some_member)
    for hop, w in enumerate(path):
        if w in inside:
            return w, int(nx.path_weight(graph, path[: hop + 1], weight="weight"))
    raise AssertionError("path never entered the subtree")


def random_sample(n: int, k: int, seed: int):
    rng = np.random.default_rng(seed)
    return (rng.choice(n, size=k, replace=False) + 1).tolist()
