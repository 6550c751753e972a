"""
Ground-truth weighted trees: construction, generators, serialization and
brute-force computation of every property the randomized procedures test.

Everything here is exact. Weights are integer quanta (2^-32 units) and
hop counts are integers; typical distance is returned as a Fraction.
The brute-force property functions use breadth-first traversals and never
go through the distance oracle.
"""

import heapq
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from itertools import combinations
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import structlog

from ..models.data_models import Edge, UNIT_QUANTA, VertexId
from ..models.errors import InvalidTreeError, InvalidVertexError, SerializationError

logger = structlog.get_logger()

# Path sums are accumulated in int64; the total weight of a tree must stay below this.
MAX_TOTAL_QUANTA = 1 << 62

FAMILIES = ("path", "star", "caterpillar", "broom", "uniform_random", "random_binary")


@dataclass(frozen=True)
class WeightScheme:
    """Edge weight assignment used by the generators."""

    kind: str = "unit"  # unit | uniform_random_quanta
    lo: int = 1
    hi: int = UNIT_QUANTA

    def __post_init__(self):
        if self.kind not in ("unit", "uniform_random_quanta"):
            raise InvalidTreeError(f"unknown weight scheme '{self.kind}'")
        if self.kind == "uniform_random_quanta" and not 1 <= self.lo <= self.hi:
            raise InvalidTreeError(f"random weights need 1 <= lo <= hi, got lo={self.lo} hi={self.hi}")

    @classmethod
    def parse(cls, text: str) -> "WeightScheme":
        """'unit' or 'uniform:LO:HI' (quanta)."""
        if text == "unit":
            return cls()
        parts = text.split(":")
        if len(parts) == 3 and parts[0] in ("uniform", "uniform_random_quanta"):
            try:
                return cls("uniform_random_quanta", int(parts[1]), int(parts[2]))
            except ValueError:
                pass
        raise InvalidTreeError(f"cannot parse weight scheme '{text}' (use 'unit' or 'uniform:LO:HI')")

    def describe(self) -> str:
        return "unit" if self.kind == "unit" else f"uniform:{self.lo}:{self.hi}"


class _AncestorIndex:
    """Binary-lifting ancestor table rooted at vertex 1, vectorized over numpy arrays."""

    def __init__(self, tree: "WeightedTree"):
        n = tree.n
        parent = np.zeros(n + 1, dtype=np.int64)
        depth = np.zeros(n + 1, dtype=np.int64)
        root_dist = np.zeros(n + 1, dtype=np.int64)
        parent[1] = 1
        seen = np.zeros(n + 1, dtype=bool)
        seen[1] = True
        queue = deque([1])
        while queue:
            u = queue.popleft()
            for v, w in tree.adjacency[u]:
                if not seen[v]:
                    seen[v] = True
                    parent[v] = u
                    depth[v] = depth[u] + 1
                    root_dist[v] = root_dist[u] + w
                    queue.append(v)

        levels = max(1, int(n).bit_length())
        up = np.empty((levels, n + 1), dtype=np.int64)
        up[0] = parent
        up[0][0] = 0
        for j in range(1, levels):
            up[j] = up[j - 1][up[j - 1]]

        self.depth = depth
        self.root_dist = root_dist
        self.up = up

    def lca(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        swap = self.depth[a] < self.depth[b]
        a, b = np.where(swap, b, a), np.where(swap, a, b)
        diff = self.depth[a] - self.depth[b]
        for j in range(self.up.shape[0]):
            mask = ((diff >> j) & 1).astype(bool)
            if mask.any():
                a = np.where(mask, self.up[j][a], a)
        for j in range(self.up.shape[0] - 1, -1, -1):
            ua, ub = self.up[j][a], self.up[j][b]
            differ = ua != ub
            if differ.any():
                a = np.where(differ, ua, a)
                b = np.where(differ, ub, b)
        return np.where(a == b, a, self.up[0][a])


class WeightedTree:
    """
    Immutable tree on vertices 1..n with positive integer edge weights (quanta).

    Construction validates the tree shape (n-1 edges, connected, no loops)
    and that every weight is a positive int. Safe to share across threads.
    """

    def __init__(self, n: int, edges: Iterable[Tuple[int, int, int]]):
        if not isinstance(n, (int, np.integer)) or n < 1:
            raise InvalidTreeError(f"invalid size: tree needs n >= 1 vertices, got {n!r}")
        n = int(n)
        edge_list: List[Edge] = []
        adjacency: List[List[Tuple[int, int]]] = [[] for _ in range(n + 1)]
        total = 0
        for raw in edges:
            u, v, w = raw
            for x in (u, v):
                if isinstance(x, bool) or not isinstance(x, (int, np.integer)) or not 1 <= x <= n:
                    raise InvalidTreeError(f"edge {raw!r}: vertex outside 1..{n}")
            if isinstance(w, bool) or not isinstance(w, (int, np.integer)):
                raise InvalidTreeError(f"edge {raw!r}: weight must be an integer count of quanta")
            if w <= 0:
                raise InvalidTreeError(f"edge {raw!r}: weight must be positive")
            if u == v:
                raise InvalidTreeError(f"edge {raw!r}: self-loop")
            u, v, w = int(u), int(v), int(w)
            edge_list.append(Edge(u, v, w))
            adjacency[u].append((v, w))
            adjacency[v].append((u, w))
            total += w

        if len(edge_list) != n - 1:
            raise InvalidTreeError(f"a tree on {n} vertices has {n - 1} edges, got {len(edge_list)}")
        if total >= MAX_TOTAL_QUANTA:
            raise InvalidTreeError("total edge weight overflows the int64 path accumulator")

        seen = [False] * (n + 1)
        seen[1] = True
        stack = [1]
        reached = 1
        while stack:
            u = stack.pop()
            for v, _ in adjacency[u]:
                if not seen[v]:
                    seen[v] = True
                    reached += 1
                    stack.append(v)
        if reached != n:
            raise InvalidTreeError(f"edges do not connect all {n} vertices (reached {reached})")

        self.n = n
        self.edges: Tuple[Edge, ...] = tuple(edge_list)
        self.adjacency: Tuple[Tuple[Tuple[int, int], ...], ...] = tuple(tuple(a) for a in adjacency)

    def __repr__(self) -> str:
        return f"WeightedTree(n={self.n}, edges={len(self.edges)})"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, WeightedTree):
            return NotImplemented
        return self.n == other.n and self.edge_set() == other.edge_set()

    def __hash__(self) -> int:
        return hash((self.n, frozenset(self.edge_set().items())))

    def edge_set(self) -> Dict[Tuple[int, int], int]:
        return {e.key(): e.w for e in self.edges}

    def check_vertex(self, v: object) -> int:
        if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or not 1 <= v <= self.n:
            raise InvalidVertexError(v, self.n)
        return int(v)

    @cached_property
    def _index(self) -> _AncestorIndex:
        return _AncestorIndex(self)

    def path_distances(self, u: int, vs: np.ndarray) -> np.ndarray:
        """Exact quanta sums d(u, v) for every v in vs (int64 array)."""
        idx = self._index
        vs = np.asarray(vs, dtype=np.int64)
        us = np.full(vs.shape, u, dtype=np.int64)
        meet = idx.lca(us, vs)
        return idx.root_dist[us] + idx.root_dist[vs] - 2 * idx.root_dist[meet]

    def path_distance(self, u: int, v: int) -> int:
        if u == v:
            return 0
        return int(self.path_distances(u, np.array([v]))[0])


# -- generators -----------------------------------------------------------------------------

def decode_prufer(sequence: Sequence[int], n: int) -> List[Tuple[int, int]]:
    """Decode a Prüfer sequence of length n-2 over 1..n into the edge list of its tree."""
    if n < 1:
        raise InvalidTreeError(f"invalid size: n must be >= 1, got {n}")
    if n == 1:
        return []
    if len(sequence) != n - 2:
        raise InvalidTreeError(f"Prüfer sequence for n={n} must have length {n - 2}")
    degree = [1] * (n + 1)
    for x in sequence:
        if not 1 <= x <= n:
            raise InvalidTreeError(f"Prüfer entry {x} outside 1..{n}")
        degree[x] += 1
    heap = [v for v in range(1, n + 1) if degree[v] == 1]
    heapq.heapify(heap)
    edges = []
    for x in sequence:
        leaf = heapq.heappop(heap)
        edges.append((leaf, int(x)))
        degree[x] -= 1
        if degree[x] == 1:
            heapq.heappush(heap, int(x))
    u = heapq.heappop(heap)
    v = heapq.heappop(heap)
    edges.append((u, v))
    return edges


def _path_layout(n: int) -> List[Tuple[int, int]]:
    return [(i, i + 1) for i in range(1, n)]


def _star_layout(n: int) -> List[Tuple[int, int]]:
    return [(1, i) for i in range(2, n + 1)]


def _caterpillar_layout(n: int, spine: Optional[int] = None) -> List[Tuple[int, int]]:
    if n <= 3:
        return _path_layout(n)
    s = spine if spine is not None else max(1, (n - 2) // 3)
    if not 1 <= s <= n - 2:
        raise InvalidTreeError(f"caterpillar spine {s} does not fit n={n}")
    edges = _path_layout(s)
    edges.append((1, s + 1))
    edges.append((s, s + 2))
    for i, leg in enumerate(range(s + 3, n + 1)):
        edges.append((1 + i % s, leg))
    return edges


def _broom_layout(n: int) -> List[Tuple[int, int]]:
    h = (n + 1) // 2
    return _path_layout(h) + [(h, b) for b in range(h + 1, n + 1)]


def _random_binary_layout(n: int, rng: np.random.Generator) -> List[Tuple[int, int]]:
    # Random full binary tree: a uniformly chosen current leaf gets two children.
    edges: List[Tuple[int, int]] = []
    leaves = [1]
    nxt = 2
    while nxt <= n:
        i = int(rng.integers(len(leaves)))
        parent = leaves[i]
        leaves[i] = leaves[-1]
        leaves.pop()
        for child in (nxt, nxt + 1):
            if child <= n:
                edges.append((parent, child))
                leaves.append(child)
        nxt += 2
    return edges


def _apply_weights(
    layout: List[Tuple[int, int]], weights: WeightScheme, rng: np.random.Generator
) -> List[Tuple[int, int, int]]:
    if weights.kind == "unit":
        return [(u, v, UNIT_QUANTA) for u, v in layout]
    drawn = rng.integers(weights.lo, weights.hi + 1, size=len(layout))
    return [(u, v, int(w)) for (u, v), w in zip(layout, drawn)]


def generate_tree(
    family: str, n: int, seed: int = 0, weights: Optional[WeightScheme] = None
) -> WeightedTree:
    """
    Deterministic tree of the given family.

    Args:
        family: path, star, caterpillar, broom, uniform_random or random_binary
        n: number of vertices (>= 1)
        seed: seed of the numpy generator driving shape and weights
        weights: weight scheme, unit weights by default
    """
    if family not in FAMILIES:
        raise InvalidTreeError(f"unknown tree family '{family}' (expected one of {', '.join(FAMILIES)})")
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 1:
        raise InvalidTreeError(f"invalid size: n must be >= 1, got {n!r}")
    weights = weights or WeightScheme()
    rng = np.random.default_rng(seed)

    if family == "path":
        layout = _path_layout(n)
    elif family == "star":
        layout = _star_layout(n)
    elif family == "caterpillar":
        layout = _caterpillar_layout(n)
    elif family == "broom":
        layout = _broom_layout(n)
    elif family == "uniform_random":
        sequence = rng.integers(1, n + 1, size=max(0, n - 2)) if n >= 2 else []
        layout = decode_prufer([int(x) for x in sequence], n)
    else:
        layout = _random_binary_layout(n, rng)

    return WeightedTree(n, _apply_weights(layout, weights, rng))


def caterpillar_tree(
    spine: int, legs: int, seed: int = 0, weights: Optional[WeightScheme] = None
) -> WeightedTree:
    """Caterpillar with `spine` spine vertices, two end caps and `legs` legs per spine vertex."""
    if spine < 1 or legs < 0:
        raise InvalidTreeError(f"caterpillar needs spine >= 1 and legs >= 0, got {spine}, {legs}")
    n = spine + 2 + spine * legs
    rng = np.random.default_rng(seed)
    return WeightedTree(n, _apply_weights(_caterpillar_layout(n, spine), weights or WeightScheme(), rng))


# -- traversals and brute-force properties -------------------------------------------------

def _bfs(tree: WeightedTree, source: int, weighted: bool) -> np.ndarray:
    dist = np.full(tree.n + 1, -1, dtype=np.int64)
    dist[source] = 0
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v, w in tree.adjacency[u]:
            if dist[v] < 0:
                dist[v] = dist[u] + (w if weighted else 1)
                queue.append(v)
    return dist


def hop_distances(tree: WeightedTree, source: VertexId) -> np.ndarray:
    """Edge counts from source; index 0 unused (-1)."""
    return _bfs(tree, tree.check_vertex(source), weighted=False)


def weighted_distances(tree: WeightedTree, source: VertexId) -> np.ndarray:
    """Exact quanta distances from source; index 0 unused (-1)."""
    return _bfs(tree, tree.check_vertex(source), weighted=True)


def path_vertices(tree: WeightedTree, u: VertexId, v: VertexId) -> List[VertexId]:
    """The unique u-v path, both endpoints included."""
    u, v = tree.check_vertex(u), tree.check_vertex(v)
    parent = [0] * (tree.n + 1)
    parent[u] = u
    queue = deque([u])
    while queue:
        x = queue.popleft()
        if x == v:
            break
        for y, _ in tree.adjacency[x]:
            if not parent[y]:
                parent[y] = x
                queue.append(y)
    path = [v]
    while path[-1] != u:
        path.append(parent[path[-1]])
    path.reverse()
    return path


def ell(tree: WeightedTree, u: VertexId, v: VertexId) -> int:
    """Number of vertices on the u-v path; ell(u, u) = 1."""
    return int(hop_distances(tree, u)[tree.check_vertex(v)]) + 1


def diameter(tree: WeightedTree) -> int:
    """Longest path measured in vertices, by double breadth-first traversal."""
    first = hop_distances(tree, 1)
    far = int(np.argmax(first[1:])) + 1
    return int(hop_distances(tree, far)[1:].max()) + 1


def degree(tree: WeightedTree, v: VertexId) -> int:
    return len(tree.adjacency[tree.check_vertex(v)])


def neighbors(tree: WeightedTree, v: VertexId) -> List[VertexId]:
    return sorted(x for x, _ in tree.adjacency[tree.check_vertex(v)])


def max_degree(tree: WeightedTree) -> int:
    return max(len(a) for a in tree.adjacency[1:])


def leaves(tree: WeightedTree) -> List[VertexId]:
    return [v for v in range(1, tree.n + 1) if len(tree.adjacency[v]) == 1]


def leaf_count(tree: WeightedTree) -> int:
    return len(leaves(tree))


def typical_distance(tree: WeightedTree) -> Fraction:
    """(1/n^2) * sum of ell(u, v) over all ordered pairs, diagonal included."""
    total = 0
    for u in range(1, tree.n + 1):
        total += int(hop_distances(tree, u)[1:].sum()) + tree.n
    return Fraction(total, tree.n * tree.n)


def steiner_vertices(tree: WeightedTree, sample: Iterable[VertexId]) -> List[VertexId]:
    """Union of path_vertices(x, x') over all sample pairs."""
    members = sorted({tree.check_vertex(x) for x in sample})
    union = set(members)
    for x, y in combinations(members, 2):
        union.update(path_vertices(tree, x, y))
    return sorted(union)


# -- serialization --------------------------------------------------------------------------

def write_tree(tree: WeightedTree) -> str:
    """Header `n`, then one `u v w_quanta` line per edge."""
    lines = [str(tree.n)]
    lines.extend(f"{e.u} {e.v} {e.w}" for e in tree.edges)
    return "\n".join(lines) + "\n"


def parse_edge_lines(lines: Sequence[str], first_line: int = 2) -> List[Tuple[int, int, int]]:
    edges = []
    for offset, line in enumerate(lines):
        fields = line.split()
        if len(fields) != 3:
            raise SerializationError("expected 'u v w_quanta'", line=first_line + offset)
        try:
            edges.append((int(fields[0]), int(fields[1]), int(fields[2])))
        except ValueError:
            raise SerializationError("edge fields must be decimal integers", line=first_line + offset)
    return edges


def read_tree(text: str) -> WeightedTree:
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise SerializationError("empty tree text", line=1)
    try:
        n = int(lines[0].strip())
    except ValueError:
        raise SerializationError("header must be the vertex count", line=1)
    if n < 1:
        raise SerializationError(f"invalid size {n}", line=1)
    if len(lines) - 1 != n - 1:
        raise SerializationError(f"expected {n - 1} edge lines, found {len(lines) - 1}")
    try:
        return WeightedTree(n, parse_edge_lines(lines[1:]))
    except InvalidTreeError as e:
        raise SerializationError(str(e))
