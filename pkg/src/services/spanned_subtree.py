"""
Recovery of the subtree T_X spanned by a vertex sample X.

recover() asks the oracle for every distance d(x, v) with x in X and v in V
and nothing else. Everything below (vertex set, edges and lengths, attach
anchors of outside vertices, sampled-neighbour counts, leaf checks) is
derived from those rows without further queries.
"""

from collections import deque
from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, Iterable, List, Optional, Set, Tuple

import numpy as np
import structlog

from ..models.data_models import Edge, VertexId
from ..models.errors import (
    InvalidVertexError,
    PreconditionError,
    RecoveryError,
    SerializationError,
)
from .metric_oracle import DistanceOracle
from .tree_core import parse_edge_lines

logger = structlog.get_logger()


@dataclass
class SpannedSubtree:
    """
    Recovered T_X: vertices, weighted edges and the attach map of outside vertices.

    `rows[i]` holds the queried distances from sample[i] to every vertex
    (index 0 unused). Subtrees read back from text carry no rows.
    """

    n: int
    sample: Tuple[VertexId, ...]
    vertices: Tuple[VertexId, ...]
    edges: Tuple[Edge, ...]
    attach: Dict[VertexId, Tuple[VertexId, int]]
    rows: Optional[np.ndarray] = None
    adjacency: Dict[VertexId, List[Tuple[VertexId, int]]] = field(init=False, repr=False)

    def __post_init__(self):
        self.adjacency = {v: [] for v in self.vertices}
        for e in self.edges:
            self.adjacency[e.u].append((e.v, e.w))
            self.adjacency[e.v].append((e.u, e.w))
        self._members: Set[VertexId] = set(self.vertices)
        self._sample_index = {x: i for i, x in enumerate(self.sample)}

    def contains(self, v: VertexId) -> bool:
        return v in self._members

    def degree(self, v: VertexId) -> int:
        return len(self.adjacency[v])

    def edge_set(self) -> Dict[Tuple[int, int], int]:
        return {e.key(): e.w for e in self.edges}

    def anchored_at(self, v: VertexId) -> List[VertexId]:
        return sorted(u for u, (a, _) in self.attach.items() if a == v)

    def check_vertex(self, v: object) -> int:
        if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or not 1 <= v <= self.n:
            raise InvalidVertexError(v, self.n)
        return int(v)

    def _require_rows(self) -> np.ndarray:
        if self.rows is None:
            raise PreconditionError("subtree has no queried distance rows (it was not produced by recover)")
        return self.rows

    def subtree_row(self, u: VertexId) -> np.ndarray:
        """
        d(u, w) for every vertex w of T_X, u in T_X, from the sample rows alone.

        For u, w in T_X some x in X sees u and w collinearly, so
        d(u, w) = max over x of |d(x, u) - d(x, w)|.
        """
        rows = self._require_rows()
        if u in self._sample_index:
            return rows[self._sample_index[u]].copy()
        out = np.zeros(self.n + 1, dtype=np.int64)
        cols = np.fromiter(self.vertices, dtype=np.int64)
        out[cols] = np.abs(rows[:, cols] - rows[:, [u]]).max(axis=0)
        return out


def _validate_sample(oracle: DistanceOracle, sample: Iterable[VertexId]) -> Tuple[VertexId, ...]:
    members = list(sample)
    if not members:
        raise PreconditionError("sample must be nonempty")
    for x in members:
        if isinstance(x, bool) or not isinstance(x, (int, np.integer)) or not 1 <= x <= oracle.n:
            raise InvalidVertexError(x, oracle.n)
    if len(set(members)) != len(members):
        raise PreconditionError("sample ids must be distinct")
    return tuple(sorted(int(x) for x in members))


def recover(
    oracle: DistanceOracle,
    sample: Iterable[VertexId],
    all_vertices: Optional[Iterable[VertexId]] = None,
) -> SpannedSubtree:
    """
    Recover T_X from the distances {d(x, v) : x in X, v in V}.

    On a fresh oracle this adds exactly |X|(n-|X|) + C(|X|, 2) ledger entries.

    Raises:
        InvalidVertexError: a sample id outside 1..n
        PreconditionError: empty sample or repeated ids
        RecoveryError: the rows are not consistent with a tree metric
    """
    xs = _validate_sample(oracle, sample)
    n = oracle.n
    everything = np.arange(1, n + 1, dtype=np.int64) if all_vertices is None else np.asarray(
        sorted(set(all_vertices)), dtype=np.int64
    )
    if everything.size != n or everything[0] != 1 or everything[-1] != n:
        raise PreconditionError("all_vertices must be exactly 1..n")

    k = len(xs)
    rows = np.zeros((k, n + 1), dtype=np.int64)
    for i, x in enumerate(xs):
        rows[i, 1:] = oracle.query_row(x, everything)

    x0 = xs[0]
    root_row = rows[0]
    xcols = np.asarray(xs, dtype=np.int64)
    # on_path[i, w]: w lies on the x0 - xs[i] path; T_X is the union of those paths.
    on_path = (root_row[None, :] + rows) == root_row[xcols][:, None]
    on_path[:, 0] = False
    member = on_path.any(axis=0)
    vertices = np.nonzero(member)[0]

    edges = _rooted_edges(vertices, on_path, root_row, x0)
    attach = _attach_map(rows, vertices, n)

    subtree = SpannedSubtree(
        n=n,
        sample=xs,
        vertices=tuple(int(v) for v in vertices),
        edges=tuple(edges),
        attach=attach,
        rows=rows,
    )
    logger.debug(
        "Spanned subtree recovered",
        sample_size=k,
        subtree_vertices=len(subtree.vertices),
        queries=oracle.query_count(),
    )
    return subtree


def _rooted_edges(vertices: np.ndarray, on_path: np.ndarray, root_row: np.ndarray, x0: int) -> List[Edge]:
    # parent(v) is the vertex of path(x0, v) nearest to v; v sits on path(x0, x) for its witness x.
    if vertices.size == 1:
        return []
    witness = np.argmax(on_path[:, vertices], axis=0)
    depth = root_row[vertices]
    candidate = on_path[witness][:, vertices] & (depth[None, :] < depth[:, None])
    scored = np.where(candidate, depth[None, :], -1)
    best = np.argmax(scored, axis=1)

    edges = []
    for j, v in enumerate(vertices.tolist()):
        if v == x0:
            continue
        if scored[j, best[j]] < 0:
            raise RecoveryError(f"vertex {v} has no predecessor towards {x0}")
        parent = int(vertices[best[j]])
        edges.append(Edge(parent, v, int(depth[j] - root_row[parent])))
    return edges


def _attach_map(rows: np.ndarray, vertices: np.ndarray, n: int) -> Dict[VertexId, Tuple[VertexId, int]]:
    inside = np.zeros(n + 1, dtype=bool)
    inside[vertices] = True
    inside[0] = True
    attach: Dict[VertexId, Tuple[VertexId, int]] = {}
    sub_cols = rows[:, vertices]
    for v in np.nonzero(~inside)[0].tolist():
        diffs = rows[:, [v]] - sub_cols
        constant = (diffs == diffs[0]).all(axis=0)
        hits = np.nonzero(constant)[0]
        if hits.size != 1:
            raise RecoveryError(f"vertex {v} has {hits.size} anchor candidates in the spanned subtree")
        j = int(hits[0])
        dist = int(diffs[0, j])
        if dist <= 0:
            raise RecoveryError(f"vertex {v} attaches at non-positive distance {dist}")
        attach[v] = (int(vertices[j]), dist)
    return attach


def leaves_of_subtree(subtree: SpannedSubtree) -> List[VertexId]:
    """Vertices of degree exactly 1 in T_X; a single-vertex subtree has none."""
    return [v for v in subtree.vertices if subtree.degree(v) == 1]


def is_leaf_of_t(subtree: SpannedSubtree, v: VertexId) -> bool:
    """A leaf of T_X is a leaf of T iff no outside vertex anchors at it."""
    v = subtree.check_vertex(v)
    if not subtree.contains(v) or subtree.degree(v) != 1:
        raise PreconditionError(f"vertex {v} is not a leaf of the spanned subtree")
    return not any(anchor == v for anchor, _ in subtree.attach.values())


def sampled_neighbor_count(subtree: SpannedSubtree, oracle: Optional[DistanceOracle], v: VertexId) -> int:
    """
    |X ∩ N_T(v)| for v in T_X, with no new oracle queries.

    x is adjacent to v iff no w other than x, v satisfies d(x,w) + d(w,v) = d(x,v).
    The x-v path lies inside T_X, so w ranges over V(T_X) only.
    """
    v = subtree.check_vertex(v)
    if not subtree.contains(v):
        raise PreconditionError(f"vertex {v} is not in the spanned subtree")
    rows = subtree._require_rows()
    cols = np.fromiter(subtree.vertices, dtype=np.int64)
    to_v = subtree.subtree_row(v)[cols]
    from_x = rows[:, cols]
    between = (from_x + to_v[None, :]) == rows[:, [v]]
    xs = np.asarray(subtree.sample, dtype=np.int64)
    between &= cols[None, :] != xs[:, None]
    between &= cols[None, :] != v
    adjacent = ~between.any(axis=1) & (xs != v)
    return int(adjacent.sum())


def max_sampled_neighbor_count(subtree: SpannedSubtree) -> Tuple[int, Optional[VertexId]]:
    """max over v in T_X of sampled_neighbor_count, pruned by deg_{T_X}(v) as an upper bound."""
    best, arg = 0, None
    for v in sorted(subtree.vertices, key=lambda u: (-subtree.degree(u), u)):
        if subtree.degree(v) <= best:
            break
        count = sampled_neighbor_count(subtree, None, v)
        if count > best:
            best, arg = count, v
    return best, arg


def recovered_distance(subtree: SpannedSubtree, u: VertexId, v: VertexId) -> int:
    """d(u, v) for u in T_X and any v, from recovered data only."""
    u, v = subtree.check_vertex(u), subtree.check_vertex(v)
    if not subtree.contains(u):
        raise PreconditionError(f"vertex {u} is not in the spanned subtree")
    if subtree.rows is not None:
        if subtree.contains(v):
            return int(subtree.subtree_row(u)[v])
        anchor, dist = subtree.attach[v]
        return int(subtree.subtree_row(u)[anchor]) + dist
    inner = _subtree_distances(subtree, u)
    if subtree.contains(v):
        return inner[v]
    anchor, dist = subtree.attach[v]
    return inner[anchor] + dist


def _subtree_distances(subtree: SpannedSubtree, source: VertexId) -> Dict[VertexId, int]:
    dist = {source: 0}
    queue = deque([source])
    while queue:
        a = queue.popleft()
        for b, w in subtree.adjacency[a]:
            if b not in dist:
                dist[b] = dist[a] + w
                queue.append(b)
    return dist


def _pairwise(subtree: SpannedSubtree) -> Tuple[np.ndarray, Dict[VertexId, int]]:
    cols = np.fromiter(subtree.vertices, dtype=np.int64)
    position = {int(v): i for i, v in enumerate(cols.tolist())}
    matrix = np.stack([subtree.subtree_row(int(u))[cols] for u in cols])
    return matrix, position


def edges_by_interior_rule(subtree: SpannedSubtree) -> Dict[Tuple[int, int], int]:
    """
    uv is an edge iff no z in V(T_X) other than u, v has d(u,z) + d(z,v) = d(u,v).

    Quadratic in |V(T_X)| per pair; used to cross-check recover on small inputs.
    """
    matrix, _ = _pairwise(subtree)
    cols = list(subtree.vertices)
    m = len(cols)
    found = {}
    for i in range(m):
        through = matrix[i][:, None] + matrix  # [z, j] = d(u,z) + d(z,v_j)
        hit = through == matrix[i][None, :]
        hit[i, :] = False
        hit[np.arange(m), np.arange(m)] = False
        for j in range(i + 1, m):
            if not hit[:, j].any():
                found[(cols[i], cols[j])] = int(matrix[i, j])
    return found


def edges_by_path_condition(subtree: SpannedSubtree) -> Dict[Tuple[int, int], int]:
    """
    Two-condition edge characterisation, evaluated on the sample rows:
    (i) u, v on a common x - x' path; (ii) every w on that path is closer to x,
    or closer to x', than both u and v.
    """
    rows = subtree._require_rows()
    matrix, position = _pairwise(subtree)
    xs = subtree.sample
    found = {}
    for a, b in combinations(range(len(xs)), 2):
        ra, rb = rows[a], rows[b]
        span = ra[xs[b]]
        on = [w for w in subtree.vertices if ra[w] + rb[w] == span]
        for u, v in combinations(on, 2):
            near_a = min(ra[u], ra[v])
            near_b = min(rb[u], rb[v])
            if all(ra[w] <= near_a or rb[w] <= near_b for w in on if w not in (u, v)):
                key = (u, v) if u < v else (v, u)
                found[key] = int(matrix[position[u], position[v]])
    return found


# -- serialization --------------------------------------------------------------------------

def write_subtree(subtree: SpannedSubtree) -> str:
    """
    Header `n`, a `sample` line, the edge lines `u v w_quanta`, then an
    `attach` section of `v anchor dist_quanta` lines.
    """
    lines = [str(subtree.n), "sample " + " ".join(str(x) for x in subtree.sample)]
    lines.extend(f"{e.u} {e.v} {e.w}" for e in subtree.edges)
    lines.append("attach")
    lines.extend(f"{v} {a} {d}" for v, (a, d) in sorted(subtree.attach.items()))
    return "\n".join(lines) + "\n"


def read_subtree(text: str) -> SpannedSubtree:
    lines = text.splitlines()
    if len(lines) < 3:
        raise SerializationError("subtree text needs a header, a sample line and an attach marker")
    try:
        n = int(lines[0].strip())
    except ValueError:
        raise SerializationError("header must be the vertex count", line=1)
    head = lines[1].split()
    if not head or head[0] != "sample" or len(head) < 2:
        raise SerializationError("expected 'sample x1 x2 ...'", line=2)
    try:
        sample = tuple(int(x) for x in head[1:])
    except ValueError:
        raise SerializationError("sample ids must be integers", line=2)
    try:
        marker = lines.index("attach", 2)
    except ValueError:
        raise SerializationError("missing 'attach' section")

    edges = [Edge(u, v, w) for u, v, w in parse_edge_lines(lines[2:marker], first_line=3)]
    attach = {}
    for v, a, d in parse_edge_lines(lines[marker + 1:], first_line=marker + 2):
        attach[v] = (a, d)

    members = set(sample)
    for e in edges:
        members.update((e.u, e.v))
    if len(edges) != len(members) - 1:
        raise SerializationError(f"{len(edges)} edges cannot span {len(members)} subtree vertices")
    for v in list(members) + list(attach):
        if not 1 <= v <= n:
            raise SerializationError(f"vertex {v} outside 1..{n}")
    return SpannedSubtree(
        n=n,
        sample=sample,
        vertices=tuple(sorted(members)),
        edges=tuple(edges),
        attach=attach,
    )
