"""
Query-counted exact distance access to a hidden weighted tree.

The oracle keeps a deduplicated ledger of unordered vertex pairs. Self-pairs
are answered 0 for free, repeated pairs are answered from the ledger and
never counted twice. The ledger is guarded by a lock so a single oracle can
be shared between threads; distinct oracles are independent.
"""

import csv
import math
import threading
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import structlog

from ..models.data_models import QueryReceipt, UNIT_QUANTA, VertexId
from ..models.errors import InfiniteDistanceError, WeightDomainError, ZeroWeightError
from .tree_core import WeightedTree

logger = structlog.get_logger()


class DistanceOracle:
    """
    Exact distance oracle over a WeightedTree.

    Callers see distances only; the backing tree is never handed out.
    """

    def __init__(self, tree: WeightedTree, trace: bool = False):
        self._tree = tree
        self.n = tree.n
        self._seen = np.zeros((tree.n + 1, tree.n + 1), dtype=bool)
        self._count = 0
        self._lock = threading.Lock()
        self._trace: Optional[List[Tuple[int, int, int, bool]]] = [] if trace else None

    def __repr__(self) -> str:
        return f"DistanceOracle(n={self.n}, queries={self._count})"

    def query(self, u: VertexId, v: VertexId) -> QueryReceipt:
        """Exact d(u, v) in quanta; updates the ledger."""
        u = self._tree.check_vertex(u)
        v = self._tree.check_vertex(v)
        if u == v:
            return QueryReceipt(0, False)
        distance = self._tree.path_distance(u, v)
        with self._lock:
            cached = bool(self._seen[u, v])
            if not cached:
                self._seen[u, v] = self._seen[v, u] = True
                self._count += 1
            if self._trace is not None:
                self._trace.append((u, v, distance, cached))
        return QueryReceipt(distance, cached)

    def query_row(self, u: VertexId, vs: Union[Sequence[VertexId], np.ndarray]) -> np.ndarray:
        """
        Batched query of d(u, v) for every v in vs, same ledger semantics as query.

        Returns an int64 array aligned with vs.
        """
        u = self._tree.check_vertex(u)
        vs = np.asarray(vs, dtype=np.int64)
        if vs.size and (vs.min() < 1 or vs.max() > self.n):
            bad = vs[(vs < 1) | (vs > self.n)][0]
            self._tree.check_vertex(int(bad))
        distances = self._tree.path_distances(u, vs)
        others = vs[vs != u]
        with self._lock:
            cached = self._seen[u, vs].copy()
            fresh = np.unique(others[~self._seen[u, others]])
            self._seen[u, fresh] = True
            self._seen[fresh, u] = True
            self._count += int(fresh.size)
            if self._trace is not None:
                for v, d, c in zip(vs.tolist(), distances.tolist(), cached.tolist()):
                    if v != u:
                        self._trace.append((u, v, d, c))
        return distances

    def query_count(self) -> int:
        with self._lock:
            return self._count

    def is_on_path(self, u: VertexId, v: VertexId, w: VertexId) -> bool:
        """True iff d(u, w) + d(w, v) = d(u, v) exactly."""
        return self.query(u, w).distance + self.query(w, v).distance == self.query(u, v).distance

    def ledger_pairs(self) -> List[Tuple[int, int]]:
        with self._lock:
            us, vs = np.nonzero(np.triu(self._seen))
        return list(zip(us.tolist(), vs.tolist()))

    def export_trace(self, path: Union[str, Path]) -> int:
        """Write the query trace as CSV `u,v,distance_quanta,cached`; returns the row count."""
        if self._trace is None:
            raise RuntimeError("oracle was created without trace=True")
        with self._lock:
            rows = list(self._trace)
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["u", "v", "distance_quanta", "cached"])
            for u, v, d, c in rows:
                writer.writerow([u, v, d, "true" if c else "false"])
        logger.debug("Query trace exported", path=str(path), rows=len(rows))
        return len(rows)


def query(oracle: DistanceOracle, u: VertexId, v: VertexId) -> QueryReceipt:
    return oracle.query(u, v)


def query_row(oracle: DistanceOracle, u: VertexId, vs: Sequence[VertexId]) -> np.ndarray:
    return oracle.query_row(u, vs)


def query_count(oracle: DistanceOracle) -> int:
    return oracle.query_count()


def is_on_path(oracle: DistanceOracle, u: VertexId, v: VertexId, w: VertexId) -> bool:
    return oracle.is_on_path(u, v, w)


def ledger_pairs(oracle: DistanceOracle) -> List[Tuple[int, int]]:
    return oracle.ledger_pairs()


def export_trace(oracle: DistanceOracle, path: Union[str, Path]) -> int:
    return oracle.export_trace(path)


# -- correlation adapter --------------------------------------------------------------------

def correlation_to_distance(rho: float) -> int:
    """
    Edge weight in quanta for a correlation: round(-log(rho^2) * 2^32), at least 1 quantum.

    Raises:
        InfiniteDistanceError: rho == 0
        ZeroWeightError: |rho| == 1
        WeightDomainError: |rho| > 1 or rho is not finite
    """
    if not math.isfinite(rho):
        raise WeightDomainError(f"correlation must be finite, got {rho}")
    magnitude = abs(rho)
    if magnitude == 0:
        raise InfiniteDistanceError("rho = 0 gives an infinite distance")
    if magnitude > 1:
        raise WeightDomainError(f"|rho| must be at most 1, got {rho}")
    if magnitude == 1:
        raise ZeroWeightError("|rho| = 1 gives a zero-length edge")
    # -2 log|rho| rather than log(rho^2): the square underflows for tiny correlations
    return max(1, round(-2 * math.log(magnitude) * UNIT_QUANTA))


def distance_to_correlation(weight: int) -> float:
    """|rho| recovered from a quantized weight: exp(-w / 2)."""
    if weight < 1:
        raise WeightDomainError(f"weight must be at least one quantum, got {weight}")
    return math.exp(-(weight / UNIT_QUANTA) / 2)


def tree_from_correlations(n: int, edges: Iterable[Tuple[int, int, float]]) -> WeightedTree:
    """Tree whose edge weights are the quantized distances of the given edge correlations."""
    return WeightedTree(n, [(u, v, correlation_to_distance(rho)) for u, v, rho in edges])
