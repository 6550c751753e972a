"""
Randomized hypothesis tests for diameter, maximum degree, leaf count and
typical distance, working only through a DistanceOracle.

Every test returns a TestVerdict whose queries_used is the oracle ledger
delta across the call. Sample sizes use natural logarithms and ceilings;
without-replacement sizes are capped at n.
"""

import math
from fractions import Fraction
from typing import Any, Dict, Optional, Tuple

import numpy as np
import structlog

from ..models.data_models import (
    Decision,
    Number,
    Property,
    SampleSet,
    SamplingMode,
    TestSpec,
    TestVerdict,
)
from ..models.errors import PreconditionError, SizingError
from ..utils.logging_config import log_performance
from .metric_oracle import DistanceOracle
from .spanned_subtree import is_leaf_of_t, leaves_of_subtree, max_sampled_neighbor_count, recover

logger = structlog.get_logger()

# Doubling search ceiling for the path-count sizing rule.
MAX_PATHCOUNT_SAMPLE = 1 << 48


def exact(value: Number) -> Fraction:
    """Decimal-faithful Fraction (0.3 -> 3/10, not the nearest binary double)."""
    if isinstance(value, float):
        return Fraction(repr(value))
    return Fraction(value)


def pairs(k: int) -> int:
    return k * (k - 1) // 2


def rule_threshold(threshold: Number, n: int, delta: float) -> Fraction:
    """(threshold / n) * (1 - delta/2)"""
    return exact(threshold) / n * (1 - exact(delta) / 2)


# -- sample sizes ---------------------------------------------------------------------------

def _two_branch(n: int, threshold: Number, delta: float, log_first: float, log_second: float) -> float:
    scale = 4 * n / (3 * float(threshold) * delta * delta)
    return max(scale * (6 + delta) * log_first, scale * (6 - 5 * delta) * log_second)


def sample_size_diameter(n: int, D: Number, delta: float, epsilon: float) -> int:
    """max{4n(6+δ)/(3Dδ²)·ln(1/ε), 4n(6−5δ)/(3Dδ²)·ln(n²/ε)}, rounded up."""
    value = _two_branch(n, D, delta, math.log(1 / epsilon), math.log(n * n / epsilon))
    return max(1, math.ceil(value))


def sample_size_maxdeg(n: int, Delta: Number, delta: float, epsilon: float) -> int:
    value = _two_branch(n, Delta, delta, math.log(1 / epsilon), math.log(n / epsilon))
    return min(n, max(1, math.ceil(value)))


def sample_size_leaves(n: int, Lambda: Number, delta: float, epsilon: float) -> int:
    log_term = math.log(1 / epsilon)
    value = _two_branch(n, Lambda, delta, log_term, log_term)
    return min(n, max(1, math.ceil(value)))


def sample_size_typical_ustat(
    bound: Number, ell: Number, delta: float, epsilon: float, known_diameter: bool = True
) -> int:
    """
    ceil((4·bound/(δℓ))² · ln(1/budget)), budget ε with a known diameter and ε/2 otherwise.
    At least 2 so the pair average is defined.
    """
    budget = epsilon if known_diameter else epsilon / 2
    value = (4 * float(bound) / (delta * float(ell))) ** 2 * math.log(1 / budget)
    return max(2, math.ceil(value))


def pathcount_tail_bound(N: int, n: int, bound: Number, ell: Number, delta: float) -> float:
    """Sum of the two tail bounds that control the path-count statistic at sample size N."""
    spread = (delta * float(ell)) ** 2
    b = float(bound)
    first = 2 * math.exp(-(N // 2) * spread / (32 * b * b))
    second = N * N * math.exp(-(N - 2) * spread / (8 * n * b + 2 * n * delta * float(ell) / 3))
    return first + second


def sample_size_typical_pathcount(
    n: int, bound: Number, ell: Number, delta: float, epsilon: float, known_diameter: bool = True
) -> int:
    """
    Smallest N >= 3 whose combined tail bound is at most the failure budget.

    The admissible set is upward closed, so doubling then bisection finds it.

    Raises:
        SizingError: no admissible N below MAX_PATHCOUNT_SAMPLE
    """
    budget = epsilon if known_diameter else epsilon / 2

    def admissible(N: int) -> bool:
        return pathcount_tail_bound(N, n, bound, ell, delta) <= budget

    if admissible(3):
        return 3
    lo, hi = 3, 6
    while not admissible(hi):
        lo, hi = hi, hi * 2
        if hi > MAX_PATHCOUNT_SAMPLE:
            raise SizingError(
                f"path-count sizing diverged for n={n}, bound={bound}, ell={ell}, delta={delta}"
            )
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if admissible(mid):
            hi = mid
        else:
            lo = mid
    return hi


def select_typical_branch(
    n: int, bound: Number, ell: Number, delta: float, epsilon: float, known_diameter: bool = True
) -> Dict[str, Any]:
    """Compare n·N₁ (U-statistic) against C(N₂, 2) (path count) and pick the cheaper."""
    n_ustat = sample_size_typical_ustat(bound, ell, delta, epsilon, known_diameter)
    n_path = sample_size_typical_pathcount(n, bound, ell, delta, epsilon, known_diameter)
    cost_ustat = n * n_ustat
    cost_path = pairs(n_path)
    return {
        "branch": "ustat" if cost_ustat <= cost_path else "pathcount",
        "ustat_sample": n_ustat,
        "pathcount_sample": n_path,
        "ustat_cost": cost_ustat,
        "pathcount_cost": cost_path,
    }


def predicted_test_queries(
    test: str, n: int, threshold: Number, delta: float, epsilon: float, diam: Optional[Number] = None
) -> float:
    """Leading-order query expression of each test with constant 1."""
    t = float(threshold)
    if test == "diameter":
        return (n / (t * delta ** 2) * math.log(n * n / epsilon)) ** 2
    if test == "max_degree":
        return n * n / (t * delta ** 2) * math.log(n / epsilon)
    if test == "leaves":
        return n * n / (t * delta ** 2) * math.log(1 / epsilon)
    b = float(diam if diam is not None else n)
    spread = (delta * t) ** 2
    ustat = n * b * b / spread * math.log(1 / epsilon)
    if test == "typical_ustat":
        return ustat
    if test == "typical_pathcount":
        return (n * b / spread * math.log(1 / epsilon)) ** 2
    if test == "typical":
        total = ustat * min(1.0, n * math.log(1 / epsilon) / spread)
        if diam is None:
            total += (n * math.log(n * n / epsilon) / b) ** 2 / delta ** 5
        return total
    raise ValueError(f"unknown test '{test}'")


# -- sampling and statistics ----------------------------------------------------------------

def _rng(spec: TestSpec, rng: Optional[np.random.Generator]) -> np.random.Generator:
    return rng if rng is not None else np.random.default_rng(spec.seed)


def _full_sample(n: int, rng: np.random.Generator) -> SampleSet:
    return SampleSet(SamplingMode.WITHOUT_REPLACEMENT, (rng.permutation(n) + 1).tolist())


def draw_with_replacement(n: int, N: int, rng: np.random.Generator) -> SampleSet:
    return SampleSet(SamplingMode.WITH_REPLACEMENT, rng.integers(1, n + 1, size=N).tolist())


def draw_without_replacement(n: int, N: int, rng: np.random.Generator) -> SampleSet:
    return SampleSet(SamplingMode.WITHOUT_REPLACEMENT, (rng.choice(n, size=N, replace=False) + 1).tolist())


def _distinct_with_counts(sample: SampleSet) -> Tuple[np.ndarray, np.ndarray]:
    values, counts = np.unique(np.asarray(sample.members, dtype=np.int64), return_counts=True)
    return values, counts.astype(np.int64)


def _within_sample_distances(oracle: DistanceOracle, distinct: np.ndarray) -> np.ndarray:
    return np.stack([oracle.query_row(int(u), distinct) for u in distinct])


def path_count_matrix(distances: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """
    ℓ̃[a, b]: sample indices (with multiplicity) lying on the path between distinct
    sampled vertices a and b, detected by d(a,w) + d(w,b) = d(a,b).
    """
    m = distances.shape[0]
    out = np.empty((m, m), dtype=np.int64)
    for a in range(m):
        on_path = (distances[a][:, None] + distances) == distances[a][None, :]
        out[a] = counts @ on_path
    return out


def _pair_sum(matrix: np.ndarray, counts: np.ndarray) -> int:
    """Σ_{i<j} matrix[X_i, X_j] over sample indices, given per-vertex multiplicities."""
    weighted = matrix @ counts
    full = sum(int(c) * int(x) for c, x in zip(counts.tolist(), weighted.tolist()))
    diagonal = sum(int(c) * int(x) for c, x in zip(counts.tolist(), np.diagonal(matrix).tolist()))
    return (full - diagonal) // 2


def _verdict(
    accepted: bool, statistic: Fraction, sample_size: int, queries_used: int, details: Dict[str, Any]
) -> TestVerdict:
    return TestVerdict(
        decision=Decision.ACCEPT if accepted else Decision.REJECT,
        statistic=statistic,
        sample_size=sample_size,
        queries_used=queries_used,
        details=details,
    )


# -- tests ----------------------------------------------------------------------------------

@log_performance("diameter test")
def test_diameter(
    oracle: DistanceOracle, spec: TestSpec, rng: Optional[np.random.Generator] = None
) -> TestVerdict:
    """
    Accept diam(T) >= D iff d*/N > (D/n)(1 - δ/2), where d* is the largest
    number of sample indices found on the path between two sampled vertices.
    """
    rng = _rng(spec, rng)
    before = oracle.query_count()
    n = oracle.n
    if spec.debug_full_sample:
        sample = _full_sample(n, rng)
    else:
        sample = draw_with_replacement(n, sample_size_diameter(n, spec.threshold, spec.delta, spec.epsilon), rng)

    distinct, counts = _distinct_with_counts(sample)
    distances = _within_sample_distances(oracle, distinct)
    counted = path_count_matrix(distances, counts)
    d_star = int(counted.max())

    statistic = Fraction(d_star, sample.size)
    rule = rule_threshold(spec.threshold, n, spec.delta)
    a, b = np.unravel_index(int(np.argmax(counted)), counted.shape)
    return _verdict(
        statistic > rule,
        statistic,
        sample.size,
        oracle.query_count() - before,
        {
            "d_star": d_star,
            "distinct": int(distinct.size),
            "pairs_requested": pairs(sample.size),
            "rule": float(rule),
            "witness": (int(distinct[a]), int(distinct[b])),
        },
    )


@log_performance("max degree test")
def test_max_degree(
    oracle: DistanceOracle, spec: TestSpec, rng: Optional[np.random.Generator] = None
) -> TestVerdict:
    """Accept maxdeg(T) >= Δ iff ∂*/N > (Δ/n)(1 - δ/2), ∂* read off the recovered T_X."""
    rng = _rng(spec, rng)
    before = oracle.query_count()
    n = oracle.n
    N = n if spec.debug_full_sample else sample_size_maxdeg(n, spec.threshold, spec.delta, spec.epsilon)
    sample = draw_without_replacement(n, N, rng)

    subtree = recover(oracle, sample.members)
    best, argbest = max_sampled_neighbor_count(subtree)

    statistic = Fraction(best, N)
    rule = rule_threshold(spec.threshold, n, spec.delta)
    return _verdict(
        statistic > rule,
        statistic,
        N,
        oracle.query_count() - before,
        {
            "partial_degree": best,
            "argmax": argbest,
            "subtree_vertices": len(subtree.vertices),
            "rule": float(rule),
        },
    )


@log_performance("leaf test")
def test_leaves(
    oracle: DistanceOracle, spec: TestSpec, rng: Optional[np.random.Generator] = None
) -> TestVerdict:
    """
    Accept |L(T)| >= Λ iff L*/N > (Λ/n)(1 - δ/2), L* the sampled leaves of T_X verified as leaves of T.

    With N = 1 the subtree is a single vertex with no leaves, so L* = 0 and
    the test always rejects even when that vertex is a leaf of T. The sizing
    only gives N = 1 when ε is close to 1 and Λ close to n.
    """
    n = oracle.n
    if n < 2:
        raise PreconditionError("leaf test needs n >= 2")
    rng = _rng(spec, rng)
    before = oracle.query_count()
    N = n if spec.debug_full_sample else sample_size_leaves(n, spec.threshold, spec.delta, spec.epsilon)
    sample = draw_without_replacement(n, N, rng)

    subtree = recover(oracle, sample.members)
    sampled = set(subtree.sample)
    candidates = [v for v in leaves_of_subtree(subtree) if v in sampled]
    confirmed = [v for v in candidates if is_leaf_of_t(subtree, v)]

    statistic = Fraction(len(confirmed), N)
    rule = rule_threshold(spec.threshold, n, spec.delta)
    return _verdict(
        statistic > rule,
        statistic,
        N,
        oracle.query_count() - before,
        {
            "leaf_count": len(confirmed),
            "subtree_leaves": len(candidates),
            "subtree_vertices": len(subtree.vertices),
            "rule": float(rule),
        },
    )


def _diameter_bound(
    oracle: DistanceOracle, spec: TestSpec, rng: np.random.Generator
) -> Tuple[Fraction, Dict[str, Any]]:
    """D/(1-δ) from a diameter estimate at budget ε/2, capped at n."""
    from .estimation import estimate

    result = estimate(
        oracle, Property.DIAMETER, oracle.n, spec.delta, spec.epsilon / 2, seed=spec.seed, rng=rng
    )
    bound = min(Fraction(oracle.n), result.point / (1 - exact(spec.delta)))
    return bound, {"diameter_estimate": float(result.point), "diameter_iterations": result.iterations}


def _run_ustat(
    oracle: DistanceOracle, spec: TestSpec, bound: Number, known: bool, rng: np.random.Generator
) -> TestVerdict:
    before = oracle.query_count()
    n = oracle.n
    if spec.debug_full_sample:
        sample = _full_sample(n, rng)
    else:
        N = sample_size_typical_ustat(bound, spec.threshold, spec.delta, spec.epsilon, known)
        sample = draw_with_replacement(n, N, rng)
    N = sample.size

    distinct, counts = _distinct_with_counts(sample)
    everything = np.arange(1, n + 1, dtype=np.int64)
    rows = np.stack([oracle.query_row(int(u), everything) for u in distinct])
    cols = distinct - 1
    lengths = np.empty((distinct.size, distinct.size), dtype=np.int64)
    for a in range(distinct.size):
        # vertices w with d(a,w) + d(w,b) = d(a,b), for every sampled b
        lengths[a] = ((rows[a][None, :] + rows) == rows[a, cols][:, None]).sum(axis=1)

    if N < 2:
        raise SizingError("U-statistic needs at least two sampled vertices")
    ell1 = Fraction(2 * _pair_sum(lengths, counts), N * (N - 1))
    accepted = ell1 > exact(spec.threshold) * (1 - exact(spec.delta) / 2)
    return _verdict(
        accepted,
        ell1,
        N,
        oracle.query_count() - before,
        {"branch": "ustat", "distinct": int(distinct.size), "diam_bound": float(bound)},
    )


def _run_pathcount(
    oracle: DistanceOracle, spec: TestSpec, bound: Number, known: bool, rng: np.random.Generator
) -> TestVerdict:
    before = oracle.query_count()
    n = oracle.n
    if spec.debug_full_sample:
        if n <= 2:
            raise SizingError(f"path-count statistic needs N >= 3, full sample has N = {n}")
        sample = _full_sample(n, rng)
    else:
        N = sample_size_typical_pathcount(n, bound, spec.threshold, spec.delta, spec.epsilon, known)
        sample = draw_with_replacement(n, N, rng)
    N = sample.size
    if N <= 2:
        raise SizingError(f"path-count statistic needs N >= 3, got {N}")

    distinct, counts = _distinct_with_counts(sample)
    counted = path_count_matrix(_within_sample_distances(oracle, distinct), counts)
    total = _pair_sum(counted, counts) - 2 * pairs(N)
    ell2 = Fraction(2 * total, N * (N - 1))
    statistic = ell2 / (N - 2)
    rule = rule_threshold(spec.threshold, n, spec.delta)
    return _verdict(
        statistic > rule,
        statistic,
        N,
        oracle.query_count() - before,
        {
            "branch": "pathcount",
            "ell2_star": float(ell2),
            "distinct": int(distinct.size),
            "pairs_requested": pairs(N),
            "diam_bound": float(bound),
            "rule": float(rule),
        },
    )


def _typical_entry(runner, oracle, spec, diam_bound, rng) -> TestVerdict:
    rng = _rng(spec, rng)
    before = oracle.query_count()
    extra: Dict[str, Any] = {}
    if diam_bound is None:
        bound, extra = _diameter_bound(oracle, spec, rng)
        known = False
    else:
        bound, known = diam_bound, True
    verdict = runner(oracle, spec, bound, known, rng)
    verdict.queries_used = oracle.query_count() - before
    verdict.details.update(extra)
    return verdict


@log_performance("typical distance U-statistic test")
def test_typical_ustat(
    oracle: DistanceOracle,
    spec: TestSpec,
    diam_bound: Optional[Number] = None,
    rng: Optional[np.random.Generator] = None,
) -> TestVerdict:
    """Accept ℓ_typ >= ℓ iff ℓ₁* > ℓ(1 - δ/2), ℓ₁* the pair average of exact path lengths."""
    return _typical_entry(_run_ustat, oracle, spec, diam_bound, rng)


@log_performance("typical distance path-count test")
def test_typical_pathcount(
    oracle: DistanceOracle,
    spec: TestSpec,
    diam_bound: Optional[Number] = None,
    rng: Optional[np.random.Generator] = None,
) -> TestVerdict:
    """Accept ℓ_typ >= ℓ iff ℓ₂*/(N-2) > (ℓ/n)(1 - δ/2), with within-sample queries only."""
    return _typical_entry(_run_pathcount, oracle, spec, diam_bound, rng)


@log_performance("typical distance test")
def test_typical(
    oracle: DistanceOracle,
    spec: TestSpec,
    diam_bound: Optional[Number] = None,
    rng: Optional[np.random.Generator] = None,
) -> TestVerdict:
    """Run whichever typical-distance procedure has the lower predicted query cost."""

    def cheaper(oracle, spec, bound, known, rng):
        choice = select_typical_branch(oracle.n, bound, spec.threshold, spec.delta, spec.epsilon, known)
        runner = _run_ustat if choice["branch"] == "ustat" else _run_pathcount
        verdict = runner(oracle, spec, bound, known, rng)
        verdict.details.update({k: v for k, v in choice.items() if k != "branch"})
        return verdict

    return _typical_entry(cheaper, oracle, spec, diam_bound, rng)


TESTS = {
    "diameter": test_diameter,
    "max_degree": test_max_degree,
    "leaves": test_leaves,
    "typical": test_typical,
    "typical_ustat": test_typical_ustat,
    "typical_pathcount": test_typical_pathcount,
}
