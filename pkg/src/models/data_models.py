from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Optional, Dict, Any, List, Tuple, Union

from .errors import InvalidSpecError

VertexId = int
Number = Union[int, float, Fraction]

# Edge weights are integer counts of a global quantum of 2^-32 units.
QUANTUM_BITS = 32
UNIT_QUANTA = 1 << QUANTUM_BITS


class Decision(str, Enum):
    ACCEPT = "accept"
    REJECT = "reject"


class SamplingMode(str, Enum):
    WITH_REPLACEMENT = "with_replacement"
    WITHOUT_REPLACEMENT = "without_replacement"


class Property(str, Enum):
    DIAMETER = "diameter"
    MAX_DEGREE = "max_degree"
    LEAVES = "leaves"
    TYPICAL_DISTANCE = "typical_distance"


@dataclass(frozen=True)
class Edge:
    u: VertexId
    v: VertexId
    w: int  # quanta

    def key(self) -> Tuple[VertexId, VertexId]:
        return (self.u, self.v) if self.u < self.v else (self.v, self.u)


@dataclass(frozen=True)
class QueryReceipt:
    distance: int  # quanta
    was_cached: bool


@dataclass(frozen=True)
class TestSpec:
    n: int
    threshold: Number
    delta: float
    epsilon: float
    seed: int = 0
    # Forces X = V(T) without replacement (N = n); the statistics become exact.
    debug_full_sample: bool = False

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if self.n < 1:
            raise InvalidSpecError(f"n must be >= 1, got {self.n}")
        if not self.threshold >= 1:
            raise InvalidSpecError(f"threshold must be >= 1, got {self.threshold}")
        if not 0 < self.delta < 1:
            raise InvalidSpecError(f"delta must lie in (0, 1), got {self.delta}")
        if not 0 < self.epsilon < 1:
            raise InvalidSpecError(f"epsilon must lie in (0, 1), got {self.epsilon}")

    def with_threshold(self, threshold: Number) -> "TestSpec":
        return TestSpec(self.n, threshold, self.delta, self.epsilon, self.seed, self.debug_full_sample)


@dataclass
class SampleSet:
    mode: SamplingMode
    members: List[VertexId]

    def __post_init__(self):
        if self.mode is SamplingMode.WITHOUT_REPLACEMENT and len(set(self.members)) != len(self.members):
            raise InvalidSpecError("without-replacement sample contains repeated vertices")

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass
class TestVerdict:
    decision: Decision
    statistic: Fraction
    sample_size: int
    queries_used: int
    details: Dict[str, Any] = field(default_factory=dict)

    __test__ = False

    @property
    def accepted(self) -> bool:
        return self.decision is Decision.ACCEPT

    def to_dict(self, test: str, spec: TestSpec) -> Dict[str, Any]:
        """Convert to dictionary for JSON serialization"""
        return {
            "test": test,
            "n": spec.n,
            "threshold": float(spec.threshold),
            "delta": spec.delta,
            "epsilon": spec.epsilon,
            "seed": spec.seed,
            "decision": self.decision.value,
            "statistic": float(self.statistic),
            "sample_size": self.sample_size,
            "queries_used": self.queries_used,
        }


@dataclass
class IterationRecord:
    threshold: float
    epsilon: float
    seed: int
    decision: Decision
    queries_used: int


@dataclass
class EstimateResult:
    property: Property
    point: Fraction
    interval_lo: Fraction
    interval_hi: Fraction
    iterations: int
    queries_used: int
    history: List[IterationRecord] = field(default_factory=list)

    @property
    def seeds(self) -> List[int]:
        return [record.seed for record in self.history]

    def contains(self, value: Number) -> bool:
        return self.interval_lo <= Fraction(value) <= self.interval_hi

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary for JSON serialization"""
        return {
            "property": self.property.value,
            "point": float(self.point),
            "lo": float(self.interval_lo),
            "hi": float(self.interval_hi),
            "iterations": self.iterations,
            "queries_used": self.queries_used,
            "seeds": self.seeds,
        }


@dataclass
class TrialRecord:
    trial: int
    seed: int
    true_value: float
    decision: Optional[str] = None  # accept / reject, or None for estimators
    point: Optional[float] = None
    statistic: Optional[float] = None
    sample_size: Optional[int] = None
    queries_used: int = 0
    wall_time_ms: float = 0.0
    correct: Optional[bool] = None
    # Sampled index pairs C(N, 2); with-replacement tests draw repeats, so this can exceed queries_used.
    pairs_requested: Optional[int] = None
    theoretical_queries: Optional[float] = None
    details: Dict[str, Any] = field(default_factory=dict)

    CSV_COLUMNS = (
        "trial", "seed", "true_value", "decision", "statistic",
        "sample_size", "queries_used", "wall_time_ms",
    )

    def to_row(self) -> Dict[str, Any]:
        """Fixed CSV column order."""
        decision = self.decision if self.decision is not None else self.point
        return {
            "trial": self.trial,
            "seed": self.seed,
            "true_value": self.true_value,
            "decision": decision,
            "statistic": self.statistic,
            "sample_size": self.sample_size,
            "queries_used": self.queries_used,
            "wall_time_ms": round(self.wall_time_ms, 3),
        }

    def to_dict(self) -> Dict[str, Any]:
        return {
            **self.to_row(),
            "point": self.point,
            "correct": self.correct,
            "pairs_requested": self.pairs_requested,
            "theoretical_queries": self.theoretical_queries,
            "details": self.details,
        }


@dataclass
class SummaryRecord:
    procedure: str
    family: str
    n: int
    threshold: Optional[float]
    trials: int
    true_value: float
    accept_rate: Optional[float] = None
    reject_rate: Optional[float] = None
    coverage: Optional[float] = None
    error_rate: Optional[float] = None
    allowed_error: Optional[float] = None
    mean_queries: float = 0.0
    max_queries: int = 0
    mean_pairs_requested: Optional[float] = None
    mean_query_ratio: Optional[float] = None
    branch_counts: Dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "summary": True,
            "procedure": self.procedure,
            "family": self.family,
            "n": self.n,
            "threshold": self.threshold,
            "trials": self.trials,
            "true_value": self.true_value,
            "accept_rate": self.accept_rate,
            "reject_rate": self.reject_rate,
            "coverage": self.coverage,
            "error_rate": self.error_rate,
            "allowed_error": self.allowed_error,
            "mean_queries": self.mean_queries,
            "max_queries": self.max_queries,
            "mean_pairs_requested": self.mean_pairs_requested,
            "mean_query_ratio": self.mean_query_ratio,
            "branch_counts": self.branch_counts,
        }
