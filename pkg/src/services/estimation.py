"""
Interval estimators built from the property tests by geometric threshold decay.

Thresholds D_k = (1-δ)^k·D_0 (floored at 1) are tested in order with failure
budgets ε_k = ε·(6/π²)/(k+1)², which sum to at most ε. The first accepted
threshold is the point estimate; the interval is [point·(1-δ), point/(1-δ)].
"""

import math
from fractions import Fraction
from typing import Callable, Dict, List, Optional

import numpy as np
import structlog

from ..models.data_models import (
    Decision,
    EstimateResult,
    IterationRecord,
    Number,
    Property,
    TestSpec,
)
from ..models.errors import InvalidSpecError
from ..utils.logging_config import log_performance
from . import property_tests as tests
from .metric_oracle import DistanceOracle

logger = structlog.get_logger()

BUDGET_SPLIT = 6 / math.pi ** 2

_TEST_FOR: Dict[Property, Callable] = {
    Property.DIAMETER: tests.test_diameter,
    Property.MAX_DEGREE: tests.test_max_degree,
    Property.LEAVES: tests.test_leaves,
}


def initial_threshold(prop: Property, n: int) -> int:
    """n for diameter and typical distance; n-1 (at least 1) for degree and leaves."""
    if prop in (Property.DIAMETER, Property.TYPICAL_DISTANCE):
        return n
    return max(1, n - 1)


def iteration_budget(epsilon: float, k: int) -> float:
    return epsilon * BUDGET_SPLIT / (k + 1) ** 2


def threshold_schedule(start: Number, delta: float) -> List[Fraction]:
    """Strictly decreasing thresholds start·(1-δ)^k, the last one floored at 1."""
    factor = 1 - tests.exact(delta)
    current = Fraction(start)
    schedule = []
    while True:
        if current <= 1:
            schedule.append(Fraction(1))
            return schedule
        schedule.append(current)
        current *= factor


def max_iterations(n: int, delta: float) -> int:
    """ceil(log n / log(1/(1-δ))) + 1"""
    if n <= 1:
        return 1
    return math.ceil(math.log(n) / math.log(1 / (1 - delta))) + 1


@log_performance("estimation")
def estimate(
    oracle: DistanceOracle,
    prop: Property,
    n: int,
    delta: float,
    epsilon: float,
    seed: int = 0,
    rng: Optional[np.random.Generator] = None,
    diam_bound: Optional[Number] = None,
) -> EstimateResult:
    """
    Iterate the matching test over decreasing thresholds and stop at the first accept.

    For typical distance one diameter estimate at budget ε/2 is made up front
    (unless diam_bound is given) and reused by every iteration, which share
    the remaining ε/2.
    """
    prop = Property(prop)
    if not 0 < delta < 1 or not 0 < epsilon < 1:
        raise InvalidSpecError(f"delta and epsilon must lie in (0, 1), got {delta}, {epsilon}")
    rng = rng if rng is not None else np.random.default_rng(seed)
    before = oracle.query_count()
    history: List[IterationRecord] = []

    step_budget = epsilon
    bound = diam_bound
    if prop is Property.TYPICAL_DISTANCE:
        if bound is None:
            diameter = estimate(oracle, Property.DIAMETER, n, delta, epsilon / 2, rng=rng)
            bound = min(Fraction(n), diameter.point / (1 - tests.exact(delta)))
            history.extend(diameter.history)
            step_budget = epsilon / 2

    point = Fraction(1)
    steps = 0
    schedule = threshold_schedule(initial_threshold(prop, n), delta)
    for k, threshold in enumerate(schedule):
        steps += 1
        step_seed = int(rng.integers(0, 2 ** 63 - 1))
        spec = TestSpec(n, threshold, delta, iteration_budget(step_budget, k), seed=step_seed)
        step_rng = np.random.default_rng(step_seed)
        queries_before = oracle.query_count()
        if prop is Property.TYPICAL_DISTANCE:
            verdict = tests.test_typical(oracle, spec, diam_bound=bound, rng=step_rng)
        else:
            verdict = _TEST_FOR[prop](oracle, spec, rng=step_rng)
        history.append(
            IterationRecord(
                threshold=float(threshold),
                epsilon=spec.epsilon,
                seed=step_seed,
                decision=verdict.decision,
                queries_used=oracle.query_count() - queries_before,
            )
        )
        logger.debug(
            "Estimation step",
            property=prop.value,
            step=k,
            threshold=float(threshold),
            decision=verdict.decision.value,
        )
        if verdict.decision is Decision.ACCEPT:
            point = threshold
            break

    factor = 1 - tests.exact(delta)
    return EstimateResult(
        property=prop,
        point=point,
        interval_lo=point * factor,
        interval_hi=point / factor,
        iterations=steps,
        queries_used=oracle.query_count() - before,
        history=history,
    )


def estimate_diameter(oracle: DistanceOracle, delta: float, epsilon: float, seed: int = 0) -> EstimateResult:
    return estimate(oracle, Property.DIAMETER, oracle.n, delta, epsilon, seed)


def estimate_max_degree(oracle: DistanceOracle, delta: float, epsilon: float, seed: int = 0) -> EstimateResult:
    return estimate(oracle, Property.MAX_DEGREE, oracle.n, delta, epsilon, seed)


def estimate_leaves(oracle: DistanceOracle, delta: float, epsilon: float, seed: int = 0) -> EstimateResult:
    return estimate(oracle, Property.LEAVES, oracle.n, delta, epsilon, seed)


def estimate_typical_distance(
    oracle: DistanceOracle, delta: float, epsilon: float, seed: int = 0, diam_bound: Optional[Number] = None
) -> EstimateResult:
    return estimate(oracle, Property.TYPICAL_DISTANCE, oracle.n, delta, epsilon, seed, diam_bound=diam_bound)


# -- query budget prediction ----------------------------------------------------------------

def _step_cost(prop: Property, n: int, threshold: Number, delta: float, budget: float, bound: Number) -> int:
    cap = tests.pairs(n)
    if prop is Property.DIAMETER:
        return min(tests.pairs(tests.sample_size_diameter(n, threshold, delta, budget)), cap)
    if prop is Property.MAX_DEGREE:
        N = tests.sample_size_maxdeg(n, threshold, delta, budget)
        return N * (n - N) + tests.pairs(N)
    if prop is Property.LEAVES:
        N = tests.sample_size_leaves(n, threshold, delta, budget)
        return N * (n - N) + tests.pairs(N)
    choice = tests.select_typical_branch(n, bound, threshold, delta, budget, known_diameter=True)
    return min(choice["ustat_cost"], choice["pathcount_cost"], cap)


def predicted_step_costs(
    prop: Property, n: int, true_value: Number, delta: float, epsilon: float, diameter: Optional[Number] = None
) -> List[int]:
    """
    Per-iteration query costs from D_0 down to the worst-case last threshold,
    the first one at or below true_value (never below (1-δ)·true_value).
    """
    prop = Property(prop)
    if true_value < 1:
        raise InvalidSpecError(f"true_value must be >= 1, got {true_value}")
    budget = epsilon
    bound: Number = n
    if prop is Property.TYPICAL_DISTANCE:
        budget = epsilon / 2
        if diameter is not None:
            bound = min(Fraction(n), tests.exact(diameter) / (1 - tests.exact(delta)))
    costs = []
    for k, threshold in enumerate(threshold_schedule(initial_threshold(prop, n), delta)):
        costs.append(_step_cost(prop, n, threshold, delta, iteration_budget(budget, k), bound))
        if threshold <= tests.exact(true_value):
            break
    return costs


def predicted_query_budget(
    prop: Property, n: int, true_value: Number, delta: float, epsilon: float, diameter: Optional[Number] = None
) -> int:
    """Geometric-sum bound on the queries an estimation makes, using the implemented sample sizes."""
    prop = Property(prop)
    total = sum(predicted_step_costs(prop, n, true_value, delta, epsilon, diameter))
    if prop is Property.TYPICAL_DISTANCE:
        total += sum(predicted_step_costs(Property.DIAMETER, n, diameter or n, delta, epsilon / 2))
    return total
