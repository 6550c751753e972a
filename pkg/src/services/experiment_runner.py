"""
Monte-Carlo experiment runner.

A configuration fixes one instance (family, n, weights, tree seed) and one
procedure; every trial gets a fresh oracle and its own seed derived from
(base_seed, trial index). Ground truth comes from the brute-force functions
in tree_core and never from the oracle ledger.
"""

import contextvars
import math
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import structlog

from ..cli.requests import ExperimentConfig
from ..config.settings import get_settings
from ..models.data_models import Property, SummaryRecord, TestSpec, TrialRecord
from ..utils.logging_config import procedure_context, trial_context
from . import estimation, property_tests, tree_core
from .metric_oracle import DistanceOracle
from .spanned_subtree import SpannedSubtree, recover

logger = structlog.get_logger()

_TEST_TRUTH = {
    "diameter": tree_core.diameter,
    "max_degree": tree_core.max_degree,
    "leaves": tree_core.leaf_count,
    "typical": tree_core.typical_distance,
    "typical_ustat": tree_core.typical_distance,
    "typical_pathcount": tree_core.typical_distance,
}

ESTIMATE_PROPERTY = {
    "estimate_diameter": Property.DIAMETER,
    "estimate_max_degree": Property.MAX_DEGREE,
    "estimate_leaves": Property.LEAVES,
    "estimate_typical": Property.TYPICAL_DISTANCE,
}

_PROPERTY_TRUTH = {
    Property.DIAMETER: tree_core.diameter,
    Property.MAX_DEGREE: tree_core.max_degree,
    Property.LEAVES: tree_core.leaf_count,
    Property.TYPICAL_DISTANCE: tree_core.typical_distance,
}


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: List[TrialRecord]
    summary: SummaryRecord

    def jsonl_objects(self) -> List[Dict[str, Any]]:
        return [r.to_dict() for r in self.records] + [self.summary.to_dict()]


@dataclass
class SweepResult:
    thresholds: List[float]
    summaries: List[SummaryRecord]
    measure: str
    means: List[float] = field(default_factory=list)
    slope: float = float("nan")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "sweep": True,
            "measure": self.measure,
            "thresholds": self.thresholds,
            "means": self.means,
            "slope": self.slope,
        }


def trial_seed(base_seed: int, trial: int) -> int:
    """First 32-bit word of SeedSequence([base_seed, trial]); the trial replays from it alone."""
    return int(np.random.SeedSequence([base_seed, trial]).generate_state(1)[0])


def build_instance(config: ExperimentConfig) -> tree_core.WeightedTree:
    return tree_core.generate_tree(config.family, config.n, config.tree_seed, config.weight_scheme())


def ground_truth(config: ExperimentConfig, tree: tree_core.WeightedTree) -> Optional[Fraction]:
    """Brute-force value of the property the procedure targets (None for recover)."""
    if config.is_test:
        return Fraction(_TEST_TRUTH[config.procedure](tree))
    if config.is_estimate:
        return Fraction(_PROPERTY_TRUTH[ESTIMATE_PROPERTY[config.procedure]](tree))
    return None


def expected_decision(truth: Fraction, threshold: float, delta: float) -> Optional[bool]:
    """True when the null holds, False for a far alternative, None in the gap between."""
    if truth >= property_tests.exact(threshold):
        return True
    if truth < (1 - property_tests.exact(delta)) * property_tests.exact(threshold):
        return False
    return None


def recovery_matches(tree: tree_core.WeightedTree, subtree: SpannedSubtree) -> bool:
    """Compare a recovered subtree with the brute-force Steiner subtree, edge lengths and anchors."""
    expected_vertices = tree_core.steiner_vertices(tree, subtree.sample)
    if list(subtree.vertices) != expected_vertices:
        return False
    inside = set(expected_vertices)
    expected_edges = {e.key(): e.w for e in tree.edges if e.u in inside and e.v in inside}
    if subtree.edge_set() != expected_edges:
        return False
    if set(subtree.attach) != set(range(1, tree.n + 1)) - inside:
        return False
    # Multi-source sweep out of T_X: each outside vertex inherits the subtree vertex it is reached from.
    owner = {v: (v, 0) for v in expected_vertices}
    frontier = list(expected_vertices)
    while frontier:
        nxt = []
        for a in frontier:
            for b, w in tree.adjacency[a]:
                if b not in owner:
                    owner[b] = (owner[a][0], owner[a][1] + w)
                    nxt.append(b)
        frontier = nxt
    return all(subtree.attach[v] == owner[v] for v in subtree.attach)


def _theoretical(config: ExperimentConfig, truth: Optional[Fraction], tree_diam: Optional[int]) -> Optional[float]:
    if config.is_test:
        return property_tests.predicted_test_queries(
            config.procedure, config.n, config.threshold, config.delta, config.epsilon,
            diam=config.diam_hint,
        )
    if config.is_estimate and truth is not None:
        prop = ESTIMATE_PROPERTY[config.procedure]
        return float(estimation.predicted_query_budget(
            prop, config.n, max(Fraction(1), truth), config.delta, config.epsilon, diameter=tree_diam
        ))
    return None


def run_trial(
    config: ExperimentConfig,
    tree: tree_core.WeightedTree,
    truth: Optional[Fraction],
    trial: int,
    theoretical: Optional[float] = None,
) -> TrialRecord:
    """One independent trial on a fresh oracle."""
    seed = trial_seed(config.base_seed, trial)
    rng = np.random.default_rng(seed)
    oracle = DistanceOracle(tree)
    start = time.perf_counter()

    with trial_context(trial, seed):
        record = TrialRecord(
            trial=trial,
            seed=seed,
            true_value=float(truth) if truth is not None else 0.0,
            theoretical_queries=theoretical,
        )
        if config.is_test:
            spec = TestSpec(
                config.n, config.threshold, config.delta, config.epsilon, seed, config.debug_full_sample
            )
            test = property_tests.TESTS[config.procedure]
            if config.procedure.startswith("typical"):
                verdict = test(oracle, spec, diam_bound=config.diam_hint, rng=rng)
            else:
                verdict = test(oracle, spec, rng=rng)
            record.decision = verdict.decision.value
            record.statistic = float(verdict.statistic)
            record.sample_size = verdict.sample_size
            record.pairs_requested = verdict.details.get("pairs_requested")
            record.details = {k: v for k, v in verdict.details.items() if k in ("branch", "diam_bound")}
            expected = expected_decision(truth, config.threshold, config.delta)
            record.correct = None if expected is None else expected == verdict.accepted
        elif config.is_estimate:
            result = estimation.estimate(
                oracle, ESTIMATE_PROPERTY[config.procedure], config.n, config.delta, config.epsilon,
                seed=seed, rng=rng, diam_bound=config.diam_hint,
            )
            record.point = float(result.point)
            record.statistic = float(result.point)
            record.sample_size = result.iterations
            record.correct = result.contains(truth)
            record.details = {"lo": float(result.interval_lo), "hi": float(result.interval_hi)}
        else:
            members = (rng.choice(config.n, size=config.sample_size, replace=False) + 1).tolist()
            subtree = recover(oracle, members)
            record.true_value = float(len(tree_core.steiner_vertices(tree, members)))
            record.statistic = float(len(subtree.vertices))
            record.sample_size = config.sample_size
            k = config.sample_size
            record.correct = recovery_matches(tree, subtree) and (
                oracle.query_count() == k * (config.n - k) + k * (k - 1) // 2
            )

        record.queries_used = oracle.query_count()

    record.wall_time_ms = (time.perf_counter() - start) * 1000 if config.record_timing else 0.0
    return record


def summarize(config: ExperimentConfig, records: Sequence[TrialRecord], truth: Optional[Fraction]) -> SummaryRecord:
    trials = len(records)
    queries = [r.queries_used for r in records]
    summary = SummaryRecord(
        procedure=config.procedure,
        family=config.family,
        n=config.n,
        threshold=config.threshold,
        trials=trials,
        true_value=float(truth) if truth is not None else float(np.mean([r.true_value for r in records])),
        mean_queries=float(np.mean(queries)),
        max_queries=int(max(queries)),
    )
    judged = [r.correct for r in records if r.correct is not None]
    if judged:
        summary.error_rate = 1 - sum(judged) / len(judged)
    summary.allowed_error = config.epsilon + 3 * math.sqrt(config.epsilon * (1 - config.epsilon) / trials)
    if config.is_test:
        accepted = sum(1 for r in records if r.decision == "accept")
        summary.accept_rate = accepted / trials
        summary.reject_rate = 1 - summary.accept_rate
        branches: Dict[str, int] = {}
        for r in records:
            if "branch" in r.details:
                branches[r.details["branch"]] = branches.get(r.details["branch"], 0) + 1
        summary.branch_counts = branches
    if config.is_estimate:
        summary.coverage = sum(1 for r in records if r.correct) / trials
    requested = [r.pairs_requested for r in records if r.pairs_requested is not None]
    if requested:
        summary.mean_pairs_requested = float(np.mean(requested))
    ratios = [r.queries_used / r.theoretical_queries for r in records if r.theoretical_queries]
    if ratios:
        summary.mean_query_ratio = float(np.mean(ratios))
    return summary


def run_experiment(config: ExperimentConfig, threads: Optional[int] = None) -> ExperimentResult:
    """
    Run every trial of the configuration; records come back sorted by trial index.

    Args:
        config: validated experiment configuration
        threads: worker threads, TREEPROBE_THREADS by default
    """
    threads = threads or get_settings().threads
    tree = build_instance(config)
    truth = ground_truth(config, tree)
    tree_diam = tree_core.diameter(tree) if config.procedure == "estimate_typical" else None
    theoretical = _theoretical(config, truth, tree_diam)

    with procedure_context(config.procedure, config.n):
        logger.info("Experiment started", family=config.family, trials=config.trials, threads=threads)
        if threads <= 1:
            records = [run_trial(config, tree, truth, t, theoretical) for t in range(config.trials)]
        else:
            records = []
            with ThreadPoolExecutor(max_workers=threads) as executor:
                # one context copy per trial; a Context cannot be entered by two threads at once
                futures = [
                    executor.submit(contextvars.copy_context().run, run_trial, config, tree, truth, t, theoretical)
                    for t in range(config.trials)
                ]
                for future in as_completed(futures):
                    records.append(future.result())
            records.sort(key=lambda r: r.trial)

        summary = summarize(config, records, truth)
        logger.info(
            "Experiment finished",
            accept_rate=summary.accept_rate,
            coverage=summary.coverage,
            mean_queries=summary.mean_queries,
        )
    return ExperimentResult(config, records, summary)


def fit_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Least-squares slope of log(y) against log(x)."""
    slope, _ = np.polyfit(np.log(np.asarray(xs, dtype=float)), np.log(np.asarray(ys, dtype=float)), 1)
    return float(slope)


def run_sweep(
    config: ExperimentConfig, thresholds: Sequence[float], measure: str = "auto", threads: Optional[int] = None
) -> SweepResult:
    """
    Repeat the experiment over thresholds and fit the log-log slope of mean query counts.

    measure "pairs" regresses the sampled index pairs C(N, 2); "queries" the
    deduplicated ledger counts. "auto" picks pairs for the diameter test,
    whose deduplicated count saturates at C(n, 2).
    """
    if measure == "auto":
        measure = "pairs" if config.procedure == "diameter" else "queries"
    summaries = []
    means = []
    for threshold in thresholds:
        point = config.model_copy(update={"threshold": float(threshold)})
        summary = run_experiment(point, threads).summary
        summaries.append(summary)
        means.append(summary.mean_pairs_requested if measure == "pairs" else summary.mean_queries)
    result = SweepResult([float(t) for t in thresholds], summaries, measure, means)
    if len(thresholds) >= 2:
        result.slope = fit_slope(thresholds, means)
    logger.info("Sweep finished", procedure=config.procedure, measure=measure, slope=result.slope)
    return result
