"""
Acceptance battery behind `verify`.

Each check runs real procedures against brute-force ground truth and
reports pass/fail with the numbers it judged. Trial counts scale with
Settings.acceptance_trials and Settings.acceptance_scale; the quick suite
runs everything at a tenth of the size.
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import structlog

from ..cli.requests import ExperimentConfig
from ..config.settings import get_settings
from ..models.data_models import TestSpec
from . import property_tests, tree_core
from .experiment_runner import recovery_matches, run_experiment, run_sweep
from .metric_oracle import DistanceOracle
from .spanned_subtree import recover

logger = structlog.get_logger()

QUICK_SCALE = 0.1


@dataclass
class CheckResult:
    name: str
    passed: bool
    details: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {"check": self.name, "passed": self.passed, **self.details}


@dataclass
class SuiteReport:
    suite: str
    checks: List[CheckResult]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "suite": self.suite,
            "passed": self.passed,
            "failed": [c.name for c in self.checks if not c.passed],
        }


class AcceptanceSuite:
    """Runs the acceptance checks at a given scale."""

    def __init__(self, scale: float = 1.0, trials: Optional[int] = None, threads: Optional[int] = None):
        settings = get_settings()
        self.scale = scale
        self.trials = trials or settings.acceptance_trials
        self.threads = threads or settings.threads
        self.logger = logger.bind(service="acceptance_suite", scale=scale)

    def count(self, base: int, minimum: int = 10) -> int:
        return max(minimum, round(base * self.scale))

    def _config(self, **fields) -> ExperimentConfig:
        return ExperimentConfig.model_validate(fields)

    def _within_error(self, name: str, **fields) -> CheckResult:
        summary = run_experiment(self._config(**fields), self.threads).summary
        passed = summary.error_rate is not None and summary.error_rate <= summary.allowed_error
        return CheckResult(name, passed, {
            "error_rate": summary.error_rate,
            "allowed_error": summary.allowed_error,
            "accept_rate": summary.accept_rate,
            "mean_queries": summary.mean_queries,
        })

    # -- exact checks -------------------------------------------------------------------------

    def check_recovery_equivalence(self) -> CheckResult:
        instances = self.count(1000, minimum=50)
        failures = 0
        for i in range(instances):
            rng = np.random.default_rng(i)
            n = int(rng.integers(2, 201))
            tree = tree_core.generate_tree("uniform_random", n, seed=i)
            k = int(rng.integers(1, min(20, n) + 1))
            sample = (rng.choice(n, size=k, replace=False) + 1).tolist()
            oracle = DistanceOracle(tree)
            subtree = recover(oracle, sample)
            exact_budget = oracle.query_count() == k * (n - k) + k * (k - 1) // 2
            if not (exact_budget and recovery_matches(tree, subtree)):
                failures += 1
        return CheckResult("recovery_equivalence", failures == 0, {"instances": instances, "failures": failures})

    def check_query_accounting(self) -> CheckResult:
        mismatches = []
        for i in range(self.count(20, minimum=5)):
            rng = np.random.default_rng(10_000 + i)
            n = int(rng.integers(20, 121))
            tree = tree_core.generate_tree("uniform_random", n, seed=10_000 + i)
            diam = tree_core.diameter(tree)
            spec = TestSpec(n, max(1, n // 4), 0.5, 0.2, seed=i)

            verdict = property_tests.test_diameter(DistanceOracle(tree), spec)
            m = verdict.details["distinct"]
            if verdict.queries_used != m * (m - 1) // 2:
                mismatches.append(("diameter", i))

            for name, test in (("max_degree", property_tests.test_max_degree), ("leaves", property_tests.test_leaves)):
                verdict = test(DistanceOracle(tree), spec)
                N = verdict.sample_size
                if verdict.queries_used != N * (n - N) + N * (N - 1) // 2:
                    mismatches.append((name, i))

            typical = spec.with_threshold(max(1, diam // 3))
            verdict = property_tests.test_typical_ustat(DistanceOracle(tree), typical, diam_bound=diam)
            m = verdict.details["distinct"]
            if verdict.queries_used != m * (n - m) + m * (m - 1) // 2:
                mismatches.append(("typical_ustat", i))
        return CheckResult("query_accounting", not mismatches, {"mismatches": mismatches[:10]})

    def check_full_sample(self) -> CheckResult:
        failures = 0
        instances = self.count(100, minimum=10)
        for i in range(instances):
            rng = np.random.default_rng(20_000 + i)
            n = int(rng.integers(2, 101))
            tree = tree_core.generate_tree("uniform_random", n, seed=20_000 + i)
            spec = TestSpec(n, 1, 0.5, 0.1, seed=i, debug_full_sample=True)
            expected = {
                "diameter": Fraction(tree_core.diameter(tree), n),
                "max_degree": Fraction(tree_core.max_degree(tree), n),
                "leaves": Fraction(tree_core.leaf_count(tree), n),
            }
            for name, value in expected.items():
                verdict = property_tests.TESTS[name](DistanceOracle(tree), spec)
                if verdict.statistic != value:
                    failures += 1
        return CheckResult("full_sample_degeneracy", failures == 0, {"instances": instances, "failures": failures})

    # -- statistical suites -------------------------------------------------------------------

    def check_test_suite(self, procedure: str, null: Dict, alternative: Dict, threshold: float,
                         delta: float, epsilon: float, trials: int) -> List[CheckResult]:
        common = dict(procedure=procedure, threshold=threshold, delta=delta, epsilon=epsilon, trials=trials)
        return [
            self._within_error(f"{procedure}_null_{null['family']}", **common, **null),
            self._within_error(f"{procedure}_alternative_{alternative['family']}", **common, **alternative),
        ]

    def check_unbiased_ustat(self) -> CheckResult:
        tree = tree_core.generate_tree("path", 100)
        truth = tree_core.typical_distance(tree)
        runs = self.count(500, minimum=30)
        values = []
        for i in range(runs):
            spec = TestSpec(100, 50, 0.3, 0.1, seed=30_000 + i)
            verdict = property_tests.test_typical_ustat(DistanceOracle(tree), spec, diam_bound=100)
            values.append(float(verdict.statistic))
        mean = float(np.mean(values))
        stderr = float(np.std(values, ddof=1) / math.sqrt(runs))
        passed = abs(mean - float(truth)) <= 3 * stderr + 1e-12
        return CheckResult("ustat_unbiased", passed, {"mean": mean, "truth": float(truth), "stderr": stderr})

    def check_typical_end_to_end(self) -> CheckResult:
        trials = self.count(100)
        config = self._config(
            family="path", n=500, procedure="typical", threshold=100, delta=0.3, epsilon=0.2, trials=trials
        )
        result = run_experiment(config, self.threads)
        correct = sum(1 for r in result.records if r.correct) / trials
        branch_ok = all(
            r.details.get("branch") == property_tests.select_typical_branch(
                500, Fraction(r.details["diam_bound"]), 100, 0.3, 0.2, known_diameter=False
            )["branch"]
            for r in result.records
        )
        slack = 3 * math.sqrt(0.2 * 0.8 / trials)
        return CheckResult("typical_end_to_end", correct >= 0.8 - slack and branch_ok, {
            "correct_rate": correct,
            "branch_selection_ok": branch_ok,
            "branches": result.summary.branch_counts,
        })

    def check_coverage(self, procedure: str, family: str, trials: int) -> CheckResult:
        config = self._config(family=family, n=500, procedure=procedure, delta=0.3, epsilon=0.2, trials=trials)
        summary = run_experiment(config, self.threads).summary
        floor = 1 - 0.2 - 3 * math.sqrt(0.2 * 0.8 / trials)
        return CheckResult(f"coverage_{procedure}", summary.coverage >= floor, {
            "coverage": summary.coverage,
            "floor": floor,
            "mean_queries": summary.mean_queries,
        })

    def check_scaling(self, procedure: str, family: str, delta: float, epsilon: float,
                      target: float, tolerance: float) -> CheckResult:
        config = self._config(
            family=family, n=500, procedure=procedure, threshold=50, delta=delta, epsilon=epsilon,
            trials=self.count(10, minimum=2),
        )
        sweep = run_sweep(config, [50, 100, 200, 400], threads=self.threads)
        passed = abs(sweep.slope - target) <= tolerance
        return CheckResult(f"scaling_{procedure}", passed, {
            "slope": sweep.slope,
            "target": target,
            "measure": sweep.measure,
            "means": sweep.means,
        })

    # -- battery ------------------------------------------------------------------------------

    def checks(self) -> List[Callable[[], Any]]:
        t = self.count(self.trials)
        t100 = self.count(100)
        return [
            self.check_recovery_equivalence,
            self.check_query_accounting,
            self.check_full_sample,
            lambda: self.check_test_suite(
                "diameter", {"family": "path", "n": 500}, {"family": "star", "n": 500}, 400, 0.25, 0.1, t),
            lambda: self.check_test_suite(
                "max_degree", {"family": "star", "n": 500}, {"family": "path", "n": 500}, 400, 0.25, 0.1, t),
            lambda: self.check_test_suite(
                "leaves", {"family": "star", "n": 500}, {"family": "random_binary", "n": 501}, 400, 0.25, 0.1, t),
            lambda: self.check_test_suite(
                "typical_ustat", {"family": "path", "n": 300, "diam_hint": 300},
                {"family": "star", "n": 300, "diam_hint": 3}, 80, 0.3, 0.1, t),
            lambda: self.check_test_suite(
                "typical_pathcount", {"family": "path", "n": 300, "diam_hint": 300},
                {"family": "star", "n": 300, "diam_hint": 3}, 80, 0.3, 0.1, t),
            self.check_unbiased_ustat,
            self.check_typical_end_to_end,
            lambda: self.check_coverage("estimate_diameter", "path", t100),
            lambda: self.check_coverage("estimate_max_degree", "star", t100),
            lambda: self.check_coverage("estimate_leaves", "star", t100),
            lambda: self.check_coverage("estimate_typical", "path", t100),
            lambda: self.check_scaling("diameter", "path", 0.25, 0.1, -2.0, 0.3),
            lambda: self.check_scaling("max_degree", "star", 0.9, 0.5, -1.0, 0.2),
            lambda: self.check_scaling("leaves", "star", 0.9, 0.5, -1.0, 0.2),
        ]

    def run(self, suite: str = "acceptance") -> SuiteReport:
        results: List[CheckResult] = []
        for check in self.checks():
            outcome = check()
            for result in outcome if isinstance(outcome, list) else [outcome]:
                self.logger.info("Acceptance check", check=result.name, passed=result.passed)
                results.append(result)
        report = SuiteReport(suite, results)
        if not report.passed:
            self.logger.warning("Acceptance suite failed", failed=report.to_dict()["failed"])
        return report


def run_suite(suite: str = "acceptance", threads: Optional[int] = None) -> SuiteReport:
    """Run the named suite: 'acceptance' at the configured scale or 'quick' at a tenth."""
    settings = get_settings()
    if suite not in ("acceptance", "quick"):
        raise ValueError(f"unknown suite '{suite}'")
    scale = settings.acceptance_scale if suite == "acceptance" else QUICK_SCALE
    return AcceptanceSuite(scale=scale, threads=threads).run(suite)
