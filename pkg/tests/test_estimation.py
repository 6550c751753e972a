from fractions import Fraction

import numpy as np
import pytest

from src.models.data_models import Decision, Property
from src.models.errors import InvalidSpecError
from src.services import estimation, tree_core
from src.services.metric_oracle import DistanceOracle


class TestSchedule:
    def test_geometric_decay_floored_at_one(self):
        assert estimation.threshold_schedule(10, 0.5) == [
            Fraction(10), Fraction(5), Fraction(5, 2), Fraction(5, 4), Fraction(1)
        ]
        assert estimation.threshold_schedule(1, 0.3) == [Fraction(1)]

    def test_schedule_length_matches_iteration_bound(self):
        assert len(estimation.threshold_schedule(100, 0.5)) == estimation.max_iterations(100, 0.5) == 8
        for n in (2, 17, 500):
            for delta in (0.1, 0.3, 0.7):
                assert len(estimation.threshold_schedule(n, delta)) <= estimation.max_iterations(n, delta)

    def test_budgets_sum_below_epsilon(self):
        assert sum(estimation.iteration_budget(0.2, k) for k in range(10000)) < 0.2
        assert estimation.iteration_budget(0.2, 0) == pytest.approx(0.2 * 6 / 3.141592653589793 ** 2)

    def test_initial_thresholds(self):
        assert estimation.initial_threshold(Property.DIAMETER, 50) == 50
        assert estimation.initial_threshold(Property.TYPICAL_DISTANCE, 50) == 50
        assert estimation.initial_threshold(Property.MAX_DEGREE, 50) == 49
        assert estimation.initial_threshold(Property.LEAVES, 1) == 1


class TestEstimators:
    def test_max_degree_on_star(self):
        oracle = DistanceOracle(tree_core.generate_tree("star", 100))
        result = estimation.estimate_max_degree(oracle, 0.3, 0.2, seed=1)
        assert result.point == 99
        assert result.iterations == 1
        assert result.contains(99)
        assert result.history[0].decision is Decision.ACCEPT
        assert len(result.seeds) == 1

    def test_leaves_on_star(self):
        oracle = DistanceOracle(tree_core.generate_tree("star", 100))
        result = estimation.estimate_leaves(oracle, 0.3, 0.2, seed=2)
        assert result.contains(99)

    def test_diameter_on_path(self):
        oracle = DistanceOracle(tree_core.generate_tree("path", 60))
        result = estimation.estimate_diameter(oracle, 0.3, 0.2, seed=3)
        assert result.point == 60
        assert result.interval_lo == Fraction(60) * Fraction(7, 10)
        assert result.interval_hi == Fraction(60) / Fraction(7, 10)

    def test_query_accounting(self):
        oracle = DistanceOracle(tree_core.generate_tree("uniform_random", 70, seed=4))
        oracle.query(1, 2)
        result = estimation.estimate_diameter(oracle, 0.4, 0.2, seed=5)
        assert result.queries_used == oracle.query_count() - 1
        assert sum(step.queries_used for step in result.history) == result.queries_used

    def test_history_is_a_decreasing_schedule(self):
        oracle = DistanceOracle(tree_core.generate_tree("path", 80))
        result = estimation.estimate_max_degree(oracle, 0.4, 0.2, seed=6)
        thresholds = [step.threshold for step in result.history]
        assert thresholds == sorted(thresholds, reverse=True)
        assert all(step.decision is Decision.REJECT for step in result.history[:-1])
        assert result.iterations == len(result.history)
        assert result.history[-1].epsilon == pytest.approx(estimation.iteration_budget(0.2, len(thresholds) - 1))

    def test_seeded_runs_replay(self):
        tree = tree_core.generate_tree("uniform_random", 60, seed=7)
        first = estimation.estimate_leaves(DistanceOracle(tree), 0.3, 0.2, seed=11)
        second = estimation.estimate_leaves(DistanceOracle(tree), 0.3, 0.2, seed=11)
        assert first.to_dict() == second.to_dict()

    def test_typical_with_known_diameter(self):
        tree = tree_core.generate_tree("path", 40)
        result = estimation.estimate_typical_distance(DistanceOracle(tree), 0.3, 0.2, seed=8, diam_bound=40)
        assert result.iterations == len(result.history)
        assert result.interval_lo == result.point * Fraction(7, 10)

    def test_typical_estimates_diameter_first(self):
        tree = tree_core.generate_tree("path", 40)
        result = estimation.estimate_typical_distance(DistanceOracle(tree), 0.3, 0.2, seed=9)
        assert len(result.history) > result.iterations
        # the diameter steps run at half the budget and come first
        assert result.history[0].threshold == 40
        assert result.history[0].epsilon == pytest.approx(estimation.iteration_budget(0.1, 0))

    def test_rejects_bad_parameters(self, path5):
        with pytest.raises(InvalidSpecError):
            estimation.estimate_diameter(DistanceOracle(path5), 1.0, 0.2)
        with pytest.raises(InvalidSpecError):
            estimation.estimate(DistanceOracle(path5), Property.LEAVES, 5, 0.3, 0.0)


class TestBudgetPrediction:
    def test_costs_stop_at_true_value(self):
        costs = estimation.predicted_step_costs(Property.MAX_DEGREE, 500, 100, 0.3, 0.2)
        schedule = estimation.threshold_schedule(499, 0.3)
        assert len(costs) == next(k for k, t in enumerate(schedule) if t <= 100) + 1
        assert all(c > 0 for c in costs)

    def test_typical_adds_diameter_cost(self):
        typical = estimation.predicted_query_budget(Property.TYPICAL_DISTANCE, 200, 60, 0.3, 0.2, diameter=200)
        alone = sum(estimation.predicted_step_costs(Property.TYPICAL_DISTANCE, 200, 60, 0.3, 0.2, diameter=200))
        assert typical > alone

    def test_true_value_below_one(self):
        with pytest.raises(InvalidSpecError):
            estimation.predicted_query_budget(Property.DIAMETER, 100, 0.5, 0.3, 0.2)

    def test_halving_the_diameter_quadruples_the_budget(self):
        n = 1 << 14
        wide = estimation.predicted_query_budget(Property.DIAMETER, n, n // 8, 0.5, 0.1)
        narrow = estimation.predicted_query_budget(Property.DIAMETER, n, n // 16, 0.5, 0.1)
        assert narrow / wide == pytest.approx(4.0, rel=0.1)

    def test_doubling_the_max_degree_halves_the_budget(self):
        n = (1 << 22) + 1
        low = estimation.predicted_query_budget(Property.MAX_DEGREE, n, 1 << 15, 0.5, 0.1)
        high = estimation.predicted_query_budget(Property.MAX_DEGREE, n, 1 << 16, 0.5, 0.1)
        assert high / low == pytest.approx(0.5, rel=0.1)


TRUTH = {
    Property.DIAMETER: tree_core.diameter,
    Property.MAX_DEGREE: tree_core.max_degree,
    Property.LEAVES: tree_core.leaf_count,
}


def _instances(count):
    rng = np.random.default_rng(2024)
    families = ("uniform_random", "caterpillar", "star", "path", "broom")
    for i in range(count):
        family = families[int(rng.integers(len(families)))]
        n = int(rng.integers(30, 121))
        prop = list(TRUTH)[i % len(TRUTH)]
        yield tree_core.generate_tree(family, n, seed=i), prop


def _measured_within_four_times_predicted(count):
    for i, (tree, prop) in enumerate(_instances(count)):
        truth = TRUTH[prop](tree)
        result = estimation.estimate(DistanceOracle(tree), prop, tree.n, 0.3, 0.2, seed=i)
        predicted = estimation.predicted_query_budget(prop, tree.n, truth, 0.3, 0.2)
        assert result.queries_used <= 4 * predicted, (prop.value, tree.n, result.queries_used, predicted)


class TestQueryGrowth:
    def test_measured_queries_stay_near_prediction(self):
        _measured_within_four_times_predicted(6)

    @pytest.mark.statistical
    def test_measured_queries_stay_near_prediction_full(self):
        _measured_within_four_times_predicted(50)

    @pytest.mark.parametrize(
        "prop, n, true_value",
        [(Property.DIAMETER, 10000, 3000), (Property.MAX_DEGREE, 100001, 10000), (Property.LEAVES, 100001, 10000)],
    )
    def test_predicted_steps_grow_geometrically(self, prop, n, true_value):
        costs = estimation.predicted_step_costs(prop, n, true_value, 0.5, 0.1)
        assert len(costs) > 2
        assert all(later > earlier for earlier, later in zip(costs, costs[1:]))
        assert sum(costs) <= 4 * costs[-1]

    def test_total_is_within_four_final_iterations(self):
        tree = tree_core.generate_tree("caterpillar", 1200)
        result = estimation.estimate_diameter(DistanceOracle(tree), 0.5, 0.1, seed=13)
        steps = [step.queries_used for step in result.history]
        assert len(steps) > 1
        assert all(later > earlier for earlier, later in zip(steps, steps[1:]))
        assert result.queries_used <= 4 * steps[-1]
