import numpy as np
import pytest

from wftune.metrics import (best_performance, least_number_of_uses, mdape,
                            recall_score, recall_sum, top_n_indices)


def brute_force_recall(n, predicted, measured):
    """Independent oracle: explicit stable sorts and set intersection."""
    pred_top = set(sorted(range(len(predicted)),
                          key=lambda i: (predicted[i], i))[:n])
    meas_top = set(sorted(range(len(measured)),
                          key=lambda i: (measured[i], i))[:n])
    return 100.0 * len(pred_top & meas_top) / n


class TestRecall:
    def test_identical_ranking_is_100(self):
        values = [5.0, 1.0, 3.0, 2.0]
        for n in range(1, 5):
            assert recall_score(n, values, values) == 100.0

    def test_reversed_ranking_half_is_0(self):
        measured = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]
        predicted = [6.0, 5.0, 4.0, 3.0, 2.0, 1.0]
        assert recall_score(3, predicted, measured) == 0.0

    def test_hand_enumerated_case(self):
        # Predicted ranking c3,c1,c2,c5,c4 against measured c1..c5:
        # top-3 sets coincide.
        predicted = [2.0, 3.0, 1.0, 5.0, 4.0]
        measured = [1.0, 2.0, 3.0, 4.0, 5.0]
        assert recall_score(3, predicted, measured) == 100.0
        assert recall_score(1, predicted, measured) == 0.0

    def test_full_population_is_100(self):
        rng = np.random.default_rng(0)
        predicted = rng.normal(size=20)
        measured = rng.normal(size=20)
        assert recall_score(20, predicted, measured) == 100.0

    def test_matches_brute_force_with_ties(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            size = int(rng.integers(1, 50))
            predicted = rng.integers(0, 6, size).astype(float)
            measured = rng.integers(0, 6, size).astype(float)
            for n in range(1, size + 1):
                assert recall_score(n, predicted, measured) == \
                    brute_force_recall(n, predicted, measured)

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(2)
        predicted = rng.uniform(1, 10, 30)
        measured = rng.uniform(1, 10, 30)
        for n in (1, 3, 10, 30):
            base = recall_score(n, predicted, measured)
            assert recall_score(n, np.log(predicted), measured) == base
            assert recall_score(n, predicted * 7.0 + 3.0, measured) == base

    def test_bounds_checking(self):
        with pytest.raises(ValueError):
            recall_score(5, [1.0], [1.0])
        with pytest.raises(ValueError):
            recall_score(0, [1.0], [1.0])
        with pytest.raises(ValueError):
            recall_score(1, [1.0, 2.0], [1.0])

    def test_recall_sum_caps_at_population(self):
        assert recall_sum([1.0], [1.0]) == 100.0
        assert recall_sum([1.0, 2.0], [1.0, 2.0]) == 200.0
        assert recall_sum([1.0, 2.0, 3.0, 4.0], [1.0, 2.0, 3.0, 4.0]) == 300.0

    def test_top_n_ties_break_by_index(self):
        assert top_n_indices([2.0, 1.0, 1.0, 1.0], 2) == {1, 2}


class TestMdape:
    def test_perfect_predictions(self):
        assert mdape([1.0, 2.0], [1.0, 2.0]) == 0.0

    def test_even_count_median(self):
        assert mdape([10.0, 10.0], [11.0, 9.0]) == pytest.approx(0.1)

    def test_single_sample(self):
        assert mdape([4.0], [5.0]) == 0.25

    def test_permutation_invariance(self):
        rng = np.random.default_rng(3)
        y = rng.uniform(1, 5, 11)
        p = rng.uniform(1, 5, 11)
        perm = rng.permutation(11)
        assert mdape(y, p) == mdape(y[perm], p[perm])

    def test_interpolation_endpoints(self):
        rng = np.random.default_rng(4)
        y = rng.uniform(1, 5, 9)
        p = rng.uniform(1, 5, 9)
        base = mdape(y, p)
        assert mdape(y, y + 0.0 * (p - y)) == 0.0
        assert mdape(y, y + 1.0 * (p - y)) == base

    def test_zero_actuals_rejected(self):
        with pytest.raises(ValueError):
            mdape([0.0, 1.0], [1.0, 1.0])
        with pytest.raises(ValueError):
            mdape([], [])


class TestPayoff:
    def test_simple_case(self):
        report = least_number_of_uses(100.0, 1.0)
        assert report.runs == 100.0
        assert report.runs_ceil == 100
        assert report.pays_off

    def test_ceiling_reported(self):
        report = least_number_of_uses(10.0, 3.0)
        assert report.runs == pytest.approx(10 / 3)
        assert report.runs_ceil == 4

    def test_never_pays_off(self):
        for dp in (0.0, -2.5):
            report = least_number_of_uses(100.0, dp)
            assert not report.pays_off
            assert report.runs is None and report.runs_ceil is None

    def test_strictly_decreasing_in_improvement(self):
        runs = [least_number_of_uses(50.0, dp).runs
                for dp in (0.5, 1.0, 2.0, 8.0)]
        assert all(a > b for a, b in zip(runs, runs[1:]))

    def test_cost_must_be_positive(self):
        with pytest.raises(ValueError):
            least_number_of_uses(0.0, 1.0)


class FakeOracle:
    def __init__(self, table, metric="execution_time"):
        self.table = {tuple(k): v for k, v in table.items()}

    def value_of(self, config, metric):
        return self.table[tuple(config)]

    def best(self, metric):
        return min(self.table.values())


class FakeTrace:
    def __init__(self, best_config, metric="execution_time"):
        self.best_config = best_config
        self.metric = metric


class CountingExecutor:
    def __init__(self, value):
        self.value = value
        self.calls = 0

    def measure_workflow(self, config):
        from wftune.executor import Measurement
        self.calls += 1
        return Measurement.build(config, (self.value,), 1, 36, "external")


class TestBestPerformance:
    def test_oracle_lookup_and_normalization(self):
        oracle = FakeOracle({(1,): 10.0, (2,): 5.0, (3,): 20.0})
        perf = best_performance(FakeTrace((1,)), oracle=oracle)
        assert perf.value == 10.0
        assert perf.normalized == 2.0
        ideal = best_performance(FakeTrace((2,)), oracle=oracle)
        assert ideal.normalized == 1.0

    def test_external_verification_is_single_uncharged_run(self):
        ex = CountingExecutor(3.5)
        perf = best_performance(FakeTrace((7,)), executor=ex)
        assert ex.calls == 1
        assert perf.value == 3.5
        assert perf.normalized is None
        assert perf.verification is not None

    def test_requires_oracle_or_executor(self):
        with pytest.raises(ValueError):
            best_performance(FakeTrace((1,)))
