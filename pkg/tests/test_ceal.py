import hashlib

import numpy as np
import pytest

from wftune.boosting import BoostingParams
from wftune.ceal import (Budget, SurrogateScorer, best_predicted,
                         build_component_models, detect_switch, resume_ceal,
                         run_ceal)
from wftune.space import build_pool, make_rng
from wftune.synthetic import SyntheticExecutor
from wftune.trace import TuningTrace
from wftune.workflow import parse_workflow

FAST = BoostingParams(tree_count=25, max_depth=4)
MEMO = BoostingParams(tree_count=40, max_depth=12, learning_rate=1.0)


def small_workflow(*, coupling=12.0, sigma=0.0, metric="execution_time"):
    return parse_workflow({
        "name": "small",
        "metric": metric,
        "components": [
            {"name": "sim", "parameters": [
                {"name": "procs", "range": {"lo": 1, "hi": 24, "step": 1}},
                {"name": "ppn", "range": {"lo": 1, "hi": 8, "step": 1}},
                {"name": "threads", "list": [1, 2]}]},
            {"name": "analysis", "parameters": [
                {"name": "procs", "range": {"lo": 1, "hi": 12, "step": 1}},
                {"name": "ppn", "range": {"lo": 1, "hi": 8, "step": 1}}]},
        ],
        "synthetic": {
            "cores_per_node": 8,
            "coupling": coupling,
            "noise_sigma": sigma,
            "seed": 0,
            "components": {
                "sim": {"work": 150.0, "alpha": 0.9, "overhead": 0.3,
                        "comm": 0.6},
                "analysis": {"work": 60.0, "alpha": 0.85, "overhead": 0.2,
                             "comm": 0.4},
            },
        },
    })


class OracleScorer:
    """Exact noise-free workflow scores, as a pool scorer."""

    def __init__(self, executor, metric="execution_time"):
        self.executor = executor
        self.metric = metric

    def score_many(self, configs):
        _, exec_s, _, comp_h = self.executor.evaluate_batch(configs,
                                                            noise=False)
        return exec_s if self.metric == "execution_time" else comp_h


class OracleModel(OracleScorer):
    """Same thing behind the regressor interface."""

    def predict(self, X):
        return self.score_many([tuple(row) for row in np.asarray(X)])


class RandomModel:
    """Deterministic pseudo-random predictions keyed by row content."""

    def __init__(self, seed):
        self.seed = seed

    def predict(self, X):
        out = []
        for row in np.asarray(X, dtype=float):
            digest = hashlib.sha256(
                repr((self.seed, row.tolist())).encode()).digest()
            out.append(int.from_bytes(digest[:8], "big") / 2**64)
        return np.asarray(out)


class TestBudget:
    def test_history_style_split(self):
        b = Budget(m=50, m_r=0, m_0=13, iterations=3)
        assert b.batch_sizes() == [13, 12, 12]
        assert b.model_selected_total == 37

    def test_component_phase_split(self):
        b = Budget(m=50, m_r=25, m_0=8, iterations=3)
        assert b.batch_sizes() == [6, 6, 5]
        assert sum(b.batch_sizes()) == 17

    def test_remainder_goes_to_earliest_iterations(self):
        assert Budget(m=12, m_0=2, iterations=3).batch_sizes() == [4, 3, 3]

    def test_invalid_budgets(self):
        with pytest.raises(ValueError):
            Budget(m=50, m_r=40, m_0=20, iterations=3)
        with pytest.raises(ValueError):
            Budget(m=10, m_r=0, m_0=5, iterations=6)
        with pytest.raises(ValueError):
            Budget(m=0)
        with pytest.raises(ValueError):
            Budget(m=10, m_r=-1)

    def test_recommended_splits(self):
        hist = Budget.recommended(50, with_history=True)
        assert (hist.m_r, hist.m_0) == (0, 13)
        cold = Budget.recommended(50, with_history=False)
        assert (cold.m_r, cold.m_0) == (20, 8)


class CountingExecutor:
    def __init__(self, inner):
        self.inner = inner
        self.component_calls = {}
        self.workflow_calls = 0

    def measure_component(self, j, cfg):
        self.component_calls[j] = self.component_calls.get(j, 0) + 1
        return self.inner.measure_component(j, cfg)

    def measure_workflow(self, cfg):
        self.workflow_calls += 1
        return self.inner.measure_workflow(cfg)


class TestComponentPhase:
    def test_history_only_trains_without_charge(self):
        wf = small_workflow()
        ex = CountingExecutor(SyntheticExecutor(wf))
        history = {}
        for j, comp in enumerate(wf.configurable_components):
            rng = make_rng(j, "hist")
            space = wf.component_space(j)
            history[comp.name] = [
                ex.inner.measure_component(j, space.random_configuration(rng))
                for _ in range(50)]
        models, records = build_component_models(wf, 0, history, ex,
                                                 make_rng(0), FAST)
        assert ex.component_calls == {}
        assert all(m.n_training_rows == 50 for m in models)
        assert all(r.history_rows == 50 for r in records)

    def test_m_r_measures_each_component(self):
        wf = small_workflow()
        ex = CountingExecutor(SyntheticExecutor(wf))
        models, records = build_component_models(wf, 10, {}, ex, make_rng(1),
                                                 FAST)
        assert ex.component_calls == {0: 10, 1: 10}
        assert all(m.n_training_rows == 10 for m in models)

    def test_history_union_keeps_duplicates(self):
        wf = small_workflow()
        ex = SyntheticExecutor(wf)
        space = wf.component_space(0)
        cfg = space.random_configuration(make_rng(2))
        history = {"sim": [ex.measure_component(0, cfg)] * 7}
        models, _ = build_component_models(wf, 5, history, ex, make_rng(3),
                                           FAST)
        assert models[0].n_training_rows == 12  # 5 measured + 7 history rows

    def test_no_data_is_an_error(self):
        wf = small_workflow()
        with pytest.raises(ValueError):
            build_component_models(wf, 0, {}, SyntheticExecutor(wf),
                                   make_rng(0), FAST)


class _FixedScores:
    def __init__(self, table):
        self.table = {tuple(k): v for k, v in table.items()}

    def score_many(self, configs):
        return np.asarray([self.table[tuple(c)] for c in configs])


class TestDetectSwitch:
    def test_perfect_high_inverted_low(self):
        configs = [(1,), (2,), (3,)]
        measured = [1.0, 2.0, 3.0]
        high = _FixedScores({(1,): 1.0, (2,): 2.0, (3,): 3.0})
        low = _FixedScores({(1,): 3.0, (2,): 2.0, (3,): 1.0})
        switch, s_h, s_l = detect_switch(high, low, configs, measured)
        assert (switch, s_h, s_l) == (True, 300.0, 150.0)

    def test_tie_switches(self):
        configs = [(1,), (2,), (3,)]
        measured = [1.0, 2.0, 3.0]
        perfect = _FixedScores({(1,): 10.0, (2,): 20.0, (3,): 30.0})
        switch, s_h, s_l = detect_switch(perfect, perfect, configs, measured)
        assert switch and s_h == s_l == 300.0

    def test_small_batches_sum_fewer_terms(self):
        configs = [(1,), (2,)]
        measured = [1.0, 2.0]
        perfect = _FixedScores({(1,): 1.0, (2,): 2.0})
        _, s_h, _ = detect_switch(perfect, perfect, configs, measured)
        assert s_h == 200.0

    def test_empty_batch_is_noop(self):
        assert detect_switch(None, None, [], []) == (False, None, None)

    def test_untrained_surrogate_scores_constant(self):
        scorer = SurrogateScorer(None)
        assert np.array_equal(scorer.score_many([(1,), (2,)]), [0.0, 0.0])


class TestRunCeal:
    def test_budget_conservation_and_exclusivity(self):
        wf = small_workflow(sigma=0.05)
        ex = CountingExecutor(SyntheticExecutor(wf, seed=4))
        budget = Budget(m=20, m_r=6, m_0=4, iterations=3)
        trace = run_ceal(wf, budget, ex, surrogate_params=FAST, pool_size=80,
                         seed=4)
        assert trace.charged_component_runs == 6
        assert trace.measured_workflow_runs == 14
        assert trace.total_charged == 20
        assert ex.workflow_calls == 14
        configs = trace.measured_configs()
        assert len(set(configs)) == len(configs)
        # batch shapes: iteration 1 holds m_0 + b_1
        sizes = [len(it.measurements) for it in trace.iterations]
        assert sizes == [4 + 4, 3, 3]

    def test_seed_determinism_byte_for_byte(self):
        wf = small_workflow(sigma=0.05)
        budget = Budget(m=16, m_r=4, m_0=3, iterations=3)
        runs = []
        for _ in range(2):
            ex = SyntheticExecutor(wf, seed=7)
            trace = run_ceal(wf, budget, ex, surrogate_params=FAST,
                             pool_size=60, seed=7)
            runs.append("\n".join(trace.to_lines()))
        assert runs[0] == runs[1]

    def test_single_iteration_degenerate(self):
        wf = small_workflow()
        ex = SyntheticExecutor(wf)
        trace = run_ceal(wf, Budget(m=10, m_r=3, m_0=2, iterations=1), ex,
                         surrogate_params=FAST, pool_size=50, seed=1)
        assert len(trace.iterations) == 1
        assert len(trace.iterations[0].measurements) == 7
        # the single batch is selected before any workflow model exists
        assert all(e.source in ("random", "low")
                   for e in trace.iterations[0].selected)
        assert trace.final_model is not None

    def test_forced_oracle_high_switches_at_first_detection(self):
        wf = small_workflow()
        ex = SyntheticExecutor(wf)
        trainer = lambda X, y: OracleModel(ex)
        trace = run_ceal(wf, Budget(m=12, m_r=3, m_0=2, iterations=3), ex,
                         surrogate_params=FAST, pool_size=60, seed=2,
                         high_fidelity_trainer=trainer)
        assert trace.switch_iteration == 1
        assert trace.iterations[0].switched
        # one-way: after the switch, detection stops and batches come from
        # the high-fidelity side
        assert trace.iterations[1].s_h is None
        assert trace.iterations[1].evaluator == "high"
        assert trace.iterations[2].evaluator == "high"

    def test_supplied_low_fidelity_requires_zero_m_r(self):
        wf = small_workflow()
        ex = SyntheticExecutor(wf)
        with pytest.raises(ValueError):
            run_ceal(wf, Budget(m=10, m_r=2, m_0=2, iterations=2), ex,
                     low_fidelity=OracleScorer(ex), pool_size=40, seed=0)

    def test_failed_measurements_are_replaced(self):
        wf = small_workflow()
        inner = SyntheticExecutor(wf)
        pool = build_pool(wf.space, 60, make_rng(5, "pool"))

        class Flaky:
            def __init__(self):
                self.banned = set(pool.configurations[i] for i in (0, 5, 11))

            def measure_component(self, j, cfg):
                return inner.measure_component(j, cfg)

            def measure_workflow(self, cfg):
                from wftune.executor import Measurement
                if tuple(cfg) in self.banned:
                    return Measurement.failure(cfg, "synthetic", "injected")
                return inner.measure_workflow(cfg)

        trace = run_ceal(wf, Budget(m=14, m_r=4, m_0=3, iterations=2),
                         Flaky(), surrogate_params=FAST, pool=pool, seed=5)
        assert trace.measured_workflow_runs == 10  # failures replaced
        failed = [f for it in trace.iterations for f in it.failures]
        banned = set((0, 5, 11))
        assert {f["pool_index"] for f in failed} <= banned
        measured_idx = {e.pool_index for it in trace.iterations
                        for e in it.selected}
        assert measured_idx.isdisjoint({f["pool_index"] for f in failed})

    def test_trace_round_trip(self, tmp_path):
        wf = small_workflow(sigma=0.02)
        ex = SyntheticExecutor(wf, seed=9)
        trace = run_ceal(wf, Budget(m=12, m_r=4, m_0=2, iterations=2), ex,
                         surrogate_params=FAST, pool_size=50, seed=9)
        path = tmp_path / "trace.jsonl"
        trace.save(path)
        loaded = TuningTrace.load(path)
        assert loaded.to_lines() == trace.to_lines()
        assert loaded.best_config == trace.best_config
        assert loaded.measured_workflow_runs == trace.measured_workflow_runs


class TestBestPredicted:
    def test_pool_of_one(self):
        wf = small_workflow()
        pool = build_pool(wf.space, 1, make_rng(0))
        cfg, _ = best_predicted(OracleScorer(SyntheticExecutor(wf)), pool)
        assert cfg == pool.configurations[0]

    def test_oracle_model_finds_pool_optimum(self):
        wf = small_workflow()
        ex = SyntheticExecutor(wf)
        pool = build_pool(wf.space, 120, make_rng(3))
        cfg, value = best_predicted(OracleScorer(ex), pool)
        scores = OracleScorer(ex).score_many(list(pool.configurations))
        assert value == scores.min()
        assert cfg == pool.configurations[int(np.argmin(scores))]

    def test_ties_take_lower_pool_index(self):
        wf = small_workflow()
        pool = build_pool(wf.space, 10, make_rng(4))

        class Tied:
            def score_many(self, configs):
                return np.ones(len(configs))

        cfg, _ = best_predicted(Tied(), pool)
        assert cfg == pool.configurations[0]

    def test_consumed_entries_still_eligible(self):
        wf = small_workflow()
        pool = build_pool(wf.space, 10, make_rng(6))
        ex = SyntheticExecutor(wf)
        scores = OracleScorer(ex).score_many(list(pool.configurations))
        best_idx = int(np.argmin(scores))
        pool.consume([best_idx])
        cfg, _ = best_predicted(OracleScorer(ex), pool)
        assert cfg == pool.configurations[best_idx]


class TestResume:
    def test_resume_reproduces_full_run(self, tmp_path):
        wf = small_workflow(sigma=0.03)
        budget = Budget(m=16, m_r=4, m_0=3, iterations=3)
        full = run_ceal(wf, budget, SyntheticExecutor(wf, seed=11),
                        surrogate_params=BoostingParams(), pool_size=60,
                        seed=11)

        truncated = TuningTrace(
            algo=full.algo, workflow_name=full.workflow_name,
            metric=full.metric, seed=full.seed, m=full.m, m_r=full.m_r,
            m_0=full.m_0, iterations_planned=full.iterations_planned,
            pool_size=full.pool_size,
            pool_fingerprint=full.pool_fingerprint,
            space_fingerprint=full.space_fingerprint,
            surrogate_params=full.surrogate_params,
            component_phase=full.component_phase,
            iterations=full.iterations[:2])
        path = tmp_path / "partial.jsonl"
        truncated.save(path)

        resumed = resume_ceal(path, wf, SyntheticExecutor(wf, seed=11))
        assert resumed.to_lines() == full.to_lines()

    def test_completed_trace_returned_unchanged(self, tmp_path):
        wf = small_workflow()
        full = run_ceal(wf, Budget(m=10, m_r=3, m_0=2, iterations=2),
                        SyntheticExecutor(wf), surrogate_params=FAST,
                        pool_size=40, seed=2)
        path = tmp_path / "full.jsonl"
        full.save(path)
        again = resume_ceal(path, wf, SyntheticExecutor(wf))
        assert again.to_lines() == full.to_lines()

    def test_resume_demands_the_original_history(self, tmp_path):
        wf = small_workflow()
        ex = SyntheticExecutor(wf)
        history = {}
        for j, comp in enumerate(wf.configurable_components):
            rng = make_rng(40 + j)
            space = wf.component_space(j)
            history[comp.name] = [
                ex.measure_component(j, space.random_configuration(rng))
                for _ in range(10)]
        full = run_ceal(wf, Budget(m=10, m_r=0, m_0=2, iterations=2), ex,
                        surrogate_params=FAST, pool_size=40, seed=3,
                        history=history)
        truncated = TuningTrace(
            algo=full.algo, workflow_name=full.workflow_name,
            metric=full.metric, seed=full.seed, m=full.m, m_r=full.m_r,
            m_0=full.m_0, iterations_planned=full.iterations_planned,
            pool_size=full.pool_size,
            pool_fingerprint=full.pool_fingerprint,
            space_fingerprint=full.space_fingerprint,
            surrogate_params=full.surrogate_params,
            component_phase=full.component_phase,
            iterations=full.iterations[:1])
        path = tmp_path / "partial.jsonl"
        truncated.save(path)
        with pytest.raises(ValueError, match="original history"):
            resume_ceal(path, wf, ex)  # history dropped
        resumed = resume_ceal(path, wf, ex, history=history)
        assert resumed.to_lines() == full.to_lines()


def test_oracle_convergence_median_over_seeds():
    # Noise-free executor, memorizing surrogate: more refinement iterations
    # must not hurt the found configuration, in the median over seeds.
    wf = small_workflow(sigma=0.0)
    ex = SyntheticExecutor(wf)
    oracle = OracleScorer(ex)
    medians = []
    for iters in (1, 2, 3):
        values = []
        for seed in range(30):
            trace = run_ceal(wf, Budget(m=18, m_r=6, m_0=3, iterations=iters),
                             ex, surrogate_params=MEMO, pool_size=150,
                             seed=seed)
            values.append(float(oracle.score_many([trace.best_config])[0]))
        medians.append(float(np.median(values)))
    assert medians[0] >= medians[1] >= medians[2]
