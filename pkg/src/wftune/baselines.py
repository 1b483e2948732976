"""Comparison tuners sharing the pool, surrogate, executor, and trace format:
pure random sampling, plain active learning, a graph-guided selector, and the
learned component-combiner.

The graph-guided tuner follows the one-line recipe of propagating
top-configuration likelihood over a parameter-step graph; its propagation
details (label threshold, sweep count, plain neighbor averaging) are local
choices, not a reproduction of any published tool.
"""

from __future__ import annotations

import math
from dataclasses import asdict

import numpy as np

from . import boosting
from .boosting import BoostingParams
from .ceal import (Budget, SurrogateScorer, _measure_batch, _PoolDraws,
                   best_predicted, build_component_models, default_trainer)
from .combiner import LowFidelityModel
from .executor import Measurement
from .space import SamplePool, build_pool, encode, make_rng
from .trace import IterationRecord, SelectedEntry, TuningTrace

DEFAULT_POOL_SIZE = 2000


def _prepare(workflow, pool, pool_size, seed):
    rng = make_rng(seed, "tuner")
    if pool is None:
        pool = build_pool(workflow.space, pool_size, make_rng(seed, "pool"))
    return pool.fresh_copy(), rng


def _new_trace(algo, workflow, pool, seed, m, m_r, m_0, iterations, params):
    return TuningTrace(
        algo=algo, workflow_name=workflow.name, metric=workflow.metric,
        seed=seed, m=m, m_r=m_r, m_0=m_0, iterations_planned=iterations,
        pool_size=len(pool), pool_fingerprint=pool.fingerprint(),
        space_fingerprint=workflow.space.fingerprint(),
        surrogate_params=asdict(params))


def run_rs(workflow, m: int, executor, *, pool: SamplePool | None = None,
           pool_size: int = DEFAULT_POOL_SIZE, seed: int = 0,
           surrogate_params: BoostingParams | None = None) -> TuningTrace:
    """Measure m uniformly random pool configurations, fit once, predict."""
    if m < 1:
        raise ValueError("m must be >= 1")
    params = surrogate_params or BoostingParams()
    pool, rng = _prepare(workflow, pool, pool_size, seed)
    trace = _new_trace("rs", workflow, pool, seed, m, 0, m, 1, params)
    trace.pool = pool

    draws = _PoolDraws(pool)
    entries: list[SelectedEntry] = []
    measurements: list[Measurement] = []
    failures: list[dict] = []
    _measure_batch(m, lambda: draws.random_one(rng), "random", pool, executor,
                   entries, measurements, failures)
    trace.iterations.append(IterationRecord(
        index=1, selected=entries, measurements=measurements,
        evaluator="random", failures=failures,
        rng_state=rng.bit_generator.state))

    X = encode([mm.config for mm in measurements])
    y = [mm.metric_value(workflow.metric) for mm in measurements]
    model = boosting.fit(X, y, params)
    trace.final_model = model
    cfg, value = best_predicted(model, pool)
    trace.best_config = cfg
    trace.best_predicted_value = value
    return trace


def _iterative_model_loop(trace, workflow, budget, executor, pool, rng,
                          trainer, make_scorer, evaluator_label):
    """Shared skeleton for the iterative baselines: a random first batch of
    m_0 + b_1, then batches ranked by a per-iteration scorer."""
    draws = _PoolDraws(pool)
    batches = budget.batch_sizes()
    X_rows: list[tuple] = []
    y_rows: list[float] = []
    model = None
    for i in range(1, budget.iterations + 1):
        entries: list[SelectedEntry] = []
        measurements: list[Measurement] = []
        failures: list[dict] = []
        if i == 1:
            count = budget.m_0 + batches[0]
            _measure_batch(count, lambda: draws.random_one(rng), "random",
                           pool, executor, entries, measurements, failures)
            used = "random"
        else:
            scorer = make_scorer(model, X_rows, y_rows)
            _measure_batch(batches[i - 1], draws.ranked_supply(scorer),
                           evaluator_label, pool, executor, entries,
                           measurements, failures)
            used = evaluator_label
        for meas in measurements:
            X_rows.append(meas.config)
            y_rows.append(meas.metric_value(workflow.metric))
        model = trainer(X_rows, y_rows)
        trace.iterations.append(IterationRecord(
            index=i, selected=entries, measurements=measurements,
            evaluator=used, failures=failures,
            rng_state=rng.bit_generator.state))
    return model


def run_al(workflow, m: int, m_0: int, iterations: int, executor, *,
           pool: SamplePool | None = None, pool_size: int = DEFAULT_POOL_SIZE,
           seed: int = 0,
           surrogate_params: BoostingParams | None = None) -> TuningTrace:
    """Active learning on whole-workflow measurements only: random first
    round, then batches of the model's current favorites."""
    params = surrogate_params or BoostingParams()
    budget = Budget(m, 0, m_0, iterations)
    pool, rng = _prepare(workflow, pool, pool_size, seed)
    trace = _new_trace("al", workflow, pool, seed, m, 0, m_0, iterations,
                       params)
    trace.pool = pool

    fit = default_trainer(params)
    trainer = lambda X, y: fit(encode(X), y)
    model = _iterative_model_loop(
        trace, workflow, budget, executor, pool, rng, trainer,
        make_scorer=lambda model, X, y: SurrogateScorer(model),
        evaluator_label="high")
    trace.final_model = model
    cfg, value = best_predicted(model, pool)
    trace.best_config = cfg
    trace.best_predicted_value = value
    return trace


class NeighborGraph:
    """Undirected graph over pool configurations; an edge joins two
    configurations differing in exactly one parameter by one domain step."""

    def __init__(self, space, configurations):
        self.configurations = [tuple(c) for c in configurations]
        index = {c: i for i, c in enumerate(self.configurations)}
        us, vs = [], []
        for i, cfg in enumerate(self.configurations):
            for d, param in enumerate(space.parameters):
                for nv in param.step_neighbors(cfg[d]):
                    cand = cfg[:d] + (nv,) + cfg[d + 1:]
                    j = index.get(cand)
                    if j is not None and j > i:
                        us.append(i)
                        vs.append(j)
        self.edge_u = np.asarray(us, dtype=int)
        self.edge_v = np.asarray(vs, dtype=int)
        self.degree = np.zeros(len(self.configurations), dtype=int)
        np.add.at(self.degree, self.edge_u, 1)
        np.add.at(self.degree, self.edge_v, 1)

    @property
    def edge_count(self) -> int:
        return len(self.edge_u)

    def propagate(self, labels: dict[int, float], sweeps: int = 10,
                  prior: float = 0.5) -> np.ndarray:
        """Fixed-point neighbor averaging: labeled nodes stay clamped,
        unlabeled nodes move to the mean of their neighbors each sweep, and
        isolated unlabeled nodes keep the prior."""
        scores = np.full(len(self.configurations), prior)
        labeled = np.zeros(len(self.configurations), dtype=bool)
        for node, value in labels.items():
            scores[node] = value
            labeled[node] = True
        free = ~labeled & (self.degree > 0)
        for _ in range(sweeps):
            sums = np.zeros_like(scores)
            np.add.at(sums, self.edge_u, scores[self.edge_v])
            np.add.at(sums, self.edge_v, scores[self.edge_u])
            new = np.where(self.degree > 0, sums / np.maximum(self.degree, 1),
                           scores)
            scores = np.where(free, new, scores)
        return scores


class _GraphScorer:
    """Ranks pool entries by propagated top-likelihood (higher is better);
    rank_pool sorts ascending, so scores are negated."""

    def __init__(self, graph, configurations, labels, sweeps=10):
        self._scores = graph.propagate(labels, sweeps=sweeps)
        self._row = {c: i for i, c in enumerate(configurations)}

    def score_many(self, configs):
        return np.asarray([-self._scores[self._row[tuple(c)]] for c in configs])


def run_geist_like(workflow, m: int, m_0: int, iterations: int, executor, *,
                   top_fraction: float = 0.05,
                   pool: SamplePool | None = None,
                   pool_size: int = DEFAULT_POOL_SIZE, seed: int = 0,
                   surrogate_params: BoostingParams | None = None,
                   sweeps: int = 10) -> TuningTrace:
    """Graph-guided selection: measured configurations are labeled top /
    not-top against the best `top_fraction` of values seen so far, labels are
    averaged over the parameter-step graph, and the next batch takes the
    highest propagated likelihood."""
    if not 0.0 < top_fraction <= 1.0:
        raise ValueError("top_fraction must be in (0, 1]")
    params = surrogate_params or BoostingParams()
    budget = Budget(m, 0, m_0, iterations)
    pool, rng = _prepare(workflow, pool, pool_size, seed)
    trace = _new_trace("geist", workflow, pool, seed, m, 0, m_0, iterations,
                       params)
    trace.pool = pool

    graph = NeighborGraph(workflow.space, pool.configurations)
    row_of = {c: i for i, c in enumerate(pool.configurations)}

    def make_scorer(model, X_rows, y_rows):
        values = np.asarray(y_rows, dtype=float)
        k = max(1, math.ceil(top_fraction * len(values)))
        order = np.lexsort((np.arange(len(values)), values))
        top_rows = set(int(r) for r in order[:k])
        labels = {
            row_of[tuple(cfg)]: (1.0 if r in top_rows else 0.0)
            for r, cfg in enumerate(X_rows)
        }
        return _GraphScorer(graph, pool.configurations, labels, sweeps=sweeps)

    fit = default_trainer(params)
    trainer = lambda X, y: fit(encode(X), y)
    model = _iterative_model_loop(
        trace, workflow, budget, executor, pool, rng, trainer,
        make_scorer=make_scorer, evaluator_label="graph")
    trace.final_model = model
    cfg, value = best_predicted(model, pool)
    trace.best_config = cfg
    trace.best_predicted_value = value
    return trace


class CombinerModel:
    """Learned component combiner: a regressor over each configuration's raw
    values concatenated with its per-component model predictions."""

    def __init__(self, component_models, bindings, regressor=None):
        self._lfm = LowFidelityModel(component_models, bindings, "sum")
        self.regressor = regressor

    def features(self, configs) -> np.ndarray:
        return np.concatenate(
            [encode(configs), self._lfm.component_predictions(configs)], axis=1)

    def score_many(self, configs) -> np.ndarray:
        if self.regressor is None:
            return np.zeros(len(configs))
        return np.asarray(self.regressor.predict(self.features(configs)))


def run_alph(workflow, m: int, m_r: int, m_0: int, iterations: int, executor,
             *, history=None, pool: SamplePool | None = None,
             pool_size: int = DEFAULT_POOL_SIZE, seed: int = 0,
             surrogate_params: BoostingParams | None = None) -> TuningTrace:
    """Learned combination of component models: the same component phase as
    the main tuner, but the combining model is trained on actual workflow
    runs, so every selection round costs measurements."""
    params = surrogate_params or BoostingParams()
    budget = Budget(m, m_r, m_0, iterations)
    pool, rng = _prepare(workflow, pool, pool_size, seed)
    trace = _new_trace("alph", workflow, pool, seed, m, m_r, m_0, iterations,
                       params)
    trace.pool = pool

    if history is None:
        from .ceal import load_component_history
        history = load_component_history(workflow)
    component_models, phase_records = build_component_models(
        workflow, m_r, history, executor, rng, params)
    trace.component_phase = phase_records
    trace.charged_component_runs = m_r

    combiner = CombinerModel(component_models, workflow.bindings)

    def trainer(X_rows, y_rows):
        feats = combiner.features(X_rows)
        reg = boosting.fit(feats, y_rows, params)
        return CombinerModel(component_models, workflow.bindings, reg)

    model = _iterative_model_loop(
        trace, workflow, budget, executor, pool, rng, trainer,
        make_scorer=lambda model, X, y: model,
        evaluator_label="model")
    trace.final_model = model
    cfg, value = best_predicted(model, pool)
    trace.best_config = cfg
    trace.best_predicted_value = value
    return trace
