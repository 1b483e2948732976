"""Two-phase component-ensemble tuner and its budget arithmetic.

Phase one spends (or borrows from history) component-only runs to train one
model per component and combines them into the low-fidelity workflow model.
Phase two runs the workflow itself: an initial batch of random plus
low-fidelity-ranked configurations, then ranked batches under whichever
evaluator is currently trusted. Trust moves from the combined model to the
high-fidelity model at most once, when the high-fidelity model's summed
top-1/2/3 recall on the latest measured batch reaches the combined model's.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import boosting
from .boosting import BoostingParams
from .combiner import LowFidelityModel, choose_function, rank_pool
from .executor import Measurement
from .metrics import recall_sum
from .space import SamplePool, build_pool, encode, make_rng
from .trace import (ComponentPhaseRecord, IterationRecord, SelectedEntry,
                    TuningTrace)

DEFAULT_POOL_SIZE = 2000


@dataclass(frozen=True)
class Budget:
    """Workflow-run budget split: m total, m_r charged to component runs,
    m_0 initial random samples, the rest spread over `iterations` batches."""

    m: int
    m_r: int = 0
    m_0: int = 0
    iterations: int = 1

    def __post_init__(self):
        if self.m < 1 or self.m_r < 0 or self.m_0 < 0 or self.iterations < 1:
            raise ValueError(f"invalid budget {self}")
        if self.m_r + self.m_0 >= self.m:
            raise ValueError(
                f"m_r + m_0 = {self.m_r + self.m_0} must be < m = {self.m}")
        if self.model_selected_total < self.iterations:
            raise ValueError(
                f"budget leaves {self.model_selected_total} model-selected runs "
                f"for {self.iterations} iterations; every batch needs >= 1")

    @property
    def model_selected_total(self) -> int:
        return self.m - self.m_0 - self.m_r

    def batch_sizes(self) -> list[int]:
        """Per-iteration ranked-batch sizes; the integer-division remainder
        goes one-per-iteration to the earliest iterations."""
        base, rem = divmod(self.model_selected_total, self.iterations)
        return [base + (1 if i < rem else 0) for i in range(self.iterations)]

    @classmethod
    def recommended(cls, m: int, iterations: int = 3,
                    with_history: bool = False) -> "Budget":
        """Default split: free histories shift budget from component runs to
        random workflow samples. Fractions round half-up."""
        share = lambda f: int(math.floor(f * m + 0.5))
        if with_history:
            return cls(m=m, m_r=0, m_0=share(0.25), iterations=iterations)
        return cls(m=m, m_r=share(0.4), m_0=share(0.15), iterations=iterations)


class SurrogateScorer:
    """Adapter giving a fitted regressor the pool-scoring interface.

    An absent model scores every configuration identically (zero), which is
    what an untrained high-fidelity model amounts to before its first refit;
    downstream ranking then falls back to index order.
    """

    def __init__(self, model):
        self.model = model

    def score_many(self, configs) -> np.ndarray:
        if self.model is None:
            return np.zeros(len(configs))
        return np.asarray(self.model.predict(encode(configs)), dtype=float)


def detect_switch(high_model, low_model, batch_configs, measured_values):
    """Compare summed top-1/2/3 recalls of both models on the latest batch.

    Returns (switch, s_h, s_l); the comparison is inclusive, so a tie already
    hands evaluation over to the high-fidelity model. Batches smaller than
    three configurations sum only the recalls that exist. An empty batch is a
    no-op.
    """
    if len(batch_configs) == 0:
        return False, None, None
    high = np.asarray(high_model.score_many(batch_configs), dtype=float)
    low = np.asarray(low_model.score_many(batch_configs), dtype=float)
    measured = np.asarray(measured_values, dtype=float)
    s_h = recall_sum(high, measured)
    s_l = recall_sum(low, measured)
    return s_h >= s_l, s_h, s_l


def default_trainer(params: BoostingParams):
    def train(X, y):
        return boosting.fit(X, y, params)
    return train


def fixed_time_offsets(workflow, metric: str) -> tuple[float, ...]:
    """Constant scores for unconfigurable components, in metric units."""
    fixed = workflow.fixed_components
    if not fixed:
        return ()
    if metric == "execution_time":
        return tuple(float(c.fixed_time_s) for c in fixed)
    cpn = workflow.synthetic.cores_per_node if workflow.synthetic else 36
    return tuple(float(c.fixed_time_s) * c.fixed_nodes * cpn / 3600.0
                 for c in fixed)


def load_component_history(workflow) -> dict[str, list[Measurement]]:
    """Measurement records from the history files named by the workflow."""
    from .executor import import_history
    out: dict[str, list[Measurement]] = {}
    for comp in workflow.configurable_components:
        path = workflow.history_path(comp)
        if path is not None:
            out[comp.name] = import_history(path)
    return out


def build_component_models(workflow, m_r: int, history, executor, rng,
                           params: BoostingParams):
    """Phase one: per-component measurements + history -> fitted models.

    Every component is measured at m_r fresh random configurations; the whole
    phase charges m_r workflow-equivalent runs against the budget (running
    each component once costs about one workflow run in total). History rows
    join the training multiset as-is, duplicates included, at zero charge.
    """
    history = history or {}
    models = []
    phase_records = []
    for j, comp in enumerate(workflow.configurable_components):
        comp_space = workflow.component_space(j)
        rows_x: list[tuple] = []
        rows_y: list[float] = []
        measurements: list[Measurement] = []
        attempts = 0
        while sum(m.ok for m in measurements) < m_r:
            attempts += 1
            if attempts > 10 * max(m_r, 1) + 50:
                raise RuntimeError(
                    f"component {comp.name!r}: too many failed measurements")
            cfg = comp_space.random_configuration(rng)
            meas = executor.measure_component(j, cfg)
            measurements.append(meas)
            if meas.ok:
                rows_x.append(cfg)
                rows_y.append(meas.metric_value(workflow.metric))
        hist_rows = history.get(comp.name, [])
        for m in hist_rows:
            if m.ok:
                rows_x.append(m.config)
                rows_y.append(m.metric_value(workflow.metric))
        if not rows_x:
            raise ValueError(
                f"component {comp.name!r}: no training data "
                f"(m_r = 0 and no history)")
        comp_params = replace(params, seed=params.seed * 1000 + j)
        models.append(boosting.fit(encode(rows_x), rows_y, comp_params))
        phase_records.append(ComponentPhaseRecord(
            component=comp.name,
            measurements=[m for m in measurements if m.ok],
            history_rows=len(hist_rows)))
    return models, phase_records


def best_predicted(model, pool: SamplePool, metric: str | None = None):
    """Lowest-predicted configuration over the full original pool (consumed
    entries included), ties broken by pool index."""
    scorer = model if hasattr(model, "score_many") else SurrogateScorer(model)
    scores = np.asarray(scorer.score_many(list(pool.configurations)), dtype=float)
    order = np.lexsort((np.arange(len(scores)), scores))
    best = int(order[0])
    return pool.configurations[best], float(scores[best])


class _PoolDraws:
    """Consuming draw rules over a pool: uniform-random and ranked."""

    def __init__(self, pool: SamplePool):
        self.pool = pool

    def random_one(self, rng) -> int:
        remaining = self.pool.remaining_indices()
        if remaining.size == 0:
            raise RuntimeError("pool exhausted")
        idx = int(remaining[int(rng.integers(remaining.size))])
        self.pool.consume([idx])
        return idx

    def ranked_supply(self, scorer):
        ranked = iter(rank_pool(scorer, self.pool))

        def draw() -> int:
            for idx, _cfg, _score in ranked:
                if not self.pool.is_consumed(idx):
                    self.pool.consume([idx])
                    return idx
            raise RuntimeError("pool exhausted while refilling a ranked batch")

        return draw


def _measure_batch(count, draw, source, pool, executor, entries, measurements,
                   failures):
    """Measure until `count` configurations succeed, replacing failures by the
    next candidate from the same draw rule."""
    got = 0
    while got < count:
        idx = draw()
        cfg = pool.configurations[idx]
        meas = executor.measure_workflow(cfg)
        if meas.ok:
            entries.append(SelectedEntry(idx, cfg, source))
            measurements.append(meas)
            got += 1
        else:
            failures.append({"pool_index": idx, "config": list(cfg),
                             "source": source, "error": meas.error})


def run_ceal(workflow, budget: Budget, executor, *,
             surrogate_params: BoostingParams | None = None,
             pool: SamplePool | None = None,
             pool_size: int = DEFAULT_POOL_SIZE,
             seed: int = 0,
             history=None,
             low_fidelity: LowFidelityModel | None = None,
             high_fidelity_trainer=None,
             initial_high_fidelity=None) -> TuningTrace:
    """Run the full two-phase tuner and return its trace.

    `low_fidelity` substitutes a ready-made scorer for phase one (then
    budget.m_r must be 0); `high_fidelity_trainer` substitutes the model
    trained on workflow measurements, and `initial_high_fidelity` the
    just-initialized model consulted by the first switch detection (default:
    none, which scores every configuration alike). All three exist for
    experiments and tests.
    """
    params = surrogate_params or BoostingParams()
    trainer = high_fidelity_trainer or default_trainer(params)
    rng = make_rng(seed, "tuner")
    if pool is None:
        pool = build_pool(workflow.space, pool_size, make_rng(seed, "pool"))
    pool = pool.fresh_copy()

    trace = TuningTrace(
        algo="ceal", workflow_name=workflow.name, metric=workflow.metric,
        seed=seed, m=budget.m, m_r=budget.m_r, m_0=budget.m_0,
        iterations_planned=budget.iterations, pool_size=len(pool),
        pool_fingerprint=pool.fingerprint(),
        space_fingerprint=workflow.space.fingerprint(),
        surrogate_params=asdict(params))
    trace.pool = pool

    if low_fidelity is not None:
        if budget.m_r != 0:
            raise ValueError("a supplied low-fidelity model implies m_r = 0")
        ml = low_fidelity
    else:
        if history is None:
            history = load_component_history(workflow)
        models, phase_records = build_component_models(
            workflow, budget.m_r, history, executor, rng, params)
        trace.component_phase = phase_records
        ml = LowFidelityModel(
            models, workflow.bindings, choose_function(workflow.metric),
            fixed_time_offsets(workflow, workflow.metric))
    trace.charged_component_runs = budget.m_r
    trace.low_fidelity = ml

    _run_ranked_loop(trace, workflow, budget, executor, pool, rng, ml, trainer,
                     mh_model=initial_high_fidelity)
    return trace


def _run_ranked_loop(trace, workflow, budget, executor, pool, rng, ml, trainer,
                     *, start_iteration: int = 1, X_rows=None, y_rows=None,
                     evaluator: str = "low", mh_model=None):
    """Phase two (also the resume continuation); mutates `trace` in place."""
    draws = _PoolDraws(pool)
    batches = budget.batch_sizes()
    X_rows = X_rows if X_rows is not None else []
    y_rows = y_rows if y_rows is not None else []

    for i in range(start_iteration, budget.iterations + 1):
        entries: list[SelectedEntry] = []
        measurements: list[Measurement] = []
        failures: list[dict] = []
        selected_with = evaluator
        if i == 1:
            _measure_batch(budget.m_0, lambda: draws.random_one(rng), "random",
                           pool, executor, entries, measurements, failures)
            _measure_batch(batches[0], draws.ranked_supply(ml), "low",
                           pool, executor, entries, measurements, failures)
        else:
            scorer = ml if evaluator == "low" else SurrogateScorer(mh_model)
            _measure_batch(batches[i - 1], draws.ranked_supply(scorer),
                           evaluator, pool, executor, entries, measurements,
                           failures)

        for meas in measurements:
            X_rows.append(meas.config)
            y_rows.append(meas.metric_value(workflow.metric))

        s_h = s_l = None
        switched = False
        if evaluator == "low":
            batch_configs = [m.config for m in measurements]
            batch_values = [m.metric_value(workflow.metric) for m in measurements]
            switched, s_h, s_l = detect_switch(
                SurrogateScorer(mh_model), ml, batch_configs, batch_values)
            if switched:
                evaluator = "high"
                trace.switch_iteration = i

        mh_model = trainer(encode(X_rows), y_rows)

        trace.iterations.append(IterationRecord(
            index=i, selected=entries, measurements=measurements,
            evaluator=selected_with, s_h=s_h, s_l=s_l, switched=switched,
            failures=failures, rng_state=rng.bit_generator.state))

    trace.final_model = mh_model
    cfg, value = best_predicted(mh_model, pool)
    trace.best_config = cfg
    trace.best_predicted_value = value


def resume_ceal(trace_or_path, workflow, executor, *,
                surrogate_params: BoostingParams | None = None,
                history=None) -> TuningTrace:
    """Continue an interrupted run from its last complete iteration.

    The pool is rebuilt from the recorded seed (a resumable run must have let
    the tuner build its own pool), phase-one models are refit from the
    recorded measurements, and the tuner RNG restarts from the stored state.
    A completed trace is returned as-is.
    """
    trace = (trace_or_path if isinstance(trace_or_path, TuningTrace)
             else TuningTrace.load(trace_or_path))
    if trace.complete:
        return trace
    if not trace.iterations:
        raise ValueError("trace has no completed iterations; rerun instead")
    if surrogate_params is not None:
        params = surrogate_params
    elif trace.surrogate_params is not None:
        params = BoostingParams(**trace.surrogate_params)
    else:
        params = BoostingParams()
    budget = Budget(trace.m, trace.m_r, trace.m_0, trace.iterations_planned)

    pool = build_pool(workflow.space, trace.pool_size,
                      make_rng(trace.seed, "pool"))
    if pool.fingerprint() != trace.pool_fingerprint:
        raise ValueError("rebuilt pool does not match the trace; the workflow "
                         "or seed changed")
    trace.pool = pool

    if not trace.component_phase:
        raise ValueError("trace has no component phase; runs with a "
                         "substituted low-fidelity model cannot be resumed")
    if history is None:
        history = load_component_history(workflow)
    models = []
    for j, rec in enumerate(trace.component_phase):
        rows_x = [m.config for m in rec.measurements]
        rows_y = [m.metric_value(workflow.metric) for m in rec.measurements]
        hist_rows = [m for m in history.get(rec.component, []) if m.ok]
        if len(hist_rows) != rec.history_rows:
            raise ValueError(
                f"component {rec.component!r}: resume needs the original "
                f"history ({rec.history_rows} rows, got {len(hist_rows)})")
        for m in hist_rows:
            rows_x.append(m.config)
            rows_y.append(m.metric_value(workflow.metric))
        comp_params = replace(params, seed=params.seed * 1000 + j)
        models.append(boosting.fit(encode(rows_x), rows_y, comp_params))
    ml = LowFidelityModel(
        models, workflow.bindings, choose_function(workflow.metric),
        fixed_time_offsets(workflow, workflow.metric))
    trace.low_fidelity = ml

    trace.charged_component_runs = trace.m_r
    X_rows: list[tuple] = []
    y_rows: list[float] = []
    evaluator = "low"
    for rec in trace.iterations:
        for e in rec.selected:
            pool.consume([e.pool_index])
        for f in rec.failures:
            pool.consume([f["pool_index"]])
        for m in rec.measurements:
            X_rows.append(m.config)
            y_rows.append(m.metric_value(workflow.metric))
        if rec.switched:
            evaluator = "high"
            trace.switch_iteration = rec.index

    rng = make_rng(0, "tuner")
    rng.bit_generator.state = trace.iterations[-1].rng_state
    trainer = default_trainer(params)
    mh_model = trainer(encode(X_rows), y_rows)

    _run_ranked_loop(trace, workflow, budget, executor, pool, rng, ml, trainer,
                     start_iteration=len(trace.iterations) + 1,
                     X_rows=X_rows, y_rows=y_rows, evaluator=evaluator,
                     mh_model=mh_model)
    return trace
