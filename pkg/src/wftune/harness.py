"""Experiment orchestration: repeated tuner runs over paired seeds, CSV
reports, and hyper-parameter sweeps.

Pairing discipline: within one seed, every algorithm sees the identical
sample pool and the identical measurement noise (both derive from the seed
alone), so per-seed comparisons are paired rather than merely repeated.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import baselines, ceal, metrics
from .boosting import BoostingParams
from .executor import Measurement
from .space import SamplePool, build_pool, make_rng
from .synthetic import OracleTable, SyntheticExecutor, brute_force_oracle
from .workflow import WorkflowSpec, load_workflow

ALGORITHMS = ("rs", "al", "geist", "alph", "ceal")

_PLAN_FIELDS = {"workflow", "algorithms", "budgets", "repetitions", "seed_base",
                "pool_size", "reference_config", "history_samples",
                "noise_sigma", "surrogate", "pool_table"}
_BUDGET_FIELDS = {"m", "m_r", "m_0", "iterations", "use_history"}

RECALL_NS = tuple(range(1, 11))
TOP_FRACTION = 0.02  # share of best oracle rows used for the focused error


@dataclass
class BudgetCell:
    m: int
    m_r: int = 0
    m_0: int = 0
    iterations: int = 1
    use_history: bool = False

    def label(self) -> str:
        tag = "hist" if self.use_history else "nohist"
        return f"m{self.m}_r{self.m_r}_0{self.m_0}_i{self.iterations}_{tag}"


@dataclass
class ExperimentPlan:
    workflow_path: Path
    algorithms: list[str]
    budgets: list[BudgetCell]
    repetitions: int = 30
    seed_base: int = 0
    pool_size: int = 2000
    reference_config: tuple | None = None
    history_samples: int = 0
    noise_sigma: float | None = None
    surrogate: BoostingParams = field(default_factory=BoostingParams)
    pool_table: Path | None = None

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        bad = [a for a in self.algorithms if a not in ALGORITHMS]
        if bad:
            raise ValueError(f"unknown algorithms {bad}; pick from {ALGORITHMS}")

    def seeds(self) -> list[int]:
        return [self.seed_base + k for k in range(self.repetitions)]


def load_plan(path) -> ExperimentPlan:
    path = Path(path)
    doc = json.loads(path.read_text())
    unknown = set(doc) - _PLAN_FIELDS
    if unknown:
        raise ValueError(f"plan: unknown fields {sorted(unknown)}")
    budgets = []
    for b in doc["budgets"]:
        unknown = set(b) - _BUDGET_FIELDS
        if unknown:
            raise ValueError(f"plan budget: unknown fields {sorted(unknown)}")
        budgets.append(BudgetCell(
            m=b["m"], m_r=b.get("m_r", 0), m_0=b.get("m_0", 0),
            iterations=b.get("iterations", 1),
            use_history=b.get("use_history", False)))
    def resolve(p):
        p = Path(p)
        return p if p.is_absolute() else path.parent / p

    surrogate = BoostingParams(**doc.get("surrogate", {}))
    return ExperimentPlan(
        workflow_path=resolve(doc["workflow"]),
        algorithms=list(doc.get("algorithms", ["rs", "ceal"])),
        budgets=budgets,
        repetitions=doc.get("repetitions", 30),
        seed_base=doc.get("seed_base", 0),
        pool_size=doc.get("pool_size", 2000),
        reference_config=(tuple(doc["reference_config"])
                          if doc.get("reference_config") else None),
        history_samples=doc.get("history_samples", 0),
        noise_sigma=doc.get("noise_sigma"),
        surrogate=surrogate,
        pool_table=(resolve(doc["pool_table"])
                    if doc.get("pool_table") else None),
    )


class TableExecutor:
    """Replays a pre-measured pool: every configuration's measurement was
    collected once up front, so 'running' it is a lookup. Component runs are
    impossible in this mode; component models must come from history files."""

    def __init__(self, records: list[Measurement]):
        self._by_config = {m.config: m for m in records if m.ok}
        if not self._by_config:
            raise ValueError("pool table holds no ok measurements")

    @property
    def configs(self) -> list[tuple]:
        return list(self._by_config)

    def measure_workflow(self, config) -> Measurement:
        m = self._by_config.get(tuple(config))
        if m is None:
            raise RuntimeError(
                f"configuration {tuple(config)} is not in the measured pool "
                f"table")
        return m

    def measure_component(self, j, comp_config) -> Measurement:
        raise RuntimeError(
            "a pre-measured pool table cannot run component measurements; "
            "set m_r = 0 and provide component history files")

    def evaluate_batch(self, configs, noise: bool):
        ms = [self.measure_workflow(c) for c in configs]
        times = np.asarray([m.component_times for m in ms], dtype=object)
        exec_s = np.asarray([m.execution_time_s for m in ms])
        nodes = np.asarray([m.nodes for m in ms])
        computer_h = np.asarray([m.computer_time_h for m in ms])
        return times, exec_s, nodes, computer_h


def load_pool_table(path, workflow: WorkflowSpec):
    """Measured-pool file -> (pool, oracle, executor).

    The file is measurement-record JSONL (the measure-pool command's output);
    the recorded values double as the ground truth, which is exactly how a
    one-time measured pool is used for evaluation.
    """
    from .executor import import_history
    records = [m for m in import_history(path) if m.ok]
    if not records:
        raise ValueError(f"{path}: no usable measurements")
    configs = []
    seen = set()
    for m in records:
        cfg = workflow.space.validate_config(m.config)
        if cfg in seen:
            raise ValueError(f"{path}: duplicate pool entry {cfg}")
        seen.add(cfg)
        configs.append(cfg)
    pool = SamplePool(workflow.space, configs)
    oracle = OracleTable(configs,
                         [m.execution_time_s for m in records],
                         [m.computer_time_h for m in records])
    return pool, oracle, TableExecutor(records)


def synthetic_history(workflow: WorkflowSpec, executor: SyntheticExecutor,
                      samples: int, seed: int) -> dict[str, list[Measurement]]:
    """Free per-component measurement sets, derived from the seed alone so
    paired cells share them."""
    out: dict[str, list[Measurement]] = {}
    for j, comp in enumerate(workflow.configurable_components):
        rng = make_rng(seed, "history", j)
        comp_space = workflow.component_space(j)
        rows = []
        for _ in range(samples):
            cfg = comp_space.random_configuration(rng)
            m = executor.measure_component(j, cfg)
            rows.append(m)
        out[comp.name] = rows
    return out


def run_tuner(algo: str, workflow: WorkflowSpec, cell: BudgetCell, executor,
              pool, seed: int, params: BoostingParams, history=None):
    if algo == "rs":
        return baselines.run_rs(workflow, cell.m, executor, pool=pool,
                                seed=seed, surrogate_params=params)
    if algo == "al":
        return baselines.run_al(workflow, cell.m, cell.m_0, cell.iterations,
                                executor, pool=pool, seed=seed,
                                surrogate_params=params)
    if algo == "geist":
        return baselines.run_geist_like(
            workflow, cell.m, cell.m_0, cell.iterations, executor, pool=pool,
            seed=seed, surrogate_params=params)
    if algo == "alph":
        return baselines.run_alph(
            workflow, cell.m, cell.m_r, cell.m_0, cell.iterations, executor,
            history=history, pool=pool, seed=seed, surrogate_params=params)
    if algo == "ceal":
        budget = ceal.Budget(cell.m, cell.m_r, cell.m_0, cell.iterations)
        return ceal.run_ceal(workflow, budget, executor, pool=pool, seed=seed,
                             history=history, surrogate_params=params)
    raise ValueError(f"unknown algorithm {algo!r}")


def _reference_value(plan, workflow, executor, oracle, metric) -> float:
    """Per-run performance of the comparison baseline configuration (an
    expert-recommendation stand-in): the plan's explicit configuration, or
    the pool's median-rank configuration."""
    if plan.reference_config is not None:
        ref = workflow.space.validate_config(plan.reference_config)
        _, exec_s, _, comp_h = executor.evaluate_batch([ref], noise=False)
        return float(exec_s[0] if metric == "execution_time" else comp_h[0])
    ranking = oracle.ranking(metric)
    mid = ranking[len(ranking) // 2]
    return float(oracle.values(metric)[mid])


def evaluate_trace(trace, oracle, metric, reference_value: float) -> dict:
    """Per-seed evaluation row: true performance, recalls, errors, payoff."""
    perf = metrics.best_performance(trace, oracle=oracle, metric=metric)
    model = trace.final_model
    scorer = model if hasattr(model, "score_many") else ceal.SurrogateScorer(model)
    predicted = np.asarray(scorer.score_many(list(oracle.configs)), dtype=float)
    actual = oracle.values(metric)
    row = {
        "true_value": perf.value,
        "normalized": perf.normalized,
        "best_config": json.dumps(list(trace.best_config)),
        "mdape_all": metrics.mdape(actual, predicted),
    }
    top_rows = oracle.top_rows(metric, max(1, math.ceil(TOP_FRACTION * len(oracle))))
    row["mdape_top2pct"] = metrics.mdape(actual[top_rows], predicted[top_rows])
    for n in RECALL_NS:
        row[f"recall_{n}"] = metrics.recall_score(n, predicted, actual)
    cost = trace.training_cost(metric)
    improvement = reference_value - perf.value
    payoff = metrics.least_number_of_uses(cost, improvement)
    row["train_cost"] = cost
    row["improvement"] = improvement
    row["least_uses"] = payoff.runs if payoff.pays_off else ""
    row["least_uses_ceil"] = payoff.runs_ceil if payoff.pays_off else ""
    row["pays_off"] = int(payoff.pays_off)
    return row


def _run_cell_seed(args):
    (workflow, plan, algo, cell, seed) = args
    if plan.pool_table is not None:
        # one fixed measured pool; the seed varies only the tuner's draws
        pool, oracle, executor = load_pool_table(plan.pool_table, workflow)
        if algo in ("ceal", "alph") and cell.m_r != 0:
            raise ValueError(
                "pool-table benches cannot charge component runs; set "
                "m_r = 0 and use component history files")
        history: dict = {}
        if cell.use_history:
            history = ceal.load_component_history(workflow)
            if not history:
                raise ValueError(
                    "use_history with a pool table needs history_file "
                    "entries in the workflow")
        return _finish_cell(args, pool, oracle, executor, history)
    executor = SyntheticExecutor(workflow, noise_sigma=plan.noise_sigma,
                                 seed=seed)
    pool = build_pool(workflow.space, plan.pool_size, make_rng(seed, "pool"))
    oracle = brute_force_oracle(executor, pool=pool)
    history = {}  # synthetic benches never read history files; pairing
    if cell.use_history:  # needs seed-derived histories instead
        if plan.history_samples < 1:
            raise ValueError("budget cell uses history but the plan sets no "
                             "history_samples")
        history = synthetic_history(workflow, executor, plan.history_samples,
                                    seed)
    return _finish_cell(args, pool, oracle, executor, history)


def _finish_cell(args, pool, oracle, executor, history):
    (workflow, plan, algo, cell, seed) = args
    trace = run_tuner(algo, workflow, cell, executor, pool, seed,
                      plan.surrogate, history)
    reference = _reference_value(plan, workflow, executor, oracle,
                                 workflow.metric)
    row = {
        "algo": algo,
        "m": cell.m, "m_r": cell.m_r, "m_0": cell.m_0,
        "iterations": cell.iterations,
        "use_history": int(cell.use_history),
        "seed": seed,
        "pool_fingerprint": pool.fingerprint(),
        "charged_component_runs": trace.charged_component_runs,
        "measured_workflow_runs": trace.measured_workflow_runs,
        "switch_iteration": (trace.switch_iteration
                             if trace.switch_iteration is not None else ""),
    }
    row.update(evaluate_trace(trace, oracle, workflow.metric, reference))
    return row


PER_SEED_COLUMNS = (
    ["algo", "m", "m_r", "m_0", "iterations", "use_history", "seed",
     "pool_fingerprint", "best_config", "true_value", "normalized"]
    + [f"recall_{n}" for n in RECALL_NS]
    + ["mdape_all", "mdape_top2pct", "train_cost", "improvement",
       "least_uses", "least_uses_ceil", "pays_off",
       "charged_component_runs", "measured_workflow_runs", "switch_iteration"]
)


def run_bench(plan: ExperimentPlan, workflow: WorkflowSpec | None = None,
              workers: int | None = None) -> list[dict]:
    """All (budget, algorithm, seed) cells of the plan, as per-seed rows.

    Cells are independent; with WFTUNE_WORKERS > 1 (or `workers`) they run in
    a process pool and are merged back in deterministic plan order.
    """
    workflow = workflow or load_workflow(plan.workflow_path)
    if workflow.synthetic is None and plan.pool_table is None:
        raise ValueError(
            "bench needs ground truth: either a workflow synthetic block "
            "(oracle) or a pre-measured pool table in the plan")
    tasks = []
    for ci, cell in enumerate(plan.budgets):
        for ai, algo in enumerate(plan.algorithms):
            for seed in plan.seeds():
                tasks.append(((ci, ai, seed),
                              (workflow, plan, algo, cell, seed)))
    if workers is None:
        workers = int(os.environ.get("WFTUNE_WORKERS", "1"))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_cell_seed, [t[1] for t in tasks]))
        keyed = dict(zip([t[0] for t in tasks], results))
        return [keyed[k] for k in sorted(keyed)]
    return [_run_cell_seed(t[1]) for t in tasks]


def summarize_bench(rows: list[dict]) -> list[dict]:
    """Aggregate per (algorithm, budget) cell: means/medians over seeds."""
    cells: dict[tuple, list[dict]] = {}
    for r in rows:
        key = (r["algo"], r["m"], r["m_r"], r["m_0"], r["iterations"],
               r["use_history"])
        cells.setdefault(key, []).append(r)
    out = []
    for key in sorted(cells, key=str):
        group = cells[key]
        normalized = np.asarray([g["normalized"] for g in group])
        summary = {
            "algo": key[0], "m": key[1], "m_r": key[2], "m_0": key[3],
            "iterations": key[4], "use_history": key[5],
            "seeds": len(group),
            "mean_normalized": float(normalized.mean()),
            "median_normalized": float(np.median(normalized)),
            "std_normalized": float(normalized.std()),
            "mean_mdape_all": float(np.mean([g["mdape_all"] for g in group])),
            "mean_mdape_top2pct": float(
                np.mean([g["mdape_top2pct"] for g in group])),
            "mean_train_cost": float(np.mean([g["train_cost"] for g in group])),
            "pays_off_fraction": float(np.mean([g["pays_off"] for g in group])),
        }
        for n in RECALL_NS:
            summary[f"mean_recall_{n}"] = float(
                np.mean([g[f"recall_{n}"] for g in group]))
        uses = [g["least_uses"] for g in group if g["least_uses"] != ""]
        summary["mean_least_uses"] = float(np.mean(uses)) if uses else ""
        out.append(summary)
    return out


SUMMARY_COLUMNS = (
    ["algo", "m", "m_r", "m_0", "iterations", "use_history", "seeds",
     "mean_normalized", "median_normalized", "std_normalized"]
    + [f"mean_recall_{n}" for n in RECALL_NS]
    + ["mean_mdape_all", "mean_mdape_top2pct", "mean_train_cost",
       "pays_off_fraction", "mean_least_uses"]
)


def write_csv(path, rows: list[dict], columns) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(columns))
        writer.writeheader()
        for r in rows:
            writer.writerow({c: r.get(c, "") for c in columns})


# -- hyper-parameter sweeps --------------------------------------------------

SWEEP_PARAMS = ("iters", "m-r-frac", "m-0-frac")

SWEEP_COLUMNS = ["param", "value", "m", "m_r", "m_0", "iterations", "seed",
                 "status", "true_value", "normalized", "best_config"]


def default_sweep_grid(param: str, base: BudgetCell) -> list[float]:
    """Mirror of the sensitivity-study construction: iteration counts 1..10,
    fractions from 5% up at 5% intervals."""
    if param == "iters":
        return list(range(1, 11))
    step = 0.05
    if param == "m-r-frac":
        upper = (base.m - base.m_0) / base.m
    elif param == "m-0-frac":
        upper = (base.m - base.m_r) / base.m
    else:
        raise ValueError(f"unknown sweep parameter {param!r}")
    count = int(math.floor(upper / step + 1e-9))
    return [round(step * k, 10) for k in range(1, count + 1)]


def cell_for_sweep(param: str, value, base: BudgetCell) -> BudgetCell:
    if param == "iters":
        return BudgetCell(base.m, base.m_r, base.m_0, int(value),
                          base.use_history)
    if param == "m-r-frac":
        return BudgetCell(base.m, int(round(value * base.m)), base.m_0,
                          base.iterations, base.use_history)
    if param == "m-0-frac":
        return BudgetCell(base.m, base.m_r, int(round(value * base.m)),
                          base.iterations, base.use_history)
    raise ValueError(f"unknown sweep parameter {param!r}")


def run_sweep(workflow: WorkflowSpec, param: str, grid, base: BudgetCell,
              *, algo: str = "ceal", repetitions: int = 10, seed_base: int = 0,
              pool_size: int = 2000, noise_sigma: float | None = None,
              history_samples: int = 0,
              surrogate: BoostingParams | None = None) -> list[dict]:
    """One-parameter sensitivity sweep; infeasible grid cells are recorded as
    skipped rows instead of aborting the sweep."""
    if param not in SWEEP_PARAMS:
        raise ValueError(f"sweep parameter must be one of {SWEEP_PARAMS}")
    surrogate = surrogate or BoostingParams()
    rows = []
    for value in grid:
        cell = cell_for_sweep(param, value, base)
        try:
            ceal.Budget(cell.m, cell.m_r, cell.m_0, cell.iterations)
        except ValueError as exc:
            rows.append({"param": param, "value": value, "m": cell.m,
                         "m_r": cell.m_r, "m_0": cell.m_0,
                         "iterations": cell.iterations, "seed": "",
                         "status": f"skipped: {exc}", "true_value": "",
                         "normalized": "", "best_config": ""})
            continue
        for seed in range(seed_base, seed_base + repetitions):
            executor = SyntheticExecutor(workflow, noise_sigma=noise_sigma,
                                         seed=seed)
            pool = build_pool(workflow.space, pool_size, make_rng(seed, "pool"))
            oracle = brute_force_oracle(executor, pool=pool)
            history = None
            if cell.use_history:
                history = synthetic_history(workflow, executor,
                                            history_samples, seed)
            trace = run_tuner(algo, workflow, cell, executor, pool, seed,
                              surrogate, history)
            perf = metrics.best_performance(trace, oracle=oracle,
                                            metric=workflow.metric)
            rows.append({"param": param, "value": value, "m": cell.m,
                         "m_r": cell.m_r, "m_0": cell.m_0,
                         "iterations": cell.iterations, "seed": seed,
                         "status": "ok", "true_value": perf.value,
                         "normalized": perf.normalized,
                         "best_config": json.dumps(list(trace.best_config))})
    return rows
