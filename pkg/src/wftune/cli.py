"""Command-line front end: tune, bench, sweep, oracle, make-history."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness, metrics
from .boosting import BoostingParams
from .ceal import Budget
from .executor import ExternalExecutor, write_history
from .harness import BudgetCell, load_plan, run_tuner, write_csv
from .space import build_pool, make_rng
from .synthetic import SyntheticExecutor, brute_force_oracle
from .workflow import load_workflow


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wftune",
        description="Budgeted auto-tuning for coupled multi-component workflows")
    sub = parser.add_subparsers(dest="command", required=True)

    tune = sub.add_parser("tune", help="run one tuner on one workflow")
    tune.add_argument("--spec", required=True, help="workflow JSON file")
    tune.add_argument("--algo", default="ceal", choices=harness.ALGORITHMS)
    tune.add_argument("--m", type=int, required=True,
                      help="total workflow-run budget")
    tune.add_argument("--m-r", type=int, default=None,
                      help="component-run budget (charged against m)")
    tune.add_argument("--m-0", type=int, default=None,
                      help="initial random workflow samples")
    tune.add_argument("--iters", type=int, default=3)
    tune.add_argument("--seed", type=int, default=0)
    tune.add_argument("--pool-size", type=int, default=2000)
    tune.add_argument("--executor", default="synth",
                      choices=("synth", "external"))
    tune.add_argument("--noise-sigma", type=float, default=None,
                      help="override the synthetic noise level")
    tune.add_argument("--command", default=None,
                      help="external: workflow command template")
    tune.add_argument("--component-command", action="append", default=[],
                      metavar="NAME=TEMPLATE",
                      help="external: per-component command template")
    tune.add_argument("--timeout", type=float, default=None,
                      help="external: per-run timeout in seconds")
    tune.add_argument("--out", required=True, help="output directory")
    tune.add_argument("--no-plots", action="store_true")
    tune.set_defaults(func=cmd_tune)

    bench = sub.add_parser("bench", help="paired-seed comparison experiment")
    bench.add_argument("--plan", required=True, help="experiment plan JSON")
    bench.add_argument("--out", required=True)
    bench.add_argument("--workers", type=int, default=None,
                       help="parallel cell workers (or WFTUNE_WORKERS)")
    bench.add_argument("--no-plots", action="store_true")
    bench.set_defaults(func=cmd_bench)

    sweep = sub.add_parser("sweep", help="one-parameter sensitivity sweep")
    sweep.add_argument("--spec", required=True)
    sweep.add_argument("--param", required=True, choices=harness.SWEEP_PARAMS)
    sweep.add_argument("--grid", default=None,
                       help="comma-separated values (defaults per parameter)")
    sweep.add_argument("--algo", default="ceal", choices=harness.ALGORITHMS)
    sweep.add_argument("--m", type=int, required=True)
    sweep.add_argument("--m-r", type=int, default=0)
    sweep.add_argument("--m-0", type=int, default=0)
    sweep.add_argument("--iters", type=int, default=3)
    sweep.add_argument("--reps", type=int, default=10)
    sweep.add_argument("--seed-base", type=int, default=0)
    sweep.add_argument("--pool-size", type=int, default=2000)
    sweep.add_argument("--noise-sigma", type=float, default=None)
    sweep.add_argument("--out", required=True)
    sweep.add_argument("--no-plots", action="store_true")
    sweep.set_defaults(func=cmd_sweep)

    oracle = sub.add_parser("oracle", help="persist the ground-truth table")
    oracle.add_argument("--spec", required=True)
    group = oracle.add_mutually_exclusive_group(required=True)
    group.add_argument("--pool-size", type=int, default=None)
    group.add_argument("--enumerate", action="store_true", dest="enumerate_all")
    oracle.add_argument("--seed", type=int, default=0)
    oracle.add_argument("--out", required=True)
    oracle.set_defaults(func=cmd_oracle)

    hist = sub.add_parser("make-history",
                          help="measure per-component history files")
    hist.add_argument("--spec", required=True)
    hist.add_argument("--samples", type=int, default=500)
    hist.add_argument("--seed", type=int, default=0)
    hist.add_argument("--out", required=True)
    hist.set_defaults(func=cmd_make_history)

    mp = sub.add_parser("measure-pool",
                        help="measure a whole pool once, for table benches")
    mp.add_argument("--spec", required=True)
    mp.add_argument("--pool-size", type=int, default=2000)
    mp.add_argument("--seed", type=int, default=0)
    mp.add_argument("--executor", default="external",
                    choices=("synth", "external"))
    mp.add_argument("--noise-sigma", type=float, default=None)
    mp.add_argument("--command", default=None)
    mp.add_argument("--component-command", action="append", default=[],
                    metavar="NAME=TEMPLATE")
    mp.add_argument("--timeout", type=float, default=None)
    mp.add_argument("--out", required=True)
    mp.set_defaults(func=cmd_measure_pool)

    return parser


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _make_executor(args, workflow):
    if args.executor == "synth":
        return SyntheticExecutor(workflow, noise_sigma=args.noise_sigma,
                                 seed=args.seed)
    if not args.command:
        raise SystemExit("--executor external requires --command")
    comp_cmds = {}
    for spec in args.component_command:
        if "=" not in spec:
            raise SystemExit(f"--component-command needs NAME=TEMPLATE, "
                             f"got {spec!r}")
        name, template = spec.split("=", 1)
        comp_cmds[name] = template
    return ExternalExecutor(workflow, args.command, comp_cmds,
                            timeout_s=args.timeout)


def cmd_tune(args) -> int:
    workflow = load_workflow(args.spec)
    out = _out_dir(args.out)

    m_r = args.m_r
    m_0 = args.m_0
    if args.algo in ("ceal", "alph"):
        has_history = any(c.history_file for c in workflow.configurable_components)
        defaults = Budget.recommended(args.m, args.iters,
                                      with_history=has_history)
        m_r = defaults.m_r if m_r is None else m_r
        m_0 = defaults.m_0 if m_0 is None else m_0
    else:
        m_r = 0 if m_r is None else m_r
        m_0 = int(round(0.15 * args.m)) if m_0 is None else m_0
    cell = BudgetCell(args.m, m_r, m_0, args.iters)
    if args.algo != "rs":
        Budget(cell.m, cell.m_r, cell.m_0, cell.iterations)

    executor = _make_executor(args, workflow)
    pool = build_pool(workflow.space, args.pool_size,
                      make_rng(args.seed, "pool"))
    trace = run_tuner(args.algo, workflow, cell, executor, pool, args.seed,
                      BoostingParams(), history=None)

    trace.save(out / "trace.jsonl")
    if hasattr(trace.final_model, "save"):
        trace.final_model.save(out / "model.json")

    summary = trace.summary()
    if args.executor == "synth":
        oracle = brute_force_oracle(executor, pool=pool)
        perf = metrics.best_performance(trace, oracle=oracle,
                                        metric=workflow.metric)
        summary["best_true_value"] = perf.value
        summary["best_normalized"] = perf.normalized
    else:
        perf = metrics.best_performance(trace, executor=executor,
                                        metric=workflow.metric)
        summary["best_measured_value"] = perf.value
        summary["verification_run"] = "uncharged"
    (out / "summary.json").write_text(json.dumps(summary, indent=2,
                                                 sort_keys=True) + "\n")

    print(f"algorithm          : {trace.algo}")
    print(f"workflow           : {trace.workflow_name} ({trace.metric})")
    print(f"best configuration : {trace.best_config}")
    print(f"predicted value    : {trace.best_predicted_value:.6g}")
    for key in ("best_true_value", "best_normalized", "best_measured_value"):
        if key in summary and summary[key] is not None:
            print(f"{key.replace('_', ' '):<19}: {summary[key]:.6g}")
    print(f"charged budget     : {trace.total_charged} "
          f"({trace.charged_component_runs} component + "
          f"{trace.measured_workflow_runs} workflow runs)")
    if trace.switch_iteration is not None:
        print(f"model switch       : iteration {trace.switch_iteration}")

    if not args.no_plots:
        from . import plots
        plots.trace_progress_figure(trace, workflow.metric, out)
    return 0


def cmd_bench(args) -> int:
    plan = load_plan(args.plan)
    out = _out_dir(args.out)
    rows = harness.run_bench(plan, workers=args.workers)
    write_csv(out / "bench_per_seed.csv", rows, harness.PER_SEED_COLUMNS)
    write_csv(out / "bench_summary.csv", harness.summarize_bench(rows),
              harness.SUMMARY_COLUMNS)
    if not args.no_plots:
        from . import plots
        plots.bench_performance_figure(rows, out)
        plots.bench_recall_figure(rows, out)
        plots.bench_mdape_figure(rows, out)
    print(f"wrote {len(rows)} per-seed rows to {out / 'bench_per_seed.csv'}")
    return 0


def cmd_sweep(args) -> int:
    workflow = load_workflow(args.spec)
    if workflow.synthetic is None:
        raise SystemExit("sweep needs a workflow with a synthetic block")
    out = _out_dir(args.out)
    base = BudgetCell(args.m, args.m_r, args.m_0, args.iters)
    if args.grid:
        raw = [v for v in args.grid.split(",") if v]
        grid = [int(v) if args.param == "iters" else float(v) for v in raw]
    else:
        grid = harness.default_sweep_grid(args.param, base)
    rows = harness.run_sweep(
        workflow, args.param, grid, base, algo=args.algo,
        repetitions=args.reps, seed_base=args.seed_base,
        pool_size=args.pool_size, noise_sigma=args.noise_sigma)
    safe = args.param.replace("-", "_")
    write_csv(out / f"sweep_{safe}.csv", rows, harness.SWEEP_COLUMNS)
    skipped = sum(1 for r in rows if r["status"] != "ok")
    if not args.no_plots:
        from . import plots
        plots.sweep_figure(rows, args.param, out)
    print(f"wrote {len(rows)} rows ({skipped} skipped) to "
          f"{out / f'sweep_{safe}.csv'}")
    return 0


def cmd_oracle(args) -> int:
    workflow = load_workflow(args.spec)
    if workflow.synthetic is None:
        raise SystemExit("oracle needs a workflow with a synthetic block")
    out = _out_dir(args.out)
    executor = SyntheticExecutor(workflow, seed=args.seed)
    if args.enumerate_all:
        table = brute_force_oracle(executor, space=workflow.space)
    else:
        pool = build_pool(workflow.space, args.pool_size,
                          make_rng(args.seed, "pool"))
        table = brute_force_oracle(executor, pool=pool)

    exec_rank = {int(r): k for k, r in enumerate(table.ranking("execution_time"))}
    comp_rank = {int(r): k for k, r in enumerate(table.ranking("computer_time"))}
    rows = []
    for i, cfg in enumerate(table.configs):
        rows.append({
            "row": i,
            "config": json.dumps(list(cfg)),
            "execution_time_s": table.execution_time_s[i],
            "computer_time_h": table.computer_time_h[i],
            "rank_execution_time": exec_rank[i] + 1,
            "rank_computer_time": comp_rank[i] + 1,
        })
    write_csv(out / "oracle.csv", rows,
              ["row", "config", "execution_time_s", "computer_time_h",
               "rank_execution_time", "rank_computer_time"])
    print(f"wrote {len(rows)} rows to {out / 'oracle.csv'}")
    return 0


def cmd_make_history(args) -> int:
    workflow = load_workflow(args.spec)
    if workflow.synthetic is None:
        raise SystemExit("make-history needs a workflow with a synthetic block")
    out = _out_dir(args.out)
    executor = SyntheticExecutor(workflow, seed=args.seed)
    for j, comp in enumerate(workflow.configurable_components):
        rng = make_rng(args.seed, "history", j)
        comp_space = workflow.component_space(j)
        rows = []
        for _ in range(args.samples):
            cfg = comp_space.random_configuration(rng)
            rows.append(executor.measure_component(j, cfg))
        path = out / f"{comp.name}_history.jsonl"
        write_history(path, comp_space.fingerprint(), rows)
        print(f"wrote {len(rows)} records to {path}")
    return 0


def cmd_measure_pool(args) -> int:
    workflow = load_workflow(args.spec)
    out = _out_dir(args.out)
    executor = _make_executor(args, workflow)
    pool = build_pool(workflow.space, args.pool_size,
                      make_rng(args.seed, "pool"))
    records = []
    failed = 0
    for cfg in pool.configurations:
        m = executor.measure_workflow(cfg)
        if m.ok:
            records.append(m)
        else:
            failed += 1
            print(f"warning: {cfg} failed: {m.error}", file=sys.stderr)
    path = out / "pool_table.jsonl"
    write_history(path, workflow.space.fingerprint(), records)
    print(f"wrote {len(records)} measurements ({failed} failed) to {path}")
    return 0 if records else 2


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
