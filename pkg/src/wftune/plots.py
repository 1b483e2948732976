"""Figure rendering for the report paths.

Every report command writes its figures next to its CSV output. The CSVs are
the canonical, schema-stable artifacts; figures are a convenience rendering
of the same rows. Rendering is headless (Agg) and deterministic so report
directories hash stably.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

_PNG_META = {"Software": None}  # keep PNG bytes independent of the toolchain


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, dpi=120, bbox_inches="tight", metadata=_PNG_META)
    plt.close(fig)
    return path


def _cells(rows):
    cells: dict[str, list[dict]] = {}
    for r in rows:
        label = r["algo"]
        if int(r.get("use_history", 0)):
            label += "+hist"
        cells.setdefault(label, []).append(r)
    return cells


def bench_performance_figure(rows, out_dir) -> Path:
    """Oracle-normalized performance of the best-predicted configuration,
    one box per algorithm (1.0 = best configuration in the pool)."""
    cells = _cells(rows)
    fig, ax = plt.subplots(figsize=(6, 4))
    labels = list(cells)
    data = [[r["normalized"] for r in cells[k]] for k in labels]
    ax.boxplot(data, tick_labels=labels)
    ax.axhline(1.0, color="gray", linestyle="--", linewidth=1)
    ax.set_ylabel("normalized performance (lower is better)")
    ax.set_xlabel("algorithm")
    ax.set_title("best-predicted configuration vs. pool optimum")
    return _save(fig, Path(out_dir) / "fig_performance.png")


def bench_recall_figure(rows, out_dir, ns=range(1, 11)) -> Path:
    cells = _cells(rows)
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, group in cells.items():
        means = [sum(r[f"recall_{n}"] for r in group) / len(group) for n in ns]
        ax.plot(list(ns), means, marker="o", label=label)
    ax.set_xlabel("top-n")
    ax.set_ylabel("mean recall (%)")
    ax.set_ylim(0, 105)
    ax.set_title("recall of top configurations")
    ax.legend()
    return _save(fig, Path(out_dir) / "fig_recall.png")


def bench_mdape_figure(rows, out_dir) -> Path:
    cells = _cells(rows)
    labels = list(cells)
    all_err = [sum(r["mdape_all"] for r in cells[k]) / len(cells[k])
               for k in labels]
    top_err = [sum(r["mdape_top2pct"] for r in cells[k]) / len(cells[k])
               for k in labels]
    x = range(len(labels))
    fig, ax = plt.subplots(figsize=(6, 4))
    width = 0.38
    ax.bar([i - width / 2 for i in x], all_err, width, label="all pool configs")
    ax.bar([i + width / 2 for i in x], top_err, width, label="top 2% configs")
    ax.set_xticks(list(x))
    ax.set_xticklabels(labels)
    ax.set_ylabel("MdAPE")
    ax.set_title("prediction error, everywhere vs. near the optimum")
    ax.legend()
    return _save(fig, Path(out_dir) / "fig_mdape.png")


def sweep_figure(rows, param: str, out_dir) -> Path:
    ok = [r for r in rows if r["status"] == "ok"]
    by_value: dict[float, list[float]] = {}
    for r in ok:
        by_value.setdefault(r["value"], []).append(r["normalized"])
    values = sorted(by_value)
    means = [sum(by_value[v]) / len(by_value[v]) for v in values]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(values, means, marker="o")
    ax.axhline(1.0, color="gray", linestyle="--", linewidth=1)
    ax.set_xlabel(param)
    ax.set_ylabel("mean normalized performance")
    ax.set_title(f"sensitivity to {param}")
    safe = param.replace("-", "_")
    return _save(fig, Path(out_dir) / f"fig_sweep_{safe}.png")


def trace_progress_figure(trace, metric: str, out_dir) -> Path:
    """Best measured value so far, per iteration of one tuning run."""
    best_so_far = []
    current = float("inf")
    for rec in trace.iterations:
        for m in rec.measurements:
            current = min(current, m.metric_value(metric))
        best_so_far.append(current)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(range(1, len(best_so_far) + 1), best_so_far, marker="o")
    if trace.switch_iteration is not None:
        ax.axvline(trace.switch_iteration, color="tab:red", linestyle=":",
                   label="model switch")
        ax.legend()
    ax.set_xlabel("iteration")
    ax.set_ylabel(f"best measured {metric}")
    ax.set_title(f"{trace.algo} progress")
    return _save(fig, Path(out_dir) / "fig_progress.png")
