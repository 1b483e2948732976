"""Evaluation metrics: top-n recall, MdAPE, payoff, best-predicted performance.

All ranking here is lower-is-better (both supported metrics are times), and
every tie anywhere is broken by stable index order so synthetic data with
duplicated values stays deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def top_n_indices(values, n: int) -> set[int]:
    """Indices of the n smallest values, ties broken by index order."""
    values = np.asarray(values, dtype=float)
    order = np.lexsort((np.arange(len(values)), values))
    return set(int(i) for i in order[:n])


def recall_score(n: int, predicted, measured) -> float:
    """Percentage overlap between predicted-top-n and measured-top-n."""
    predicted = np.asarray(predicted, dtype=float)
    measured = np.asarray(measured, dtype=float)
    if len(predicted) != len(measured):
        raise ValueError("predicted/measured length mismatch")
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > len(predicted):
        raise ValueError(f"n={n} exceeds population of {len(predicted)}")
    hits = top_n_indices(predicted, n) & top_n_indices(measured, n)
    return 100.0 * len(hits) / n


def recall_sum(predicted, measured, upto: int = 3) -> float:
    """Sum of top-1..top-k recalls, k capped at the population size."""
    k = min(upto, len(predicted))
    return sum(recall_score(i, predicted, measured) for i in range(1, k + 1))


def mdape(actual, predicted) -> float:
    """Median absolute percentage error |(y - y') / y|."""
    actual = np.asarray(actual, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    if len(actual) == 0:
        raise ValueError("mdape of empty sample")
    if (actual == 0).any():
        raise ValueError("mdape undefined for zero actual values")
    return float(np.median(np.abs((actual - predicted) / actual)))


@dataclass(frozen=True)
class PayoffReport:
    """Tuning-cost payback: N = cost / per-run improvement."""

    cost: float
    improvement: float
    runs: float | None
    runs_ceil: int | None

    @property
    def pays_off(self) -> bool:
        return self.runs is not None


def least_number_of_uses(cost: float, improvement: float) -> PayoffReport:
    """Runs needed before tuning gains repay the data-collection cost.

    Non-positive improvement means the tuned configuration is no better than
    the reference, so the cost is never recouped.
    """
    if cost <= 0:
        raise ValueError("cost must be positive")
    if improvement <= 0:
        return PayoffReport(cost, improvement, None, None)
    n = cost / improvement
    return PayoffReport(cost, improvement, n, int(math.ceil(n)))


@dataclass(frozen=True)
class BestPerformance:
    config: tuple
    value: float
    normalized: float | None  # value / pool's true optimum, oracle mode only
    verification: object | None = None  # uncharged external measurement


def best_performance(trace, oracle=None, executor=None,
                     metric: str | None = None) -> BestPerformance:
    """True performance of a trace's best-predicted configuration.

    With an oracle table, the value is looked up and normalized by the pool
    optimum. Otherwise one extra verification run is measured through the
    executor; it is flagged as uncharged (it never counts toward the tuning
    budget).
    """
    metric = metric or trace.metric
    config = trace.best_config
    if config is None:
        raise ValueError("trace has no best-predicted configuration")
    if oracle is not None:
        value = oracle.value_of(config, metric)
        return BestPerformance(config, value, value / oracle.best(metric))
    if executor is None:
        raise ValueError("need an oracle table or an executor")
    m = executor.measure_workflow(config)
    if not m.ok:
        raise RuntimeError(f"verification run failed: {m.error}")
    return BestPerformance(config, m.metric_value(metric), None, verification=m)
