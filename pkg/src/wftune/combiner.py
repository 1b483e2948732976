"""Low-fidelity workflow model: component models glued by an elementary
function chosen from the metric's structure.

The combination is exact — max or sum of the component predictions, nothing
learned and nothing smoothed — so its only error source is the component
models themselves plus whatever inter-component effects they cannot see.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .space import ComponentBinding, Config, SamplePool, encode

MAX, MIN, SUM = "max", "min", "sum"


def choose_function(metric: str) -> str:
    """Pick the combiner from the metric's structure: bottleneck metrics take
    the extreme component, aggregate metrics take the total."""
    table = {"execution_time": MAX, "throughput": MIN, "computer_time": SUM}
    if metric not in table:
        raise ValueError(f"no combination function for metric {metric!r}")
    return table[metric]


@dataclass
class LowFidelityModel:
    """Component models + bindings + combination function.

    `fixed_offsets` carries measured-once constants for unconfigurable
    components; they join the max (bottleneck metrics) or the sum (aggregate
    metrics).
    """

    models: list
    bindings: list[ComponentBinding]
    function: str
    fixed_offsets: tuple[float, ...] = ()

    def __post_init__(self):
        if len(self.models) != len(self.bindings):
            raise ValueError(
                f"{len(self.models)} models for {len(self.bindings)} bindings")
        if self.function not in (MAX, MIN, SUM):
            raise ValueError(f"unknown combination function {self.function!r}")

    def component_predictions(self, configs) -> np.ndarray:
        """(n_configs, n_components) prediction matrix."""
        X = encode(configs)
        cols = []
        for model, binding in zip(self.models, self.bindings):
            cols.append(np.asarray(model.predict(X[:, binding.index_map])))
        return np.column_stack(cols)

    def score_many(self, configs) -> np.ndarray:
        preds = self.component_predictions(configs)
        if self.fixed_offsets:
            offsets = np.tile(self.fixed_offsets, (len(preds), 1))
            preds = np.concatenate([preds, offsets], axis=1)
        if self.function == MAX:
            return preds.max(axis=1)
        if self.function == MIN:
            return preds.min(axis=1)
        return preds.sum(axis=1)

    def score(self, config: Config) -> float:
        return float(self.score_many([config])[0])


def rank_pool(model, pool: SamplePool) -> list[tuple[int, Config, float]]:
    """Remaining pool entries ordered best-first (ascending score for time
    metrics), ties broken by pool insertion index."""
    idx = pool.remaining_indices()
    if idx.size == 0:
        raise ValueError("pool is exhausted")
    configs = [pool.configurations[i] for i in idx]
    scores = np.asarray(model.score_many(configs), dtype=float)
    order = np.lexsort((idx, scores))
    return [(int(idx[k]), configs[k], float(scores[k])) for k in order]
