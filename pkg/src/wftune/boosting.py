"""Gradient-boosted regression trees, self-contained and fully deterministic.

Serves every model role in the tuner: per-component models, the high-fidelity
workflow model, and the learned combiner baseline. Design goals, in order:
reproducibility (bit-identical models from identical data, regardless of row
order), sane behavior on very small training sets (tens of rows), and a
serialization format simple enough to diff.

Training is standard least-squares boosting: the ensemble starts from the
target mean and each tree fits the current residuals with exact greedy
axis-aligned splits over sorted unique feature values. No histogram binning,
no feature subsampling; desk-scale data does not need either.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .space import make_rng

MODEL_FORMAT_VERSION = 1

# Minimum sum-of-squares reduction for a split to be accepted. Keeps ties and
# float dust from producing arbitrary splits.
_MIN_GAIN = 1e-12


@dataclass(frozen=True)
class BoostingParams:
    """Hyperparameters for the tree ensemble.

    Defaults favor stability on small samples; sweep or override per role.
    """

    tree_count: int = 100
    max_depth: int = 4
    learning_rate: float = 0.1
    min_samples_leaf: int = 1
    subsample_fraction: float = 1.0
    log_target: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.tree_count < 1:
            raise ValueError("tree_count must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must be in (0, 1]")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if not 0.0 < self.subsample_fraction <= 1.0:
            raise ValueError("subsample_fraction must be in (0, 1]")

    @classmethod
    def memorizing(cls, seed: int = 0) -> "BoostingParams":
        """Settings that drive training error to ~0 on distinct inputs."""
        return cls(tree_count=300, max_depth=16, learning_rate=1.0,
                   min_samples_leaf=1, seed=seed)


class _Tree:
    """Flat-array regression tree: feature < 0 marks a leaf."""

    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self, feature, threshold, left, right, value):
        self.feature = np.asarray(feature, dtype=np.int32)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=np.int32)
        self.right = np.asarray(right, dtype=np.int32)
        self.value = np.asarray(value, dtype=float)

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int32)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.flatnonzero(active)
            n = node[idx]
            f = self.feature[n]
            go_left = X[idx, f] <= self.threshold[n]
            node[idx] = np.where(go_left, self.left[n], self.right[n])
            active = self.feature[node] >= 0
        return self.value[node]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "_Tree":
        return cls(d["feature"], d["threshold"], d["left"], d["right"], d["value"])


class _TreeBuilder:
    def __init__(self, max_depth: int, min_samples_leaf: int):
        self.max_depth = max_depth
        self.min_leaf = min_samples_leaf
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []

    def build(self, X: np.ndarray, y: np.ndarray) -> _Tree:
        self._grow(X, y, np.arange(len(y)), depth=0)
        return _Tree(self.feature, self.threshold, self.left, self.right, self.value)

    def _new_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    def _grow(self, X, y, rows, depth) -> int:
        node = self._new_node()
        sub_y = y[rows]
        self.value[node] = float(sub_y.mean())
        if depth >= self.max_depth or len(rows) < 2 * self.min_leaf:
            return node
        split = self._best_split(X, sub_y, rows)
        if split is None:
            return node
        f, thr, left_rows, right_rows = split
        self.feature[node] = f
        self.threshold[node] = thr
        self.left[node] = self._grow(X, y, left_rows, depth + 1)
        self.right[node] = self._grow(X, y, right_rows, depth + 1)
        return node

    def _best_split(self, X, sub_y, rows):
        # Gain = parent SSE - child SSEs; the sum-of-squares terms cancel, so
        # only the (sum)^2/count pieces are needed.
        n = len(rows)
        total = sub_y.sum()
        parent_term = total * total / n
        best_gain = _MIN_GAIN
        best = None
        for f in range(X.shape[1]):
            col = X[rows, f]
            order = np.argsort(col, kind="stable")
            xs = col[order]
            ys = sub_y[order]
            # Candidate cuts sit between distinct consecutive values.
            boundaries = np.flatnonzero(xs[:-1] < xs[1:]) + 1
            if boundaries.size == 0:
                continue
            left_n = boundaries
            right_n = n - left_n
            keep = (left_n >= self.min_leaf) & (right_n >= self.min_leaf)
            if not keep.any():
                continue
            boundaries = boundaries[keep]
            csum = np.cumsum(ys)
            left_sum = csum[boundaries - 1]
            right_sum = total - left_sum
            gain = (left_sum * left_sum / boundaries
                    + right_sum * right_sum / (n - boundaries)
                    - parent_term)
            k = int(np.argmax(gain))
            if gain[k] > best_gain:
                best_gain = float(gain[k])
                b = boundaries[k]
                thr = float((xs[b - 1] + xs[b]) / 2.0)
                best = (f, thr, rows[order[:b]], rows[order[b:]])
        return best


class GradientBoostedTrees:
    """Immutable fitted ensemble; prediction = base + lr * sum(tree values)."""

    def __init__(self, trees: list[_Tree], base_prediction: float,
                 params: BoostingParams, n_training_rows: int, n_features: int):
        self.trees = trees
        self.base_prediction = base_prediction
        self.params = params
        self.n_training_rows = n_training_rows
        self.n_features = n_features

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        squeeze = X.ndim == 1
        if squeeze:
            X = X.reshape(1, -1)
        if X.shape[1] != self.n_features:
            raise ValueError(
                f"feature length {X.shape[1]} != training length {self.n_features}")
        out = np.full(X.shape[0], self.base_prediction)
        lr = self.params.learning_rate
        for t in self.trees:
            out += lr * t.predict(X)
        if self.params.log_target:
            out = np.exp(out)
        return out[0] if squeeze else out

    def to_dict(self) -> dict:
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "base_prediction": self.base_prediction,
            "n_training_rows": self.n_training_rows,
            "n_features": self.n_features,
            "params": asdict(self.params),
            "trees": [t.to_dict() for t in self.trees],
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True))

    @classmethod
    def from_dict(cls, d: dict) -> "GradientBoostedTrees":
        if d.get("format_version") != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model format {d.get('format_version')!r}")
        return cls(
            [_Tree.from_dict(t) for t in d["trees"]],
            d["base_prediction"],
            BoostingParams(**d["params"]),
            d["n_training_rows"],
            d["n_features"],
        )

    @classmethod
    def load(cls, path) -> "GradientBoostedTrees":
        return cls.from_dict(json.loads(Path(path).read_text()))


def fit(X, y, params: BoostingParams | None = None) -> GradientBoostedTrees:
    """Train an ensemble on (features, targets).

    Rows are canonicalized by lexicographic sort before training, so any
    permutation of the same multiset of rows yields a bit-identical model.
    Training MSE is asserted non-increasing tree over tree.
    """
    params = params or BoostingParams()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if len(X) == 0:
        raise ValueError("empty training set")
    if len(X) != len(y):
        raise ValueError("feature/target length mismatch")
    if not np.isfinite(X).all() or not np.isfinite(y).all():
        raise ValueError("training data must be finite")
    if params.log_target:
        if (y <= 0).any():
            raise ValueError("log_target requires strictly positive targets")
        y = np.log(y)

    order = np.lexsort([y] + [X[:, f] for f in range(X.shape[1] - 1, -1, -1)])
    X = X[order]
    y = y[order]

    base = float(y.mean())
    current = np.full(len(y), base)
    trees: list[_Tree] = []
    rng = make_rng(params.seed, "boosting-subsample")
    prev_mse = float(((y - current) ** 2).mean())
    for _ in range(params.tree_count):
        residual = y - current
        if params.subsample_fraction < 1.0:
            k = max(1, int(round(params.subsample_fraction * len(y))))
            rows = np.sort(rng.choice(len(y), size=k, replace=False))
        else:
            rows = np.arange(len(y))
        builder = _TreeBuilder(params.max_depth, params.min_samples_leaf)
        tree = builder.build(X[rows], residual[rows])
        current = current + params.learning_rate * tree.predict(X)
        trees.append(tree)
        mse = float(((y - current) ** 2).mean())
        if params.subsample_fraction >= 1.0:
            assert mse <= prev_mse * (1 + 1e-9) + 1e-12, "training loss increased"
        prev_mse = mse

    return GradientBoostedTrees(trees, base, params, len(y), X.shape[1])


def refit(prior: GradientBoostedTrees | None, X, y,
          params: BoostingParams | None = None) -> GradientBoostedTrees:
    """Full retrain on the cumulative data; the prior model is discarded.

    Retraining from scratch keeps the model independent of sample arrival
    order, which incremental refinement would not.
    """
    if params is None and prior is not None:
        params = prior.params
    return fit(X, y, params)
