"""Discrete configuration spaces: parameters, constraints, sampling, pools.

A configuration is a plain tuple of numbers, aligned index-for-index with the
parameters of the space that owns it. Spaces can be astronomically large
(products of per-parameter option counts well past 10^10), so feasibility is
handled by rejection sampling against explicit constraint predicates instead
of enumeration.
"""

from __future__ import annotations

import ast
import functools
import hashlib
import itertools
import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

Config = tuple[float, ...]

# Rejection-sampling attempt ceiling for a single configuration draw.
DEFAULT_REJECTION_BUDGET = 10_000

# Spaces at or below this unconstrained size may be enumerated as a fallback.
ENUMERATION_LIMIT = 200_000


class InfeasibleSpaceError(RuntimeError):
    """Raised when rejection sampling cannot find a feasible configuration."""


def make_rng(seed, *labels) -> np.random.Generator:
    """Deterministic generator for (seed, labels).

    Distinct label tuples give statistically independent streams, so paired
    experiments can share a seed while keeping per-role streams separate.
    """
    if isinstance(seed, np.random.Generator):
        if labels:
            raise ValueError("labels require an integer seed, not a Generator")
        return seed
    words = [int(seed)] + [_label_word(l) for l in labels]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(words)))


def _label_word(label) -> int:
    if isinstance(label, int):
        return label
    digest = hashlib.sha256(str(label).encode()).digest()
    return int.from_bytes(digest[:4], "big")


@dataclass(frozen=True)
class Parameter:
    """One tunable dimension with a finite, ordered numeric domain."""

    name: str
    values: tuple[float, ...]

    def __post_init__(self):
        if not self.name:
            raise ValueError("parameter needs a name")
        if len(self.values) == 0:
            raise ValueError(f"parameter {self.name!r}: empty domain")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ValueError(
                f"parameter {self.name!r}: domain must be strictly increasing"
            )

    @classmethod
    def from_range(cls, name: str, lo, hi, step) -> "Parameter":
        """Arithmetic range expanding to floor((hi-lo)/step)+1 values."""
        if step <= 0:
            raise ValueError(f"parameter {name!r}: step must be positive")
        if hi < lo:
            raise ValueError(f"parameter {name!r}: hi < lo")
        count = int(math.floor((hi - lo) / step + 1e-9)) + 1
        vals = tuple(lo + k * step for k in range(count))
        return cls(name, vals)

    def step_neighbors(self, value) -> list[float]:
        """Domain values exactly one step above/below `value`."""
        i = self.values.index(value)
        out = []
        if i > 0:
            out.append(self.values[i - 1])
        if i + 1 < len(self.values):
            out.append(self.values[i + 1])
        return out


_ALLOWED_EXPR_NODES = (
    ast.Expression, ast.BoolOp, ast.And, ast.Or, ast.UnaryOp, ast.Not,
    ast.USub, ast.UAdd, ast.BinOp, ast.Add, ast.Sub, ast.Mult, ast.Div,
    ast.FloorDiv, ast.Mod, ast.Pow, ast.Compare, ast.Eq, ast.NotEq, ast.Lt,
    ast.LtE, ast.Gt, ast.GtE, ast.Name, ast.Load, ast.Constant,
)


@functools.lru_cache(maxsize=None)
def _compile_expression(expr: str):
    tree = ast.parse(expr, mode="eval")
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_EXPR_NODES):
            raise ValueError(
                f"constraint expression {expr!r}: {type(node).__name__} not allowed"
            )
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise ValueError(f"constraint expression {expr!r}: non-numeric constant")
    return compile(tree, "<constraint>", "eval")


@dataclass(frozen=True)
class Constraint:
    """Pure feasibility predicate over a full configuration.

    kinds:
      product-le: product of named parameter values <= bound
      linear-le:  sum(coeffs[i] * value[i]) <= bound (unit coeffs if omitted)
      custom-expression: restricted boolean expression over parameter names
    """

    kind: str
    params: tuple[str, ...] = ()
    bound: float = 0.0
    coeffs: tuple[float, ...] = ()
    expression: str = ""

    def __post_init__(self):
        if self.kind not in ("product-le", "linear-le", "custom-expression"):
            raise ValueError(f"unknown constraint kind {self.kind!r}")
        if self.kind == "custom-expression":
            _compile_expression(self.expression)
        elif not self.params:
            raise ValueError(f"{self.kind} constraint needs parameter names")
        if self.kind == "linear-le" and self.coeffs and len(self.coeffs) != len(self.params):
            raise ValueError("linear-le: coeffs/params length mismatch")

    def ok(self, by_name: dict[str, float]) -> bool:
        if self.kind == "product-le":
            prod = 1.0
            for p in self.params:
                prod *= by_name[p]
            return prod <= self.bound
        if self.kind == "linear-le":
            coeffs = self.coeffs or (1.0,) * len(self.params)
            return sum(c * by_name[p] for c, p in zip(coeffs, self.params)) <= self.bound
        return bool(eval(_compile_expression(self.expression), {"__builtins__": {}}, dict(by_name)))


@dataclass(frozen=True)
class ParameterSpace:
    """Ordered parameters plus feasibility constraints."""

    parameters: tuple[Parameter, ...]
    constraints: tuple[Constraint, ...] = ()

    def __post_init__(self):
        names = [p.name for p in self.parameters]
        if len(set(names)) != len(names):
            raise ValueError("duplicate parameter names")
        known = set(names)
        for c in self.constraints:
            refs = c.params if c.kind != "custom-expression" else tuple(
                n.id for n in ast.walk(ast.parse(c.expression, mode="eval"))
                if isinstance(n, ast.Name)
            )
            missing = [r for r in refs if r not in known]
            if missing:
                raise ValueError(f"constraint references unknown parameters {missing}")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.parameters)

    def size(self) -> int:
        """Unconstrained Cartesian cardinality (exact, arbitrary precision)."""
        n = 1
        for p in self.parameters:
            n *= len(p.values)
        return n

    def _by_name(self, values: Config) -> dict[str, float]:
        return dict(zip(self.names, values))

    def satisfies(self, values: Config) -> bool:
        by_name = self._by_name(values)
        return all(c.ok(by_name) for c in self.constraints)

    def validate_config(self, values) -> Config:
        values = tuple(values)
        if len(values) != len(self.parameters):
            raise ValueError(
                f"configuration length {len(values)} != {len(self.parameters)} parameters"
            )
        for v, p in zip(values, self.parameters):
            if v not in p.values:
                raise ValueError(f"{v!r} not in domain of parameter {p.name!r}")
        if not self.satisfies(values):
            raise ValueError(f"configuration {values} violates constraints")
        return values

    def random_configuration(self, rng: np.random.Generator,
                             max_attempts: int = DEFAULT_REJECTION_BUDGET) -> Config:
        """Uniform per-dimension draw with rejection on constraint violation."""
        sizes = [len(p.values) for p in self.parameters]
        for _ in range(max_attempts):
            idx = [int(rng.integers(s)) for s in sizes]
            cand = tuple(p.values[i] for p, i in zip(self.parameters, idx))
            if self.satisfies(cand):
                return cand
        raise InfeasibleSpaceError(
            f"no feasible configuration found in {max_attempts} attempts"
        )

    def enumerate_feasible(self, limit: int = ENUMERATION_LIMIT) -> list[Config]:
        if self.size() > limit:
            raise ValueError(f"space too large to enumerate ({self.size()} > {limit})")
        return [
            c for c in itertools.product(*(p.values for p in self.parameters))
            if self.satisfies(c)
        ]

    def feasible_fraction(self, samples: int | None = 10_000, seed: int = 0) -> float:
        """Fraction of unconstrained points satisfying all constraints.

        samples=None enumerates exhaustively (small spaces only); otherwise a
        seeded Monte-Carlo estimate over `samples` unconstrained draws.
        """
        if not self.constraints:
            return 1.0
        if samples is None:
            total = self.size()
            return len(self.enumerate_feasible()) / total
        if samples < 1:
            raise ValueError("samples must be >= 1")
        rng = make_rng(seed, "feasible-fraction")
        hits = 0
        for _ in range(samples):
            cand = tuple(
                p.values[int(rng.integers(len(p.values)))] for p in self.parameters
            )
            if self.satisfies(cand):
                hits += 1
        return hits / samples

    def fingerprint(self) -> str:
        payload = {
            "parameters": [[p.name, list(p.values)] for p in self.parameters],
            "constraints": [
                [c.kind, list(c.params), c.bound, list(c.coeffs), c.expression]
                for c in self.constraints
            ],
        }
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class ComponentBinding:
    """Maps a component's subspace onto workflow-space parameter indices."""

    component: str
    index_map: tuple[int, ...]

    def __post_init__(self):
        if len(set(self.index_map)) != len(self.index_map):
            raise ValueError(f"binding {self.component!r}: duplicate indices")
        if any(i < 0 for i in self.index_map):
            raise ValueError(f"binding {self.component!r}: negative index")


def project(config: Config, binding: ComponentBinding) -> Config:
    """Extract the component-subspace configuration from a workflow one."""
    if any(i >= len(config) for i in binding.index_map):
        raise IndexError(
            f"binding {binding.component!r} indexes past configuration of "
            f"length {len(config)}"
        )
    return tuple(config[i] for i in binding.index_map)


def component_subspace(space: ParameterSpace, binding: ComponentBinding) -> ParameterSpace:
    """Component-view space: bound parameters plus constraints fully local to them."""
    params = tuple(space.parameters[i] for i in binding.index_map)
    local = set(p.name for p in params)
    kept = []
    for c in space.constraints:
        refs = c.params if c.kind != "custom-expression" else tuple(
            n.id for n in ast.walk(ast.parse(c.expression, mode="eval"))
            if isinstance(n, ast.Name)
        )
        if refs and all(r in local for r in refs):
            kept.append(c)
    return ParameterSpace(params, tuple(kept))


def check_bindings_cover(space: ParameterSpace, bindings: list[ComponentBinding]) -> None:
    covered = set()
    for b in bindings:
        covered.update(b.index_map)
    missing = sorted(set(range(len(space.parameters))) - covered)
    if missing:
        names = [space.parameters[i].name for i in missing]
        raise ValueError(f"parameters not bound to any component: {names}")


def pool_size_for(n: int, probability: float) -> int:
    """Pool size p = ceil(-n * ln(1-P)) so a top-1/n point lands in the pool
    with probability at least P."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 < probability < 1.0:
        raise ValueError("probability must lie strictly between 0 and 1")
    return int(math.ceil(-n * math.log(1.0 - probability)))


class SamplePool:
    """Ordered, duplicate-free set of feasible configurations with one-way
    consumption: entries moved out never reappear."""

    def __init__(self, space: ParameterSpace, configurations: list[Config]):
        seen = set()
        for c in configurations:
            if c in seen:
                raise ValueError(f"duplicate pool entry {c}")
            seen.add(c)
        self.space = space
        self.configurations: tuple[Config, ...] = tuple(configurations)
        self._consumed = np.zeros(len(configurations), dtype=bool)

    def __len__(self) -> int:
        return len(self.configurations)

    def remaining_indices(self) -> np.ndarray:
        return np.flatnonzero(~self._consumed)

    def remaining_count(self) -> int:
        return int((~self._consumed).sum())

    def is_consumed(self, index: int) -> bool:
        return bool(self._consumed[index])

    def consume(self, indices) -> None:
        for i in indices:
            if self._consumed[i]:
                raise ValueError(f"pool entry {i} already consumed")
            self._consumed[i] = True

    def consumed_indices(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self._consumed)]

    def fingerprint(self) -> str:
        blob = json.dumps(
            [self.space.fingerprint(), [list(c) for c in self.configurations]],
            sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def fresh_copy(self) -> "SamplePool":
        """Same entries, nothing consumed."""
        return SamplePool(self.space, list(self.configurations))


def build_pool(space: ParameterSpace, p: int, rng: np.random.Generator) -> SamplePool:
    """Draw p distinct feasible configurations, uniformly at random.

    If the space holds fewer than p feasible points (only detectable for
    enumerable spaces), returns the whole feasible set with a warning.
    """
    if p < 1:
        raise ValueError("pool size must be >= 1")
    if space.size() <= ENUMERATION_LIMIT:
        feasible = space.enumerate_feasible()
        if len(feasible) <= p:
            if len(feasible) < p:
                warnings.warn(
                    f"space has only {len(feasible)} feasible points; "
                    f"pool truncated from {p}")
            if not feasible:
                raise InfeasibleSpaceError("no feasible configurations exist")
            return SamplePool(space, feasible)
        picks = rng.choice(len(feasible), size=p, replace=False)
        return SamplePool(space, [feasible[int(i)] for i in picks])

    chosen: list[Config] = []
    seen: set[Config] = set()
    attempts = 0
    budget = max(50_000, 50 * p)
    while len(chosen) < p and attempts < budget:
        attempts += 1
        cand = space.random_configuration(rng)
        if cand not in seen:
            seen.add(cand)
            chosen.append(cand)
    if len(chosen) < p:
        raise InfeasibleSpaceError(
            f"could not collect {p} distinct feasible configurations "
            f"in {attempts} draws")
    return SamplePool(space, chosen)


def encode(configs) -> np.ndarray:
    """Feature matrix for model training: raw option values as floats."""
    arr = np.asarray(configs, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    return arr


def config_fingerprint(values: Config) -> int:
    """Stable 64-bit fingerprint of a configuration, for seeding."""
    blob = json.dumps([float(v) for v in values], separators=(",", ":"))
    return int.from_bytes(hashlib.sha256(blob.encode()).digest()[:8], "big")
