"""Seedable synthetic workflow simulator with an exact brute-force oracle.

Each configurable component gets an analytic time surface

    t = work / (p * threads)^alpha + overhead * p + comm * log2(max(p, 2))

whose overhead term creates an interior optimum over realistic process
counts. Components run concurrently; adjacent components in declaration
order are treated as a producer/consumer pair and the slower side of each
pair pays a rate-mismatch penalty

    coupling * |1/t_prod - 1/t_cons|

which rewards balanced component speeds. The penalty (and the measurement
noise) is exactly what per-component models cannot see, so the gap between
combined component predictions and whole-workflow truth is realistic rather
than zero.

Noise is multiplicative lognormal, seeded by (seed, component, configuration
fingerprint): re-measuring a configuration reproduces the same value, which
keeps paired comparisons and traces bit-stable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .executor import Measurement
from .space import Config, config_fingerprint, make_rng

_ROLE_ALIASES = {
    "processes": ("processes", "procs", "p", "nprocs", "num_processes"),
    "ppn": ("ppn", "processes_per_node", "procs_per_node"),
    "threads": ("threads", "nthreads", "threads_per_process"),
}

_SURFACE_FIELDS = {"work", "alpha", "overhead", "comm", "roles"}
_SPEC_FIELDS = {"cores_per_node", "coupling", "noise_sigma", "seed", "components",
                "fixed"}


@dataclass(frozen=True)
class ComponentSurface:
    name: str
    work: float
    alpha: float
    overhead: float
    comm: float
    processes_index: int  # positions inside the component's own subspace
    ppn_index: int | None
    threads_index: int | None

    def __post_init__(self):
        if self.work < 0 or self.overhead < 0 or self.comm < 0:
            raise ValueError(f"surface {self.name!r}: coefficients must be >= 0")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"surface {self.name!r}: alpha must be in (0, 1]")


@dataclass(frozen=True)
class SyntheticSpec:
    surfaces: tuple[ComponentSurface, ...]  # one per configurable component
    fixed_times: tuple[float, ...]          # one per unconfigurable component
    fixed_nodes: tuple[int, ...]
    cores_per_node: int = 36
    coupling: float = 0.0
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.coupling < 0 or self.noise_sigma < 0:
            raise ValueError("coupling and noise_sigma must be >= 0")
        if self.cores_per_node < 1:
            raise ValueError("cores_per_node must be >= 1")


def _resolve_role(local_names, roles: dict, role: str, comp: str,
                  required: bool) -> int | None:
    if role in roles:
        name = roles[role]
        if name not in local_names:
            raise ValueError(
                f"synthetic component {comp!r}: role {role!r} names unknown "
                f"parameter {name!r}")
        return local_names.index(name)
    for alias in _ROLE_ALIASES[role]:
        if alias in local_names:
            return local_names.index(alias)
    if required:
        raise ValueError(
            f"synthetic component {comp!r}: cannot resolve which parameter is "
            f"the process count; add a roles entry")
    return None


def parse_synthetic(d: dict, configurable, local_names_per_component,
                    fixed_components) -> SyntheticSpec:
    """Build a SyntheticSpec from the workflow file's `synthetic` block."""
    unknown = set(d) - _SPEC_FIELDS
    if unknown:
        raise ValueError(f"synthetic block: unknown fields {sorted(unknown)}")
    comp_surfaces = d.get("components", {})
    surfaces = []
    for comp, local_names in zip(configurable, local_names_per_component):
        if comp.name not in comp_surfaces:
            raise ValueError(f"synthetic block: no surface for component {comp.name!r}")
        s = comp_surfaces[comp.name]
        unknown = set(s) - _SURFACE_FIELDS
        if unknown:
            raise ValueError(
                f"synthetic surface {comp.name!r}: unknown fields {sorted(unknown)}")
        roles = s.get("roles", {})
        bad_roles = set(roles) - set(_ROLE_ALIASES)
        if bad_roles:
            raise ValueError(
                f"synthetic surface {comp.name!r}: unknown roles {sorted(bad_roles)}")
        surfaces.append(ComponentSurface(
            name=comp.name,
            work=float(s.get("work", 100.0)),
            alpha=float(s.get("alpha", 1.0)),
            overhead=float(s.get("overhead", 0.0)),
            comm=float(s.get("comm", 0.0)),
            processes_index=_resolve_role(local_names, roles, "processes",
                                          comp.name, required=True),
            ppn_index=_resolve_role(local_names, roles, "ppn", comp.name, False),
            threads_index=_resolve_role(local_names, roles, "threads", comp.name,
                                        False),
        ))
    extra = set(comp_surfaces) - {c.name for c in configurable}
    if extra:
        raise ValueError(f"synthetic block: surfaces for unknown components "
                         f"{sorted(extra)}")
    return SyntheticSpec(
        surfaces=tuple(surfaces),
        fixed_times=tuple(float(c.fixed_time_s) for c in fixed_components),
        fixed_nodes=tuple(int(c.fixed_nodes) for c in fixed_components),
        cores_per_node=int(d.get("cores_per_node", 36)),
        coupling=float(d.get("coupling", 0.0)),
        noise_sigma=float(d.get("noise_sigma", 0.0)),
        seed=int(d.get("seed", 0)),
    )


def component_time(surface: ComponentSurface, p, threads=1.0):
    """Noise-free component time; accepts scalars or aligned arrays."""
    p = np.asarray(p, dtype=float)
    threads = np.asarray(threads, dtype=float)
    if np.any(p <= 0):
        raise ValueError("process count must be positive")
    cores = p * threads
    t = (surface.work / cores ** surface.alpha
         + surface.overhead * p
         + surface.comm * np.log2(np.maximum(p, 2.0)))
    return t


class SyntheticExecutor:
    """Measurement backend over the analytic surfaces.

    Scalar measurements run through the same vectorized evaluation as the
    oracle, so a noise-free measurement equals its oracle row bit-for-bit.
    """

    def __init__(self, workflow, noise_sigma: float | None = None,
                 seed: int | None = None):
        if workflow.synthetic is None:
            raise ValueError(f"workflow {workflow.name!r} has no synthetic block")
        spec = workflow.synthetic
        if noise_sigma is not None or seed is not None:
            from dataclasses import replace
            spec = replace(
                spec,
                noise_sigma=spec.noise_sigma if noise_sigma is None else noise_sigma,
                seed=spec.seed if seed is None else seed)
        self.workflow = workflow
        self.spec = spec

    # -- core evaluation -------------------------------------------------

    def _component_columns(self, X: np.ndarray, j: int):
        surface = self.spec.surfaces[j]
        binding = self.workflow.bindings[j]
        sub = X[:, binding.index_map]
        p = sub[:, surface.processes_index]
        threads = (sub[:, surface.threads_index]
                   if surface.threads_index is not None else np.ones(len(sub)))
        ppn = (sub[:, surface.ppn_index]
               if surface.ppn_index is not None
               else np.full(len(sub), float(self.spec.cores_per_node)))
        return p, ppn, threads

    def evaluate_batch(self, configs, noise: bool):
        """Per-component final times, execution time, nodes, computer time."""
        X = np.asarray([list(c) for c in configs], dtype=float)
        n = len(X)
        n_cfg = len(self.spec.surfaces)
        base = np.empty((n, n_cfg))
        nodes = np.zeros(n)
        for j, surface in enumerate(self.spec.surfaces):
            p, ppn, threads = self._component_columns(X, j)
            base[:, j] = component_time(surface, p, threads)
            nodes += np.ceil(p / ppn)
        if self.spec.fixed_times:
            fixed = np.tile(self.spec.fixed_times, (n, 1))
            base = np.concatenate([base, fixed], axis=1)
            nodes += sum(self.spec.fixed_nodes)
        times = self._apply_coupling(base)
        if noise and self.spec.noise_sigma > 0:
            times = times * self._noise_factors(configs, times.shape[1])
        exec_s = times.max(axis=1)
        computer_h = exec_s * nodes * self.spec.cores_per_node / 3600.0
        return times, exec_s, nodes.astype(int), computer_h

    def _apply_coupling(self, base: np.ndarray) -> np.ndarray:
        lam = self.spec.coupling
        times = base.copy()
        if lam <= 0 or base.shape[1] < 2:
            return times
        rates = 1.0 / base
        for j in range(base.shape[1] - 1):
            penalty = lam * np.abs(rates[:, j] - rates[:, j + 1])
            slower = base[:, j] >= base[:, j + 1]
            times[:, j] += np.where(slower, penalty, 0.0)
            times[:, j + 1] += np.where(slower, 0.0, penalty)
        return times

    def _noise_factors(self, configs, n_components: int) -> np.ndarray:
        sigma = self.spec.noise_sigma
        out = np.empty((len(configs), n_components))
        for i, c in enumerate(configs):
            rng = make_rng(self.spec.seed, "wf-noise", config_fingerprint(tuple(c)))
            z = rng.standard_normal(n_components)
            out[i] = np.exp(sigma * z - 0.5 * sigma * sigma)
        return out

    # -- executor interface ----------------------------------------------

    def measure_workflow(self, config: Config) -> Measurement:
        times, _, nodes, _ = self.evaluate_batch([config], noise=True)
        return Measurement.build(config, times[0], int(nodes[0]),
                                 self.spec.cores_per_node, "synthetic")

    def measure_component(self, comp_index: int, comp_config: Config) -> Measurement:
        """Standalone component run: no coupling, component-scoped noise."""
        surface = self.spec.surfaces[comp_index]
        values = np.asarray(comp_config, dtype=float)
        p = float(values[surface.processes_index])
        threads = (float(values[surface.threads_index])
                   if surface.threads_index is not None else 1.0)
        ppn = (float(values[surface.ppn_index])
               if surface.ppn_index is not None else float(self.spec.cores_per_node))
        t = float(component_time(surface, p, threads))
        if self.spec.noise_sigma > 0:
            rng = make_rng(self.spec.seed, "comp-noise", comp_index,
                           config_fingerprint(tuple(comp_config)))
            sigma = self.spec.noise_sigma
            t *= math.exp(sigma * rng.standard_normal() - 0.5 * sigma * sigma)
        nodes = int(math.ceil(p / ppn))
        return Measurement.build(comp_config, (t,), nodes,
                                 self.spec.cores_per_node, "synthetic")


class OracleTable:
    """Noise-free ground truth for a set of configurations."""

    def __init__(self, configs, execution_time_s, computer_time_h):
        self.configs = [tuple(c) for c in configs]
        self.execution_time_s = np.asarray(execution_time_s, dtype=float)
        self.computer_time_h = np.asarray(computer_time_h, dtype=float)
        self._row = {c: i for i, c in enumerate(self.configs)}

    def __len__(self) -> int:
        return len(self.configs)

    def values(self, metric: str) -> np.ndarray:
        from .executor import EXECUTION_TIME
        return (self.execution_time_s if metric == EXECUTION_TIME
                else self.computer_time_h)

    def value_of(self, config, metric: str) -> float:
        return float(self.values(metric)[self._row[tuple(config)]])

    def best(self, metric: str) -> float:
        return float(self.values(metric).min())

    def ranking(self, metric: str) -> np.ndarray:
        """Row indices best-first; ties broken by row order."""
        vals = self.values(metric)
        return np.lexsort((np.arange(len(vals)), vals))

    def top_rows(self, metric: str, count: int) -> np.ndarray:
        return self.ranking(metric)[:count]


def brute_force_oracle(executor: SyntheticExecutor, pool=None, space=None,
                       limit: int = 1_000_000) -> OracleTable:
    """Evaluate every point noise-free and return the full ranked table."""
    if pool is not None:
        configs = list(pool.configurations)
    elif space is not None:
        if space.size() > limit:
            raise ValueError(
                f"space of size {space.size()} too large to enumerate; "
                f"pass a pool instead")
        configs = space.enumerate_feasible(limit=limit)
    else:
        raise ValueError("need a pool or a space")
    _, exec_s, _, computer_h = executor.evaluate_batch(configs, noise=False)
    return OracleTable(configs, exec_s, computer_h)
