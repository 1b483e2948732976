"""Tuning traces: a full, replayable audit of one tuner run.

Serialized as JSON-lines, one record per line: a header, one record per
component-model phase (when present), one per iteration, and a final summary.
Records carry the tuner RNG state at the end of each iteration, so an
interrupted run can be resumed from its last complete iteration.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .executor import Measurement

TRACE_FORMAT_VERSION = 1


@dataclass
class SelectedEntry:
    pool_index: int
    config: tuple
    source: str  # random | low | high | model | graph

    def to_dict(self) -> dict:
        return {"pool_index": self.pool_index, "config": list(self.config),
                "source": self.source}

    @classmethod
    def from_dict(cls, d: dict) -> "SelectedEntry":
        return cls(d["pool_index"], tuple(d["config"]), d["source"])


@dataclass
class IterationRecord:
    index: int
    selected: list[SelectedEntry]
    measurements: list[Measurement]
    evaluator: str  # evaluator in force when this batch was selected
    s_h: float | None = None
    s_l: float | None = None
    switched: bool = False
    failures: list[dict] = field(default_factory=list)
    rng_state: dict | None = None

    def to_dict(self) -> dict:
        return {
            "kind": "iteration",
            "index": self.index,
            "selected": [s.to_dict() for s in self.selected],
            "measurements": [m.to_record("") for m in self.measurements],
            "evaluator": self.evaluator,
            "s_h": self.s_h,
            "s_l": self.s_l,
            "switched": self.switched,
            "failures": self.failures,
            "rng_state": self.rng_state,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IterationRecord":
        return cls(
            index=d["index"],
            selected=[SelectedEntry.from_dict(s) for s in d["selected"]],
            measurements=[Measurement.from_record(m) for m in d["measurements"]],
            evaluator=d["evaluator"],
            s_h=d["s_h"],
            s_l=d["s_l"],
            switched=d["switched"],
            failures=d.get("failures", []),
            rng_state=d.get("rng_state"),
        )


@dataclass
class ComponentPhaseRecord:
    component: str
    measurements: list[Measurement]
    history_rows: int

    def to_dict(self) -> dict:
        return {
            "kind": "component_phase",
            "component": self.component,
            "measurements": [m.to_record("") for m in self.measurements],
            "history_rows": self.history_rows,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ComponentPhaseRecord":
        return cls(d["component"],
                   [Measurement.from_record(m) for m in d["measurements"]],
                   d["history_rows"])


@dataclass
class TuningTrace:
    algo: str
    workflow_name: str
    metric: str
    seed: int | None
    m: int
    m_r: int
    m_0: int
    iterations_planned: int
    pool_size: int
    pool_fingerprint: str
    space_fingerprint: str
    surrogate_params: dict | None = None
    component_phase: list[ComponentPhaseRecord] = field(default_factory=list)
    iterations: list[IterationRecord] = field(default_factory=list)
    best_config: tuple | None = None
    best_predicted_value: float | None = None
    switch_iteration: int | None = None
    charged_component_runs: int = 0
    # In-memory only, never serialized:
    final_model = None
    low_fidelity = None
    pool = None

    # -- accounting --------------------------------------------------------

    @property
    def workflow_measurements(self) -> list[Measurement]:
        return [m for it in self.iterations for m in it.measurements if m.ok]

    @property
    def measured_workflow_runs(self) -> int:
        return len(self.workflow_measurements)

    @property
    def total_charged(self) -> int:
        return self.charged_component_runs + self.measured_workflow_runs

    def training_cost(self, metric: str | None = None) -> float:
        """Data-collection cost: metric values summed over every charged run
        (workflow runs plus phase-one component runs; history is free)."""
        metric = metric or self.metric
        cost = sum(m.metric_value(metric) for m in self.workflow_measurements)
        for rec in self.component_phase:
            cost += sum(m.metric_value(metric) for m in rec.measurements if m.ok)
        return cost

    def measured_configs(self) -> list[tuple]:
        return [m.config for m in self.workflow_measurements]

    # -- serialization -------------------------------------------------------

    def header_dict(self) -> dict:
        return {
            "kind": "header",
            "format_version": TRACE_FORMAT_VERSION,
            "algo": self.algo,
            "workflow": self.workflow_name,
            "metric": self.metric,
            "seed": self.seed,
            "m": self.m,
            "m_r": self.m_r,
            "m_0": self.m_0,
            "iterations_planned": self.iterations_planned,
            "pool_size": self.pool_size,
            "pool_fingerprint": self.pool_fingerprint,
            "space_fingerprint": self.space_fingerprint,
            "surrogate_params": self.surrogate_params,
        }

    def final_dict(self) -> dict:
        return {
            "kind": "final",
            "best_config": list(self.best_config) if self.best_config else None,
            "best_predicted_value": self.best_predicted_value,
            "switch_iteration": self.switch_iteration,
            "charged_component_runs": self.charged_component_runs,
            "measured_workflow_runs": self.measured_workflow_runs,
            "total_charged": self.total_charged,
        }

    def to_lines(self) -> list[str]:
        records = [self.header_dict()]
        records += [r.to_dict() for r in self.component_phase]
        records += [r.to_dict() for r in self.iterations]
        if self.best_config is not None:
            records.append(self.final_dict())
        return [json.dumps(r, sort_keys=True) for r in records]

    def save(self, path) -> None:
        Path(path).write_text("\n".join(self.to_lines()) + "\n")

    @classmethod
    def load(cls, path) -> "TuningTrace":
        lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
        header = json.loads(lines[0])
        if header.get("kind") != "header":
            raise ValueError(f"{path}: first record is not a trace header")
        if header.get("format_version") != TRACE_FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported trace format")
        trace = cls(
            algo=header["algo"], workflow_name=header["workflow"],
            metric=header["metric"], seed=header["seed"], m=header["m"],
            m_r=header["m_r"], m_0=header["m_0"],
            iterations_planned=header["iterations_planned"],
            pool_size=header["pool_size"],
            pool_fingerprint=header["pool_fingerprint"],
            space_fingerprint=header["space_fingerprint"],
            surrogate_params=header.get("surrogate_params"))
        for line in lines[1:]:
            rec = json.loads(line)
            kind = rec.get("kind")
            if kind == "component_phase":
                trace.component_phase.append(ComponentPhaseRecord.from_dict(rec))
            elif kind == "iteration":
                trace.iterations.append(IterationRecord.from_dict(rec))
            elif kind == "final":
                if rec["best_config"] is not None:
                    trace.best_config = tuple(rec["best_config"])
                trace.best_predicted_value = rec["best_predicted_value"]
                trace.switch_iteration = rec["switch_iteration"]
                trace.charged_component_runs = rec["charged_component_runs"]
            else:
                raise ValueError(f"{path}: unknown record kind {kind!r}")
        return trace

    @property
    def complete(self) -> bool:
        return self.best_config is not None

    def summary(self) -> dict:
        return {
            "algo": self.algo,
            "workflow": self.workflow_name,
            "metric": self.metric,
            "seed": self.seed,
            "best_config": list(self.best_config) if self.best_config else None,
            "best_predicted_value": self.best_predicted_value,
            "switch_iteration": self.switch_iteration,
            "charged_component_runs": self.charged_component_runs,
            "measured_workflow_runs": self.measured_workflow_runs,
            "total_charged": self.total_charged,
            "training_cost": self.training_cost() if self.iterations else 0.0,
        }
