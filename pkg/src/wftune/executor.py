"""Measurement records, the append-only measurement store, and the
external-command measurement backend.

A Measurement is the unit every backend produces: per-component wall-clock
times plus the two derived workflow metrics. The derivations are enforced at
construction so no backend can smuggle in inconsistent numbers:

    execution time  = max over per-component times (all launched together)
    computer time   = execution time * nodes * cores_per_node / 3600
"""

from __future__ import annotations

import json
import re
import subprocess
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

from .space import Config

EXECUTION_TIME = "execution_time"
COMPUTER_TIME = "computer_time"
METRICS = (EXECUTION_TIME, COMPUTER_TIME)

_REL_TOL = 1e-6


@dataclass(frozen=True)
class Measurement:
    """One observed run of a workflow (or a single component)."""

    config: Config
    component_times: tuple[float, ...]
    execution_time_s: float
    computer_time_h: float
    nodes: int
    cores_per_node: int
    status: str = "ok"
    provenance: str = "synthetic"
    error: str = ""

    def __post_init__(self):
        if self.status not in ("ok", "failed"):
            raise ValueError(f"bad status {self.status!r}")
        if self.provenance not in ("synthetic", "external", "history"):
            raise ValueError(f"bad provenance {self.provenance!r}")
        if self.status != "ok":
            return
        if not self.component_times:
            raise ValueError("ok measurement needs component times")
        peak = max(self.component_times)
        if abs(self.execution_time_s - peak) > _REL_TOL * max(abs(peak), 1e-12):
            raise ValueError(
                f"execution time {self.execution_time_s} != max component "
                f"time {peak}")
        expect = self.execution_time_s * self.nodes * self.cores_per_node / 3600.0
        if abs(self.computer_time_h - expect) > _REL_TOL * max(abs(expect), 1e-12):
            raise ValueError(
                f"computer time {self.computer_time_h} != "
                f"exec*nodes*cores/3600 = {expect}")

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @classmethod
    def build(cls, config, component_times, nodes, cores_per_node,
              provenance) -> "Measurement":
        """Derive the workflow metrics from component times."""
        times = tuple(float(t) for t in component_times)
        exec_s = max(times)
        return cls(
            config=tuple(config),
            component_times=times,
            execution_time_s=exec_s,
            computer_time_h=exec_s * nodes * cores_per_node / 3600.0,
            nodes=int(nodes),
            cores_per_node=int(cores_per_node),
            provenance=provenance,
        )

    @classmethod
    def failure(cls, config, provenance, error) -> "Measurement":
        return cls(
            config=tuple(config), component_times=(), execution_time_s=float("nan"),
            computer_time_h=float("nan"), nodes=0, cores_per_node=0,
            status="failed", provenance=provenance, error=str(error))

    def metric_value(self, metric: str) -> float:
        if metric == EXECUTION_TIME:
            return self.execution_time_s
        if metric == COMPUTER_TIME:
            return self.computer_time_h
        raise ValueError(f"unknown metric {metric!r}")

    def to_record(self, space_fingerprint: str) -> dict:
        return {
            "space": space_fingerprint,
            "config": list(self.config),
            "component_times": list(self.component_times),
            "execution_time_s": self.execution_time_s,
            "computer_time_h": self.computer_time_h,
            "nodes": self.nodes,
            "cores_per_node": self.cores_per_node,
            "status": self.status,
            "provenance": self.provenance,
            "error": self.error,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Measurement":
        return cls(
            config=tuple(rec["config"]),
            component_times=tuple(rec["component_times"]),
            execution_time_s=rec["execution_time_s"],
            computer_time_h=rec["computer_time_h"],
            nodes=rec["nodes"],
            cores_per_node=rec["cores_per_node"],
            status=rec.get("status", "ok"),
            provenance=rec.get("provenance", "history"),
            error=rec.get("error", ""),
        )


def _key(space_fingerprint: str, config) -> str:
    return space_fingerprint + "|" + json.dumps([float(v) for v in config],
                                                separators=(",", ":"))


class MeasurementStore:
    """Append-only measurement log with keyed lookup.

    Keys are (space fingerprint, configuration). Appending an existing key
    returns the stored record unless force is set; replaying the log file
    rebuilds the index exactly (later records win, matching append order).
    """

    def __init__(self, path):
        self.path = Path(path)
        self._index: dict[str, Measurement] = {}
        self.corrupt_lines = 0
        if self.path.exists():
            self._replay()

    def _replay(self) -> None:
        with self.path.open() as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                    m = Measurement.from_record(rec)
                    self._index[_key(rec["space"], m.config)] = m
                except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                    self.corrupt_lines += 1
        if self.corrupt_lines:
            warnings.warn(f"{self.path}: skipped {self.corrupt_lines} corrupt lines")

    def __len__(self) -> int:
        return len(self._index)

    def append(self, space_fingerprint: str, measurement: Measurement,
               force: bool = False) -> Measurement:
        key = _key(space_fingerprint, measurement.config)
        if key in self._index and not force:
            return self._index[key]
        with self.path.open("a") as fh:
            fh.write(json.dumps(measurement.to_record(space_fingerprint),
                                sort_keys=True) + "\n")
        self._index[key] = measurement
        return measurement

    def lookup(self, space_fingerprint: str, config) -> Measurement | None:
        return self._index.get(_key(space_fingerprint, config))


def import_history(path) -> list[Measurement]:
    """Load measurement records from a line-oriented history file.

    Corrupt lines are skipped with a counted warning; the loader never aborts
    on bad input rows.
    """
    records: list[Measurement] = []
    bad = 0
    with Path(path).open() as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                records.append(replace(Measurement.from_record(rec),
                                       provenance="history"))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                bad += 1
    if bad:
        warnings.warn(f"{path}: skipped {bad} corrupt history lines")
    return records


def write_history(path, space_fingerprint: str, measurements) -> None:
    with Path(path).open("w") as fh:
        for m in measurements:
            fh.write(json.dumps(m.to_record(space_fingerprint), sort_keys=True) + "\n")


_SLOT = re.compile(r"\{([A-Za-z0-9_.:-]+)\}")
_RESULT_LINE = re.compile(r"^RESULT\s+(.*)$")


def render_command(template: str, names, values) -> str:
    """Substitute {param_name} slots with configuration values."""
    table = {n: _format_value(v) for n, v in zip(names, values)}

    def sub(match):
        name = match.group(1)
        if name not in table:
            raise KeyError(f"command template references unknown parameter {name!r}")
        return table[name]

    return _SLOT.sub(sub, template)


def _format_value(v) -> str:
    f = float(v)
    return str(int(f)) if f.is_integer() else repr(f)


def parse_result_line(stdout: str) -> dict:
    """Parse the one-line result protocol:

    RESULT exec_s=<float> nodes=<int> cores_per_node=<int> comp_times=<csv floats>
    """
    line = None
    for raw in stdout.splitlines():
        m = _RESULT_LINE.match(raw.strip())
        if m:
            line = m.group(1)
    if line is None:
        raise ValueError("no RESULT line in output")
    fields: dict[str, str] = {}
    for token in line.split():
        if "=" not in token:
            raise ValueError(f"malformed RESULT token {token!r}")
        k, v = token.split("=", 1)
        fields[k] = v
    try:
        return {
            "exec_s": float(fields["exec_s"]),
            "nodes": int(fields["nodes"]),
            "cores_per_node": int(fields["cores_per_node"]),
            "comp_times": tuple(float(x) for x in fields["comp_times"].split(",")),
        }
    except (KeyError, ValueError) as exc:
        raise ValueError(f"bad RESULT line {line!r}: {exc}") from exc


class ExternalExecutor:
    """Measures configurations by spawning user commands.

    The workflow command template sees workflow-level parameter names;
    per-component templates see the component's own parameter names. Any
    nonzero exit, timeout, or unparsable output yields a failed Measurement
    with captured diagnostics instead of an exception.
    """

    def __init__(self, workflow, command: str, component_commands=None,
                 timeout_s: float | None = None):
        self.workflow = workflow
        self.command = command
        self.component_commands = dict(component_commands or {})
        self.timeout_s = timeout_s

    def measure_workflow(self, config: Config) -> Measurement:
        cmd = render_command(self.command, self.workflow.space.names, config)
        return self._run(cmd, config)

    def measure_component(self, comp_index: int, comp_config: Config) -> Measurement:
        comp = self.workflow.configurable_components[comp_index]
        template = self.component_commands.get(comp.name)
        if template is None:
            raise ValueError(f"no command template for component {comp.name!r}")
        names = [p.name for p in self.workflow.component_space(comp_index).parameters]
        local = [n.split(".", 1)[1] if n.startswith(comp.name + ".") else n
                 for n in names]
        cmd = render_command(template, local, comp_config)
        return self._run(cmd, comp_config)

    def _run(self, cmd: str, config: Config) -> Measurement:
        try:
            proc = subprocess.run(
                cmd, shell=True, capture_output=True, text=True,
                timeout=self.timeout_s)
        except subprocess.TimeoutExpired:
            return Measurement.failure(config, "external",
                                       f"timeout after {self.timeout_s}s: {cmd}")
        if proc.returncode != 0:
            tail = (proc.stderr or proc.stdout or "")[-500:]
            return Measurement.failure(
                config, "external", f"exit {proc.returncode}: {tail}")
        try:
            parsed = parse_result_line(proc.stdout)
        except ValueError as exc:
            return Measurement.failure(config, "external", str(exc))
        peak = max(parsed["comp_times"])
        if abs(parsed["exec_s"] - peak) > _REL_TOL * max(abs(peak), 1e-12):
            return Measurement.failure(
                config, "external",
                f"exec_s {parsed['exec_s']} inconsistent with component times "
                f"(max {peak})")
        return Measurement.build(
            config, parsed["comp_times"], parsed["nodes"],
            parsed["cores_per_node"], "external")
