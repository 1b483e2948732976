"""Workflow specification files: schema, validation, loading.

A workflow file is JSON with the following shape (see README for the full
schema; the loader rejects unknown fields at every level):

    {
      "name": "twocomp",
      "metric": "execution_time",
      "components": [
        {"name": "sim",
         "parameters": [{"name": "procs", "range": {"lo": 2, "hi": 64, "step": 1}},
                        {"name": "threads", "list": [1, 2, 4]}],
         "history_file": "sim_history.jsonl"},
        {"name": "render", "fixed_time_s": 97.0}
      ],
      "constraints": [{"kind": "product-le",
                       "params": ["sim.ppn", "sim.threads"], "bound": 36}],
      "synthetic": { ... }
    }

Workflow-space parameters are the concatenation of the components' parameter
lists, with names prefixed "component.parameter". Workflows whose components
share parameters instead declare a top-level "parameters" list and give each
configurable component a "binding" of indices into it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from . import synthetic as synth
from .space import (ComponentBinding, Config, Constraint, Parameter,
                    ParameterSpace, check_bindings_cover, component_subspace,
                    project)

_TOP_FIELDS = {"name", "metric", "components", "parameters", "constraints",
               "synthetic"}
_COMPONENT_FIELDS = {"name", "parameters", "binding", "history_file",
                     "fixed_time_s", "fixed_nodes"}
_PARAM_FIELDS = {"name", "list", "range"}
_RANGE_FIELDS = {"lo", "hi", "step"}
_CONSTRAINT_FIELDS = {"kind", "params", "bound", "coeffs", "expression"}


@dataclass(frozen=True)
class Component:
    name: str
    binding: ComponentBinding | None
    history_file: str | None = None
    fixed_time_s: float | None = None
    fixed_nodes: int = 1

    @property
    def configurable(self) -> bool:
        return self.binding is not None


@dataclass
class WorkflowSpec:
    name: str
    metric: str
    space: ParameterSpace
    components: list[Component]
    synthetic: synth.SyntheticSpec | None = None
    base_dir: Path | None = None

    @property
    def configurable_components(self) -> list[Component]:
        return [c for c in self.components if c.configurable]

    @property
    def fixed_components(self) -> list[Component]:
        return [c for c in self.components if not c.configurable]

    @property
    def bindings(self) -> list[ComponentBinding]:
        return [c.binding for c in self.configurable_components]

    def component_space(self, index: int) -> ParameterSpace:
        return component_subspace(self.space, self.bindings[index])

    def project(self, config: Config, index: int) -> Config:
        return project(config, self.bindings[index])

    def history_path(self, component: Component) -> Path | None:
        if component.history_file is None:
            return None
        p = Path(component.history_file)
        if not p.is_absolute() and self.base_dir is not None:
            p = self.base_dir / p
        return p

    def fingerprint(self) -> str:
        return self.space.fingerprint()


def _parse_parameter(d: dict, prefix: str = "") -> Parameter:
    unknown = set(d) - _PARAM_FIELDS
    if unknown:
        raise ValueError(f"parameter: unknown fields {sorted(unknown)}")
    name = prefix + d["name"]
    if ("list" in d) == ("range" in d):
        raise ValueError(f"parameter {name!r}: give exactly one of list/range")
    if "list" in d:
        return Parameter(name, tuple(d["list"]))
    r = d["range"]
    unknown = set(r) - _RANGE_FIELDS
    if unknown:
        raise ValueError(f"parameter {name!r}: unknown range fields {sorted(unknown)}")
    return Parameter.from_range(name, r["lo"], r["hi"], r["step"])


def _parse_constraint(d: dict) -> Constraint:
    unknown = set(d) - _CONSTRAINT_FIELDS
    if unknown:
        raise ValueError(f"constraint: unknown fields {sorted(unknown)}")
    return Constraint(
        kind=d["kind"],
        params=tuple(d.get("params", ())),
        bound=float(d.get("bound", 0.0)),
        coeffs=tuple(d.get("coeffs", ())),
        expression=d.get("expression", ""),
    )


def parse_workflow(doc: dict, base_dir: Path | None = None) -> WorkflowSpec:
    unknown = set(doc) - _TOP_FIELDS
    if unknown:
        raise ValueError(f"workflow: unknown fields {sorted(unknown)}")
    for key in ("name", "metric", "components"):
        if key not in doc:
            raise ValueError(f"workflow: missing field {key!r}")
    metric = doc["metric"]
    if metric not in ("execution_time", "computer_time"):
        raise ValueError(f"workflow: unknown metric {metric!r}")

    comp_docs = doc["components"]
    if not comp_docs:
        raise ValueError("workflow: needs at least one component")
    for cd in comp_docs:
        unknown = set(cd) - _COMPONENT_FIELDS
        if unknown:
            raise ValueError(
                f"component {cd.get('name', '?')!r}: unknown fields "
                f"{sorted(unknown)}")
        if "name" not in cd:
            raise ValueError("component: missing name")

    shared_mode = "parameters" in doc
    if shared_mode:
        params = tuple(_parse_parameter(p) for p in doc["parameters"])
    else:
        params = ()

    components: list[Component] = []
    local_names: list[list[str]] = []
    if shared_mode:
        for cd in comp_docs:
            if "parameters" in cd:
                raise ValueError(
                    f"component {cd['name']!r}: inline parameters not allowed "
                    f"when a top-level parameter list is given")
            if "binding" in cd:
                binding = ComponentBinding(cd["name"], tuple(cd["binding"]))
                components.append(_component(cd, binding))
                local_names.append([params[i].name for i in binding.index_map])
            else:
                components.append(_component(cd, None))
    else:
        all_params: list[Parameter] = []
        for cd in comp_docs:
            if "binding" in cd:
                raise ValueError(
                    f"component {cd['name']!r}: bindings require a top-level "
                    f"parameter list")
            plist = cd.get("parameters", [])
            if plist:
                start = len(all_params)
                prefix = cd["name"] + "."
                comp_params = [_parse_parameter(p, prefix) for p in plist]
                all_params.extend(comp_params)
                binding = ComponentBinding(
                    cd["name"], tuple(range(start, start + len(comp_params))))
                components.append(_component(cd, binding))
                local_names.append([p["name"] for p in plist])
            else:
                components.append(_component(cd, None))
        params = tuple(all_params)

    if not any(c.configurable for c in components):
        raise ValueError("workflow: no configurable components")
    for c in components:
        if not c.configurable and c.fixed_time_s is None:
            raise ValueError(
                f"component {c.name!r}: unconfigurable components need "
                f"fixed_time_s")

    constraints = tuple(_parse_constraint(c) for c in doc.get("constraints", []))
    space = ParameterSpace(params, constraints)
    check_bindings_cover(space, [c.binding for c in components if c.configurable])

    wf = WorkflowSpec(
        name=doc["name"], metric=metric, space=space, components=components,
        base_dir=base_dir)
    if "synthetic" in doc:
        wf.synthetic = synth.parse_synthetic(
            doc["synthetic"], wf.configurable_components, local_names,
            wf.fixed_components)
    return wf


def _component(cd: dict, binding: ComponentBinding | None) -> Component:
    return Component(
        name=cd["name"],
        binding=binding,
        history_file=cd.get("history_file"),
        fixed_time_s=cd.get("fixed_time_s"),
        fixed_nodes=int(cd.get("fixed_nodes", 1)),
    )


def load_workflow(path) -> WorkflowSpec:
    path = Path(path)
    doc = json.loads(path.read_text())
    return parse_workflow(doc, base_dir=path.parent)
