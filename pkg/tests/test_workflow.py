import json
from pathlib import Path

import pytest

from wftune.ceal import fixed_time_offsets
from wftune.workflow import load_workflow, parse_workflow

REPO = Path(__file__).resolve().parent.parent


def base_doc():
    return {
        "name": "wf",
        "metric": "execution_time",
        "components": [
            {"name": "a", "parameters": [
                {"name": "procs", "range": {"lo": 1, "hi": 4, "step": 1}},
                {"name": "ppn", "list": [1, 2]}]},
            {"name": "b", "parameters": [
                {"name": "procs", "list": [1, 2, 3]}]},
        ],
    }


def test_load_shipped_workflow():
    wf = load_workflow(REPO / "workflows" / "twocomp.json")
    assert wf.name == "twocomp"
    assert wf.metric == "execution_time"
    assert wf.space.names == ("sim.procs", "sim.ppn", "sim.threads",
                              "analysis.procs", "analysis.ppn")
    assert wf.space.size() == 63 * 16 * 3 * 32 * 16
    assert len(wf.bindings) == 2
    assert wf.synthetic is not None
    assert wf.synthetic.noise_sigma == 0.05


def test_concatenated_parameters_and_bindings():
    wf = parse_workflow(base_doc())
    assert wf.space.names == ("a.procs", "a.ppn", "b.procs")
    assert wf.bindings[0].index_map == (0, 1)
    assert wf.bindings[1].index_map == (2,)
    assert wf.project((2, 1, 3), 1) == (3,)


def test_shared_parameter_mode():
    doc = {
        "name": "shared",
        "metric": "computer_time",
        "parameters": [
            {"name": "procs", "list": [1, 2, 4]},
            {"name": "buffer", "list": [8, 16]},
            {"name": "writers", "list": [1, 2]},
        ],
        "components": [
            {"name": "producer", "binding": [0, 1]},
            {"name": "consumer", "binding": [1, 2]},
        ],
    }
    wf = parse_workflow(doc)
    cfg = (4, 16, 2)
    assert wf.project(cfg, 0) == (4, 16)
    assert wf.project(cfg, 1) == (16, 2)  # shared buffer appears in both


@pytest.mark.parametrize("mutate", [
    lambda d: d.update(extra=1),
    lambda d: d["components"][0].update(extra=1),
    lambda d: d["components"][0]["parameters"][0].update(extra=1),
    lambda d: d["components"][0]["parameters"][0].update(
        {"range": {"lo": 1, "hi": 2, "step": 1, "weird": 0}, "list": None}),
])
def test_unknown_fields_rejected(mutate):
    doc = base_doc()
    mutate(doc)
    doc["components"][0]["parameters"][0].pop("list", None)
    with pytest.raises(ValueError):
        parse_workflow(doc)


def test_missing_and_invalid_fields():
    doc = base_doc()
    del doc["metric"]
    with pytest.raises(ValueError):
        parse_workflow(doc)
    doc = base_doc()
    doc["metric"] = "latency"
    with pytest.raises(ValueError):
        parse_workflow(doc)
    doc = base_doc()
    doc["components"] = []
    with pytest.raises(ValueError):
        parse_workflow(doc)


def test_parameter_needs_exactly_one_domain_form():
    doc = base_doc()
    doc["components"][0]["parameters"][0] = {"name": "procs"}
    with pytest.raises(ValueError):
        parse_workflow(doc)
    doc["components"][0]["parameters"][0] = {
        "name": "procs", "list": [1], "range": {"lo": 1, "hi": 2, "step": 1}}
    with pytest.raises(ValueError):
        parse_workflow(doc)


def test_constraints_reference_workflow_names():
    doc = base_doc()
    doc["constraints"] = [
        {"kind": "product-le", "params": ["a.procs", "a.ppn"], "bound": 4}]
    wf = parse_workflow(doc)
    assert not wf.space.satisfies((4, 2, 1))
    assert wf.space.satisfies((2, 2, 1))
    doc["constraints"] = [
        {"kind": "product-le", "params": ["nope"], "bound": 4}]
    with pytest.raises(ValueError):
        parse_workflow(doc)


def test_fixed_component_requires_time():
    doc = base_doc()
    doc["components"].append({"name": "plot"})
    with pytest.raises(ValueError):
        parse_workflow(doc)
    doc["components"][-1]["fixed_time_s"] = 97.0
    wf = parse_workflow(doc)
    assert wf.fixed_components[0].name == "plot"


def test_fixed_offsets_per_metric():
    doc = base_doc()
    doc["components"].append(
        {"name": "plot", "fixed_time_s": 97.0, "fixed_nodes": 2})
    doc["synthetic"] = {
        "cores_per_node": 10,
        "components": {"a": {"work": 1.0}, "b": {"work": 1.0}},
    }
    wf = parse_workflow(doc)
    assert fixed_time_offsets(wf, "execution_time") == (97.0,)
    assert fixed_time_offsets(wf, "computer_time") == (97.0 * 2 * 10 / 3600,)


def test_synthetic_block_validation():
    doc = base_doc()
    doc["synthetic"] = {"components": {"a": {"work": 1.0}}}
    with pytest.raises(ValueError):  # missing surface for b
        parse_workflow(doc)
    doc["synthetic"] = {
        "components": {"a": {"work": 1.0}, "b": {"work": 1.0}},
        "bogus": True}
    with pytest.raises(ValueError):
        parse_workflow(doc)
    doc["synthetic"] = {
        "components": {"a": {"work": 1.0, "wat": 2}, "b": {"work": 1.0}}}
    with pytest.raises(ValueError):
        parse_workflow(doc)


def test_role_resolution_explicit_and_by_name():
    doc = base_doc()
    doc["components"][1]["parameters"] = [{"name": "workers", "list": [1, 2]}]
    doc["synthetic"] = {
        "components": {
            "a": {"work": 1.0},
            "b": {"work": 1.0, "roles": {"processes": "workers"}}}}
    wf = parse_workflow(doc)
    assert wf.synthetic.surfaces[1].processes_index == 0
    doc["synthetic"]["components"]["b"].pop("roles")
    with pytest.raises(ValueError):  # "workers" is not a recognizable name
        parse_workflow(doc)


def test_large_workflow_scales():
    from wftune.boosting import BoostingParams
    from wftune.ceal import Budget, run_ceal
    from wftune.space import build_pool, make_rng
    from wftune.synthetic import SyntheticExecutor

    wf = load_workflow(REPO / "workflows" / "sim_analysis_large.json")
    assert wf.space.size() == (1084 * 35 * 4 * 8) * (1084 * 35 * 4)
    pool = build_pool(wf.space, 300, make_rng(0, "pool"))
    assert len(pool) == 300
    trace = run_ceal(wf, Budget(m=12, m_r=4, m_0=2, iterations=2),
                     SyntheticExecutor(wf, seed=0), pool=pool, seed=0,
                     surrogate_params=BoostingParams(tree_count=20))
    assert trace.total_charged == 12


def test_history_path_resolution(tmp_path):
    doc = base_doc()
    doc["components"][0]["history_file"] = "a_hist.jsonl"
    path = tmp_path / "wf.json"
    path.write_text(json.dumps(doc))
    wf = load_workflow(path)
    comp = wf.configurable_components[0]
    assert wf.history_path(comp) == tmp_path / "a_hist.jsonl"
    assert wf.history_path(wf.configurable_components[1]) is None
