import csv
import io
import json

import pytest

from marketeq import SolverConfig, solve_cpl, solve_pl
from marketeq import instances
from marketeq.experiment import (ExperimentSpec, MethodRun, load_spec, run_experiment,
                                 spec_from_dict)
from marketeq.instances import generate_network

from models import t1


def small():
    return generate_network(6, nodes=8, arcs=20, od_pairs=3, paths_per_pair=5)


def runs(**cfg):
    cfg = SolverConfig(**cfg)
    return MethodRun("pl", "pl", cfg), MethodRun("cpl", "cpl", cfg)


def test_spec_validation():
    with pytest.raises(ValueError, match="decreasing"):
        ExperimentSpec(t1(), runs(), (1e-2, 1e-1))
    with pytest.raises(ValueError, match="decreasing"):
        ExperimentSpec(t1(), runs(), (1e-2, 1e-2))
    with pytest.raises(ValueError, match="at least one threshold"):
        ExperimentSpec(t1(), runs(), ())
    with pytest.raises(ValueError, match="duplicate"):
        ExperimentSpec(t1(), (MethodRun("pl", "a"), MethodRun("cpl", "a")), (1.0,))
    with pytest.raises(ValueError, match="unknown method"):
        ExperimentSpec(t1(), (MethodRun("fw", "fw"),), (1.0,))


def test_threshold_above_initial_gap_costs_nothing():
    spec = ExperimentSpec(t1(), runs(), (1e6, 1e-2))
    res = run_experiment(spec)
    for lab in ("pl", "cpl"):
        assert res.counts[lab][0] == 0
        assert res.counts[lab][1] > 0


def test_counts_are_monotone_and_match_the_traces():
    spec = ExperimentSpec(small(), runs(), (10.0, 1.0, 0.1, 0.01))
    res = run_experiment(spec)
    assert res.complete
    for lab, solver in (("pl", solve_pl), ("cpl", solve_cpl)):
        c = res.counts[lab]
        assert c == sorted(c)
        direct = solver(small(), SolverConfig(accuracy=0.01))
        assert c == [direct.trace.first_reaching(t) for t in spec.thresholds]


def test_csv_layout_and_unreached_runs():
    spec = ExperimentSpec(small(), (MethodRun("pl", "pl", SolverConfig(max_block_iters=30)),
                                    MethodRun("cpl", "cpl-h", SolverConfig())),
                          (1e9, 1e-2))
    res = run_experiment(spec)
    assert not res.complete
    assert res.incomplete_runs(1) == ["pl"]
    rows = list(csv.reader(io.StringIO(res.to_csv())))
    assert rows[0] == ["accuracy", "pl", "cpl-h", "unreached"]
    assert rows[1] == ["1000000000.0", "0", "0", ""]
    assert rows[2][0] == "0.01" and rows[2][1] == "" and rows[2][3] == "pl"
    assert int(rows[2][2]) > 0
    table = res.format().splitlines()
    assert "cpl-h" in table[0] and table[2].split()[1] == "-"


def test_trace_files_written(tmp_path):
    spec = ExperimentSpec(t1(), runs(), (1.0, 0.1))
    run_experiment(spec, trace_dir=tmp_path / "traces")
    for lab in ("pl", "cpl"):
        lines = (tmp_path / "traces" / f"{lab}.jsonl").read_text().splitlines()
        last = json.loads(lines[-1])
        assert last["kind"] == "status" and last["method"] == lab
        assert all(json.loads(line)["kind"] in {"iterate", "step", "restart"}
                   for line in lines[:-1])


def test_spec_documents(tmp_path):
    instances.save(t1(), tmp_path / "t1.json")
    doc = {"instance": "t1.json", "thresholds": [1.0, 0.1],
           "config": {"max_block_iters": 1000},
           "methods": ["pl", {"method": "cpl", "label": "cpl-halve",
                              "config": {"delta_rule": "halve"}}]}
    (tmp_path / "spec.json").write_text(json.dumps(doc))
    spec = load_spec(tmp_path / "spec.json")
    assert [r.label for r in spec.runs] == ["pl", "cpl-halve"]
    assert spec.runs[1].config.delta_rule == "halve"
    assert spec.runs[1].config.max_block_iters == 1000
    gen = spec_from_dict({"instance": {"generate": {"kind": "network", "seed": 6, "nodes": 8,
                                                    "arcs": 20, "od_pairs": 3,
                                                    "paths_per_pair": 5}},
                          "thresholds": [1.0]})
    assert instances.dumps(gen.problem) == instances.dumps(small())
    inline = spec_from_dict({"instance": instances.to_dict(t1()), "thresholds": [1.0]})
    assert [r.method for r in inline.runs] == ["pl", "cpl"]
    with pytest.raises(ValueError, match="unknown solver settings"):
        spec_from_dict({"instance": "t1.json", "thresholds": [1.0], "config": {"tol": 1}},
                       tmp_path)
    with pytest.raises(ValueError, match="cannot generate"):
        spec_from_dict({"instance": {"generate": {"kind": "market"}}, "thresholds": [1.0]})
    with pytest.raises(ValueError, match="instance must be"):
        spec_from_dict({"instance": 3, "thresholds": [1.0]})


@pytest.mark.slow
def test_t1_benchmark_to_tight_threshold():
    spec = ExperimentSpec(t1(), runs(max_block_iters=10**8), (1e-2, 1e-4, 1e-6))
    res = run_experiment(spec)
    assert res.complete
    # with a single block both methods take the same steps
    assert res.counts["pl"] == res.counts["cpl"]
