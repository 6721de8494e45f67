import pytest
import yaml

from posn.core import ConfigError
from posn.metrics import RunLog
from posn.scenario import build_scenario, load_scenario


def test_build_scenario_defaults():
    sc = build_scenario({})
    assert sc.protocol == "posn"
    assert sc.cfg.n_validators == 4
    assert sc.load.duration_ms == 10_000.0
    assert sc.fault_plan.byzantine == {}


def test_build_scenario_full_spec():
    sc = build_scenario({
        "protocol": "por",
        "seed": 9,
        "duration_s": 5,
        "validators": {"n": 7, "f_max": 2},
        "config": {"delta_net_ms": 25.0, "tau_steps": 100},
        "load": {"arrival_rate": 80, "value": [10, 100], "fee": [1, 9]},
        "faults": {
            "byzantine": [{"index": 5, "strategy": "Equivocate"}],
            "crash": [{"index": 3, "at_ms": 2000}],
            "partitions": [{"start_ms": 100, "end_ms": 300,
                            "side_a": [0, 1]}],
        },
        "name": "kitchen-sink",
    })
    assert sc.name == "kitchen-sink"
    assert sc.cfg.master_seed == 9
    assert sc.cfg.delta_net_ms == 25.0
    assert sc.cfg.tau_steps == 100
    assert sc.load.arrival_rate == 80.0
    assert sc.load.fee_max == 9
    assert sc.fault_plan.byzantine == {5: "Equivocate"}
    assert sc.fault_plan.crash_ms == {3: 2000.0}
    assert sc.fault_plan.partitions[0].side_a == frozenset({0, 1})


def test_build_scenario_mapping_shorthand():
    sc = build_scenario({
        "validators": {"n": 7},
        "faults": {"byzantine": {6: "Silent"}, "crash": {2: 1500}},
    })
    assert sc.fault_plan.byzantine == {6: "Silent"}
    assert sc.fault_plan.crash_ms == {2: 1500.0}


@pytest.mark.parametrize("spec", [
    {"turbo": True},
    {"load": {"arrival": 5}},
    {"faults": {"bribes": []}},
    {"config": {"n_validators": 9}},   # set through validators.n instead
])
def test_build_scenario_rejects_unknown_keys(spec):
    with pytest.raises(ConfigError):
        build_scenario(spec)


def test_build_scenario_overrides_win():
    sc = build_scenario({"protocol": "posn", "seed": 1,
                         "validators": {"n": 4}},
                        protocol="pob", seed=5, n_validators=7,
                        duration_s=3.0)
    assert sc.protocol == "pob"
    assert sc.cfg.master_seed == 5
    assert sc.cfg.n_validators == 7
    assert sc.load.duration_ms == 3000.0


def test_load_scenario_names_after_file(tmp_path):
    path = tmp_path / "smoketest.yaml"
    path.write_text(yaml.safe_dump({"seed": 3, "duration_s": 2}))
    sc = load_scenario(str(path))
    assert sc.name == "smoketest"
    assert sc.cfg.master_seed == 3


def test_scenario_run_returns_runlog(tmp_path):
    sc = build_scenario({"duration_s": 2, "load": {"arrival_rate": 30}})
    log = sc.run()
    assert isinstance(log, RunLog)
    assert log.slot_records
    assert log.violations == []
