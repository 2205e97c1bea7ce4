import json

import pytest

from patchboard.audit import (
    TrajectoryError,
    attribution_violations,
    audit_run,
    changed_paths,
    contaminated,
    trajectory,
)
from patchboard.blueprint import load_blueprint
from patchboard.campaign import CSV_COLUMNS, CampaignError, parse_config, run_campaign
from patchboard.fuzz import FUZZ_CIRCUIT, random_scenario
from patchboard.kernel import Accepted, Transaction, replay, run
from patchboard.scenario import Scenario, ScenarioError, false_claims, load_scenario
from patchboard.scheduler import INIT_EVENT
from patchboard.state import Pointer
from conftest import notes_blueprint


@pytest.mark.parametrize("name", ["clean_and_place", "research", "toggle"])
def test_builtin_scenarios_replay_and_audit(name):
    sc = load_scenario(f"builtin:{name}")
    result = sc.run()
    bp = sc.blueprint()
    assert replay(result.initial_state, bp, result.log, circuit=sc.circuit).ok
    assert audit_run(bp, result.initial_state, result.log).ok


def test_toggle_halts_on_cycle():
    result = load_scenario("builtin:toggle").run()
    assert result.halt_reason == "CycleDetected"
    assert [t.worker_id for t in result.log] == ["toggler", "toggler", "kernel"]


def test_unknown_scenario():
    with pytest.raises(ScenarioError):
        load_scenario("builtin:nope")


def test_scenario_binding_errors():
    doc = {"blueprint": notes_blueprint(), "workers": {"writer": {"builtin": "noop"}}}
    with pytest.raises(ScenarioError):
        Scenario.from_doc(doc).workers()
    doc["workers"]["closer"] = {"mystery": 1}
    with pytest.raises(ScenarioError):
        Scenario.from_doc(doc).workers()


def test_false_claims_against_truth_table():
    sc = load_scenario("builtin:research")
    clean = sc.run()
    assert false_claims(clean.final_state, sc.ground_truth) == []


# ---------------------------------------------------------------------------
# audit helpers


def test_changed_paths():
    a = {"x": [1, 2], "y": {"z": 1}, "gone": 0}
    b = {"x": [1, 3, 4], "y": {"z": 1}, "new": True}
    assert [p.render() for p in changed_paths(a, b)] == ["/gone", "/new", "/x/1", "/x/2"]
    assert changed_paths(1, 1.0) == []
    assert changed_paths(True, 1) == [Pointer()]


def test_trajectory_detects_hash_forgery():
    bp = load_blueprint(notes_blueprint())
    initial = bp.initial(None)
    bad = [Transaction(1, "writer", INIT_EVENT, "v", [{"op": "add", "path": "/notes/-", "value": "x"}], Accepted("0" * 64))]
    with pytest.raises(TrajectoryError):
        list(trajectory(initial, bad))


def test_attribution_catches_out_of_contract_commit():
    from patchboard.state import hash_state

    bp = load_blueprint(notes_blueprint())
    initial = bp.initial(None)
    patch = [{"op": "replace", "path": "/status", "value": "done"}]
    h = hash_state({**initial, "status": "done"}).hex
    log = [Transaction(1, "writer", INIT_EVENT, "v", patch, Accepted(h))]
    report = attribution_violations(bp, initial, log)
    assert [v.path.render() for v in report.violations] == ["/status"]


def test_contamination_marker_search():
    bp = load_blueprint(notes_blueprint())
    result = run(bp, None, {"writer": lambda v, e: [{"op": "add", "path": "/notes/-", "value": "FAULT-X-1"}] if not v.fields["notes"] else [], "closer": lambda v, e: []})
    assert contaminated("FAULT-X-1", result.initial_state, result.log)
    assert not contaminated("FAULT-X-2", result.initial_state, result.log)


# ---------------------------------------------------------------------------
# campaign and fuzzing


def test_small_campaign_rows():
    report = run_campaign({"fault_type": ["InvalidJSON", "UnauthorizedWrite", "FalseClaim", "CycleHalt"], "count": 5, "seed": 1})
    rows = {r.fault_type: r for r in report.rows}
    assert rows["InvalidJSON"].contaminated == 0 and rows["InvalidJSON"].rejected["Syntax"] == 5
    assert rows["UnauthorizedWrite"].contaminated == 0 and rows["UnauthorizedWrite"].rejected["Auth"] == 5
    assert rows["FalseClaim"].injected_accepted == 5 and rows["FalseClaim"].flagged_false == 5
    assert rows["CycleHalt"].halted == 5 and rows["CycleHalt"].halt_reasons == {"CycleDetected": 5}
    header, *lines = report.to_csv().strip().split("\n")
    assert header.split(",") == CSV_COLUMNS and len(lines) == 4
    assert json.loads(json.dumps(report.to_json()))["config"]["count"] == 5


def test_campaign_is_deterministic():
    cfg = {"fault_type": "BadPathType", "count": 6, "seed": 9}
    assert run_campaign(cfg).to_csv() == run_campaign(cfg).to_csv()


@pytest.mark.parametrize(
    "doc",
    [[], {}, {"fault_type": "Gremlins"}, {"fault_type": "InvalidJSON", "count": -1}, {"fault_type": "InvalidJSON", "seed": "x"}],
)
def test_campaign_config_errors(doc):
    with pytest.raises(CampaignError):
        parse_config(doc)


def test_fuzz_scenarios_preserve_schema_and_contracts():
    proposals = 0
    for seed in range(8):
        sc = Scenario.from_doc(random_scenario(seed), name=f"fuzz{seed}")
        result = sc.run(seed=seed, circuit=FUZZ_CIRCUIT)
        proposals += result.counters.invocations
        audit = audit_run(sc.blueprint(), result.initial_state, result.log)
        assert audit.ok, (seed, audit.schema.describe(), audit.attribution.describe())
        assert replay(result.initial_state, sc.blueprint(), result.log, circuit=FUZZ_CIRCUIT).ok
    assert proposals > 100


def test_fuzz_generator_is_deterministic():
    assert random_scenario(5) == random_scenario(5)
    assert random_scenario(5) != random_scenario(6)
