import warnings

import pytest

from patchboard.scheduler import (
    INIT_EVENT,
    EmptyInitialQueue,
    Event,
    Invocation,
    InvocationQueue,
    RuleError,
    WorkflowRule,
    extract_events,
    initial_queue,
    schedule,
)
from patchboard.state import OpKind, Patch, Pointer, apply_patch


def rule(path, action="w", op=None, condition=None, on_init=False):
    doc = {"trigger": {"path": path}, "action": action, "on_init": on_init}
    if op:
        doc["trigger"]["op"] = op
    if condition:
        doc["condition"] = condition
    return WorkflowRule.from_json(doc)


def test_events_resolve_append_and_skip_tests():
    prev = {"xs": [1, 2]}
    patch = Patch.of(("test", "/xs/0", 1), ("add", "/xs/-", 3), ("add", "/xs/-", 4), ("replace", "/xs/0", 0))
    events = extract_events(patch, prev, "w", 7)
    assert [(e.seq, e.path.render(), e.op_kind.value) for e in events] == [
        (7, "/xs/2", "add"),
        (8, "/xs/3", "add"),
        (9, "/xs/0", "replace"),
    ]
    assert all(e.source_worker == "w" for e in events)


def test_append_trigger_matches_array_adds_only():
    r = rule("/claims/-")
    assert r.triggered_by(Event(1, "w", Pointer.parse("/claims/4"), OpKind.ADD))
    assert not r.triggered_by(Event(1, "w", Pointer.parse("/claims/4"), OpKind.REPLACE))
    assert not r.triggered_by(Event(1, "w", Pointer.parse("/claims/4/x"), OpKind.ADD))
    assert not r.triggered_by(Event(1, "w", Pointer.parse("/claims/name"), OpKind.ADD))


def test_op_filter_and_wildcards():
    r = rule("/claims/*/status", op="replace")
    assert r.triggered_by(Event(1, "w", Pointer.parse("/claims/2/status"), OpKind.REPLACE))
    assert not r.triggered_by(Event(1, "w", Pointer.parse("/claims/2/status"), OpKind.ADD))


def test_conditions_relative_and_absolute():
    state = {"claims": [{"status": "new"}, {"status": "done"}], "phase": "review"}
    ev = Event(1, "w", Pointer.parse("/claims/1/status"), OpKind.REPLACE)
    assert rule("/claims/*/status", condition={"path": ".", "equals": "done"}).triggered_by(ev)
    assert schedule([ev], [rule("/claims/*/status", condition={"path": ".", "equals": "done"})], state)
    assert not schedule([ev], [rule("/claims/*/status", condition={"path": ".", "equals": "new"})], state)
    assert schedule([ev], [rule("/claims/*/status", condition={"path": "../status", "equals": "done"})], state)
    assert schedule([ev], [rule("/claims/*/status", condition={"path": "/phase", "equals": "review"})], state)
    # a wildcard shared with the trigger binds to the event's position
    bound = rule("/claims/*/status", condition={"path": "/claims/*/status", "equals": "new"})
    assert not schedule([ev], [bound], state)
    assert schedule([Event(1, "w", Pointer.parse("/claims/0/status"), OpKind.REPLACE)], [bound], state)


def test_schedule_order_is_event_then_rule():
    rules = [rule("/a", "first"), rule("/b", "second"), rule("/a", "third")]
    events = [Event(1, "w", Pointer.parse("/b"), OpKind.ADD), Event(2, "w", Pointer.parse("/a"), OpKind.ADD)]
    assert [i.worker for i in schedule(events, rules, {})] == ["second", "first", "third"]


def test_commit_then_schedule_pipeline():
    prev = {"notes": []}
    patch = Patch.of(("add", "/notes/-", "x"))
    nxt = apply_patch(prev, patch)
    invs = schedule(extract_events(patch, prev, "writer", 1), [rule("/notes/-", "closer")], nxt)
    assert invs == [Invocation("closer", Event(1, "writer", Pointer.parse("/notes/0"), OpKind.ADD))]


def test_initial_queue_and_empty_warning():
    q = initial_queue([rule("/a", "w", on_init=True), rule("/b", "v")], {})
    assert list(q) == [Invocation("w", INIT_EVENT)]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        assert len(initial_queue([rule("/b", "v")], {})) == 0
    assert any(issubclass(w.category, EmptyInitialQueue) for w in caught)


def test_queue_is_fifo_with_front_insert():
    a, b, c = (Invocation(n, INIT_EVENT) for n in "abc")
    q = InvocationQueue([a, b])
    q.push_front(c)
    q.push(a)
    assert [q.pop().worker for _ in range(4)] == ["c", "a", "b", "a"]


def test_event_json_roundtrip():
    ev = Event(3, "w", Pointer.parse("/a~1b/0"), OpKind.REPLACE)
    assert Event.from_json(ev.to_json()) == ev


@pytest.mark.parametrize(
    "doc",
    [
        {"trigger": {}, "action": "w"},
        {"trigger": {"path": "/a", "op": "test"}, "action": "w"},
        {"trigger": {"path": "/a", "op": "move"}, "action": "w"},
        {"trigger": {"path": "/a"}, "action": 3},
        {"trigger": {"path": "/a"}, "action": "w", "condition": {"path": "/a"}},
        {"trigger": {"path": "/a"}, "action": "w", "condition": {"path": ".x", "equals": 1}},
    ],
)
def test_malformed_rules(doc):
    with pytest.raises(RuleError):
        WorkflowRule.from_json(doc)
