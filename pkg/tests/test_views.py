import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from patchboard.blueprint import WorkerSpec
from patchboard.contracts import PathPattern, filter_readable
from patchboard.kernel import Rejected, Stage, Transaction
from patchboard.scheduler import INIT_EVENT, Event
from patchboard.schema import Schema
from patchboard.state import NotFound, OpKind, Pointer, canonical_text, resolve_pointer
from patchboard.views import (
    BudgetInfeasible,
    ExpansionLedger,
    Provenance,
    UnknownHandle,
    expand,
    handle_id,
    slice_view,
    summarize,
    view_hash,
)

SCHEMA = Schema.load(
    {
        "type": "object",
        "required": ["task", "evidence"],
        "properties": {
            "task": {"type": "object", "properties": {"goal": {"type": "string"}}},
            "evidence": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["id", "kind"],
                    "properties": {"id": {"type": "string"}, "kind": {"type": "string"}, "text": {"type": "string"}},
                },
            },
            "notes": {"type": "object"},
            "secret": {"type": "string"},
        },
    }
)


def spec(budget=300, read=None):
    return WorkerSpec.from_json(
        {
            "name": "w",
            "read": read or [{"path": "/task", "subtree": True}, {"path": "/evidence", "subtree": True}, {"path": "/notes", "subtree": True}],
            "write": [{"path": "/notes/*", "ops": ["add"]}],
            "view_budget": budget,
        }
    )


def make_state(rng: random.Random, n: int) -> dict:
    return {
        "task": {"goal": "find the thing"},
        "evidence": [
            {"id": f"e{i}", "kind": rng.choice(["doc", "web"]), "text": "x" * rng.randrange(0, 80)} for i in range(n)
        ],
        "notes": {f"k{i}": "y" * rng.randrange(0, 30) for i in range(rng.randrange(0, 5))},
        "secret": "hidden",
    }


def leaves(value, prefix=Pointer()):
    if isinstance(value, dict) and value:
        for k, v in value.items():
            yield from leaves(v, prefix.child(k))
    elif isinstance(value, list) and value:
        for i, v in enumerate(value):
            yield from leaves(v, prefix.child(i))
    else:
        yield prefix, value


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 25), st.integers(60, 2500))
def test_view_budget_soundness_and_coverage(seed, n, budget):
    rng = random.Random(seed)
    state = make_state(rng, n)
    active = [PathPattern.parse("/task/goal")]
    try:
        view = slice_view(state, spec(budget), schema=SCHEMA, active_paths=active)
    except BudgetInfeasible:
        assert len(canonical_text({"task": {"goal": state["task"]["goal"]}})) > budget
        return
    # the budget bounds the fields exactly as serialized
    assert view.budget_used == len(canonical_text(view.fields)) <= budget
    # priority-1 content is always present
    assert resolve_pointer(view.fields, "/task/goal") == "find the thing"
    # nothing outside the read contract leaks
    assert "secret" not in view.fields
    # every leaf shown is the committed value at the same pointer
    for path, value in leaves(view.fields):
        if value in ({}, []):
            continue
        assert resolve_pointer(state, path) == value
    # every readable leaf is either shown or sits under a handle
    handled = [h.path for h in view.handles]
    for path, value in leaves({k: state[k] for k in ("task", "evidence", "notes")}):
        shown = resolve_pointer(view.fields, path) is not NotFound
        assert shown or any(path.startswith(h) for h in handled), path


def test_handles_are_stable_and_summaries_short():
    state = make_state(random.Random(1), 30)
    v1 = slice_view(state, spec(200), schema=SCHEMA)
    v2 = slice_view(state, spec(200), schema=SCHEMA)
    assert v1 == v2 and view_hash(v1) == view_hash(v2)
    assert v1.handles
    visible = filter_readable(state, spec().read)
    for h in v1.handles:
        assert not h.path.is_root
        assert len(h.summary) <= 120
        assert h.id == handle_id(h.path, resolve_pointer(visible, h.path))


def test_partial_array_keeps_indices_addressable():
    state = make_state(random.Random(3), 12)
    view = slice_view(state, spec(260), schema=SCHEMA, event=Event(1, "x", Pointer.parse("/evidence/9"), OpKind.ADD))
    ev = view.fields["evidence"]
    assert isinstance(ev, dict), "a partial array is rendered as an index-keyed object"
    assert resolve_pointer(view.fields, "/evidence/9") == state["evidence"][9]


def test_budget_infeasible_when_active_content_is_too_big():
    state = make_state(random.Random(0), 0)
    state["task"]["goal"] = "g" * 500
    with pytest.raises(BudgetInfeasible):
        slice_view(state, spec(100), schema=SCHEMA, active_paths=[PathPattern.parse("/task")])


def test_recent_content_is_preferred():
    state = {"notes": {f"k{i}": "z" * 20 for i in range(10)}}
    prov = Provenance()
    prov.record(Pointer.parse("/notes/k7"), 5)
    view = slice_view(state, spec(60, read=[{"path": "/notes", "subtree": True}]), provenance=prov)
    assert "k7" in view.fields["notes"]
    assert [h.path.render() for h in view.handles] == ["/notes"]

    prov.record(Pointer.parse("/notes/k2"), 9)
    view = slice_view(state, spec(45, read=[{"path": "/notes", "subtree": True}]), provenance=prov)
    assert list(view.fields["notes"]) == ["k2"]
    assert "txn #5" in view.handles[0].summary


def test_expansion_brings_element_back():
    state = make_state(random.Random(2), 20)
    w = spec(250)
    view = slice_view(state, w, schema=SCHEMA)
    ledger = ExpansionLedger()
    ledger.issue("w", view.handles)
    target = next(h for h in view.handles if len(h.path.segments) == 2 and h.path.segments[0] == "evidence")
    assert expand(ledger, "w", target.id) == target.path
    again = slice_view(state, w, schema=SCHEMA, expanded=ledger.take("w"))
    got = resolve_pointer(again.fields, target.path)
    assert got is not NotFound and got["id"] == resolve_pointer(state, target.path)["id"]
    with pytest.raises(UnknownHandle):
        expand(ledger, "other", target.id)


def test_oversized_expansion_is_truncated_to_identity():
    state = {"task": {"goal": "g"}, "evidence": [{"id": "big", "kind": "doc", "text": "t" * 400}], "notes": {}}
    path = Pointer.parse("/evidence/0")
    view = slice_view(state, spec(120), schema=SCHEMA, expanded=[path])
    assert resolve_pointer(view.fields, "/evidence/0") == {"id": "big", "kind": "doc"}
    assert any(h.path == Pointer.parse("/evidence/0/text") for h in view.handles)


def test_recent_rejections_are_filtered():
    ev = INIT_EVENT
    log = [
        Transaction(1, "w", ev, "h", [], Rejected(Stage.AUTH, "mine")),
        Transaction(2, "other", ev, "h", [{"op": "add", "path": "/notes/x", "value": 1}], Rejected(Stage.SCHEMA, "near")),
        Transaction(3, "other", ev, "h", [{"op": "add", "path": "/secret", "value": 1}], Rejected(Stage.SCHEMA, "far")),
    ]
    view = slice_view({"notes": {}}, spec(), log)
    assert [r.reason for r in view.recent_rejections] == ["mine", "near"]


def test_schema_fragment_is_restricted_to_read_contract():
    view = slice_view({"task": {"goal": "g"}}, spec(read=[{"path": "/task", "subtree": True}]), schema=SCHEMA)
    assert set(view.schema_fragment["properties"]) == {"task"}


def test_summary_format():
    s = summarize(Pointer.parse("/evidence/3"), {"id": "e3", "text": "..."}, 42)
    assert s == "object id=e3 from txn #42"
    assert len(summarize(Pointer.parse("/x"), {"id": "q" * 500}, 1)) == 120
