import pytest

from patchboard.invariants import InvariantError, InvariantRule, check_invariants, typecheck_rule
from patchboard.schema import Schema
from patchboard.state import Patch, apply_patch


def rule(**doc):
    return InvariantRule.from_json({"name": "r", **doc})


def violations(r, prev, *ops):
    patch = Patch.of(*ops)
    nxt = apply_patch(prev, patch)
    return check_invariants([r], prev, patch, nxt).violations


def test_non_decreasing():
    r = rule(path="/n", predicate="non_decreasing")
    assert violations(r, {"n": 3}, ("replace", "/n", 2))
    assert not violations(r, {"n": 3}, ("replace", "/n", 3))
    assert not violations(r, {"n": 3}, ("replace", "/n", 4.5))


def test_immutable_once_set():
    r = rule(path="/items/*/id", predicate="immutable_once_set")
    prev = {"items": [{"id": None}, {"id": "a"}]}
    assert not violations(r, prev, ("replace", "/items/0/id", "z"))
    assert violations(r, prev, ("replace", "/items/1/id", "b"))
    assert not violations(r, prev, ("replace", "/items/1/id", "a"))


def test_enum_transition():
    r = rule(path="/s", predicate="enum_transition", allowed=[["draft", "review"], ["review", "final"]])
    assert not violations(r, {"s": "draft"}, ("replace", "/s", "review"))
    assert violations(r, {"s": "draft"}, ("replace", "/s", "final"))
    assert not violations(r, {"s": "draft"}, ("replace", "/s", "draft"))


def test_append_only():
    r = rule(path="/log", predicate="append_only")
    assert not violations(r, {"log": [1]}, ("add", "/log/-", 2))
    assert violations(r, {"log": [1, 2]}, ("add", "/log/0", 0))
    assert violations(r, {"log": [1, 2]}, ("replace", "/log", [2]))
    assert violations(r, {"log": [1]}, ("replace", "/log/0", 9))


def test_required_when_sibling():
    r = rule(path="/claims/*", predicate="required_when_sibling", field="evidence", sibling="status", value="supported")
    prev = {"claims": [{"status": "new"}]}
    assert violations(r, prev, ("replace", "/claims/0/status", "supported"))
    assert not violations(r, prev, ("replace", "/claims/0", {"status": "supported", "evidence": "e"}))
    assert not violations(r, prev, ("replace", "/claims/0/status", "rejected"))


def test_untouched_locations_are_not_rechecked():
    r = rule(path="/n", predicate="non_decreasing")
    prev = {"n": 3, "m": 0}
    # a state that already breaks the rule elsewhere does not block unrelated writes
    assert not check_invariants([r], prev, Patch.of(("replace", "/m", 1)), {"n": 1, "m": 1}).violations


def test_violations_are_reported_at_the_location():
    r = rule(path="/xs/*/n", predicate="non_decreasing")
    v = violations(r, {"xs": [{"n": 1}, {"n": 5}]}, ("replace", "/xs/1/n", 4))
    assert [str(x.path) for x in v] == ["/xs/1/n"] and v[0].keyword == "r"


@pytest.mark.parametrize(
    "doc",
    [
        {"name": "x", "path": "/a", "predicate": "monotone"},
        {"name": "x", "path": "/a"},
        {"name": "x", "path": "/a", "predicate": "enum_transition", "allowed": [["a"]]},
        {"name": "x", "path": "/a", "predicate": "required_when_sibling", "field": "f"},
        {"name": "x", "path": "a", "predicate": "append_only"},
    ],
)
def test_malformed_rules(doc):
    with pytest.raises(InvariantError):
        InvariantRule.from_json(doc)


def test_typecheck_against_schema():
    schema = Schema.load({"type": "object", "properties": {"s": {"type": "string", "enum": ["a", "b"]}, "n": {"type": "integer"}}})
    assert typecheck_rule(rule(path="/n", predicate="non_decreasing"), schema) == []
    assert typecheck_rule(rule(path="/s", predicate="non_decreasing"), schema)
    assert typecheck_rule(rule(path="/s", predicate="enum_transition", allowed=[["a", "c"]]), schema)
    assert typecheck_rule(rule(path="/n", predicate="append_only"), schema)
    assert typecheck_rule(rule(path="/zz", predicate="append_only"), schema)
