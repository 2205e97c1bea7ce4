import re

import pytest
from hypothesis import given
from hypothesis import strategies as st

from patchboard.contracts import (
    ContractError,
    PathPattern,
    ReadContract,
    WriteContract,
    authorize,
    expand_pattern,
    filter_readable,
    match_pattern,
)
from patchboard.state import NotFound, OpKind, Patch, Pointer, resolve_pointer

SEGMENTS = st.sampled_from(["a", "b", "0", "1", "-", "", "x~y", "p/q"])
PATTERN_SEGMENTS = st.sampled_from(["a", "b", "0", "*", "-", "x~y"])


def _regex_for(pattern: PathPattern, subtree: bool) -> re.Pattern:
    # independent oracle: match on the rendered pointer text
    parts = []
    for seg in pattern.segments:
        if seg == "*":
            parts.append("/[^/]*")
        else:
            parts.append("/" + re.escape(seg.replace("~", "~0").replace("/", "~1")))
    tail = "(/.*)?" if subtree else ""
    return re.compile("".join(parts) + tail + r"\Z", re.S)


def _append_last(segs):
    return "-" not in segs[:-1]


@given(
    st.lists(PATTERN_SEGMENTS, max_size=4).filter(_append_last),
    st.lists(SEGMENTS, max_size=5).filter(_append_last),
    st.booleans(),
)
def test_matcher_agrees_with_regex_oracle(pat_segs, path_segs, subtree):
    pattern = PathPattern(tuple(pat_segs))
    path = Pointer(tuple(path_segs))
    expected = bool(_regex_for(pattern, subtree).match(path.render()))
    assert match_pattern(pattern, path, subtree) == expected


def test_pattern_parse_and_render():
    p = PathPattern.parse("/claims/*/status")
    assert p.segments == ("claims", "*", "status") and p.has_wildcard
    assert PathPattern.parse(p.render()) == p
    with pytest.raises(ContractError):
        PathPattern.parse("claims")


def test_append_pattern_matches_only_append_token():
    p = PathPattern.parse("/xs/-")
    assert match_pattern(p, Pointer.parse("/xs/-"))
    assert not match_pattern(p, Pointer.parse("/xs/0"))


WRITE = WriteContract.from_json(
    [
        {"path": "/claims/-", "ops": ["add"]},
        {"path": "/claims/*/status", "ops": ["replace"]},
        {"path": "/draft", "ops": ["add", "replace"], "subtree": True},
        {"path": "/scratch", "ops": ["remove"]},
    ]
)
READ = ReadContract.from_json([{"path": "/question"}, {"path": "/claims", "subtree": True}])


@pytest.mark.parametrize(
    "ops, ok",
    [
        ([("add", "/claims/-", {})], True),
        ([("replace", "/claims/3/status", "x")], True),
        ([("add", "/draft/sections/0", "t")], True),
        ([("replace", "/claims/3", {})], False),
        ([("add", "/claims/0", {})], False),
        ([("replace", "/question", "q")], False),
        ([("test", "/question", "q")], True),
        ([("test", "/elsewhere", 1)], False),
        ([("add", "/claims/-", {}), ("replace", "/verdict", 1)], False),
    ],
)
def test_authorize(ops, ok):
    assert authorize(Patch.of(*ops), WRITE, READ).ok is ok


def test_remove_needs_privilege():
    patch = Patch.of(("remove", "/scratch"))
    assert not authorize(patch, WRITE, READ).ok
    assert authorize(patch, WRITE, READ, privileged=True).ok


def test_authorize_reports_every_uncovered_operation():
    report = authorize(Patch.of(("replace", "/a", 1), ("add", "/claims/-", 2), ("replace", "/b", 3)), WRITE)
    assert [str(v.path) for v in report.violations] == ["/a", "/b"]
    assert {v.keyword for v in report.violations} == {"UnauthorizedWrite"}


def test_covers_by_kind():
    assert WRITE.covers(OpKind.ADD, Pointer.parse("/claims/-"))
    assert not WRITE.covers(OpKind.REPLACE, Pointer.parse("/claims/-"))


def test_write_entries_need_ops():
    with pytest.raises(ContractError):
        WriteContract.from_json([{"path": "/a"}])
    with pytest.raises(ContractError):
        WriteContract.from_json([{"path": "/a", "ops": ["move"]}])


STATE = {
    "question": "q",
    "secret": "s",
    "claims": [{"text": "a", "status": "new"}],
    "items": [{"id": "i0", "body": "x"}, {"id": "i1", "body": "y"}],
}


def test_expand_pattern():
    assert expand_pattern(STATE, PathPattern.parse("/items/*/id")) == [Pointer.parse("/items/0/id"), Pointer.parse("/items/1/id")]
    assert expand_pattern(STATE, PathPattern.parse("/items/-")) == []
    assert expand_pattern(STATE, PathPattern.parse("/nope/*")) == []


def test_filter_readable_hides_everything_else():
    view = filter_readable(STATE, READ)
    assert view == {"question": "q", "claims": [{"text": "a", "status": "new"}]}


def test_filter_readable_keeps_array_positions():
    read = ReadContract.from_json([{"path": "/items/*/id"}])
    assert filter_readable(STATE, read) == {"items": [{"id": "i0"}, {"id": "i1"}]}
    assert filter_readable(STATE, ReadContract.from_json([{"path": "/absent"}])) is NotFound


@given(st.sampled_from(["/question", "/claims/0/text", "/items/1/id", "/secret"]))
def test_filtered_values_are_the_originals(path):
    read = ReadContract.from_json([{"path": "/question"}, {"path": "/claims", "subtree": True}, {"path": "/items/*/id"}])
    view = filter_readable(STATE, read)
    got = resolve_pointer(view, path)
    if read.covers(Pointer.parse(path)) or path.startswith("/claims"):
        assert got == resolve_pointer(STATE, path)
    else:
        assert got is NotFound
