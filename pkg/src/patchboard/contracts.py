"""Path patterns and role contracts.

A pattern looks like ``/claims/*/status`` or ``/evidence/-``. ``*`` matches
exactly one segment, a trailing ``-`` matches only the array-append token,
and an entry flagged ``subtree`` also covers everything below its match.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator

from .state import (
    NotFound,
    OpKind,
    Patch,
    Pointer,
    PointerSyntaxError,
    StateValue,
    array_index,
    escape_token,
    unescape_token,
)
from .report import ValidationReport, Violation

WILDCARD = "*"
APPEND = "-"


class ContractError(ValueError):
    pass


@dataclass(frozen=True)
class PathPattern:
    segments: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if APPEND in self.segments[:-1]:
            raise ContractError("'-' may only appear as the final pattern segment")

    @classmethod
    def parse(cls, text: str) -> "PathPattern":
        if not isinstance(text, str):
            raise ContractError(f"pattern must be a string, got {type(text).__name__}")
        if text == "":
            return cls(())
        if not text.startswith("/"):
            raise ContractError(f"pattern {text!r} must start with '/'")
        try:
            return cls(tuple(unescape_token(t) for t in text[1:].split("/")))
        except PointerSyntaxError as exc:
            raise ContractError(str(exc)) from None

    def render(self) -> str:
        return "".join("/" + (s if s == WILDCARD else escape_token(s)) for s in self.segments)

    __str__ = render

    def __repr__(self) -> str:
        return f"PathPattern({self.render()!r})"

    @property
    def has_wildcard(self) -> bool:
        return WILDCARD in self.segments


def _segment_matches(pat: str, seg: str) -> bool:
    return pat == WILDCARD or pat == seg


def match_pattern(pattern: PathPattern, path: Pointer, subtree: bool = False) -> bool:
    """True iff *path* matches *pattern* (or lies below a match when *subtree*)."""
    ps, ts = pattern.segments, path.segments
    if len(ts) < len(ps) or (len(ts) > len(ps) and not subtree):
        return False
    return all(_segment_matches(p, t) for p, t in zip(ps, ts))


def could_contain(pattern: PathPattern, path: Pointer) -> bool:
    """True when some match of *pattern* lies at or below *path*."""
    if len(path.segments) > len(pattern.segments):
        return False
    return all(_segment_matches(p, t) for p, t in zip(pattern.segments, path.segments))


def expand_pattern(state: StateValue, pattern: PathPattern) -> list[Pointer]:
    """Concrete pointers of existing values in *state* that match *pattern*."""
    out: list[Pointer] = []

    def walk(node: Any, depth: int, prefix: Pointer) -> None:
        if depth == len(pattern.segments):
            out.append(prefix)
            return
        seg = pattern.segments[depth]
        if seg == APPEND:
            return
        if isinstance(node, dict):
            keys = sorted(node) if seg == WILDCARD else ([seg] if seg in node else [])
            for k in keys:
                walk(node[k], depth + 1, prefix.child(k))
        elif isinstance(node, list):
            if seg == WILDCARD:
                idxs: Iterable[int] = range(len(node))
            else:
                idx = array_index(seg)
                idxs = [idx] if idx is not None and idx < len(node) else []
            for i in idxs:
                walk(node[i], depth + 1, prefix.child(i))

    walk(state, 0, Pointer())
    return out


_OP_NAMES = {k.value: k for k in OpKind}


@dataclass(frozen=True)
class ContractEntry:
    pattern: PathPattern
    ops: frozenset = field(default_factory=frozenset)
    subtree: bool = False

    def covers(self, path: Pointer) -> bool:
        return match_pattern(self.pattern, path, self.subtree)

    def to_json(self) -> dict:
        out: dict = {"path": self.pattern.render(), "subtree": self.subtree}
        if self.ops:
            out["ops"] = sorted(op.value for op in self.ops)
        return out

    @classmethod
    def from_json(cls, doc: Any, *, write: bool) -> "ContractEntry":
        if not isinstance(doc, dict) or "path" not in doc:
            raise ContractError(f"contract entry must be an object with 'path': {doc!r}")
        ops: frozenset = frozenset()
        if write:
            names = doc.get("ops", [])
            if not isinstance(names, list) or not names:
                raise ContractError(f"write entry {doc['path']!r} needs a non-empty 'ops' list")
            try:
                ops = frozenset(_OP_NAMES[n] for n in names)
            except (KeyError, TypeError):
                raise ContractError(f"unknown op in {names!r}") from None
        subtree = doc.get("subtree", False)
        if not isinstance(subtree, bool):
            raise ContractError("'subtree' must be a boolean")
        return cls(PathPattern.parse(doc["path"]), ops, subtree)


@dataclass(frozen=True)
class WriteContract:
    entries: tuple[ContractEntry, ...] = ()

    def covers(self, kind: OpKind, path: Pointer) -> bool:
        return any(kind in e.ops and e.covers(path) for e in self.entries)

    def covers_path(self, path: Pointer) -> bool:
        return any(e.covers(path) for e in self.entries)

    def to_json(self) -> list:
        return [e.to_json() for e in self.entries]

    @classmethod
    def from_json(cls, doc: Any) -> "WriteContract":
        if not isinstance(doc, list):
            raise ContractError("write contract must be a list")
        return cls(tuple(ContractEntry.from_json(e, write=True) for e in doc))


@dataclass(frozen=True)
class ReadContract:
    entries: tuple[ContractEntry, ...] = ()

    def covers(self, path: Pointer) -> bool:
        return any(e.covers(path) for e in self.entries)

    def to_json(self) -> list:
        return [e.to_json() for e in self.entries]

    @classmethod
    def from_json(cls, doc: Any) -> "ReadContract":
        if not isinstance(doc, list):
            raise ContractError("read contract must be a list")
        return cls(tuple(ContractEntry.from_json(e, write=False) for e in doc))


def authorize(
    patch: Patch,
    contract: WriteContract,
    read: ReadContract | None = None,
    *,
    privileged: bool = False,
) -> ValidationReport:
    """Check every operation of *patch* against the worker's contracts.

    Tests are reads, so they are authorized by read or write coverage of the
    path. Remove is refused outright for non-privileged workers.
    """
    violations = []
    for i, op in enumerate(patch.operations):
        if op.kind is OpKind.REMOVE and not privileged:
            violations.append(
                Violation(op.path, "UnauthorizedWrite", f"operation {i}: remove requires a privileged role")
            )
            continue
        if op.kind is OpKind.TEST:
            ok = contract.covers_path(op.path) or (read is not None and read.covers(op.path))
        else:
            ok = contract.covers(op.kind, op.path)
        if not ok:
            violations.append(
                Violation(op.path, "UnauthorizedWrite", f"operation {i}: {op.kind.value} {op.path} not covered")
            )
    return ValidationReport.of(violations)


def filter_readable(state: StateValue, read: ReadContract) -> StateValue:
    """The part of *state* visible through *read*, or :data:`NotFound`.

    Array indices are preserved: an element with no readable content becomes
    an empty shell of its own type so later elements keep their positions.
    """

    def walk(node: Any, path: Pointer) -> Any:
        if read.covers(path) and (not isinstance(node, (dict, list)) or _covers_subtree(read, path)):
            return node
        live = [e for e in read.entries if could_contain(e.pattern, path)]
        if not live:
            return NotFound
        if isinstance(node, dict):
            out = {}
            for k in node:
                sub = walk(node[k], path.child(k))
                if sub is not NotFound:
                    out[k] = sub
            if out or read.covers(path):
                return out
            return NotFound
        if isinstance(node, list):
            items = [walk(item, path.child(i)) for i, item in enumerate(node)]
            if all(x is NotFound for x in items) and not read.covers(path):
                return NotFound
            return [_shell(item) if x is NotFound else x for x, item in zip(items, node)]
        return NotFound

    return walk(state, Pointer())


def _covers_subtree(read: ReadContract, path: Pointer) -> bool:
    return any(e.subtree and e.covers(path) for e in read.entries)


def _shell(value: Any) -> Any:
    if isinstance(value, dict):
        return {}
    if isinstance(value, list):
        return []
    return None


def iter_leaves(value: StateValue, prefix: Pointer = Pointer()) -> Iterator[tuple[Pointer, Any]]:
    if isinstance(value, dict) and value:
        for k in sorted(value):
            yield from iter_leaves(value[k], prefix.child(k))
    elif isinstance(value, list) and value:
        for i, item in enumerate(value):
            yield from iter_leaves(item, prefix.child(i))
    elif not isinstance(value, (dict, list)):
        yield prefix, value
