"""Events from committed patches, trigger-condition-action rules, and the queue."""

from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass
from typing import Any, Iterable, Iterator, Sequence

from .contracts import APPEND, WILDCARD, ContractError, PathPattern, expand_pattern, match_pattern
from .state import (
    NotFound,
    OpKind,
    Patch,
    Pointer,
    PointerSyntaxError,
    StateValue,
    apply_operation,
    array_index,
    json_equal,
    resolve_pointer,
)

KERNEL = "kernel"


class RuleError(ValueError):
    pass


class EmptyInitialQueue(UserWarning):
    """No rule fired on the initial state, so the run ends immediately."""


@dataclass(frozen=True)
class Event:
    seq: int
    source_worker: str
    path: Pointer
    op_kind: OpKind

    def to_json(self) -> dict:
        return {"seq": self.seq, "source": self.source_worker, "path": self.path.render(), "op": self.op_kind.value}

    @classmethod
    def from_json(cls, doc: dict) -> "Event":
        return cls(doc["seq"], doc["source"], Pointer.parse(doc["path"]), OpKind(doc["op"]))


INIT_EVENT = Event(0, KERNEL, Pointer(), OpKind.ADD)


@dataclass(frozen=True)
class Invocation:
    worker: str
    event: Event


def extract_events(patch: Patch, prev: StateValue, source: str, first_seq: int) -> list[Event]:
    """One event per non-test operation of a committed *patch*, in order.

    ``-`` is resolved to the array length just before the operation runs.
    """
    events = []
    state = prev
    seq = first_seq
    for op in patch.operations:
        if op.kind is not OpKind.TEST:
            path = op.path
            if path.appends:
                target = resolve_pointer(state, path.parent)
                path = path.parent.child(len(target))
            events.append(Event(seq, source, path, op.kind))
            seq += 1
        state = apply_operation(state, op)
    return events


@dataclass(frozen=True)
class Condition:
    """``path`` is absolute (``/a/*/b``) or relative to the event path (``.``, ``./x``, ``../x``)."""

    path: str
    equals: Any

    @property
    def relative(self) -> bool:
        return self.path.startswith(".")

    def holds(self, state: StateValue, event_path: Pointer) -> bool:
        if self.relative:
            target = _relative(self.path, event_path)
            if target is None:
                return False
            value = resolve_pointer(state, target)
            return value is not NotFound and json_equal(value, self.equals)
        pattern = PathPattern.parse(self.path)
        bound = list(pattern.segments)
        ev = event_path.segments
        for i, seg in enumerate(bound):
            if seg != WILDCARD:
                continue
            if i < len(ev) and all(b == WILDCARD or b == e for b, e in zip(bound[:i], ev[:i])):
                bound[i] = ev[i]
        for loc in expand_pattern(state, PathPattern(tuple(bound))):
            if json_equal(resolve_pointer(state, loc), self.equals):
                return True
        return False


def _relative(text: str, base: Pointer) -> Pointer | None:
    parts = text.split("/")
    segs = list(base.segments)
    i = 0
    while i < len(parts) and parts[i] in (".", ".."):
        if parts[i] == "..":
            if not segs:
                return None
            segs.pop()
        i += 1
    try:
        rest = Pointer.parse("/" + "/".join(parts[i:])) if i < len(parts) else Pointer()
    except PointerSyntaxError:
        return None
    return Pointer(tuple(segs) + rest.segments)


def _check_condition_path(text: str) -> None:
    if text.startswith("."):
        head = text.split("/")[0]
        if head not in (".", ".."):
            raise RuleError(f"bad relative condition path {text!r}")
        return
    try:
        PathPattern.parse(text)
    except ContractError as exc:
        raise RuleError(str(exc)) from None


@dataclass(frozen=True)
class WorkflowRule:
    trigger: PathPattern
    action: str
    op: OpKind | None = None
    condition: Condition | None = None
    on_init: bool = False

    def triggered_by(self, event: Event) -> bool:
        if self.op is not None and event.op_kind is not self.op:
            return False
        segs = self.trigger.segments
        if segs and segs[-1] == APPEND:
            # "/claims/-" fires on any add into the /claims array
            if event.op_kind is not OpKind.ADD or len(event.path.segments) != len(segs):
                return False
            if array_index(event.path.segments[-1]) is None:
                return False
            return match_pattern(PathPattern(segs[:-1]), event.path.parent)
        return match_pattern(self.trigger, event.path)

    def to_json(self) -> dict:
        trig: dict = {"path": self.trigger.render()}
        if self.op is not None:
            trig["op"] = self.op.value
        out: dict = {"trigger": trig, "action": self.action, "on_init": self.on_init}
        if self.condition is not None:
            out["condition"] = {"path": self.condition.path, "equals": self.condition.equals}
        return out

    @classmethod
    def from_json(cls, doc: Any) -> "WorkflowRule":
        if not isinstance(doc, dict):
            raise RuleError("rule must be an object")
        trig = doc.get("trigger")
        if not isinstance(trig, dict) or "path" not in trig:
            raise RuleError("rule needs a trigger with a 'path'")
        try:
            pattern = PathPattern.parse(trig["path"])
        except ContractError as exc:
            raise RuleError(str(exc)) from None
        op = None
        if trig.get("op") is not None:
            try:
                op = OpKind(trig["op"])
            except ValueError:
                raise RuleError(f"bad trigger op {trig['op']!r}") from None
            if op is OpKind.TEST:
                raise RuleError("test operations emit no events")
        cond = None
        if doc.get("condition") is not None:
            c = doc["condition"]
            if not isinstance(c, dict) or not isinstance(c.get("path"), str) or "equals" not in c:
                raise RuleError("condition needs a string 'path' and an 'equals' value")
            _check_condition_path(c["path"])
            cond = Condition(c["path"], c["equals"])
        action = doc.get("action")
        if not isinstance(action, str):
            raise RuleError("rule action must name a worker")
        on_init = doc.get("on_init", False)
        if not isinstance(on_init, bool):
            raise RuleError("'on_init' must be a boolean")
        return cls(pattern, action, op, cond, on_init)


def schedule(events: Sequence[Event], rules: Sequence[WorkflowRule], state: StateValue) -> list[Invocation]:
    """Invocations woken by *events*: event order first, then rule declaration order."""
    out = []
    for ev in events:
        for rule in rules:
            if rule.triggered_by(ev) and (rule.condition is None or rule.condition.holds(state, ev.path)):
                out.append(Invocation(rule.action, ev))
    return out


class InvocationQueue:
    """FIFO of pending worker invocations."""

    def __init__(self, items: Iterable[Invocation] = ()):
        self._items: deque[Invocation] = deque(items)

    def push(self, inv: Invocation) -> None:
        self._items.append(inv)

    def extend(self, invs: Iterable[Invocation]) -> None:
        self._items.extend(invs)

    def push_front(self, inv: Invocation) -> None:
        self._items.appendleft(inv)

    def pop(self) -> Invocation:
        return self._items.popleft()

    def copy(self) -> "InvocationQueue":
        return InvocationQueue(self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self) -> Iterator[Invocation]:
        return iter(self._items)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, InvocationQueue) and list(self._items) == list(other._items)

    def __repr__(self) -> str:
        return f"InvocationQueue({[i.worker for i in self._items]})"


def initial_queue(rules: Sequence[WorkflowRule], state: StateValue) -> InvocationQueue:
    """One invocation per ``on_init`` rule whose condition holds on *state*."""
    q = InvocationQueue(
        Invocation(r.action, INIT_EVENT)
        for r in rules
        if r.on_init and (r.condition is None or r.condition.holds(state, INIT_EVENT.path))
    )
    if not q:
        warnings.warn(EmptyInitialQueue("no on_init rule fired; the run will end immediately"), stacklevel=2)
    return q
