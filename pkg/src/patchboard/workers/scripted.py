"""Deterministic script-driven workers.

A script is an ordered list of entries::

    {"match": {"/env/location": "sinkbasin", "/repair/hint": {"$absent": true}},
     "respond": [{"op": "add", "path": "/actions/-",
                  "value": {"command": "goto ${view:/task/target_receptacle}"}}]}

The first entry whose ``match`` holds against the view fires. ``match`` keys
are pointers into the view's fields, or ``@event`` / ``@op`` for the
triggering event. Values compare by JSON equality; ``{"$absent": true}`` and
``{"$present": true}`` test existence instead.

Placeholders inside ``respond`` strings:

* ``${view:/ptr}`` the value at ``/ptr`` in the view (a string that is
  nothing but one placeholder is replaced by the raw JSON value)
* ``${event:path}``, ``${event:seq}``, ``${event:index}`` (last path segment)

An entry whose placeholders cannot be resolved is skipped.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any, Sequence

from ..scheduler import Event
from ..state import NotFound, Pointer, PointerSyntaxError, canonical_text, json_equal, resolve_pointer
from ..views import View

_PLACEHOLDER = re.compile(r"\$\{(view|event):([^}]*)\}")


class _Unresolved(Exception):
    pass


def _lookup(kind: str, arg: str, view: View, event: Event) -> Any:
    if kind == "view":
        try:
            value = resolve_pointer(view.fields, Pointer.parse(arg))
        except PointerSyntaxError:
            raise _Unresolved(arg) from None
        if value is NotFound:
            raise _Unresolved(arg)
        return value
    if arg == "path":
        return event.path.render()
    if arg == "seq":
        return event.seq
    if arg == "index":
        return event.path.segments[-1] if event.path.segments else ""
    if arg == "source":
        return event.source_worker
    raise _Unresolved(arg)


def substitute(template: Any, view: View, event: Event) -> Any:
    """Fill placeholders in *template*; raises ``_Unresolved`` on a miss."""
    if isinstance(template, str):
        whole = _PLACEHOLDER.fullmatch(template)
        if whole:
            return _lookup(whole.group(1), whole.group(2), view, event)

        def text(m: re.Match) -> str:
            v = _lookup(m.group(1), m.group(2), view, event)
            return v if isinstance(v, str) else canonical_text(v)

        return _PLACEHOLDER.sub(text, template)
    if isinstance(template, list):
        return [substitute(t, view, event) for t in template]
    if isinstance(template, dict):
        return {k: substitute(v, view, event) for k, v in template.items()}
    return template


def _matches(cond: dict, view: View, event: Event) -> bool:
    for key, expected in cond.items():
        if key == "@event":
            actual: Any = event.path.render()
        elif key == "@op":
            actual = event.op_kind.value
        else:
            try:
                actual = resolve_pointer(view.fields, Pointer.parse(key))
            except PointerSyntaxError:
                return False
        if isinstance(expected, dict) and set(expected) == {"$absent"}:
            if (actual is NotFound) != bool(expected["$absent"]):
                return False
        elif isinstance(expected, dict) and set(expected) == {"$present"}:
            if (actual is not NotFound) != bool(expected["$present"]):
                return False
        elif actual is NotFound or not json_equal(actual, expected):
            return False
    return True


@dataclass(frozen=True)
class ScriptEntry:
    match: dict
    respond: Any

    @classmethod
    def from_json(cls, doc: Any) -> "ScriptEntry":
        if not isinstance(doc, dict) or "respond" not in doc:
            raise ValueError("script entry needs 'respond'")
        match = doc.get("match", {})
        if not isinstance(match, dict):
            raise ValueError("script 'match' must be an object")
        return cls(match, doc["respond"])


@dataclass
class ScriptedWorker:
    """First matching entry wins; otherwise the fallthrough (default: empty patch)."""

    entries: Sequence[ScriptEntry]
    fallthrough: Any = field(default_factory=list)
    inline = True

    @classmethod
    def from_json(cls, doc: Any) -> "ScriptedWorker":
        if isinstance(doc, list):
            return cls([ScriptEntry.from_json(e) for e in doc])
        if isinstance(doc, dict) and isinstance(doc.get("script"), list):
            return cls([ScriptEntry.from_json(e) for e in doc["script"]], doc.get("fallthrough", []))
        raise ValueError("script must be a list of entries or {script, fallthrough}")

    def __call__(self, view: View, event: Event) -> Any:
        for entry in self.entries:
            if _matches(entry.match, view, event):
                try:
                    return substitute(entry.respond, view, event)
                except _Unresolved:
                    continue
        return self.fallthrough
