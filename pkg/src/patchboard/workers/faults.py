"""Fault-injection wrappers.

A :class:`FaultWrapper` delegates to its inner worker except on firing
invocations, where it returns an injected proposal instead. Every injected
payload carries a unique marker string ``FAULT-<type>-<n>`` so that
contamination can be detected by searching committed states for it.
"""

from __future__ import annotations

import enum
import json
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping

from ..blueprint import WorkerSpec
from ..contracts import WILDCARD, PathPattern
from ..scheduler import Event
from ..schema import Schema, subschemas_at
from ..state import OpKind, Pointer, resolve_pointer
from ..views import View


class FaultType(str, enum.Enum):
    INVALID_JSON = "InvalidJSON"
    BAD_PATH_TYPE = "BadPathType"
    UNAUTHORIZED_WRITE = "UnauthorizedWrite"
    FALSE_CLAIM = "FalseClaim"
    CYCLE_HALT = "CycleHalt"


def marker(fault: FaultType | str, n: int) -> str:
    return f"FAULT-{FaultType(fault).value}-{n}"


@dataclass
class FaultWrapper:
    """Wrap *inner*; on the listed invocation indices, return an injected payload.

    ``fire_on`` holds 0-based indices of this wrapper's own invocations;
    ``fire_from`` makes every invocation from that index on fire.
    ``params`` carries scenario-specific knobs: ``false_claim`` (``path`` plus
    a ``value`` template whose ``"${marker}"`` strings are replaced) and
    ``cycle`` (``path`` plus two ``values`` to alternate).
    """

    inner: Callable[[View, Event], Any]
    fault: FaultType
    spec: WorkerSpec
    schema: Schema
    fire_on: frozenset[int] = frozenset()
    fire_from: int | None = None
    params: Mapping[str, Any] = field(default_factory=dict)
    seed: int = 0
    tag: int = 0
    calls: int = 0
    fired: list[int] = field(default_factory=list)
    inline = True

    def __post_init__(self) -> None:
        self.fault = FaultType(self.fault)
        self.fire_on = frozenset(self.fire_on)
        self._rng = random.Random(f"{self.seed}:{self.fault.value}:{self.tag}")

    @property
    def marker(self) -> str:
        return marker(self.fault, self.tag)

    def fires(self, index: int) -> bool:
        return index in self.fire_on or (self.fire_from is not None and index >= self.fire_from)

    def __call__(self, view: View, event: Event) -> Any:
        index = self.calls
        self.calls += 1
        if not self.fires(index):
            return self.inner(view, event)
        self.fired.append(index)
        return inject(self, view)


# --------------------------------------------------------------------------
# payload builders


def inject(w: FaultWrapper, view: View) -> Any:
    return _BUILDERS[w.fault](w, view)


def _invalid_json(w: FaultWrapper, view: View) -> str:
    m = w.marker
    target = _first_append_target(w.spec) or "/notes/-"
    good = json.dumps([{"op": "add", "path": target, "value": m}])
    variants = [
        good[:-3],  # torn mid-document
        good.replace('"', "'"),
        good[:-1] + ",]",
        good.replace(json.dumps(m), f'NaN, "note": "{m}"'),
        f"Sure! Here is the patch you asked for ({m}):\n{good}",
        json.dumps([{"op": "move", "from": target.rsplit("/", 1)[0] + "/0", "path": target, "note": m}]),
        json.dumps({"op": "add", "path": target, "value": m}),
        json.dumps([{"op": "add", "path": target, "value": m, "extra": True}]),
    ]
    return w._rng.choice(variants)


def _first_append_target(spec: WorkerSpec) -> str | None:
    for e in spec.write.entries:
        if OpKind.ADD in e.ops:
            return _concrete(e.pattern, "0")
    return None


def _concrete(pattern: PathPattern, index: str) -> str:
    return Pointer(tuple(index if s == WILDCARD else s for s in pattern.segments)).render()


def _mismatched_value(frags: list[dict], m: str) -> Any:
    types: set[str] = set()
    for f in frags:
        t = f.get("type")
        if t is not None:
            types.update(t if isinstance(t, list) else [t])
    if "string" not in types:
        return m
    if "object" not in types:
        return {"FAULT": m}
    return [m]


def _bad_path_type(w: FaultWrapper, view: View) -> list[dict]:
    m = w.marker
    entries = [e for e in w.spec.write.entries if e.ops & {OpKind.ADD, OpKind.REPLACE}]
    if not entries:
        return [{"op": "replace", "path": f"/{m}/missing", "value": m}]
    e = w._rng.choice(entries)
    kind = OpKind.ADD if OpKind.ADD in e.ops else OpKind.REPLACE
    if e.pattern.segments and e.pattern.segments[-1] == "-":
        frags = subschemas_at(w.schema, PathPattern(e.pattern.segments[:-1] + (WILDCARD,)))
    else:
        frags = subschemas_at(w.schema, e.pattern)
    typed = [f for f in frags if "type" in f]
    if typed and w._rng.random() < 0.5:
        # right place, wrong type
        return [{"op": kind.value, "path": _concrete(e.pattern, "0"), "value": _mismatched_value(typed, m)}]
    # a location that cannot exist: the unique marker is never a key in the state
    base = Pointer(tuple("999999" if s in (WILDCARD, "-") else s for s in e.pattern.segments))
    path = base.child(m).child("x")
    return [{"op": kind.value, "path": path.render(), "value": m}]


def _unauthorized(w: FaultWrapper, view: View) -> list[dict]:
    m = w.marker
    contract = w.spec.effective_write
    candidates: list[tuple[OpKind, Pointer]] = [(OpKind.ADD, Pointer(("runtime", "halt_reason")))]
    props = sorted(w.schema.doc.get("properties", {}))
    for name in props:
        if name in ("runtime", "requests"):
            continue
        candidates.append((OpKind.REPLACE, Pointer((name,))))
        frag = w.schema.doc["properties"][name]
        if frag.get("type") == "array":
            candidates.append((OpKind.ADD, Pointer((name, "-"))))
        for sub in sorted(frag.get("properties", {})):
            candidates.append((OpKind.REPLACE, Pointer((name, sub))))
    candidates.append((OpKind.ADD, Pointer(("requests", "expansions", "0"))))
    pool = [(k, p) for k, p in candidates if not contract.covers(k, p)]
    kind, path = w._rng.choice(pool)
    return [{"op": kind.value, "path": path.render(), "value": m}]


def _fill(template: Any, m: str) -> Any:
    if isinstance(template, str):
        return template.replace("${marker}", m)
    if isinstance(template, list):
        return [_fill(t, m) for t in template]
    if isinstance(template, dict):
        return {k: _fill(v, m) for k, v in template.items()}
    return template


def _false_claim(w: FaultWrapper, view: View) -> list[dict]:
    cfg = w.params.get("false_claim")
    if not cfg:
        raise ValueError("FalseClaim needs a 'false_claim' {path, values} parameter")
    options = cfg["values"] if "values" in cfg else [cfg["value"]]
    value = _fill(w._rng.choice(options), w.marker)
    return [{"op": "add", "path": cfg["path"], "value": value}]


def _cycle(w: FaultWrapper, view: View) -> list[dict]:
    cfg = w.params.get("cycle")
    if not cfg:
        raise ValueError("CycleHalt needs a 'cycle' {path, values} parameter")
    a, b = cfg["values"]
    current = resolve_pointer(view.fields, Pointer.parse(cfg["path"]))
    return [{"op": "replace", "path": cfg["path"], "value": b if current == a else a}]


_BUILDERS: dict[FaultType, Callable[[FaultWrapper, View], Any]] = {
    FaultType.INVALID_JSON: _invalid_json,
    FaultType.BAD_PATH_TYPE: _bad_path_type,
    FaultType.UNAUTHORIZED_WRITE: _unauthorized,
    FaultType.FALSE_CLAIM: _false_claim,
    FaultType.CYCLE_HALT: _cycle,
}


def fault_types(spec: str | Iterable[str]) -> list[FaultType]:
    if isinstance(spec, str):
        spec = [spec]
    return [FaultType(s) for s in spec]
