"""Built-in worker implementations and the name registry used by scenario files."""

from __future__ import annotations

import json
import random
import subprocess
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

from ..blueprint import WorkerSpec
from ..contracts import WILDCARD, PathPattern
from ..scheduler import Event
from ..schema import Schema, subschemas_at
from ..state import NotFound, OpKind, Pointer, iter_paths, resolve_pointer
from ..views import View
from .minienv import verifier_patch


@dataclass
class MiniEnvVerifier:
    """Executes the action named by the triggering event against ``/env``."""

    inline = True

    def __call__(self, view: View, event: Event) -> Any:
        return verifier_patch(view.fields, event.path.render())


@dataclass
class NoopWorker:
    inline = True

    def __call__(self, view: View, event: Event) -> Any:
        return []


@dataclass
class SubprocessWorker:
    """Runs ``argv`` once per invocation: view and event JSON on stdin, proposal on stdout."""

    argv: Sequence[str]
    timeout: float | None = None
    inline = False

    def __call__(self, view: View, event: Event) -> Any:
        payload = json.dumps({"view": view.to_json(), "event": event.to_json()})
        done = subprocess.run(
            list(self.argv), input=payload, capture_output=True, text=True, timeout=self.timeout, check=True
        )
        return done.stdout


# --------------------------------------------------------------------------
# random proposals for schema-preservation fuzzing

_STRINGS = ["", "a", "alpha", "x" * 30, "b2", "Z", "hello world", "7", "ok"]


def _random_scalar(rng: random.Random) -> Any:
    pick = rng.randrange(7)
    if pick == 0:
        return None
    if pick == 1:
        return rng.random() < 0.5
    if pick == 2:
        return rng.randrange(-5, 120)
    if pick == 3:
        return round(rng.uniform(-10, 150), 2)
    return rng.choice(_STRINGS)


def random_value(rng: random.Random, frag: Mapping[str, Any] | None, depth: int = 0) -> Any:
    """A value that usually, but not always, satisfies *frag*."""
    if frag is None or rng.random() < 0.15 or depth > 3:
        if rng.random() < 0.3 and depth < 2:
            return {"k": _random_scalar(rng)} if rng.random() < 0.5 else [_random_scalar(rng)]
        return _random_scalar(rng)
    if "const" in frag:
        return frag["const"]
    if "enum" in frag:
        return rng.choice(frag["enum"])
    t = frag.get("type")
    if isinstance(t, list):
        t = rng.choice(t)
    if t == "object":
        out = {}
        props = frag.get("properties", {})
        for k in sorted(props):
            if k in frag.get("required", ()) or rng.random() < 0.5:
                out[k] = random_value(rng, props[k], depth + 1)
        return out
    if t == "array":
        n = rng.randrange(0, min(frag.get("maxItems", 3), 3) + 1)
        return [random_value(rng, frag.get("items"), depth + 1) for _ in range(n)]
    if t == "string":
        if "pattern" in frag:
            return rng.choice(["a1", "b", "zz9", "id" + str(rng.randrange(100)), "BAD!"])
        hi = frag.get("maxLength", 12)
        return "".join(rng.choice("abcxyz") for _ in range(rng.randrange(frag.get("minLength", 0), hi + 1)))
    if t == "integer":
        lo, hi = frag.get("minimum", -3), frag.get("maximum", 100)
        return rng.randrange(int(lo) - 1, int(hi) + 2)
    if t == "number":
        return round(rng.uniform(frag.get("minimum", -3) - 1, frag.get("maximum", 100) + 1), 2)
    if t == "boolean":
        return rng.random() < 0.5
    if t == "null":
        return None
    return _random_scalar(rng)


@dataclass
class FuzzWorker:
    """Seeded random proposer: mostly in-contract edits, plus strays and garbage."""

    spec: WorkerSpec
    schema: Schema
    seed: int = 0
    inline = True
    _rng: random.Random = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._rng = random.Random(f"fuzz:{self.seed}:{self.spec.name}")

    def _concrete(self, view: View, segs: tuple[str, ...], op: OpKind) -> Pointer | None:
        rng = self._rng
        out: list[str] = []
        node: Any = view.fields
        for i, s in enumerate(segs):
            if s == WILDCARD:
                if isinstance(node, list) and node:
                    s = str(rng.randrange(len(node) + 1))
                elif isinstance(node, dict) and node:
                    s = rng.choice(sorted(node))
                else:
                    s = "0"
            elif s == "-" and op is not OpKind.ADD:
                s = "0"
            out.append(s)
            node = node.get(s) if isinstance(node, dict) else (
                node[int(s)] if isinstance(node, list) and s.isdigit() and int(s) < len(node) else None
            )
        return Pointer(tuple(out))

    def _op(self, view: View) -> dict:
        rng = self._rng
        entries = self.spec.write.entries
        roll = rng.random()
        if entries and roll < 0.75:
            e = rng.choice(entries)
            kind = rng.choice(sorted(e.ops, key=lambda k: k.value))
            path = self._concrete(view, e.pattern.segments, kind)
            if e.subtree and rng.random() < 0.3:
                current = resolve_pointer(view.fields, path)
                if isinstance(current, dict) and current:
                    path = path.child(rng.choice(sorted(current)))
        elif roll < 0.85:
            leaves = [p for p, _ in iter_paths(view.fields) if not p.is_root]
            path = rng.choice(leaves) if leaves else Pointer(("stray",))
            kind = rng.choice([OpKind.ADD, OpKind.REPLACE, OpKind.TEST, OpKind.REMOVE])
        else:
            path = Pointer((rng.choice(["nope", "runtime", "requests", "x"]), rng.choice(["a", "0", "-", "halt_reason"])))
            kind = rng.choice([OpKind.ADD, OpKind.REPLACE])
        if kind is OpKind.REMOVE:
            return {"op": "remove", "path": path.render()}
        if kind is OpKind.TEST:
            current = resolve_pointer(view.fields, path)
            value = current if current is not NotFound and rng.random() < 0.7 else _random_scalar(rng)
            return {"op": "test", "path": path.render(), "value": value}
        lookup = tuple(WILDCARD if s.isdigit() or s == "-" else s for s in path.segments)
        frags = subschemas_at(self.schema, PathPattern(lookup))
        return {"op": kind.value, "path": path.render(), "value": random_value(rng, frags[0] if frags else None)}

    def __call__(self, view: View, event: Event) -> Any:
        rng = self._rng
        if rng.random() < 0.03:
            return rng.choice(["[{", "not json", '{"op":"add"}', "[1,2,3]", '[{"op":"copy","from":"/a","path":"/b"}]'])
        if rng.random() < 0.05:
            return []
        return [self._op(view) for _ in range(rng.choice([1, 1, 1, 2, 3]))]


# --------------------------------------------------------------------------
# registry

Factory = Callable[[WorkerSpec, Schema, Mapping[str, Any]], Callable[[View, Event], Any]]

BUILTINS: dict[str, Factory] = {
    "minienv.verifier": lambda spec, schema, opts: MiniEnvVerifier(),
    "noop": lambda spec, schema, opts: NoopWorker(),
    "fuzz": lambda spec, schema, opts: FuzzWorker(spec, schema, int(opts.get("seed", 0))),
}


def builtin(name: str, spec: WorkerSpec, schema: Schema, options: Mapping[str, Any] | None = None):
    try:
        factory = BUILTINS[name]
    except KeyError:
        raise ValueError(f"unknown builtin worker {name!r}; known: {sorted(BUILTINS)}") from None
    return factory(spec, schema, options or {})
