"""Random scenario generator for schema-preservation and attribution fuzzing.

Each scenario has a randomized task schema drawn from a small family
(counters, enums, strings, arrays of records, nested objects), one to four
workers bound to the seeded ``fuzz`` builtin with random read/write
contracts, and trigger rules that keep the queue busy.
"""

from __future__ import annotations

import random
from typing import Any

FUZZ_CIRCUIT = {"invalid_threshold": 1_000_000, "noop_threshold": 1_000_000, "cycle_window": 1}


def _schema(rng: random.Random) -> tuple[dict, dict, list[tuple[str, list[str], bool]], list[dict]]:
    """(schema, initial_state, writable (pattern, ops, subtree) candidates, invariants)."""
    props: dict[str, Any] = {}
    init: dict[str, Any] = {}
    writable: list[tuple[str, list[str], bool]] = []
    invariants: list[dict] = []

    if rng.random() < 0.8:
        props["counter"] = {"type": "integer", "minimum": 0, "maximum": rng.choice([50, 100, 1000])}
        init["counter"] = 0
        writable.append(("/counter", ["replace"], False))
        if rng.random() < 0.6:
            invariants.append({"name": "counter-up", "path": "/counter", "predicate": "non_decreasing"})
    if rng.random() < 0.8:
        modes = ["draft", "review", "final"][: rng.choice([2, 3])]
        props["mode"] = {"type": "string", "enum": modes}
        init["mode"] = modes[0]
        writable.append(("/mode", ["replace"], False))
        if rng.random() < 0.6:
            pairs = [[a, b] for a in modes for b in modes if a != b and rng.random() < 0.6]
            if pairs:
                invariants.append({"name": "mode-flow", "path": "/mode", "predicate": "enum_transition", "allowed": pairs})
    if rng.random() < 0.7:
        props["title"] = {"type": "string", "maxLength": rng.choice([5, 10, 20])}
        init["title"] = ""
        writable.append(("/title", ["replace"], False))
        if rng.random() < 0.3:
            props["title"]["pattern"] = "^[a-z ]*$"
    item = {
        "type": "object",
        "required": ["id", "score"],
        "additionalProperties": False,
        "properties": {
            "id": {"type": "string", "pattern": "^[a-z][a-z0-9]{0,7}$"},
            "score": {"type": "number", "minimum": 0, "maximum": 100},
            "tags": {"type": "array", "items": {"type": "string", "maxLength": 8}, "maxItems": 3},
            "note": {"type": "string"},
        },
    }
    props["items"] = {"type": "array", "items": item, "maxItems": rng.choice([5, 20, 60])}
    init["items"] = [{"id": f"i{k}", "score": rng.randrange(0, 100)} for k in range(rng.randrange(0, 4))]
    writable += [("/items/-", ["add"], False), ("/items/*/score", ["replace"], False), ("/items/*/tags", ["add", "replace"], False)]
    writable.append(("/items/*/note", ["add", "replace"], False))
    if rng.random() < 0.5:
        invariants.append({"name": "items-append", "path": "/items", "predicate": "append_only"})
    if rng.random() < 0.7:
        props["meta"] = {
            "type": "object",
            "required": ["owner"],
            "additionalProperties": False,
            "properties": {"owner": {"type": "string", "minLength": 1}, "flag": {"type": "boolean"}, "level": {"type": "integer"}},
        }
        init["meta"] = {"owner": "root"}
        writable.append(("/meta", ["add", "replace"], True))
        if rng.random() < 0.4:
            invariants.append({"name": "owner-fixed", "path": "/meta/owner", "predicate": "immutable_once_set"})
        if rng.random() < 0.4:
            invariants.append({"name": "flag-needs-level", "path": "/meta", "predicate": "required_when_sibling",
                               "field": "level", "sibling": "flag", "value": True})
    if rng.random() < 0.6:
        props["log"] = {"type": "array", "items": {"type": "string"}}
        init["log"] = []
        writable.append(("/log/-", ["add"], False))
        invariants.append({"name": "log-append", "path": "/log", "predicate": "append_only"})
    schema = {"type": "object", "required": sorted(init), "additionalProperties": False, "properties": props}
    return schema, init, writable, invariants


def random_scenario(seed: int) -> dict:
    """A scenario document runnable by :func:`patchboard.scenario.Scenario.from_doc`."""
    rng = random.Random(f"scenario:{seed}")
    schema, init, writable, invariants = _schema(rng)
    tops = sorted(schema["properties"])
    workers = []
    for k in range(rng.randrange(1, 5)):
        grants = rng.sample(writable, rng.randrange(1, min(4, len(writable)) + 1))
        reads = rng.sample(tops, rng.randrange(1, len(tops) + 1))
        write = []
        for pattern, ops, subtree in grants:
            entry: dict[str, Any] = {"path": pattern, "ops": sorted(set(rng.sample(ops, rng.randrange(1, len(ops) + 1))) | {"test"} if rng.random() < 0.3 else set(ops))}
            if subtree:
                entry["subtree"] = True
            write.append(entry)
        workers.append({
            "name": f"w{k}",
            "read": [{"path": f"/{t}", "subtree": True} for t in sorted(reads)],
            "write": write,
            "view_budget": rng.choice([400, 1000, 4000]),
            **({"privileged": True} if rng.random() < 0.2 else {}),
        })
    names = [w["name"] for w in workers]
    rules = [{"trigger": {"path": ""}, "action": n, "on_init": True} for n in names]
    for t in tops:
        for n in rng.sample(names, rng.randrange(1, len(names) + 1)):
            rules.append({"trigger": {"path": f"/{t}"}, "action": n})
            if schema["properties"][t].get("type") in ("array", "object"):
                rules.append({"trigger": {"path": f"/{t}/*"}, "action": n})
    blueprint = {
        "schema": schema,
        "workers": workers,
        "rules": rules,
        "invariants": invariants,
        "budgets": {"max_worker_invocations": 200},
        "initial_state": init,
        "active_paths": [],
    }
    return {
        "name": f"fuzz-{seed}",
        "blueprint": blueprint,
        "request": None,
        "seed": seed,
        "circuit": dict(FUZZ_CIRCUIT),
        "workers": {n: {"builtin": "fuzz"} for n in names},
    }
