"""State-transition invariants registered by a blueprint.

Predicates come from a fixed vocabulary so that blueprints stay plain data:

* ``non_decreasing``   a number never goes down
* ``immutable_once_set`` once non-null, a value never changes
* ``enum_transition``  value changes must follow an allowed (from, to) pair
* ``append_only``      an array only ever grows at its end
* ``required_when_sibling`` ``field`` must exist whenever ``sibling`` equals ``value``
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Any, Sequence

from .contracts import ContractError, PathPattern, expand_pattern
from .report import ValidationReport, Violation
from .schema import Schema, subschemas_at, validate_value
from .state import NotFound, Patch, Pointer, StateValue, canonical_text, json_equal, resolve_pointer


class Predicate(str, enum.Enum):
    NON_DECREASING = "non_decreasing"
    IMMUTABLE_ONCE_SET = "immutable_once_set"
    ENUM_TRANSITION = "enum_transition"
    APPEND_ONLY = "append_only"
    REQUIRED_WHEN_SIBLING = "required_when_sibling"


class InvariantError(ValueError):
    pass


@dataclass(frozen=True)
class InvariantRule:
    name: str
    scope: PathPattern
    predicate: Predicate
    allowed: tuple[tuple[Any, Any], ...] = ()
    field: str | None = None
    sibling: str | None = None
    sibling_value: Any = None

    @classmethod
    def from_json(cls, doc: Any) -> "InvariantRule":
        if not isinstance(doc, dict):
            raise InvariantError("invariant must be an object")
        try:
            name = doc["name"]
            scope = PathPattern.parse(doc["path"])
            predicate = Predicate(doc["predicate"])
        except KeyError as exc:
            raise InvariantError(f"invariant missing {exc.args[0]!r}") from None
        except (ValueError, ContractError) as exc:
            raise InvariantError(str(exc)) from None
        if predicate is Predicate.ENUM_TRANSITION:
            pairs = doc.get("allowed")
            if not isinstance(pairs, list) or not all(isinstance(p, list) and len(p) == 2 for p in pairs):
                raise InvariantError(f"{name}: 'allowed' must be a list of [from, to] pairs")
            return cls(name, scope, predicate, allowed=tuple((a, b) for a, b in pairs))
        if predicate is Predicate.REQUIRED_WHEN_SIBLING:
            if not isinstance(doc.get("field"), str) or not isinstance(doc.get("sibling"), str) or "value" not in doc:
                raise InvariantError(f"{name}: needs string 'field', 'sibling' and a 'value'")
            return cls(name, scope, predicate, field=doc["field"], sibling=doc["sibling"], sibling_value=doc["value"])
        return cls(name, scope, predicate)

    def to_json(self) -> dict:
        out: dict = {"name": self.name, "path": self.scope.render(), "predicate": self.predicate.value}
        if self.predicate is Predicate.ENUM_TRANSITION:
            out["allowed"] = [list(p) for p in self.allowed]
        if self.predicate is Predicate.REQUIRED_WHEN_SIBLING:
            out.update(field=self.field, sibling=self.sibling, value=self.sibling_value)
        return out


def typecheck_rule(rule: InvariantRule, schema: Schema) -> list[str]:
    """Problems with *rule*'s parameters against the schema fragments at its scope."""
    frags = subschemas_at(schema, rule.scope)
    if not frags:
        return [f"scope {rule.scope} is not a schema location"]
    problems = []

    def types(d: dict) -> set[str] | None:
        t = d.get("type")
        if t is None:
            return None
        return set(t if isinstance(t, list) else [t])

    for frag in frags:
        ts = types(frag)
        if rule.predicate is Predicate.NON_DECREASING:
            if ts is not None and not ts & {"number", "integer"}:
                problems.append(f"non_decreasing needs a numeric location, schema says {sorted(ts)}")
        elif rule.predicate is Predicate.APPEND_ONLY:
            if ts is not None and "array" not in ts:
                problems.append(f"append_only needs an array location, schema says {sorted(ts)}")
        elif rule.predicate is Predicate.ENUM_TRANSITION:
            for a, b in rule.allowed:
                for v in (a, b):
                    if not validate_value(frag, v).ok:
                        problems.append(f"transition value {canonical_text(v)} is not valid at {rule.scope}")
        elif rule.predicate is Predicate.REQUIRED_WHEN_SIBLING:
            if ts is not None and "object" not in ts:
                problems.append("required_when_sibling needs an object location")
            props = frag.get("properties")
            if props is not None:
                for name in (rule.field, rule.sibling):
                    if name not in props:
                        problems.append(f"{name!r} is not a declared property at {rule.scope}")
    return problems


def _touched(location: Pointer, patch: Patch) -> bool:
    for op in patch.operations:
        path = op.path.parent if op.path.appends else op.path
        if path.overlaps(location):
            return True
    return False


def _locations(rule: InvariantRule, prev: StateValue, nxt: StateValue) -> list[Pointer]:
    seen: dict[Pointer, None] = {}
    for p in expand_pattern(prev, rule.scope) + expand_pattern(nxt, rule.scope):
        seen.setdefault(p, None)
    return list(seen)


def _evaluate(rule: InvariantRule, loc: Pointer, before: Any, after: Any) -> str | None:
    p = rule.predicate
    if p is Predicate.NON_DECREASING:
        if isinstance(before, (int, float)) and isinstance(after, (int, float)) and not isinstance(before, bool):
            if after < before:
                return f"decreased from {before} to {after}"
        return None
    if p is Predicate.IMMUTABLE_ONCE_SET:
        if before is NotFound or before is None:
            return None
        if after is NotFound or not json_equal(before, after):
            return f"changed after being set (was {canonical_text(before)[:40]})"
        return None
    if p is Predicate.ENUM_TRANSITION:
        if before is NotFound or after is NotFound or json_equal(before, after):
            return None
        if any(json_equal(a, before) and json_equal(b, after) for a, b in rule.allowed):
            return None
        return f"transition {canonical_text(before)[:30]} -> {canonical_text(after)[:30]} not allowed"
    if p is Predicate.APPEND_ONLY:
        if before is NotFound:
            return None
        if not isinstance(before, list) or not isinstance(after, list):
            return "array was replaced or removed"
        if len(after) < len(before) or not all(json_equal(x, y) for x, y in zip(before, after)):
            return "existing elements were changed or removed"
        return None
    if p is Predicate.REQUIRED_WHEN_SIBLING:
        if not isinstance(after, dict):
            return None
        if rule.sibling in after and json_equal(after[rule.sibling], rule.sibling_value):
            if rule.field not in after:
                return f"{rule.field!r} required when {rule.sibling!r} is {canonical_text(rule.sibling_value)}"
        return None
    raise AssertionError(p)


def check_invariants(
    rules: Sequence[InvariantRule], prev: StateValue, patch: Patch, next: StateValue
) -> ValidationReport:
    """Evaluate the rules a patch can affect on the (prev, next) state pair."""
    violations = []
    for rule in rules:
        for loc in _locations(rule, prev, next):
            if rule.predicate is not Predicate.APPEND_ONLY and not _touched(loc, patch):
                continue
            problem = _evaluate(rule, loc, resolve_pointer(prev, loc), resolve_pointer(next, loc))
            if problem:
                violations.append(Violation(loc, rule.name, problem))
    return ValidationReport.of(violations)
