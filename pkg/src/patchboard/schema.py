"""A small JSON Schema subset: just enough structure for shared task state.

Supported keywords: type, properties, required, additionalProperties (bool),
items, enum, const, minimum, maximum, minLength, maxLength, pattern,
minItems, maxItems. Anything else is rejected when the schema is loaded.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any

from .contracts import APPEND, WILDCARD, PathPattern
from .report import ValidationReport, Violation
from .state import Pointer, StateValue, array_index, canonical_text, json_equal

KEYWORDS = frozenset(
    {
        "type",
        "properties",
        "required",
        "additionalProperties",
        "items",
        "enum",
        "const",
        "minimum",
        "maximum",
        "minLength",
        "maxLength",
        "pattern",
        "minItems",
        "maxItems",
    }
)
TYPES = ("null", "boolean", "integer", "number", "string", "array", "object")

# Constructs outside the POSIX-ERE-compatible core.
_FORBIDDEN_REGEX = re.compile(r"\\[1-9]|\\k|\(\?P=|\(\?<?[=!]|\(\?[aiLmsux]")


class SchemaError(ValueError):
    """The schema document itself is malformed."""


def _is_number(v: Any) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _is_count(v: Any) -> bool:
    return isinstance(v, int) and not isinstance(v, bool) and v >= 0


def type_of(value: Any) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "boolean"
    if isinstance(value, int) or (isinstance(value, float) and value.is_integer()):
        return "integer"
    if isinstance(value, float):
        return "number"
    if isinstance(value, str):
        return "string"
    if isinstance(value, list):
        return "array"
    return "object"


def _type_ok(value: Any, t: str) -> bool:
    actual = type_of(value)
    return actual == t or (t == "number" and actual == "integer")


def _check_doc(doc: Any, where: str) -> None:
    if not isinstance(doc, dict):
        raise SchemaError(f"{where or '/'}: schema must be an object")
    unknown = set(doc) - KEYWORDS
    if unknown:
        raise SchemaError(f"{where or '/'}: unsupported keyword(s) {sorted(unknown)}")
    if "type" in doc:
        t = doc["type"]
        names = t if isinstance(t, list) else [t]
        if not names or any(n not in TYPES for n in names):
            raise SchemaError(f"{where or '/'}: bad type {t!r}")
    if "properties" in doc:
        props = doc["properties"]
        if not isinstance(props, dict):
            raise SchemaError(f"{where}/properties: must be an object")
        for k, sub in props.items():
            _check_doc(sub, f"{where}/properties/{k}")
    if "required" in doc:
        req = doc["required"]
        if not isinstance(req, list) or not all(isinstance(r, str) for r in req) or len(set(req)) != len(req):
            raise SchemaError(f"{where}/required: must be a list of distinct strings")
    if "additionalProperties" in doc and not isinstance(doc["additionalProperties"], bool):
        raise SchemaError(f"{where}/additionalProperties: only booleans are supported")
    if "items" in doc:
        _check_doc(doc["items"], f"{where}/items")
    if "enum" in doc and (not isinstance(doc["enum"], list) or not doc["enum"]):
        raise SchemaError(f"{where}/enum: must be a non-empty list")
    for k in ("minimum", "maximum"):
        if k in doc and not _is_number(doc[k]):
            raise SchemaError(f"{where}/{k}: must be a number")
    for k in ("minLength", "maxLength", "minItems", "maxItems"):
        if k in doc and not _is_count(doc[k]):
            raise SchemaError(f"{where}/{k}: must be a non-negative integer")
    if "pattern" in doc:
        pat = doc["pattern"]
        if not isinstance(pat, str):
            raise SchemaError(f"{where}/pattern: must be a string")
        if _FORBIDDEN_REGEX.search(pat):
            raise SchemaError(f"{where}/pattern: backreferences and lookaround are not supported")
        try:
            re.compile(pat)
        except re.error as exc:
            raise SchemaError(f"{where}/pattern: {exc}") from None


@dataclass(frozen=True)
class Schema:
    """A loaded schema document. Construct with :meth:`load`."""

    doc: dict
    _patterns: dict = field(default_factory=dict, compare=False, repr=False)

    @classmethod
    def load(cls, doc: Any) -> "Schema":
        if isinstance(doc, Schema):
            return doc
        _check_doc(doc, "")
        return cls(doc)

    def regex(self, pattern: str) -> re.Pattern:
        compiled = self._patterns.get(pattern)
        if compiled is None:
            compiled = self._patterns[pattern] = re.compile(pattern)
        return compiled


def validate_value(schema: Schema | dict, value: StateValue) -> ValidationReport:
    """Every violation of *schema* by *value*, in document order."""
    schema = Schema.load(schema)
    out: list[Violation] = []
    _validate(schema, schema.doc, value, Pointer(), out)
    return ValidationReport.of(out)


def _validate(root: Schema, doc: dict, value: Any, path: Pointer, out: list[Violation]) -> None:
    if "type" in doc:
        names = doc["type"] if isinstance(doc["type"], list) else [doc["type"]]
        if not any(_type_ok(value, t) for t in names):
            out.append(Violation(path, "type", f"expected {'/'.join(names)}, got {type_of(value)}"))
            return
    if "enum" in doc and not any(json_equal(value, e) for e in doc["enum"]):
        out.append(Violation(path, "enum", f"{canonical_text(value)[:60]} not in enum"))
    if "const" in doc and not json_equal(value, doc["const"]):
        out.append(Violation(path, "const", f"expected {canonical_text(doc['const'])[:60]}"))

    if _is_number(value):
        if "minimum" in doc and value < doc["minimum"]:
            out.append(Violation(path, "minimum", f"{value} < {doc['minimum']}"))
        if "maximum" in doc and value > doc["maximum"]:
            out.append(Violation(path, "maximum", f"{value} > {doc['maximum']}"))
    elif isinstance(value, str):
        if "minLength" in doc and len(value) < doc["minLength"]:
            out.append(Violation(path, "minLength", f"length {len(value)} < {doc['minLength']}"))
        if "maxLength" in doc and len(value) > doc["maxLength"]:
            out.append(Violation(path, "maxLength", f"length {len(value)} > {doc['maxLength']}"))
        if "pattern" in doc and not root.regex(doc["pattern"]).search(value):
            out.append(Violation(path, "pattern", f"does not match {doc['pattern']!r}"))
    elif isinstance(value, list):
        if "minItems" in doc and len(value) < doc["minItems"]:
            out.append(Violation(path, "minItems", f"{len(value)} items < {doc['minItems']}"))
        if "maxItems" in doc and len(value) > doc["maxItems"]:
            out.append(Violation(path, "maxItems", f"{len(value)} items > {doc['maxItems']}"))
        if "items" in doc:
            for i, item in enumerate(value):
                _validate(root, doc["items"], item, path.child(i), out)
    elif isinstance(value, dict):
        for name in doc.get("required", ()):
            if name not in value:
                out.append(Violation(path, "required", f"missing required property {name!r}"))
        props = doc.get("properties", {})
        additional = doc.get("additionalProperties", True)
        for key in sorted(value):
            if key in props:
                _validate(root, props[key], value[key], path.child(key), out)
            elif not additional:
                out.append(Violation(path.child(key), "additionalProperties", f"unexpected property {key!r}"))


# --------------------------------------------------------------------------
# schema locations


def _may_be(doc: dict, t: str) -> bool:
    if "type" not in doc:
        return True
    names = doc["type"] if isinstance(doc["type"], list) else [doc["type"]]
    return t in names


def subschemas_at(schema: Schema | dict, pattern: PathPattern | Pointer) -> list[dict]:
    """Schema fragments describing values at *pattern*; empty when unreachable."""
    doc = schema.doc if isinstance(schema, Schema) else schema
    current = [doc]
    for seg in pattern.segments:
        nxt: list[dict] = []
        for d in current:
            props = d.get("properties", {})
            is_obj = _may_be(d, "object")
            is_arr = _may_be(d, "array")
            if seg == WILDCARD:
                if is_obj:
                    nxt.extend(props.values())
                    if d.get("additionalProperties", True) and "properties" not in d:
                        nxt.append({})
                if is_arr and ("items" in d or "properties" not in d):
                    nxt.append(d.get("items", {}))
            elif seg == APPEND:
                if is_arr and ("items" in d or "properties" not in d):
                    nxt.append(d.get("items", {}))
            else:
                if is_obj and seg in props:
                    nxt.append(props[seg])
                elif is_obj and d.get("additionalProperties", True) and not props and "items" not in d:
                    nxt.append({})
                if is_arr and array_index(seg) is not None and ("items" in d or "properties" not in d):
                    nxt.append(d.get("items", {}))
        current = nxt
        if not current:
            break
    return current


def required_paths(schema: Schema | dict) -> list[PathPattern]:
    """Patterns of fields reachable from the root through ``required`` chains only."""
    doc = schema.doc if isinstance(schema, Schema) else schema
    out: list[PathPattern] = []

    def walk(d: dict, prefix: tuple[str, ...]) -> None:
        props = d.get("properties", {})
        for name in d.get("required", ()):
            here = prefix + (name,)
            out.append(PathPattern(here))
            if name in props:
                walk(props[name], here)

    walk(doc, ())
    return out


def restrict_schema(schema: Schema | dict, keep) -> dict:
    """Prune object properties for which ``keep(pointer_prefix)`` is false.

    *keep* receives a :class:`PathPattern` whose wildcard segments stand for
    array positions.
    """
    doc = schema.doc if isinstance(schema, Schema) else schema

    def walk(d: dict, prefix: tuple[str, ...]) -> dict:
        out = dict(d)
        if "properties" in d:
            props = {}
            for k, sub in d["properties"].items():
                here = prefix + (k,)
                if keep(PathPattern(here)):
                    props[k] = walk(sub, here)
            out["properties"] = props
            if "required" in d:
                out["required"] = [r for r in d["required"] if r in props]
        if "items" in d:
            out["items"] = walk(d["items"], prefix + (WILDCARD,))
        return out

    return walk(doc, ())
