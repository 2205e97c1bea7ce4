"""Immutable JSON value trees, RFC 6901 pointers and the restricted RFC 6902 patch.

State values are plain ``dict``/``list``/scalar trees. Nothing in this module
mutates its inputs: :func:`apply_patch` copies only the containers along each
written path and shares every untouched subtree with the input.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterator, Sequence

StateValue = Any  # None | bool | int | float | str | list | dict


class InvalidState(ValueError):
    """Raised when a value is not a legal state tree."""


class PointerSyntaxError(ValueError):
    pass


class PatchSyntaxError(ValueError):
    pass


class _NotFound:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "NotFound"

    def __bool__(self) -> bool:
        return False


NotFound = _NotFound()


# --------------------------------------------------------------------------
# values


def check_value(value: StateValue, _path: str = "") -> None:
    """Raise :class:`InvalidState` unless *value* is a finite JSON tree."""
    if value is None or isinstance(value, (bool, str)):
        return
    if isinstance(value, int):
        return
    if isinstance(value, float):
        if not math.isfinite(value):
            raise InvalidState(f"non-finite number at {_path or '/'}")
        return
    if isinstance(value, list):
        for i, item in enumerate(value):
            check_value(item, f"{_path}/{i}")
        return
    if isinstance(value, dict):
        for k, v in value.items():
            if not isinstance(k, str):
                raise InvalidState(f"non-string key {k!r} at {_path or '/'}")
            check_value(v, f"{_path}/{escape_token(k)}")
        return
    raise InvalidState(f"unsupported type {type(value).__name__} at {_path or '/'}")


def json_equal(a: StateValue, b: StateValue) -> bool:
    """JSON equality: like ``==`` but booleans never equal numbers."""
    if isinstance(a, bool) or isinstance(b, bool):
        return isinstance(a, bool) and isinstance(b, bool) and a == b
    if isinstance(a, (int, float)) and isinstance(b, (int, float)):
        return float(a) == float(b)
    if isinstance(a, dict):
        if not isinstance(b, dict) or a.keys() != b.keys():
            return False
        return all(json_equal(a[k], b[k]) for k in a)
    if isinstance(a, list):
        if not isinstance(b, list) or len(a) != len(b):
            return False
        return all(json_equal(x, y) for x, y in zip(a, b))
    return type(a) is type(b) and a == b


def _reject_duplicates(pairs: list[tuple[str, Any]]) -> dict:
    out: dict = {}
    for k, v in pairs:
        if k in out:
            raise InvalidState(f"duplicate object key {k!r}")
        out[k] = v
    return out


def _reject_constant(name: str) -> Any:
    raise InvalidState(f"non-finite number {name}")


def parse_json(text: str | bytes) -> StateValue:
    """Parse JSON text into a state value, rejecting NaN/Infinity and duplicate keys."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    value = json.loads(
        text, object_pairs_hook=_reject_duplicates, parse_constant=_reject_constant
    )
    check_value(value)
    return value


# --------------------------------------------------------------------------
# canonical form and hashing


def _canonical_number(x: int | float) -> int | float:
    f = float(x)
    if not math.isfinite(f):
        raise InvalidState("non-finite number")
    if f.is_integer() and abs(f) < 1e21:
        return int(f)
    return f


def _normalize(value: StateValue) -> StateValue:
    if isinstance(value, bool) or value is None or isinstance(value, str):
        return value
    if isinstance(value, (int, float)):
        return _canonical_number(value)
    if isinstance(value, list):
        return [_normalize(v) for v in value]
    if isinstance(value, dict):
        return {k: _normalize(v) for k, v in value.items()}
    raise InvalidState(f"unsupported type {type(value).__name__}")


def canonical_text(value: StateValue) -> str:
    return json.dumps(
        _normalize(value),
        sort_keys=True,
        separators=(",", ":"),
        ensure_ascii=False,
        allow_nan=False,
    )


def canonical_serialize(value: StateValue) -> bytes:
    """Deterministic UTF-8 encoding: sorted keys, no whitespace, one number form."""
    return canonical_text(value).encode("utf-8")


@dataclass(frozen=True)
class StateHash:
    digest: bytes

    def __post_init__(self) -> None:
        if len(self.digest) != 32:
            raise ValueError("state hash must be 32 bytes")

    @property
    def hex(self) -> str:
        return self.digest.hex()

    @classmethod
    def from_hex(cls, text: str) -> "StateHash":
        if len(text) != 64 or text != text.lower():
            raise ValueError(f"bad state hash {text!r}")
        return cls(bytes.fromhex(text))

    def __str__(self) -> str:
        return self.hex


def hash_bytes(data: bytes) -> StateHash:
    return StateHash(hashlib.sha256(data).digest())


def hash_state(value: StateValue) -> StateHash:
    return hash_bytes(canonical_serialize(value))


# --------------------------------------------------------------------------
# pointers


def escape_token(token: str) -> str:
    return token.replace("~", "~0").replace("/", "~1")


def unescape_token(token: str) -> str:
    i = 0
    while True:
        i = token.find("~", i)
        if i < 0:
            break
        if i + 1 >= len(token) or token[i + 1] not in "01":
            raise PointerSyntaxError(f"bad escape in token {token!r}")
        i += 2
    return token.replace("~1", "/").replace("~0", "~")


@dataclass(frozen=True)
class Pointer:
    """An RFC 6901 JSON pointer. ``-`` is only legal as the final token."""

    segments: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if "-" in self.segments[:-1]:
            raise PointerSyntaxError("'-' is only valid as the final segment")

    @classmethod
    def parse(cls, text: str) -> "Pointer":
        if not isinstance(text, str):
            raise PointerSyntaxError(f"pointer must be a string, got {type(text).__name__}")
        if text == "":
            return cls(())
        if not text.startswith("/"):
            raise PointerSyntaxError(f"pointer {text!r} must start with '/'")
        return cls(tuple(unescape_token(t) for t in text[1:].split("/")))

    def render(self) -> str:
        return "".join("/" + escape_token(s) for s in self.segments)

    __str__ = render

    def __repr__(self) -> str:
        return f"Pointer({self.render()!r})"

    def child(self, token: str | int) -> "Pointer":
        return Pointer(self.segments + (str(token),))

    @property
    def parent(self) -> "Pointer":
        return Pointer(self.segments[:-1])

    @property
    def is_root(self) -> bool:
        return not self.segments

    @property
    def appends(self) -> bool:
        return bool(self.segments) and self.segments[-1] == "-"

    def startswith(self, other: "Pointer") -> bool:
        n = len(other.segments)
        return self.segments[:n] == other.segments

    def overlaps(self, other: "Pointer") -> bool:
        return self.startswith(other) or other.startswith(self)


ROOT = Pointer()


def array_index(token: str) -> int | None:
    """Parse an RFC 6901 array index token; ``None`` when the token is not one."""
    if not token or not token.isdigit() or not token.isascii():
        return None
    if len(token) > 1 and token[0] == "0":
        return None
    return int(token)


def resolve_pointer(state: StateValue, path: Pointer | str) -> StateValue:
    """Return the value at *path*, or :data:`NotFound`."""
    if isinstance(path, str):
        path = Pointer.parse(path)
    node = state
    for token in path.segments:
        if isinstance(node, dict):
            if token not in node:
                return NotFound
            node = node[token]
        elif isinstance(node, list):
            idx = array_index(token)
            if idx is None or idx >= len(node):
                return NotFound
            node = node[idx]
        else:
            return NotFound
    return node


def iter_paths(value: StateValue, prefix: Pointer = ROOT) -> Iterator[tuple[Pointer, StateValue]]:
    """Yield every (pointer, sub-value) pair in document order, root first."""
    yield prefix, value
    if isinstance(value, dict):
        for k in sorted(value):
            yield from iter_paths(value[k], prefix.child(k))
    elif isinstance(value, list):
        for i, item in enumerate(value):
            yield from iter_paths(item, prefix.child(i))


# --------------------------------------------------------------------------
# patches


class OpKind(str, enum.Enum):
    ADD = "add"
    REPLACE = "replace"
    TEST = "test"
    REMOVE = "remove"


_NO_VALUE = object()


@dataclass(frozen=True)
class PatchOperation:
    kind: OpKind
    path: Pointer
    value: StateValue = field(default=_NO_VALUE, compare=False)

    def __post_init__(self) -> None:
        has_value = self.value is not _NO_VALUE
        if self.kind is OpKind.REMOVE and has_value:
            raise PatchSyntaxError("remove carries no value")
        if self.kind is not OpKind.REMOVE and not has_value:
            raise PatchSyntaxError(f"{self.kind.value} requires a value")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PatchOperation):
            return NotImplemented
        if (self.kind, self.path) != (other.kind, other.path):
            return False
        if self.kind is OpKind.REMOVE:
            return True
        return json_equal(self.value, other.value)

    def __hash__(self) -> int:
        return hash((self.kind, self.path))

    def to_json(self) -> dict:
        out = {"op": self.kind.value, "path": self.path.render()}
        if self.kind is not OpKind.REMOVE:
            out["value"] = self.value
        return out

    @classmethod
    def from_json(cls, doc: Any) -> "PatchOperation":
        if not isinstance(doc, dict):
            raise PatchSyntaxError("operation must be an object")
        op = doc.get("op")
        if op in ("move", "copy"):
            raise PatchSyntaxError(f"operation {op!r} is not in the allowed subset")
        try:
            kind = OpKind(op)
        except ValueError:
            raise PatchSyntaxError(f"unknown operation {op!r}") from None
        allowed = {"op", "path"} if kind is OpKind.REMOVE else {"op", "path", "value"}
        extra = set(doc) - allowed
        if extra:
            raise PatchSyntaxError(f"unexpected members {sorted(extra)} in {kind.value}")
        if "path" not in doc:
            raise PatchSyntaxError("operation missing 'path'")
        try:
            path = Pointer.parse(doc["path"])
        except PointerSyntaxError as exc:
            raise PatchSyntaxError(str(exc)) from None
        if kind is OpKind.REMOVE:
            return cls(kind, path)
        if "value" not in doc:
            raise PatchSyntaxError(f"{kind.value} requires a value")
        try:
            check_value(doc["value"])
        except InvalidState as exc:
            raise PatchSyntaxError(str(exc)) from None
        if path.appends and kind is not OpKind.ADD:
            raise PatchSyntaxError(f"'-' is only valid for add, not {kind.value}")
        return cls(kind, path, doc["value"])


@dataclass(frozen=True)
class Patch:
    operations: tuple[PatchOperation, ...] = ()

    def __iter__(self) -> Iterator[PatchOperation]:
        return iter(self.operations)

    def __len__(self) -> int:
        return len(self.operations)

    def to_json(self) -> list:
        return [op.to_json() for op in self.operations]

    @classmethod
    def from_json(cls, doc: Any) -> "Patch":
        if not isinstance(doc, list):
            raise PatchSyntaxError("patch must be a JSON array of operations")
        return cls(tuple(PatchOperation.from_json(op) for op in doc))

    @classmethod
    def of(cls, *ops: Sequence[Any]) -> "Patch":
        """Shorthand: ``Patch.of(("add", "/xs/-", 5), ("remove", "/a"))``."""
        built = []
        for spec in ops:
            kind, path, *rest = spec
            kind = OpKind(kind)
            path = Pointer.parse(path) if isinstance(path, str) else path
            built.append(PatchOperation(kind, path, *rest))
        return cls(tuple(built))


class FailureCause(str, enum.Enum):
    PATH_MISSING = "PathMissing"
    PARENT_MISSING = "ParentMissing"
    TEST_MISMATCH = "TestMismatch"
    TYPE_MISMATCH = "TypeMismatch"
    INDEX_OUT_OF_RANGE = "IndexOutOfRange"


@dataclass(frozen=True)
class ApplyFailure:
    index: int
    cause: FailureCause
    detail: str = ""

    def __str__(self) -> str:
        return f"operation {self.index}: {self.cause.value}" + (f" ({self.detail})" if self.detail else "")


class _Fail(Exception):
    def __init__(self, cause: FailureCause, detail: str):
        self.cause = cause
        self.detail = detail


def _set_in(node: StateValue, tokens: tuple[str, ...], op: PatchOperation, where: str) -> StateValue:
    """Return a copy of *node* with *op* applied at relative *tokens*."""
    token = tokens[0]
    last = len(tokens) == 1
    if isinstance(node, dict):
        if last:
            if op.kind is OpKind.ADD:
                out = dict(node)
                out[token] = op.value
                return out
            if token not in node:
                raise _Fail(FailureCause.PATH_MISSING, f"no member {token!r} at {where or '/'}")
            if op.kind is OpKind.REPLACE:
                out = dict(node)
                out[token] = op.value
                return out
            out = dict(node)
            del out[token]
            return out
        if token not in node:
            raise _Fail(FailureCause.PARENT_MISSING, f"no member {token!r} at {where or '/'}")
        out = dict(node)
        out[token] = _set_in(node[token], tokens[1:], op, f"{where}/{escape_token(token)}")
        return out
    if isinstance(node, list):
        if last and token == "-":
            out = list(node)
            out.append(op.value)
            return out
        idx = array_index(token)
        if idx is None:
            raise _Fail(FailureCause.TYPE_MISMATCH, f"{token!r} is not an array index at {where or '/'}")
        if last and op.kind is OpKind.ADD:
            if idx > len(node):
                raise _Fail(FailureCause.INDEX_OUT_OF_RANGE, f"index {idx} > length {len(node)}")
            out = list(node)
            out.insert(idx, op.value)
            return out
        if idx >= len(node):
            cause = FailureCause.INDEX_OUT_OF_RANGE if last else FailureCause.PARENT_MISSING
            raise _Fail(cause, f"index {idx} >= length {len(node)} at {where or '/'}")
        out = list(node)
        if last:
            if op.kind is OpKind.REPLACE:
                out[idx] = op.value
            else:
                del out[idx]
            return out
        out[idx] = _set_in(node[idx], tokens[1:], op, f"{where}/{idx}")
        return out
    raise _Fail(FailureCause.TYPE_MISMATCH, f"cannot address into scalar at {where or '/'}")


def _locate(node: StateValue, tokens: tuple[str, ...]) -> StateValue:
    where = ""
    for depth, token in enumerate(tokens):
        last = depth == len(tokens) - 1
        missing = FailureCause.PATH_MISSING if last else FailureCause.PARENT_MISSING
        if isinstance(node, dict):
            if token not in node:
                raise _Fail(missing, f"no member {token!r} at {where or '/'}")
            node = node[token]
        elif isinstance(node, list):
            idx = array_index(token)
            if idx is None:
                raise _Fail(FailureCause.TYPE_MISMATCH, f"{token!r} is not an array index at {where or '/'}")
            if idx >= len(node):
                cause = FailureCause.INDEX_OUT_OF_RANGE if last else FailureCause.PARENT_MISSING
                raise _Fail(cause, f"index {idx} >= length {len(node)} at {where or '/'}")
            node = node[idx]
        else:
            raise _Fail(FailureCause.TYPE_MISMATCH, f"cannot address into scalar at {where or '/'}")
        where += "/" + escape_token(token)
    return node


def apply_operation(state: StateValue, op: PatchOperation) -> StateValue:
    """Apply one operation; raises ``_Fail`` on failure."""
    if op.kind is OpKind.TEST:
        if op.path.appends:
            raise _Fail(FailureCause.PATH_MISSING, "'-' names no value")
        current = _locate(state, op.path.segments)
        if not json_equal(current, op.value):
            raise _Fail(FailureCause.TEST_MISMATCH, f"value at {op.path} differs")
        return state
    if op.path.is_root:
        if op.kind is OpKind.REMOVE:
            raise _Fail(FailureCause.TYPE_MISMATCH, "cannot remove the document root")
        return op.value
    return _set_in(state, op.path.segments, op, "")


def apply_patch(state: StateValue, patch: Patch) -> StateValue | ApplyFailure:
    """Apply *patch* to *state* in order; the input is never mutated."""
    current = state
    for i, op in enumerate(patch.operations):
        try:
            current = apply_operation(current, op)
        except _Fail as exc:
            return ApplyFailure(i, exc.cause, exc.detail)
    return current
