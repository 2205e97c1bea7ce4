"""Blueprint loading: meta-schema check first, then cross-checks.

A blueprint file is one JSON document::

    {
      "schema":        task schema (object root),
      "workers":       [{"name", "role", "read", "write", "view_budget",
                         "allowed_ops", "privileged", "repair_worker",
                         "fallback_worker", "max_invocations"}, ...],
      "rules":         [{"trigger": {"path", "op"}, "condition": {"path", "equals"},
                         "action", "on_init"}, ...],
      "invariants":    [{"name", "path", "predicate", ...}, ...],
      "budgets":       {"max_worker_invocations", "worker_timeout_s", "circuit": {...}},
      "initial_state": state template,
      "request_path":  where the user request is inserted,
      "active_paths":  patterns always shown first in views
    }

The kernel reserves two top-level regions and adds them to every task schema:
``/runtime`` (halt reason) and ``/requests/expansions`` (handle paging).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Any, Mapping

from .circuit import CircuitConfig
from .contracts import (
    ContractEntry,
    ContractError,
    PathPattern,
    ReadContract,
    WriteContract,
)
from .invariants import InvariantError, InvariantRule, typecheck_rule
from .report import ValidationReport, Violation
from .scheduler import KERNEL, RuleError, WorkflowRule
from .schema import Schema, SchemaError, subschemas_at, validate_value
from .state import ApplyFailure, OpKind, Patch, PatchOperation, Pointer, PointerSyntaxError, StateValue, apply_patch

META_SCHEMA_VERSION = "v1"
DEFAULT_MAX_INVOCATIONS = 200
DEFAULT_TIMEOUT_S = 60.0
BUDGET_CAP = 10**6

EXPANSIONS = PathPattern(("requests", "expansions", "-"))
RUNTIME_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {"halt_reason": {"type": "string"}},
}
REQUESTS_SCHEMA = {
    "type": "object",
    "required": ["expansions"],
    "additionalProperties": False,
    "properties": {
        "expansions": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["worker", "handle_id"],
                "additionalProperties": False,
                "properties": {
                    "worker": {"type": "string"},
                    "handle_id": {"type": "string", "pattern": "^[0-9a-f]{12}$"},
                },
            },
        }
    },
}
RESERVED = ("runtime", "requests")


class BlueprintRejected(Exception):
    def __init__(self, report: ValidationReport):
        super().__init__(report.describe())
        self.report = report


@lru_cache(maxsize=1)
def meta_schema() -> Schema:
    text = resources.files("patchboard").joinpath(f"data/blueprint.meta.{META_SCHEMA_VERSION}.json").read_text()
    return Schema.load(json.loads(text))


@dataclass(frozen=True)
class WorkerSpec:
    name: str
    read: ReadContract
    write: WriteContract
    view_budget: int
    role: str = ""
    allowed_ops: frozenset = frozenset({OpKind.ADD, OpKind.REPLACE, OpKind.TEST})
    privileged: bool = False
    repair_worker: str | None = None
    fallback_worker: str | None = None
    max_invocations: int | None = None

    @property
    def effective_write(self) -> WriteContract:
        """The declared contract plus the kernel-granted expansion-request slot."""
        return WriteContract(self.write.entries + (ContractEntry(EXPANSIONS, frozenset({OpKind.ADD})),))

    @classmethod
    def from_json(cls, doc: Mapping[str, Any]) -> "WorkerSpec":
        privileged = doc.get("privileged", False)
        if "allowed_ops" in doc:
            ops = frozenset(OpKind(o) for o in doc["allowed_ops"])
        else:
            ops = frozenset({OpKind.ADD, OpKind.REPLACE, OpKind.TEST} | ({OpKind.REMOVE} if privileged else set()))
        return cls(
            name=doc["name"],
            read=ReadContract.from_json(doc.get("read", [])),
            write=WriteContract.from_json(doc.get("write", [])),
            view_budget=doc["view_budget"],
            role=doc.get("role", ""),
            allowed_ops=ops,
            privileged=privileged,
            repair_worker=doc.get("repair_worker"),
            fallback_worker=doc.get("fallback_worker"),
            max_invocations=doc.get("max_invocations"),
        )

    def to_json(self) -> dict:
        out: dict = {
            "name": self.name,
            "role": self.role,
            "read": self.read.to_json(),
            "write": self.write.to_json(),
            "view_budget": self.view_budget,
            "allowed_ops": sorted(o.value for o in self.allowed_ops),
            "privileged": self.privileged,
        }
        for k in ("repair_worker", "fallback_worker", "max_invocations"):
            if getattr(self, k) is not None:
                out[k] = getattr(self, k)
        return out


@dataclass(frozen=True)
class Blueprint:
    schema: Schema
    workers: Mapping[str, WorkerSpec]
    rules: tuple[WorkflowRule, ...]
    invariants: tuple[InvariantRule, ...]
    max_worker_invocations: int = DEFAULT_MAX_INVOCATIONS
    worker_timeout_s: float = DEFAULT_TIMEOUT_S
    circuit: CircuitConfig = field(default_factory=CircuitConfig)
    initial_state: StateValue = field(default_factory=dict)
    request_path: Pointer | None = None
    active_paths: tuple[PathPattern, ...] = ()
    doc: Mapping[str, Any] = field(default_factory=dict, compare=False, repr=False)

    def initial(self, request: StateValue) -> StateValue:
        """Instantiate the initial state template with *request* inserted."""
        state = dict(self.initial_state)
        state.setdefault("runtime", {})
        state.setdefault("requests", {"expansions": []})
        if self.request_path is not None and request is not None:
            result = apply_patch(state, Patch((PatchOperation(OpKind.ADD, self.request_path, request),)))
            if isinstance(result, ApplyFailure):
                raise BlueprintRejected(
                    ValidationReport.of([Violation(self.request_path, "request_path", f"cannot insert request: {result}")])
                )
            state = result
        return state


def effective_schema(task_schema: Mapping[str, Any]) -> dict:
    doc = dict(task_schema)
    props = dict(doc.get("properties", {}))
    props["runtime"] = RUNTIME_SCHEMA
    props["requests"] = REQUESTS_SCHEMA
    doc["properties"] = props
    doc["required"] = list(dict.fromkeys(list(doc.get("required", [])) + list(RESERVED)))
    return doc


def _at(*segs: Any) -> Pointer:
    return Pointer(tuple(str(s) for s in segs))


def validate_blueprint(doc: StateValue, *, budget_cap: int = BUDGET_CAP) -> Blueprint | ValidationReport:
    """Return the accepted :class:`Blueprint`, or the report explaining the rejection."""
    structural = validate_value(meta_schema(), doc)
    if not structural.ok:
        return structural

    v: list[Violation] = []
    task = doc["schema"]
    if task.get("type", "object") != "object":
        v.append(Violation(_at("schema"), "schema", "task schema root must be an object"))
    clash = [r for r in RESERVED if r in task.get("properties", {})]
    if clash:
        v.append(Violation(_at("schema", "properties"), "reserved", f"reserved top-level fields {clash}"))
    try:
        schema = Schema.load(effective_schema(task))
    except SchemaError as exc:
        return ValidationReport.of(v + [Violation(_at("schema"), "schema", str(exc))])

    def resolvable(text: str, where: Pointer, what: str) -> PathPattern | None:
        try:
            pattern = PathPattern.parse(text)
        except ContractError as exc:
            v.append(Violation(where, what, str(exc)))
            return None
        if not subschemas_at(schema, pattern):
            v.append(Violation(where, what, f"{text!r} is not a location in the task schema"))
            return None
        return pattern

    workers: dict[str, WorkerSpec] = {}
    for i, w in enumerate(doc["workers"]):
        name = w["name"]
        if name == KERNEL:
            v.append(Violation(_at("workers", i, "name"), "reserved", f"worker name {KERNEL!r} is reserved"))
        if name in workers:
            v.append(Violation(_at("workers", i, "name"), "unique", f"duplicate worker name {name!r}"))
        if w["view_budget"] > budget_cap:
            v.append(Violation(_at("workers", i, "view_budget"), "budget", f"view budget exceeds cap {budget_cap}"))
        if w.get("max_invocations", 1) > budget_cap:
            v.append(Violation(_at("workers", i, "max_invocations"), "budget", f"exceeds cap {budget_cap}"))
        privileged = w.get("privileged", False)
        if not privileged and "remove" in w.get("allowed_ops", []):
            v.append(Violation(_at("workers", i, "allowed_ops"), "privileged", "remove requires a privileged worker"))
        for j, entry in enumerate(w["read"]):
            resolvable(entry["path"], _at("workers", i, "read", j), "read_path")
        for j, entry in enumerate(w["write"]):
            resolvable(entry["path"], _at("workers", i, "write", j), "write_path")
            if "remove" in entry["ops"] and not privileged:
                v.append(Violation(_at("workers", i, "write", j, "ops"), "privileged", "remove requires a privileged worker"))
        try:
            workers.setdefault(name, WorkerSpec.from_json(w))
        except (ContractError, ValueError) as exc:
            v.append(Violation(_at("workers", i), "worker", str(exc)))

    for i, w in enumerate(doc["workers"]):
        for key in ("repair_worker", "fallback_worker"):
            if key in w and w[key] not in workers:
                v.append(Violation(_at("workers", i, key), "declared", f"{key} {w[key]!r} is not a declared worker"))

    rules = []
    for i, r in enumerate(doc["rules"]):
        if r["action"] not in workers:
            v.append(Violation(_at("rules", i, "action"), "declared", f"rule {i} action names undeclared worker {r['action']!r}"))
        resolvable(r["trigger"]["path"], _at("rules", i, "trigger", "path"), "trigger_path")
        cond = r.get("condition")
        if cond and not cond["path"].startswith("."):
            resolvable(cond["path"], _at("rules", i, "condition", "path"), "condition_path")
        try:
            rules.append(WorkflowRule.from_json(r))
        except RuleError as exc:
            v.append(Violation(_at("rules", i), "rule", str(exc)))

    invariants = []
    for i, item in enumerate(doc.get("invariants", [])):
        try:
            rule = InvariantRule.from_json(item)
        except InvariantError as exc:
            v.append(Violation(_at("invariants", i), "invariant", str(exc)))
            continue
        for problem in typecheck_rule(rule, schema):
            v.append(Violation(_at("invariants", i), "invariant", problem))
        invariants.append(rule)

    budgets = doc["budgets"]
    if budgets["max_worker_invocations"] > budget_cap:
        v.append(Violation(_at("budgets", "max_worker_invocations"), "budget", f"exceeds cap {budget_cap}"))
    try:
        circuit = CircuitConfig(**budgets.get("circuit", {}))
    except (TypeError, ValueError) as exc:
        v.append(Violation(_at("budgets", "circuit"), "circuit", str(exc)))
        circuit = CircuitConfig()

    request_path = None
    if "request_path" in doc:
        try:
            request_path = Pointer.parse(doc["request_path"])
        except PointerSyntaxError as exc:
            v.append(Violation(_at("request_path"), "request_path", str(exc)))
        else:
            resolvable(doc["request_path"], _at("request_path"), "request_path")
    active = []
    for i, text in enumerate(doc.get("active_paths", [])):
        p = resolvable(text, _at("active_paths", i), "active_path")
        if p is not None:
            active.append(p)

    if v:
        return ValidationReport.of(v)
    return Blueprint(
        schema=schema,
        workers=workers,
        rules=tuple(rules),
        invariants=tuple(invariants),
        max_worker_invocations=budgets["max_worker_invocations"],
        worker_timeout_s=float(budgets.get("worker_timeout_s", DEFAULT_TIMEOUT_S)),
        circuit=circuit,
        initial_state=doc.get("initial_state", {}),
        request_path=request_path,
        active_paths=tuple(active),
        doc=doc,
    )


def load_blueprint(doc: StateValue, **kw) -> Blueprint:
    """Like :func:`validate_blueprint` but raises :class:`BlueprintRejected`."""
    result = validate_blueprint(doc, **kw)
    if isinstance(result, ValidationReport):
        raise BlueprintRejected(result)
    return result
