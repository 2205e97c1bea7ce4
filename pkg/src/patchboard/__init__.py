"""Deterministic coordination kernel for multi-worker shared state.

Workers never write shared state directly. They propose restricted JSON
Patches against a budgeted view; the kernel validates each proposal
(syntax, authorization, application, schema, invariants), commits or
rejects it, logs it, and schedules follow-up work from the resulting events.
"""

from .blueprint import Blueprint, BlueprintRejected, WorkerSpec, load_blueprint, validate_blueprint
from .circuit import CircuitConfig, circuit_policy, apply_policy
from .contracts import PathPattern, ReadContract, WriteContract, authorize, filter_readable
from .kernel import RunResult, Stage, Transaction, read_log, replay, run, valid_patch, write_log
from .report import ValidationReport, Violation
from .scheduler import Event, InvocationQueue, WorkflowRule, extract_events, initial_queue, schedule
from .schema import Schema, validate_value
from .state import Patch, PatchOperation, Pointer, apply_patch, canonical_serialize, hash_state, resolve_pointer
from .views import Handle, View, slice_view, view_hash

__version__ = "0.1.0"

__all__ = [
    "Blueprint",
    "BlueprintRejected",
    "CircuitConfig",
    "Event",
    "Handle",
    "InvocationQueue",
    "Patch",
    "PatchOperation",
    "PathPattern",
    "Pointer",
    "ReadContract",
    "RunResult",
    "Schema",
    "Stage",
    "Transaction",
    "ValidationReport",
    "View",
    "Violation",
    "WorkerSpec",
    "WorkflowRule",
    "WriteContract",
    "apply_patch",
    "apply_policy",
    "authorize",
    "canonical_serialize",
    "circuit_policy",
    "extract_events",
    "filter_readable",
    "hash_state",
    "initial_queue",
    "load_blueprint",
    "read_log",
    "replay",
    "resolve_pointer",
    "run",
    "schedule",
    "slice_view",
    "valid_patch",
    "validate_blueprint",
    "validate_value",
    "view_hash",
    "write_log",
]
