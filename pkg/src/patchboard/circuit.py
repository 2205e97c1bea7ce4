"""Deterministic failure monitoring over the transaction log.

The policy looks only at the log, the committed hash trajectory, the pending
queue and the blueprint, so replaying a log reproduces every decision.
Checks run in a fixed order and the first one that fires wins:

1. a queued worker has used up its invocation budget -> switch or halt
2. a worker's latest proposals were rejected          -> retry, repair or halt
3. a worker keeps committing no-ops                   -> tighten its view, then halt
4. a committed hash repeats inside the loop window    -> halt
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Mapping, Sequence, Union

from .scheduler import KERNEL, Event, Invocation, InvocationQueue
from .state import ApplyFailure, OpKind, Patch, PatchOperation, Pointer, StateValue, apply_patch

if TYPE_CHECKING:
    from .blueprint import Blueprint
    from .kernel import Transaction

CIRCUIT_THRESHOLDS = (2, 4)
HALT_PATH = Pointer(("runtime", "halt_reason"))
CYCLE_DETECTED = "CycleDetected"


@dataclass(frozen=True)
class CircuitConfig:
    invalid_threshold: int = 2
    noop_threshold: int = 2
    cycle_window: int = 3
    max_worker_invocations: Mapping[str, int] = field(default_factory=dict)
    budget_floor: int = 256

    def __post_init__(self) -> None:
        for name in ("invalid_threshold", "noop_threshold", "cycle_window"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ValueError(f"{name} must be an integer >= 1, got {v!r}")
        for w, v in self.max_worker_invocations.items():
            if not isinstance(v, int) or v < 1:
                raise ValueError(f"invocation budget for {w!r} must be >= 1")

    def with_overrides(self, **kw) -> "CircuitConfig":
        fields = {
            "invalid_threshold": self.invalid_threshold,
            "noop_threshold": self.noop_threshold,
            "cycle_window": self.cycle_window,
            "max_worker_invocations": dict(self.max_worker_invocations),
            "budget_floor": self.budget_floor,
        }
        fields.update({k: v for k, v in kw.items() if v is not None})
        return CircuitConfig(**fields)


@dataclass(frozen=True)
class NoAction:
    pass


@dataclass(frozen=True)
class Retry:
    worker: str
    event: Event


@dataclass(frozen=True)
class Repair:
    worker: str
    failed_worker: str
    event: Event


@dataclass(frozen=True)
class SwitchWorker:
    from_worker: str
    to_worker: str
    event: Event


@dataclass(frozen=True)
class TightenBudget:
    worker: str
    new_budget: int


@dataclass(frozen=True)
class Halt:
    reason: str


CircuitAction = Union[NoAction, Retry, Repair, SwitchWorker, TightenBudget, Halt]


def _worker_history(log: Sequence["Transaction"], worker: str) -> list["Transaction"]:
    return [t for t in log if t.worker_id == worker]


def noop_flags(log: Sequence["Transaction"], initial_hash: str) -> list[bool]:
    """Per transaction: accepted without changing the committed hash."""
    flags = []
    current = initial_hash
    for t in log:
        if t.accepted:
            flags.append(t.state_hash == current)
            current = t.state_hash
        else:
            flags.append(False)
    return flags


def _distinct_run(hashes: Sequence[str]) -> list[str]:
    out: list[str] = []
    for h in hashes:
        if not out or out[-1] != h:
            out.append(h)
    return out


def invocation_limit(worker: str, config: CircuitConfig, blueprint: "Blueprint") -> int | None:
    if worker in config.max_worker_invocations:
        return config.max_worker_invocations[worker]
    spec = blueprint.workers.get(worker)
    return spec.max_invocations if spec is not None else None


def circuit_policy(
    log: Sequence["Transaction"],
    state_hashes: Sequence[str],
    queue: InvocationQueue,
    config: CircuitConfig,
    blueprint: "Blueprint",
    budgets: Mapping[str, int] | None = None,
) -> CircuitAction:
    """Decide the next circuit action after a proposal.

    ``state_hashes`` is the committed hash after every accepted transaction,
    starting with the hash of the initial state.
    """
    if not log or log[-1].worker_id == KERNEL:
        return NoAction()
    last = log[-1]
    worker = last.worker_id
    spec = blueprint.workers.get(worker)

    counts: dict[str, int] = {}
    for t in log:
        if t.worker_id != KERNEL:
            counts[t.worker_id] = counts.get(t.worker_id, 0) + 1
    for inv in queue:
        limit = invocation_limit(inv.worker, config, blueprint)
        if limit is not None and counts.get(inv.worker, 0) >= limit:
            pending_spec = blueprint.workers.get(inv.worker)
            fallback = pending_spec.fallback_worker if pending_spec else None
            if fallback and counts.get(fallback, 0) < (invocation_limit(fallback, config, blueprint) or 1 << 62):
                return SwitchWorker(inv.worker, fallback, inv.event)
            return Halt(f"BudgetExhausted:{inv.worker}")

    history = _worker_history(log, worker)
    if not last.accepted:
        streak = 0
        for t in reversed(history):
            if t.accepted:
                break
            streak += 1
        if streak >= config.invalid_threshold:
            if spec is not None and spec.repair_worker:
                return Repair(spec.repair_worker, worker, last.event)
            return Halt(f"InvalidThreshold:{worker}")
        return Retry(worker, last.event)

    initial = state_hashes[0] if state_hashes else None
    flags = dict(zip((id(t) for t in log), noop_flags(log, initial)))
    streak = 0
    for t in reversed(history):
        if not flags[id(t)]:
            break
        streak += 1
    if streak >= config.noop_threshold:
        if streak == config.noop_threshold:
            current = (budgets or {}).get(worker, spec.view_budget if spec else config.budget_floor)
            return TightenBudget(worker, max(config.budget_floor, current // 2))
        return Halt(f"NoopThreshold:{worker}")

    window = _distinct_run(state_hashes)[-config.cycle_window:]
    if len(set(window)) < len(window):
        return Halt(CYCLE_DETECTED)
    return NoAction()


def halt_patch(reason: str, state: StateValue = None) -> Patch:
    """The kernel-internal patch recording a halt."""
    if isinstance(state, dict) and not isinstance(state.get("runtime"), dict):
        return Patch((PatchOperation(OpKind.ADD, HALT_PATH.parent, {"halt_reason": reason}),))
    return Patch((PatchOperation(OpKind.ADD, HALT_PATH, reason),))


def apply_policy(
    action: CircuitAction,
    queue: InvocationQueue,
    state: StateValue,
    budgets: Mapping[str, int] | None = None,
) -> tuple[InvocationQueue, StateValue, dict[str, int]]:
    """Carry out *action*; inputs are left untouched."""
    q = queue.copy()
    table = dict(budgets or {})
    if isinstance(action, NoAction):
        return q, state, table
    if isinstance(action, Retry):
        q.push_front(Invocation(action.worker, action.event))
    elif isinstance(action, Repair):
        q.push_front(Invocation(action.worker, action.event))
    elif isinstance(action, SwitchWorker):
        q = InvocationQueue(i for i in q if i.worker != action.from_worker)
        q.push_front(Invocation(action.to_worker, action.event))
    elif isinstance(action, TightenBudget):
        table[action.worker] = action.new_budget
    elif isinstance(action, Halt):
        q = InvocationQueue()
        result = apply_patch(state, halt_patch(action.reason, state))
        if isinstance(result, ApplyFailure):
            raise ValueError(f"cannot record halt: {result}")
        state = result
    else:
        raise TypeError(f"unknown circuit action {action!r}")
    return q, state, table
