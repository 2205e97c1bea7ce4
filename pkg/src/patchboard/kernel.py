"""The runtime controller: validation pipeline, commit, run loop and replay.

Every worker proposal becomes exactly one :class:`Transaction`. Accepted
patches are committed by swapping in the validated copy; rejected ones leave
the committed state untouched. The log is newline-delimited canonical JSON
and is sufficient, together with the blueprint and initial state, to replay
the whole run without calling any worker.
"""

from __future__ import annotations

import concurrent.futures
import copy
import dataclasses
import enum
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Protocol, Sequence

from .blueprint import Blueprint, BlueprintRejected, WorkerSpec, validate_blueprint
from .circuit import (
    HALT_PATH,
    CircuitConfig,
    Halt,
    apply_policy,
    circuit_policy,
    halt_patch,
    invocation_limit,
)
from .invariants import InvariantRule, check_invariants
from .report import ValidationReport, Violation
from .scheduler import KERNEL, EmptyInitialQueue, Event, Invocation, InvocationQueue, extract_events, initial_queue, schedule
from .schema import Schema, validate_value
from .contracts import authorize
from .state import (
    ApplyFailure,
    OpKind,
    Patch,
    PatchSyntaxError,
    Pointer,
    PointerSyntaxError,
    StateValue,
    InvalidState,
    apply_patch,
    canonical_serialize,
    canonical_text,
    check_value,
    hash_bytes,
    hash_state,
    parse_json,
    resolve_pointer,
)
from .views import (
    EMPTY_VIEW,
    BudgetInfeasible,
    ExpansionLedger,
    Provenance,
    View,
    expand,
    slice_view,
    view_hash,
)

REASON_MAX = 300
EXPANSIONS_PATH = Pointer(("requests", "expansions"))


class Stage(str, enum.Enum):
    SYNTAX = "Syntax"
    AUTH = "Auth"
    APPLY = "Apply"
    SCHEMA = "Schema"
    INVARIANT = "Invariant"


class Worker(Protocol):
    """Anything callable as ``worker(view, event)``.

    The return value is a :class:`Patch`, a JSON patch document, or raw
    ``str``/``bytes`` that the kernel parses itself. Workers that set
    ``inline = True`` are called directly instead of under the timeout guard.
    """

    def __call__(self, view: View, event: Event) -> Any: ...


# --------------------------------------------------------------------------
# transactions


@dataclass(frozen=True)
class Accepted:
    state_hash: str

    def to_json(self) -> dict:
        return {"accepted": True, "state_hash": self.state_hash}


@dataclass(frozen=True)
class Rejected:
    stage: Stage
    reason: str

    def to_json(self) -> dict:
        return {"accepted": False, "stage": self.stage.value, "reason": self.reason}


@dataclass(frozen=True)
class Transaction:
    seq: int
    worker_id: str
    event: Event
    view_hash: str
    patch: Any  # the proposal as logged: a patch document, a raw string, or None
    outcome: Accepted | Rejected

    @property
    def accepted(self) -> bool:
        return isinstance(self.outcome, Accepted)

    @property
    def state_hash(self) -> str | None:
        return self.outcome.state_hash if isinstance(self.outcome, Accepted) else None

    @property
    def stage(self) -> str | None:
        return self.outcome.stage.value if isinstance(self.outcome, Rejected) else None

    @property
    def reason(self) -> str | None:
        return self.outcome.reason if isinstance(self.outcome, Rejected) else None

    def patch_paths(self) -> list[Pointer]:
        try:
            patch = Patch.from_json(self.patch)
        except (PatchSyntaxError, PointerSyntaxError, TypeError, ValueError):
            return []
        return [op.path.parent if op.path.appends else op.path for op in patch.operations]

    def to_json(self) -> dict:
        return {
            "seq": self.seq,
            "worker": self.worker_id,
            "event": self.event.to_json(),
            "view_hash": self.view_hash,
            "patch": self.patch,
            "outcome": self.outcome.to_json(),
        }

    @classmethod
    def from_json(cls, doc: Any) -> "Transaction":
        if not isinstance(doc, dict) or set(doc) != {"seq", "worker", "event", "view_hash", "patch", "outcome"}:
            raise ValueError("transaction must have exactly seq, worker, event, view_hash, patch, outcome")
        out = doc["outcome"]
        if not isinstance(out, dict) or not isinstance(out.get("accepted"), bool):
            raise ValueError("bad outcome")
        if out["accepted"]:
            outcome: Accepted | Rejected = Accepted(str(out["state_hash"]))
        else:
            outcome = Rejected(Stage(out["stage"]), str(out["reason"]))
        if not isinstance(doc["seq"], int) or not isinstance(doc["worker"], str):
            raise ValueError("bad seq or worker")
        return cls(doc["seq"], doc["worker"], Event.from_json(doc["event"]), str(doc["view_hash"]), doc["patch"], outcome)

    def to_line(self) -> str:
        return canonical_text(self.to_json())


def write_log(path: str | Path, log: Iterable[Transaction]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for t in log:
            fh.write(t.to_line() + "\n")


def parse_log(text: str) -> tuple[list[Transaction], list[str]]:
    """Parse log text. A torn final line is dropped with a note; other bad lines raise."""
    notes = []
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    out = []
    for i, line in enumerate(lines):
        try:
            out.append(Transaction.from_json(parse_json(line)))
        except (ValueError, KeyError, TypeError) as exc:
            if i == len(lines) - 1 and not text.endswith("\n"):
                notes.append(f"dropped incomplete final line {i + 1}")
                break
            raise ValueError(f"log line {i + 1}: {exc}") from None
    return out, notes


def read_log(path: str | Path) -> tuple[list[Transaction], list[str]]:
    return parse_log(Path(path).read_text(encoding="utf-8"))


# --------------------------------------------------------------------------
# validation pipeline


@dataclass(frozen=True)
class Verdict:
    ok: bool
    next: StateValue = None
    stage: Stage | None = None
    reason: str = ""
    patch: Patch | None = None


def _short(text: str) -> str:
    return text if len(text) <= REASON_MAX else text[: REASON_MAX - 3] + "..."


def _reject(stage: Stage, reason: str) -> Verdict:
    return Verdict(False, stage=stage, reason=_short(reason))


def bind_reason(reason: str, proposal: Any) -> str:
    """Suffix *reason* with a digest of the logged proposal.

    A rejected proposal leaves no trace in the state hashes, so without this
    an edit to its logged bytes would re-reject identically under replay.
    """
    tag = f" [proposal {hash_bytes(canonical_serialize(proposal)).hex[:16]}]"
    room = REASON_MAX - len(tag)
    body = reason if len(reason) <= room else reason[: room - 3] + "..."
    return body + tag


def decode_proposal(doc: Any) -> Patch:
    """Turn a logged/returned proposal into a :class:`Patch` or raise ``PatchSyntaxError``."""
    if isinstance(doc, str):
        try:
            doc = parse_json(doc)
        except (ValueError, InvalidState) as exc:
            raise PatchSyntaxError(f"not JSON: {exc}") from None
    try:
        return Patch.from_json(doc)
    except PointerSyntaxError as exc:
        raise PatchSyntaxError(str(exc)) from None


def valid_patch(
    state: StateValue,
    proposal: Any,
    worker: WorkerSpec,
    schema: Schema,
    invariants: Sequence[InvariantRule] = (),
    ledger: ExpansionLedger | None = None,
) -> Verdict:
    """Run Syntax, Auth, Apply, Schema and Invariant checks in order, stopping at the first failure."""
    try:
        patch = proposal if isinstance(proposal, Patch) else decode_proposal(proposal)
    except PatchSyntaxError as exc:
        return _reject(Stage.SYNTAX, str(exc))
    bad_ops = sorted({op.kind.value for op in patch.operations} - {o.value for o in worker.allowed_ops})
    if bad_ops:
        return _reject(Stage.SYNTAX, f"operation(s) {bad_ops} not allowed for {worker.name}")

    auth = authorize(patch, worker.effective_write, worker.read, privileged=worker.privileged)
    if not auth.ok:
        return _reject(Stage.AUTH, auth.describe())

    nxt = apply_patch(state, patch)
    if isinstance(nxt, ApplyFailure):
        return _reject(Stage.APPLY, str(nxt))
    shadowed = shadowed_write(state, patch, nxt)
    if shadowed:
        return _reject(Stage.APPLY, shadowed)

    report = validate_value(schema, nxt)
    if not report.ok:
        return _reject(Stage.SCHEMA, report.describe())

    report = check_invariants(invariants, state, patch, nxt)
    if not report.ok:
        return _reject(Stage.INVARIANT, report.describe())
    problem = _check_expansions(state, nxt, worker.name, ledger)
    if problem:
        return _reject(Stage.INVARIANT, problem)
    return Verdict(True, next=nxt, patch=patch)


_PROBE = "\u0000shadow-probe"


def _node_paths(value: Any, prefix: tuple = ()) -> Iterable[tuple]:
    yield prefix
    if isinstance(value, dict):
        for k, v in value.items():
            yield from _node_paths(v, prefix + (k,))
    elif isinstance(value, list):
        for i, v in enumerate(value):
            yield from _node_paths(v, prefix + (i,))


def _with_probe(value: Any, at: tuple) -> Any:
    if not at:
        return _PROBE
    out = copy.copy(value)
    out[at[0]] = _with_probe(value[at[0]], at[1:])
    return out


def shadowed_write(state: StateValue, patch: Patch, result: StateValue) -> str | None:
    """Name the first written value that a later operation in *patch* erases.

    Such a value never reaches the committed state, so nothing downstream
    could notice if its logged bytes were edited. Each node of each written
    value is swapped for a probe; if the patch still produces *result*, the
    node was overwritten.
    """
    ops = patch.operations
    writes = [k for k, op in enumerate(ops) if op.kind in (OpKind.ADD, OpKind.REPLACE)]
    later = {k for k in writes if any(o.kind is not OpKind.TEST for o in ops[k + 1:])}
    want = canonical_text(result)
    for k in sorted(later):
        op = ops[k]
        for at in _node_paths(op.value):
            probe = dataclasses.replace(op, value=_with_probe(op.value, at))
            trial = apply_patch(state, Patch(ops[:k] + (probe,) + ops[k + 1:]))
            if not isinstance(trial, ApplyFailure) and canonical_text(trial) == want:
                where = op.path.render() + "".join(f"/{seg}" for seg in at)
                return f"operation {k} writes {where!r} but a later operation in the same patch overwrites it"
    return None


def _new_expansions(prev: StateValue, nxt: StateValue) -> list[dict]:
    before = resolve_pointer(prev, EXPANSIONS_PATH)
    after = resolve_pointer(nxt, EXPANSIONS_PATH)
    if not isinstance(after, list):
        return []
    n = len(before) if isinstance(before, list) else 0
    return after[n:]


def _check_expansions(prev: StateValue, nxt: StateValue, proposer: str, ledger: ExpansionLedger | None) -> str:
    for req in _new_expansions(prev, nxt):
        if req.get("worker") != proposer:
            return f"UnknownHandle: expansion filed for {req.get('worker')!r} by {proposer!r}"
        if ledger is None or not ledger.knows(proposer, req.get("handle_id", "")):
            return f"UnknownHandle: {req.get('handle_id')!r} was not issued to {proposer!r}"
    return ""


# --------------------------------------------------------------------------
# the run loop


@dataclass
class Counters:
    accepted: int = 0
    rejected: dict[str, int] = field(default_factory=lambda: {s.value: 0 for s in Stage})
    invocations: int = 0

    def to_json(self) -> dict:
        return {"accepted": self.accepted, "rejected": dict(self.rejected), "invocations": self.invocations}


@dataclass
class RunResult:
    final_state: StateValue
    log: list[Transaction]
    halt_reason: str | None
    counters: Counters
    initial_state: StateValue = None
    warnings: list[str] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "transactions": len(self.log),
            "halt_reason": self.halt_reason,
            "counters": self.counters.to_json(),
            "final_state_hash": hash_state(self.final_state).hex,
        }


class WorkerFailure(Exception):
    pass


class _Source(Protocol):
    def propose(self, inv: Invocation, view: View, spec: WorkerSpec) -> Any: ...


@dataclass
class _Loop:
    """Mutable loop state shared by :func:`run` and :func:`replay`."""

    bp: Blueprint
    config: CircuitConfig
    max_invocations: int
    budget_override: int | None
    state: StateValue
    queue: InvocationQueue
    log: list[Transaction] = field(default_factory=list)
    hashes: list[str] = field(default_factory=list)
    budgets: dict[str, int] = field(default_factory=dict)
    ledger: ExpansionLedger = field(default_factory=ExpansionLedger)
    provenance: Provenance = field(default_factory=Provenance)
    counters: Counters = field(default_factory=Counters)
    event_seq: int = 1
    halt_reason: str | None = None

    def __post_init__(self) -> None:
        self.hashes.append(hash_state(self.state).hex)

    def budget_for(self, spec: WorkerSpec) -> int:
        if spec.name in self.budgets:
            return self.budgets[spec.name]
        return self.budget_override if self.budget_override is not None else spec.view_budget

    def invoked(self, worker: str) -> int:
        return sum(1 for t in self.log if t.worker_id == worker)

    def halt(self, reason: str) -> None:
        """Record a halt as a kernel transaction and drain the queue."""
        doc = halt_patch(reason, self.state).to_json()
        self.queue, self.state, self.budgets = apply_policy(Halt(reason), self.queue, self.state, self.budgets)
        self.halt_reason = reason
        h = hash_state(self.state).hex
        event = Event(self.event_seq, KERNEL, HALT_PATH, OpKind.ADD)
        self.event_seq += 1
        self.log.append(Transaction(len(self.log) + 1, KERNEL, event, view_hash(EMPTY_VIEW).hex, doc, Accepted(h)))
        self.hashes.append(h)

    def step(self, source: _Source) -> bool:
        """One loop iteration; False once the run is over."""
        if self.halt_reason is not None or not self.queue:
            return False
        if self.counters.invocations >= self.max_invocations:
            self.halt("BudgetExceeded")
            return False
        inv = self.queue.pop()
        spec = self.bp.workers[inv.worker]
        limit = invocation_limit(spec.name, self.config, self.bp)
        if limit is not None and self.invoked(spec.name) >= limit:
            fb = spec.fallback_worker
            if fb and self.invoked(fb) < (invocation_limit(fb, self.config, self.bp) or 1 << 62):
                self.queue.push_front(Invocation(fb, inv.event))
                return True
            self.halt(f"BudgetExhausted:{spec.name}")
            return False

        try:
            view = slice_view(
                self.state,
                spec,
                self.log,
                schema=self.bp.schema,
                active_paths=self.bp.active_paths,
                event=inv.event,
                expanded=self.ledger.take(spec.name),
                provenance=self.provenance,
                budget=self.budget_for(spec),
            )
        except BudgetInfeasible:
            self.halt(f"BudgetInfeasible:{spec.name}")
            return False
        self.ledger.issue(spec.name, view.handles)
        vh = view_hash(view).hex

        self.counters.invocations += 1
        logged = source.propose(inv, view, spec)
        if isinstance(logged, WorkerFailure):
            verdict = _reject(Stage.SYNTAX, f"worker failure: {logged}")
            logged = None
        else:
            verdict = valid_patch(self.state, logged, spec, self.bp.schema, self.bp.invariants, self.ledger)

        seq = len(self.log) + 1
        if verdict.ok:
            prev = self.state
            events = extract_events(verdict.patch, prev, spec.name, self.event_seq)
            self.event_seq += len(events)
            self.state = verdict.next
            h = hash_state(self.state).hex
            txn = Transaction(seq, spec.name, inv.event, vh, logged, Accepted(h))
            self.log.append(txn)
            self.hashes.append(h)
            self.counters.accepted += 1
            for ev in events:
                self.provenance.record(ev.path, seq)
            for req in _new_expansions(prev, self.state):
                expand(self.ledger, spec.name, req["handle_id"])
            self.queue.extend(schedule(events, self.bp.rules, self.state))
        else:
            reason = verdict.reason if logged is None else bind_reason(verdict.reason, logged)
            txn = Transaction(seq, spec.name, inv.event, vh, logged, Rejected(verdict.stage, reason))
            self.log.append(txn)
            self.counters.rejected[verdict.stage.value] += 1

        action = circuit_policy(self.log, self.hashes, self.queue, self.config, self.bp, self.budgets)
        if isinstance(action, Halt):
            self.halt(action.reason)
            return False
        self.queue, self.state, self.budgets = apply_policy(action, self.queue, self.state, self.budgets)
        return True


def _normalize_output(out: Any) -> Any:
    """Make a worker's return value loggable JSON."""
    if isinstance(out, Patch):
        return out.to_json()
    if isinstance(out, bytes):
        return out.decode("utf-8", errors="replace")
    try:
        check_value(out)
    except InvalidState as exc:
        return WorkerFailure(f"non-JSON output: {exc}")
    return copy.deepcopy(out)


class _LiveSource:
    def __init__(self, workers: Mapping[str, Worker], timeout: float | None):
        self.workers = workers
        self.timeout = timeout
        self._pool: concurrent.futures.ThreadPoolExecutor | None = None

    def propose(self, inv: Invocation, view: View, spec: WorkerSpec) -> Any:
        worker = self.workers[inv.worker]
        # the committed state is shared structurally with the view; never hand it out
        view = dataclasses.replace(
            view, fields=copy.deepcopy(view.fields), schema_fragment=copy.deepcopy(view.schema_fragment)
        )
        try:
            if self.timeout is None or getattr(worker, "inline", False):
                out = worker(view, inv.event)
            else:
                if self._pool is None:
                    self._pool = concurrent.futures.ThreadPoolExecutor(max_workers=1)
                fut = self._pool.submit(worker, view, inv.event)
                try:
                    out = fut.result(timeout=self.timeout)
                except concurrent.futures.TimeoutError:
                    self._pool.shutdown(wait=False, cancel_futures=True)
                    self._pool = None
                    return WorkerFailure(f"timed out after {self.timeout}s")
        except Exception as exc:  # any worker crash becomes a logged rejection
            return WorkerFailure(f"{type(exc).__name__}: {exc}")
        return _normalize_output(out)

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown(wait=False)


def _resolve_blueprint(blueprint: Blueprint | Mapping[str, Any]) -> Blueprint:
    if isinstance(blueprint, Blueprint):
        return blueprint
    result = validate_blueprint(blueprint)
    if isinstance(result, ValidationReport):
        raise BlueprintRejected(result)
    return result


def _start(bp: Blueprint, initial: StateValue) -> tuple[InvocationQueue, list[str]]:
    report = validate_value(bp.schema, initial)
    if not report.ok:
        raise BlueprintRejected(report)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", EmptyInitialQueue)
        q = initial_queue(bp.rules, initial)
    return q, [str(w.message) for w in caught]


def _config(bp: Blueprint, circuit: Mapping[str, Any] | None) -> CircuitConfig:
    return bp.circuit.with_overrides(**dict(circuit or {}))


def run(
    blueprint: Blueprint | Mapping[str, Any],
    request: StateValue,
    workers: Mapping[str, Worker],
    *,
    circuit: Mapping[str, Any] | None = None,
    max_invocations: int | None = None,
    budget: int | None = None,
    timeout: float | None | str = "blueprint",
) -> RunResult:
    """Execute a blueprint against *request* with the given worker registry."""
    bp = _resolve_blueprint(blueprint)
    missing = sorted(set(bp.workers) - set(workers))
    if missing:
        raise ValueError(f"no implementation for worker(s) {missing}")
    initial = bp.initial(request)
    queue, notes = _start(bp, initial)
    loop = _Loop(
        bp,
        _config(bp, circuit),
        max_invocations if max_invocations is not None else bp.max_worker_invocations,
        budget,
        initial,
        queue,
    )
    source = _LiveSource(workers, bp.worker_timeout_s if timeout == "blueprint" else timeout)
    try:
        while loop.step(source):
            pass
    finally:
        source.close()
    return RunResult(loop.state, loop.log, loop.halt_reason, loop.counters, initial, notes)


# --------------------------------------------------------------------------
# replay


class _LogSource:
    def __init__(self, log: Sequence[Transaction]):
        self.log = log
        self.pos = 0
        self.current: Transaction | None = None

    def propose(self, inv: Invocation, view: View, spec: WorkerSpec) -> Any:
        txn = self.current
        if txn.patch is None and isinstance(txn.outcome, Rejected) and txn.reason.startswith("worker failure: "):
            return WorkerFailure(txn.reason[len("worker failure: "):])
        return txn.patch


def _at(seq: int) -> Pointer:
    return Pointer(("log", str(seq)))


def replay(
    initial_state: StateValue,
    blueprint: Blueprint | Mapping[str, Any],
    log: Sequence[Transaction],
    *,
    circuit: Mapping[str, Any] | None = None,
    max_invocations: int | None = None,
    budget: int | None = None,
    notes: Iterable[str] = (),
) -> ValidationReport:
    """Re-drive the loop from *log* alone and report every point where it disagrees.

    The loop is re-executed with each logged proposal standing in for the
    worker, so state hashes, view hashes, rejection stages, scheduling and
    kernel halts are all recomputed and compared. Replay stops at the first
    divergent transaction because everything after it is built on a
    different history.
    """
    bp = _resolve_blueprint(blueprint)
    out: list[Violation] = []
    note_list = list(notes)
    try:
        queue, _ = _start(bp, initial_state)
    except BlueprintRejected as exc:
        return ValidationReport.of(exc.report.violations, note_list)
    loop = _Loop(
        bp,
        _config(bp, circuit),
        max_invocations if max_invocations is not None else bp.max_worker_invocations,
        budget,
        initial_state,
        queue,
    )
    source = _LogSource(log)

    i = 0
    while i < len(log):
        txn = log[i]
        where = _at(txn.seq)
        if txn.seq != i + 1:
            out.append(Violation(where, "seq", f"expected seq {i + 1}, found {txn.seq}"))
            break
        if loop.halt_reason is not None or not loop.queue and txn.worker_id != KERNEL:
            out.append(Violation(where, "schedule", "log continues after the run should have ended"))
            break
        source.current = txn
        before = len(loop.log)
        loop.step(source)
        produced = loop.log[before:]
        if not produced:
            if loop.queue or loop.halt_reason is None:
                continue  # a fallback switch consumed an iteration without logging
            out.append(Violation(where, "schedule", "run ended before this transaction"))
            break
        diverged = False
        for got in produced:
            if i >= len(log):
                out.append(Violation(_at(got.seq), "schedule", f"missing transaction for {got.worker_id}"))
                diverged = True
                break
            want = log[i]
            problems = _compare(got, want)
            for kw, msg in problems:
                out.append(Violation(_at(want.seq), kw, msg))
            i += 1
            if problems:
                diverged = True
                break
        if diverged:
            break
    else:
        if loop.queue and loop.halt_reason is None:
            note_list.append(f"log is a prefix of the run: {len(log)} transaction(s) replayed, run would continue")
    return ValidationReport.of(out, note_list)


def _compare(got: Transaction, want: Transaction) -> list[tuple[str, str]]:
    problems = []
    if got.worker_id != want.worker_id or got.event != want.event:
        problems.append(
            ("schedule", f"scheduler chose {got.worker_id} on {got.event.to_json()}, log has {want.worker_id} on {want.event.to_json()}")
        )
        return problems
    if got.view_hash != want.view_hash:
        problems.append(("view_hash", f"recomputed view hash {got.view_hash[:12]} != logged {want.view_hash[:12]}"))
    if got.worker_id == KERNEL and canonical_text(got.patch) != canonical_text(want.patch):
        problems.append(("patch", "kernel transaction differs from the recomputed one"))
    if got.accepted != want.accepted:
        problems.append(("outcome", f"recomputed outcome {got.outcome.to_json()} != logged {want.outcome.to_json()}"))
    elif got.accepted and got.state_hash != want.state_hash:
        problems.append(("hash", f"recomputed state hash {got.state_hash[:12]} != logged {want.state_hash[:12]}"))
    elif not got.accepted and (got.stage != want.stage or got.reason != want.reason):
        problems.append(("stage", f"recomputed rejection {got.stage}: {got.reason} != logged {want.stage}: {want.reason}"))
    return problems
