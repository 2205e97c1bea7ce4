"""Post-hoc checks over a finished run: trajectory, contamination, attribution."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterator, Sequence

from .blueprint import Blueprint
from .circuit import HALT_PATH
from .contracts import WriteContract, match_pattern
from .kernel import Transaction, decode_proposal
from .report import ValidationReport, Violation
from .scheduler import KERNEL
from .schema import validate_value
from .state import (
    ApplyFailure,
    NotFound,
    Pointer,
    StateValue,
    apply_patch,
    array_index,
    canonical_text,
    hash_state,
    resolve_pointer,
)


class TrajectoryError(ValueError):
    pass


def trajectory(initial: StateValue, log: Sequence[Transaction]) -> Iterator[tuple[Transaction | None, StateValue]]:
    """Yield ``(txn, committed_state)`` for the initial state and every accepted transaction.

    Hashes are checked along the way, so a log that does not match its own
    recorded hashes raises :class:`TrajectoryError`.
    """
    state = initial
    yield None, state
    for t in log:
        if not t.accepted:
            continue
        nxt = apply_patch(state, decode_proposal(t.patch))
        if isinstance(nxt, ApplyFailure):
            raise TrajectoryError(f"seq {t.seq}: logged accepted patch no longer applies: {nxt}")
        if hash_state(nxt).hex != t.state_hash:
            raise TrajectoryError(f"seq {t.seq}: recomputed hash differs from the log")
        state = nxt
        yield t, state


def contaminated(marker: str, initial: StateValue, log: Sequence[Transaction]) -> bool:
    """True iff *marker* ever appears in a committed state change."""
    prev_text = canonical_text(initial)
    for t, state in trajectory(initial, log):
        if t is None:
            continue
        text = canonical_text(state)
        if marker in text and marker not in prev_text:
            return True
        prev_text = text
    return False


def changed_paths(a: Any, b: Any, at: Pointer = Pointer()) -> list[Pointer]:
    """Minimal set of locations where *a* and *b* differ (added/removed subtrees reported whole)."""
    if isinstance(a, dict) and isinstance(b, dict):
        out = []
        for k in sorted(set(a) | set(b)):
            if k not in a or k not in b:
                out.append(at.child(k))
            else:
                out.extend(changed_paths(a[k], b[k], at.child(k)))
        return out
    if isinstance(a, list) and isinstance(b, list):
        out = []
        for i in range(max(len(a), len(b))):
            if i >= len(a) or i >= len(b):
                out.append(at.child(i))
            else:
                out.extend(changed_paths(a[i], b[i], at.child(i)))
        return out
    if canonical_text(a) == canonical_text(b):
        return []
    return [at]


def _covered(contract: WriteContract, path: Pointer, grew: bool) -> bool:
    segs = path.segments
    for n in range(len(segs), -1, -1):
        q = Pointer(segs[:n])
        candidates = [q]
        if n == len(segs) and grew and segs and array_index(segs[-1]) is not None:
            candidates.append(q.parent.child("-"))
        for c in candidates:
            for e in contract.entries:
                if match_pattern(e.pattern, c, subtree=e.subtree):
                    return True
    return False


def attribution_violations(bp: Blueprint, initial: StateValue, log: Sequence[Transaction]) -> ValidationReport:
    """Every committed change must lie inside the committing worker's write contract."""
    out = []
    prev = initial
    for t, state in trajectory(initial, log):
        if t is None:
            continue
        for path in changed_paths(prev, state):
            if t.worker_id == KERNEL:
                ok = path.startswith(HALT_PATH.parent)
            else:
                spec = bp.workers[t.worker_id]
                parent = resolve_pointer(prev, path.parent)
                grew = isinstance(parent, list) and resolve_pointer(prev, path) is NotFound
                ok = _covered(spec.effective_write, path, grew)
            if not ok:
                out.append(Violation(path, "attribution", f"seq {t.seq} ({t.worker_id}) changed {path} outside its contract"))
        prev = state
    return ValidationReport.of(out)


def schema_violations(bp: Blueprint, initial: StateValue, log: Sequence[Transaction]) -> ValidationReport:
    """Validate every committed state against the blueprint schema."""
    out = []
    for t, state in trajectory(initial, log):
        report = validate_value(bp.schema, state)
        for v in report.violations:
            seq = 0 if t is None else t.seq
            out.append(Violation(v.path, v.keyword, f"seq {seq}: {v.message}"))
    return ValidationReport.of(out)


@dataclass(frozen=True)
class RunAudit:
    schema: ValidationReport
    attribution: ValidationReport

    @property
    def ok(self) -> bool:
        return self.schema.ok and self.attribution.ok


def audit_run(bp: Blueprint, initial: StateValue, log: Sequence[Transaction]) -> RunAudit:
    return RunAudit(schema_violations(bp, initial, log), attribution_violations(bp, initial, log))
