"""Budgeted worker views.

A view is the read-contract slice of committed state, squeezed under a
character budget. Content is admitted in priority order:

1. active task fields and the triggering event's path (always present),
2. handles the worker asked to expand,
3. schema-required fields,
4. recently changed content (newest first),
5. everything else in document order.

Whatever does not fit is replaced by a :class:`Handle`. When an array loses
some elements it is rendered as an object keyed by the surviving indices, so
``/evidence/7`` still resolves against the view exactly as it would against
the committed state.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Iterable, Sequence

from .contracts import WILDCARD, PathPattern, ReadContract, could_contain, expand_pattern, filter_readable, match_pattern
from .schema import Schema, required_paths, restrict_schema, subschemas_at, type_of
from .state import (
    NotFound,
    Pointer,
    StateValue,
    canonical_text,
    hash_bytes,
    hash_state,
    StateHash,
)

if TYPE_CHECKING:
    from .blueprint import WorkerSpec
    from .kernel import Transaction
    from .scheduler import Event

REJECTION_WINDOW = 10
SUMMARY_MAX = 120


class BudgetInfeasible(Exception):
    """Priority-1 content alone exceeds the worker's budget."""


class UnknownHandle(Exception):
    pass


@dataclass(frozen=True)
class Handle:
    id: str
    path: Pointer
    summary: str

    def to_json(self) -> dict:
        return {"id": self.id, "path": self.path.render(), "summary": self.summary}


@dataclass(frozen=True)
class Rejection:
    seq: int
    stage: str
    reason: str

    def to_json(self) -> dict:
        return {"seq": self.seq, "stage": self.stage, "reason": self.reason}


@dataclass(frozen=True)
class View:
    fields: StateValue
    schema_fragment: StateValue
    recent_rejections: tuple[Rejection, ...]
    handles: tuple[Handle, ...]
    budget_limit: int
    budget_used: int

    def to_json(self) -> dict:
        return {
            "fields": self.fields,
            "schema_fragment": self.schema_fragment,
            "rejections": [r.to_json() for r in self.recent_rejections],
            "handles": [h.to_json() for h in self.handles],
            "budget": {"limit": self.budget_limit, "used": self.budget_used},
        }


EMPTY_VIEW = View({}, {}, (), (), 0, 2)


def view_hash(view: View) -> StateHash:
    return hash_state(view.to_json())


class Provenance:
    """Which transaction last touched each path; feeds recency and summaries."""

    def __init__(self) -> None:
        self._exact: dict[tuple[str, ...], int] = {}
        self._below: dict[tuple[str, ...], int] = {}

    def record(self, path: Pointer, seq: int) -> None:
        segs = path.segments
        self._exact[segs] = seq
        for n in range(len(segs) + 1):
            prefix = segs[:n]
            if self._below.get(prefix, -1) < seq:
                self._below[prefix] = seq

    def recency(self, path: Pointer) -> int:
        segs = path.segments
        best = self._below.get(segs, 0)
        for n in range(len(segs)):
            best = max(best, self._exact.get(segs[:n], 0))
        return best

    def copy(self) -> "Provenance":
        out = Provenance()
        out._exact = dict(self._exact)
        out._below = dict(self._below)
        return out


def handle_id(path: Pointer, value: Any) -> str:
    if isinstance(value, dict) and "id" in value and isinstance(value["id"], (str, int, float)):
        ident = value["id"] if isinstance(value["id"], str) else canonical_text(value["id"])
    else:
        ident = hash_state(value).hex
    return hash_bytes((path.render() + ident).encode("utf-8")).hex[:12]


def summarize(path: Pointer, value: Any, seq: int) -> str:
    if isinstance(value, dict) and "id" in value and not isinstance(value["id"], (dict, list)):
        ident = value["id"] if isinstance(value["id"], str) else canonical_text(value["id"])
    else:
        ident = path.render()
    text = f"{type_of(value) if type_of(value) != 'integer' else 'number'} id={ident} from txn #{seq}"
    if len(text) > SUMMARY_MAX:
        text = text[: SUMMARY_MAX - 3] + "..."
    return text


# --------------------------------------------------------------------------
# incremental view builder


def _entry_cost(key: str, nonempty: bool, value_size: int) -> int:
    return (1 if nonempty else 0) + len(json.dumps(key, ensure_ascii=False)) + 1 + value_size


class _Builder:
    """Tracks the exact canonical size of a tree under construction.

    Arrays are held as index-keyed dicts until :meth:`finish`.
    """

    def __init__(self, source: StateValue):
        self.source = source
        self.root: dict = {}
        self.size = 2
        self.arrays: set[tuple[str, ...]] = set()

    def cost(self, path: Pointer, value_size: int) -> int:
        segs = path.segments
        node: Any = self.root
        depth = 0
        while depth < len(segs) - 1 and isinstance(node, dict) and segs[depth] in node:
            node = node[segs[depth]]
            depth += 1
        total = 0
        parent_nonempty = bool(node)
        for s in segs[depth:-1]:
            total += _entry_cost(s, parent_nonempty, 2)
            parent_nonempty = False
        return total + _entry_cost(segs[-1], parent_nonempty, value_size)

    def add(self, path: Pointer, value: Any, value_size: int) -> None:
        self.size += self.cost(path, value_size)
        segs = path.segments
        node = self.root
        src = self.source
        for i, s in enumerate(segs[:-1]):
            src = src[int(s)] if isinstance(src, list) else src[s]
            if isinstance(src, list):
                self.arrays.add(segs[: i + 1])
            node = node.setdefault(s, {})
        if isinstance(self.source if not segs[:-1] else src, list):
            self.arrays.add(segs[:-1])
        node[segs[-1]] = value

    def finish(self) -> Any:
        def walk(node: Any, segs: tuple[str, ...], src: Any) -> Any:
            if segs in self.arrays and isinstance(node, dict):
                items = {int(k): walk(v, segs + (k,), src[int(k)]) for k, v in node.items()}
                if len(items) == len(src):
                    return [items[i] for i in range(len(src))]
                return {str(k): items[k] for k in sorted(items)}
            if isinstance(node, dict) and isinstance(src, dict):
                return {k: walk(v, segs + (k,), src[k]) for k, v in node.items()}
            return node

        return walk(self.root, (), self.source)


@dataclass
class _Unit:
    path: Pointer
    value: Any
    element: bool
    order: int


def _units(readable: Any, protected: set[tuple[str, ...]]) -> list[_Unit]:
    out: list[_Unit] = []
    guarded = set()
    for segs in protected:
        for n in range(len(segs)):
            guarded.add(segs[:n])

    def walk(node: Any, path: Pointer, in_array: bool) -> None:
        segs = path.segments
        if segs in protected:
            return
        if segs not in guarded and (in_array or not isinstance(node, (dict, list)) or not node):
            out.append(_Unit(path, node, in_array, len(out)))
            return
        if isinstance(node, dict):
            for k in sorted(node):
                walk(node[k], path.child(k), False)
        else:
            for i, item in enumerate(node):
                walk(item, path.child(i), True)

    if isinstance(readable, dict):
        for k in sorted(readable):
            walk(readable[k], Pointer((k,)), False)
    return out


def _schema_keep(read: ReadContract):
    def keep(prefix: PathPattern) -> bool:
        for e in read.entries:
            ps, es = prefix.segments, e.pattern.segments
            n = min(len(ps), len(es))
            if len(ps) > len(es) and not e.subtree:
                continue
            if all(a == b or WILDCARD in (a, b) or (a == WILDCARD and b == "-") for a, b in zip(ps[:n], es[:n])):
                return True
        return False

    return keep


def _rejections(worker: "WorkerSpec", log_tail: Sequence["Transaction"]) -> tuple[Rejection, ...]:
    out = []
    for t in list(log_tail)[-REJECTION_WINDOW:]:
        if t.accepted:
            continue
        related = t.worker_id == worker.name
        if not related:
            for path in t.patch_paths():
                if worker.read.covers(path) or any(could_contain(e.pattern, path) for e in worker.read.entries):
                    related = True
                    break
        if related:
            out.append(Rejection(t.seq, t.stage, t.reason))
    return tuple(out)


def slice_view(
    state: StateValue,
    worker: "WorkerSpec",
    log_tail: Sequence["Transaction"] = (),
    *,
    schema: Schema | None = None,
    active_paths: Iterable[PathPattern] = (),
    event: "Event | None" = None,
    expanded: Iterable[Pointer] = (),
    provenance: Provenance | None = None,
    budget: int | None = None,
) -> View:
    """Materialize *worker*'s view of *state*; deterministic for fixed inputs."""
    limit = budget if budget is not None else worker.view_budget
    prov = provenance or Provenance()
    readable = filter_readable(state, worker.read)
    if readable is NotFound or not isinstance(readable, dict):
        readable = {}

    tier1 = list(active_paths)
    if event is not None and not event.path.is_root:
        tier1.append(PathPattern(event.path.segments))
    roots: list[Pointer] = []
    for pat in tier1:
        roots.extend(expand_pattern(readable, pat))
    roots.sort(key=lambda p: len(p.segments))
    protected: set[tuple[str, ...]] = set()
    for p in roots:
        if not any(p.segments[:n] in protected for n in range(len(p.segments) + 1)):
            protected.add(p.segments)

    builder = _Builder(readable)
    for segs in sorted(protected):
        ptr = Pointer(segs)
        value = _resolve(readable, ptr)
        builder.add(ptr, value, len(canonical_text(value)))
    if builder.size > limit:
        raise BudgetInfeasible(
            f"priority-1 content for {worker.name} needs {builder.size} chars, budget is {limit}"
        )

    required = required_paths(schema) if schema is not None else []
    expanded_set = {p.segments for p in expanded}
    units = _units(readable, protected)

    def rank(u: _Unit) -> tuple:
        segs = u.path.segments
        if any(segs[: len(e)] == e or e[: len(segs)] == segs for e in expanded_set):
            return (0, 0, u.order)
        if not u.element and any(match_pattern(r, u.path) for r in required):
            return (1, 0, u.order)
        rec = prov.recency(u.path)
        if rec > 0:
            return (2, -rec, u.order)
        return (3, 0, u.order)

    handles: list[Handle] = []
    omitted_fields: dict[Pointer, int] = {}
    for u in sorted(units, key=rank):
        text = canonical_text(u.value)
        if builder.size + builder.cost(u.path, len(text)) <= limit:
            builder.add(u.path, u.value, len(text))
            continue
        is_expanded = rank(u)[0] == 0
        if is_expanded and isinstance(u.value, dict) and schema is not None:
            kept, rest = _truncate(u, schema)
            ktext = canonical_text(kept)
            if builder.size + builder.cost(u.path, len(ktext)) <= limit:
                builder.add(u.path, kept, len(ktext))
                for k in rest:
                    sub = u.path.child(k)
                    handles.append(Handle(handle_id(sub, u.value[k]), sub, summarize(sub, u.value[k], prov.recency(sub))))
                continue
        if u.element:
            handles.append(Handle(handle_id(u.path, u.value), u.path, summarize(u.path, u.value, prov.recency(u.path))))
        else:
            # one handle per parent object; a top-level field stands for itself
            parent = u.path.parent if len(u.path.segments) > 1 else u.path
            omitted_fields[parent] = max(omitted_fields.get(parent, 0), prov.recency(u.path))

    for parent, seq in omitted_fields.items():
        value = _resolve(readable, parent)
        handles.append(Handle(handle_id(parent, value), parent, summarize(parent, value, seq)))
    handles.sort(key=lambda h: (h.path.segments, h.id))

    fields = builder.finish()
    fragment = restrict_schema(schema, _schema_keep(worker.read)) if schema is not None else {}
    return View(
        fields=fields,
        schema_fragment=fragment,
        recent_rejections=_rejections(worker, log_tail),
        handles=tuple(handles),
        budget_limit=limit,
        budget_used=len(canonical_text(fields)),
    )


def _resolve(value: Any, ptr: Pointer) -> Any:
    for s in ptr.segments:
        value = value[int(s)] if isinstance(value, list) else value[s]
    return value


def _truncate(unit: _Unit, schema: Schema) -> tuple[dict, list[str]]:
    """Split an oversized element into its identifying/required part and the rest."""
    pattern = PathPattern(tuple(WILDCARD if s.isdigit() else s for s in unit.path.segments))
    keep = {"id"}
    for frag in subschemas_at(schema, pattern):
        keep.update(frag.get("required", ()))
    kept = {k: v for k, v in unit.value.items() if k in keep}
    rest = sorted(k for k in unit.value if k not in keep)
    return kept, rest


@dataclass
class ExpansionLedger:
    """Per-worker record of issued handles and pending expansions (kernel-owned)."""

    issued: dict[str, dict[str, Pointer]] = field(default_factory=dict)
    pending: dict[str, list[Pointer]] = field(default_factory=dict)

    def issue(self, worker: str, handles: Iterable[Handle]) -> None:
        book = self.issued.setdefault(worker, {})
        for h in handles:
            book[h.id] = h.path

    def knows(self, worker: str, handle_id: str) -> bool:
        return handle_id in self.issued.get(worker, {})

    def take(self, worker: str) -> list[Pointer]:
        return self.pending.pop(worker, [])


def expand(ledger: ExpansionLedger, worker: str, handle_id: str) -> Pointer:
    """Schedule the object behind *handle_id* for *worker*'s next view."""
    path = ledger.issued.get(worker, {}).get(handle_id)
    if path is None:
        raise UnknownHandle(f"handle {handle_id!r} was not issued to {worker!r}")
    queue = ledger.pending.setdefault(worker, [])
    if path not in queue:
        queue.append(path)
    return path
