"""Fault-injection campaigns: one seeded run per injection, aggregated per fault type."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Any, Mapping

from .audit import contaminated
from .kernel import Stage
from .scenario import Scenario, false_claims, load_scenario
from .workers import FaultType, fault_types

DEFAULT_SCENARIO = "builtin:research"

CSV_COLUMNS = [
    "fault_type",
    "injections",
    "fired",
    "injected_accepted",
    "contaminated",
    "contamination_rate",
    "halted",
    "halt_rate",
    "flagged_false",
    "max_commits_to_halt",
    "rejected_syntax",
    "rejected_auth",
    "rejected_apply",
    "rejected_schema",
    "rejected_invariant",
]


class CampaignError(ValueError):
    pass


@dataclass
class FaultRow:
    fault_type: str
    injections: int = 0
    fired: int = 0
    injected_accepted: int = 0
    contaminated: int = 0
    halted: int = 0
    flagged_false: int = 0
    max_commits_to_halt: int = 0
    rejected: dict[str, int] = field(default_factory=lambda: {s.value: 0 for s in Stage})
    halt_reasons: dict[str, int] = field(default_factory=dict)

    def rate(self, n: int) -> float:
        return n / self.injections if self.injections else 0.0

    def flat(self) -> dict[str, Any]:
        return {
            "fault_type": self.fault_type,
            "injections": self.injections,
            "fired": self.fired,
            "injected_accepted": self.injected_accepted,
            "contaminated": self.contaminated,
            "contamination_rate": round(self.rate(self.contaminated), 6),
            "halted": self.halted,
            "halt_rate": round(self.rate(self.halted), 6),
            "flagged_false": self.flagged_false,
            "max_commits_to_halt": self.max_commits_to_halt,
            **{f"rejected_{s.value.lower()}": self.rejected[s.value] for s in Stage},
        }


@dataclass
class CampaignReport:
    rows: list[FaultRow]
    config: dict

    def to_json(self) -> dict:
        return {
            "config": self.config,
            "results": [{**r.flat(), "halt_reasons": dict(sorted(r.halt_reasons.items()))} for r in self.rows],
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow(r.flat())
        return buf.getvalue()

    def row(self, fault: str | FaultType) -> FaultRow:
        name = FaultType(fault).value
        return next(r for r in self.rows if r.fault_type == name)


def parse_config(doc: Any) -> dict:
    if not isinstance(doc, dict):
        raise CampaignError("campaign config must be an object")
    try:
        types = fault_types(doc["fault_type"])
    except KeyError:
        raise CampaignError("campaign config needs 'fault_type'") from None
    except ValueError as exc:
        raise CampaignError(str(exc)) from None
    count = doc.get("count", 200)
    if not isinstance(count, int) or isinstance(count, bool) or count < 0:
        raise CampaignError("'count' must be a non-negative integer")
    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise CampaignError("'seed' must be an integer")
    return {
        "fault_type": [t.value for t in types],
        "count": count,
        "seed": seed,
        "scenario": doc.get("scenario", DEFAULT_SCENARIO),
        "circuit": dict(doc.get("circuit", {})),
    }


def run_seed(seed: int, fault: FaultType, n: int) -> int:
    return seed * 1_000_003 + list(FaultType).index(fault) * 100_003 + n


def run_injection(sc: Scenario, fault: FaultType, seed: int, n: int, circuit: Mapping[str, Any] | None = None) -> dict:
    """One injected run; returns the per-run measurements."""
    rs = run_seed(seed, fault, n)
    workers = sc.workers(rs)
    wrapper = sc.wrap(workers, fault, seed=rs, tag=n)
    circ = {**sc.circuit, **dict(circuit or {})}
    result = sc.run(seed=rs, workers=workers, circuit=circ)
    target = [t for t in result.log if t.worker_id == wrapper.spec.name]
    injected = [target[i] for i in wrapper.fired if i < len(target)]
    onset = next((t.seq for t in injected if t.accepted), None)
    commits = 0
    if onset is not None and result.halt_reason is not None:
        commits = sum(1 for t in result.log if t.seq >= onset and t.accepted and t.worker_id != "kernel")
    return {
        "fired": bool(wrapper.fired),
        "injected": injected,
        "contaminated": contaminated(wrapper.marker, result.initial_state, result.log),
        "halt_reason": result.halt_reason,
        "flagged": bool(false_claims(result.final_state, sc.ground_truth)),
        "commits_to_halt": commits,
        "result": result,
    }


def run_campaign(doc: Any) -> CampaignReport:
    cfg = parse_config(doc)
    sc = load_scenario(cfg["scenario"]) if isinstance(cfg["scenario"], str) else Scenario.from_doc(cfg["scenario"])
    rows = []
    for name in cfg["fault_type"]:
        fault = FaultType(name)
        row = FaultRow(fault.value)
        for n in range(cfg["count"]):
            m = run_injection(sc, fault, cfg["seed"], n, cfg["circuit"])
            row.injections += 1
            row.fired += m["fired"]
            row.injected_accepted += any(t.accepted for t in m["injected"])
            for t in m["injected"]:
                if not t.accepted:
                    row.rejected[t.stage] += 1
            row.contaminated += m["contaminated"]
            if m["halt_reason"] is not None:
                row.halted += 1
                key = m["halt_reason"].split(":")[0]
                row.halt_reasons[key] = row.halt_reasons.get(key, 0) + 1
            row.flagged_false += m["flagged"]
            row.max_commits_to_halt = max(row.max_commits_to_halt, m["commits_to_halt"])
        rows.append(row)
    cfg_out = dict(cfg)
    if not isinstance(cfg_out["scenario"], str):
        cfg_out["scenario"] = "<inline>"
    return CampaignReport(rows, cfg_out)
