from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

from .state import Pointer


@dataclass(frozen=True)
class Violation:
    path: Pointer
    keyword: str
    message: str

    def to_json(self) -> dict:
        return {"path": self.path.render(), "keyword_or_rule": self.keyword, "message": self.message}

    def __str__(self) -> str:
        return f"{self.path.render() or '/'}: [{self.keyword}] {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()
    notes: tuple[str, ...] = field(default=(), compare=False)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok

    @classmethod
    def of(cls, violations: Iterable[Violation], notes: Iterable[str] = ()) -> "ValidationReport":
        return cls(tuple(violations), tuple(notes))

    def merged(self, other: "ValidationReport") -> "ValidationReport":
        return ValidationReport(self.violations + other.violations, self.notes + other.notes)

    def to_json(self) -> dict:
        out: dict = {"ok": self.ok, "violations": [v.to_json() for v in self.violations]}
        if self.notes:
            out["notes"] = list(self.notes)
        return out

    def describe(self) -> str:
        lines = ["ok" if self.ok else f"{len(self.violations)} violation(s)"]
        lines += [f"  {v}" for v in self.violations]
        lines += [f"  note: {n}" for n in self.notes]
        return "\n".join(lines)


OK = ValidationReport()
