"""Scenario files: a blueprint, a request, and an implementation for every worker.

::

    {
      "blueprint": "bp.json" | {...inline...},
      "request": ...,
      "request_variants": [...],          # optional, picked by seed
      "workers": {
        "planner":  {"script": [...], "fallthrough": []},
        "actor":    {"script_file": "actor.json"},
        "verifier": {"builtin": "minienv.verifier"},
        "tool":     {"subprocess": ["python3", "tool.py"]}
      },
      "seed": 0,
      "circuit": {"invalid_threshold": 2},
      "max_invocations": 200,
      "ground_truth": {"path": "/claims/*", "key": ["subject", "predicate"],
                       "value": "object", "facts": [...]},
      "faults": {"InvalidJSON": {"target": "researcher", "fire_on": [0]}, ...}
    }

``builtin:<name>`` refers to a scenario shipped with the package.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

from .blueprint import Blueprint, BlueprintRejected
from .contracts import PathPattern, expand_pattern
from .kernel import RunResult, run
from .report import ValidationReport
from .blueprint import validate_blueprint
from .state import parse_json, resolve_pointer
from .workers import FaultType, FaultWrapper, ScriptedWorker, SubprocessWorker, builtin

BUILTIN_PREFIX = "builtin:"


class ScenarioError(ValueError):
    pass


def builtin_scenarios() -> list[str]:
    root = resources.files("patchboard").joinpath("data/scenarios")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def _read_json(path: Path) -> Any:
    try:
        return parse_json(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc}") from None
    except ValueError as exc:
        raise ScenarioError(f"{path}: {exc}") from None


@dataclass
class Scenario:
    doc: dict
    blueprint_doc: dict
    base_dir: Path = Path(".")
    name: str = "scenario"
    _blueprint: Blueprint | None = field(default=None, repr=False)

    @classmethod
    def from_doc(cls, doc: Any, base_dir: Path | str = ".", name: str = "scenario") -> "Scenario":
        if not isinstance(doc, dict):
            raise ScenarioError("scenario must be a JSON object")
        for key in ("blueprint", "workers"):
            if key not in doc:
                raise ScenarioError(f"scenario missing {key!r}")
        base = Path(base_dir)
        bp = doc["blueprint"]
        if isinstance(bp, str):
            bp = _read_json(base / bp)
        if not isinstance(bp, dict):
            raise ScenarioError("blueprint must be an object or a path to one")
        return cls(doc, bp, base, doc.get("name", name))

    @property
    def seed(self) -> int:
        return int(self.doc.get("seed", 0))

    @property
    def circuit(self) -> dict:
        return dict(self.doc.get("circuit", {}))

    @property
    def max_invocations(self) -> int | None:
        return self.doc.get("max_invocations")

    @property
    def faults(self) -> dict:
        return dict(self.doc.get("faults", {}))

    @property
    def ground_truth(self) -> dict | None:
        return self.doc.get("ground_truth")

    def blueprint(self) -> Blueprint:
        """The validated blueprint; raises :class:`BlueprintRejected`."""
        if self._blueprint is None:
            result = validate_blueprint(self.blueprint_doc)
            if isinstance(result, ValidationReport):
                raise BlueprintRejected(result)
            self._blueprint = result
        return self._blueprint

    def request(self, seed: int | None = None) -> Any:
        variants = self.doc.get("request_variants")
        if variants:
            return random.Random(f"request:{self.seed if seed is None else seed}").choice(variants)
        return self.doc.get("request")

    def workers(self, seed: int | None = None) -> dict[str, Any]:
        bp = self.blueprint()
        seed = self.seed if seed is None else seed
        out = {}
        bindings = self.doc["workers"]
        for name, spec in bp.workers.items():
            if name not in bindings:
                raise ScenarioError(f"no binding for worker {name!r}")
            out[name] = self._bind(name, bindings[name], spec, bp, seed)
        return out

    def _bind(self, name: str, binding: Any, spec, bp: Blueprint, seed: int):
        if not isinstance(binding, dict):
            raise ScenarioError(f"binding for {name!r} must be an object")
        try:
            if "script" in binding:
                return ScriptedWorker.from_json(binding)
            if "script_file" in binding:
                return ScriptedWorker.from_json(_read_json(self.base_dir / binding["script_file"]))
            if "builtin" in binding:
                opts = {k: v for k, v in binding.items() if k != "builtin"}
                opts.setdefault("seed", seed)
                return builtin(binding["builtin"], spec, bp.schema, opts)
            if "subprocess" in binding:
                return SubprocessWorker(binding["subprocess"], binding.get("timeout"))
        except (ValueError, KeyError) as exc:
            raise ScenarioError(f"worker {name!r}: {exc}") from None
        raise ScenarioError(f"worker {name!r}: binding needs script, script_file, builtin or subprocess")

    def wrap(self, workers: dict, fault: FaultType | str, *, seed: int, tag: int) -> FaultWrapper:
        """Install a fault wrapper around this scenario's target worker for *fault*."""
        fault = FaultType(fault)
        cfg = self.faults.get(fault.value)
        if cfg is None:
            raise ScenarioError(f"scenario {self.name!r} declares no {fault.value} injection point")
        target = cfg["target"]
        bp = self.blueprint()
        fire_on = cfg.get("fire_on", [0])
        if isinstance(fire_on, dict):  # {"choose": [0, 1, 2]} picks one index by seed
            fire_on = [random.Random(f"fire:{seed}:{tag}").choice(fire_on["choose"])]
        w = FaultWrapper(
            workers[target],
            fault,
            bp.workers[target],
            bp.schema,
            fire_on=frozenset(fire_on),
            fire_from=cfg.get("fire_from"),
            params=cfg,
            seed=seed,
            tag=tag,
        )
        workers[target] = w
        return w

    def run(self, *, seed: int | None = None, workers: dict | None = None, **kw) -> RunResult:
        kw.setdefault("circuit", self.circuit)
        if self.max_invocations is not None:
            kw.setdefault("max_invocations", self.max_invocations)
        return run(self.blueprint(), self.request(seed), workers or self.workers(seed), **kw)


def load_scenario(ref: str | Path) -> Scenario:
    text = str(ref)
    if text.startswith(BUILTIN_PREFIX):
        name = text[len(BUILTIN_PREFIX):]
        res = resources.files("patchboard").joinpath(f"data/scenarios/{name}.json")
        if not res.is_file():
            raise ScenarioError(f"no builtin scenario {name!r}; known: {builtin_scenarios()}")
        return Scenario.from_doc(parse_json(res.read_text(encoding="utf-8")), ".", name)
    path = Path(ref)
    return Scenario.from_doc(_read_json(path), path.parent, path.stem)


def false_claims(state: Any, truth: Mapping[str, Any] | None) -> list[Any]:
    """Claims in *state* that contradict the ground-truth fact table."""
    if not truth:
        return []
    keys = truth.get("key", [])
    value_key = truth["value"]
    table = {tuple(json.dumps(f.get(k), sort_keys=True) for k in keys): f.get(value_key) for f in truth.get("facts", [])}
    out = []
    for loc in expand_pattern(state, PathPattern.parse(truth["path"])):
        claim = resolve_pointer(state, loc)
        if not isinstance(claim, dict):
            continue
        k = tuple(json.dumps(claim.get(x), sort_keys=True) for x in keys)
        if k in table and claim.get(value_key) != table[k]:
            out.append(claim)
    return out
