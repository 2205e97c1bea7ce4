"""Command-line entry points: ``run``, ``replay``, ``inject``, ``validate-blueprint``.

Exit codes for ``run``: 0 normal end, 1 I/O or parse error, 2 blueprint
rejected, 3 the run halted. ``replay`` exits 0 iff no divergence was found.
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import sys
from pathlib import Path
from typing import Any, Sequence

from .blueprint import BlueprintRejected, validate_blueprint
from .campaign import CampaignError, run_campaign
from .kernel import read_log, replay, write_log
from .report import ValidationReport
from .scenario import ScenarioError, load_scenario
from .state import canonical_text, parse_json

EXIT_OK, EXIT_IO, EXIT_REJECTED, EXIT_HALT = 0, 1, 2, 3
LOG_NAME = "transactions.ndjson"


def _out_dir(arg: str | None, default_name: str) -> Path:
    if arg:
        return Path(arg)
    base = os.environ.get("PATCHBOARD_LOG_DIR")
    return Path(base) / default_name if base else Path("patchboard-out") / default_name


def _load_json(path: str) -> Any:
    return parse_json(Path(path).read_text(encoding="utf-8"))


def _err(msg: str) -> None:
    print(f"patchboard: {msg}", file=sys.stderr)


def _circuit_flags(args: argparse.Namespace) -> dict:
    out = {}
    if getattr(args, "circuit_invalid_threshold", None) is not None:
        out["invalid_threshold"] = args.circuit_invalid_threshold
    if getattr(args, "circuit_window", None) is not None:
        out["cycle_window"] = args.circuit_window
    return out


def _effective_blueprint(doc: dict, circuit: dict, max_invocations: int | None, budget: int | None) -> dict:
    """The blueprint as actually run, with overrides folded in so replay needs no flags."""
    doc = copy.deepcopy(doc)
    budgets = doc.setdefault("budgets", {})
    if circuit:
        budgets["circuit"] = {**budgets.get("circuit", {}), **circuit}
    if max_invocations is not None:
        budgets["max_worker_invocations"] = max_invocations
    if budget is not None:
        for w in doc.get("workers", []):
            w["view_budget"] = budget
    return doc


def _write_json(path: Path, value: Any) -> None:
    path.write_text(json.dumps(value, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


def cmd_run(args: argparse.Namespace) -> int:
    try:
        sc = load_scenario(args.scenario)
    except ScenarioError as exc:
        _err(str(exc))
        return EXIT_IO
    circuit = {**sc.circuit, **_circuit_flags(args)}
    max_inv = args.max_invocations if args.max_invocations is not None else sc.max_invocations
    bp_doc = _effective_blueprint(sc.blueprint_doc, circuit, max_inv, args.budget)
    try:
        result = validate_blueprint(bp_doc)
        if isinstance(result, ValidationReport):
            raise BlueprintRejected(result)
        sc.blueprint_doc, sc._blueprint = bp_doc, result
        seed = args.seed if args.seed is not None else sc.seed
        result = sc.run(seed=seed, circuit={}, timeout=args.timeout if args.timeout is not None else "blueprint")
    except BlueprintRejected as exc:
        print(json.dumps(exc.report.to_json(), indent=2))
        return EXIT_REJECTED
    except ScenarioError as exc:
        _err(str(exc))
        return EXIT_IO

    out = _out_dir(args.out, sc.name)
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_log(out / LOG_NAME, result.log)
        _write_json(out / "initial_state.json", result.initial_state)
        _write_json(out / "blueprint.json", bp_doc)
        _write_json(out / "final_state.json", result.final_state)
    except OSError as exc:
        _err(f"cannot write output: {exc}")
        return EXIT_IO
    summary = {**result.summary(), "log": str(out / LOG_NAME), "warnings": result.warnings}
    print(json.dumps(summary, indent=2))
    return EXIT_HALT if result.halt_reason is not None else EXIT_OK


def cmd_replay(args: argparse.Namespace) -> int:
    try:
        log, notes = read_log(args.log)
        bp_doc = _load_json(args.blueprint)
        initial = _load_json(args.initial_state)
    except (OSError, ValueError) as exc:
        _err(str(exc))
        return EXIT_IO
    try:
        report = replay(
            initial,
            bp_doc,
            log,
            circuit=_circuit_flags(args),
            max_invocations=args.max_invocations,
            budget=args.budget,
            notes=notes,
        )
    except BlueprintRejected as exc:
        print(json.dumps(exc.report.to_json(), indent=2))
        return EXIT_REJECTED
    print(json.dumps({"transactions": len(log), **report.to_json()}, indent=2))
    return EXIT_OK if report.ok else EXIT_HALT


def cmd_inject(args: argparse.Namespace) -> int:
    try:
        doc = _load_json(args.campaign)
        if args.seed is not None and isinstance(doc, dict):
            doc["seed"] = args.seed
        if isinstance(doc, dict) and isinstance(doc.get("scenario"), str) and not doc["scenario"].startswith("builtin:"):
            doc["scenario"] = str((Path(args.campaign).parent / doc["scenario"]).resolve())
        if isinstance(doc, dict) and (circ := _circuit_flags(args)):
            doc["circuit"] = {**doc.get("circuit", {}), **circ}
        report = run_campaign(doc)
    except (OSError, ValueError, CampaignError, ScenarioError) as exc:
        _err(str(exc))
        return EXIT_IO
    except BlueprintRejected as exc:
        print(json.dumps(exc.report.to_json(), indent=2))
        return EXIT_REJECTED
    out = _out_dir(args.out, "campaign")
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "campaign.csv").write_text(report.to_csv(), encoding="utf-8")
        _write_json(out / "campaign.json", report.to_json())
    except OSError as exc:
        _err(f"cannot write output: {exc}")
        return EXIT_IO
    sys.stdout.write(report.to_csv())
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        doc = _load_json(args.blueprint)
    except (OSError, ValueError) as exc:
        _err(str(exc))
        return EXIT_IO
    result = validate_blueprint(doc)
    if isinstance(result, ValidationReport):
        print(json.dumps(result.to_json(), indent=2))
        return EXIT_REJECTED
    print(canonical_text({"ok": True, "workers": sorted(result.workers), "rules": len(result.rules)}))
    return EXIT_OK


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--circuit-invalid-threshold", type=int, help="rejections in a row before repair/halt")
    p.add_argument("--circuit-window", type=int, help="loop-detection window in committed state hashes")
    p.add_argument("--max-invocations", type=int, help="global worker-invocation budget for the run")
    p.add_argument("--budget", type=int, help="view budget in characters for every worker")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="patchboard", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario and write its transaction log")
    p.add_argument("scenario", help="scenario JSON file, or builtin:<name>")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory (default: $PATCHBOARD_LOG_DIR/<scenario>)")
    p.add_argument("--timeout", type=float, help="per-invocation worker timeout in seconds")
    _common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("replay", help="replay a transaction log and report divergences")
    p.add_argument("log")
    p.add_argument("blueprint")
    p.add_argument("initial_state")
    _common(p)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("inject", help="run a fault-injection campaign")
    p.add_argument("campaign", help="campaign config JSON: {fault_type, count, seed, scenario}")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory for campaign.csv and campaign.json")
    _common(p)
    p.set_defaults(func=cmd_inject)

    p = sub.add_parser("validate-blueprint", help="check a blueprint against the meta-schema")
    p.add_argument("blueprint")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
