"""Acceptance criteria, one test each.

Every test prints a single ``[PASS]``/``[FAIL]`` line before asserting, so
``pytest -s`` or ``pytest -v`` output doubles as the acceptance report.
"""

import json
import os
import random
import subprocess
import sys
import time
from pathlib import Path

import jsonschema
import pytest

from patchboard.audit import attribution_violations, trajectory
from patchboard.cli import main
from patchboard.fuzz import FUZZ_CIRCUIT, random_scenario
from patchboard.kernel import read_log
from patchboard.scenario import Scenario, load_scenario
from patchboard.state import canonical_text
from strategies import compare_with_reference

STRUCTURAL = ["InvalidJSON", "BadPathType", "UnauthorizedWrite"]
INJECTIONS = 200


@pytest.fixture
def say(capsys):
    def emit(n: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}")

    return emit


def inject(tmp_path: Path, fault_types, count=INJECTIONS, seed=0) -> dict:
    cfg = tmp_path / "campaign.json"
    cfg.write_text(json.dumps({"fault_type": fault_types, "count": count, "seed": seed}))
    out = tmp_path / "out"
    code = main(["inject", str(cfg), "--out", str(out)])
    assert code == 0
    return {r["fault_type"]: r for r in json.loads((out / "campaign.json").read_text())["results"]}


# ---------------------------------------------------------------------------
# shared fuzz corpus for criteria 4 and 6


@pytest.fixture(scope="module")
def fuzz_corpus():
    """At least 100 random scenarios and 10,000 worker proposals."""
    started = time.perf_counter()
    runs, proposals, seed = [], 0, 0
    while len(runs) < 100 or proposals < 10_000:
        sc = Scenario.from_doc(random_scenario(seed), name=f"fuzz-{seed}")
        result = sc.run(seed=seed, circuit=FUZZ_CIRCUIT)
        runs.append((sc, result))
        proposals += result.counters.invocations
        seed += 1
    return runs, proposals, time.perf_counter() - started


# ---------------------------------------------------------------------------


def test_criterion_1_structural_faults_never_contaminate(tmp_path, say, capsys):
    started = time.perf_counter()
    rows = inject(tmp_path, STRUCTURAL)
    elapsed = time.perf_counter() - started
    capsys.readouterr()
    counts = {t: (rows[t]["fired"], rows[t]["contaminated"]) for t in STRUCTURAL}
    ok = all(f == INJECTIONS and c == 0 for f, c in counts.values()) and elapsed < 60
    detail = ", ".join(f"{t} {c}/{f} contaminated" for t, (f, c) in counts.items())
    say(1, ok, f"{detail}; {elapsed:.1f}s (limit 60s)")
    assert ok


def test_criterion_2_cycles_halt_within_window(tmp_path, say, capsys):
    rows = inject(tmp_path, ["CycleHalt"])
    capsys.readouterr()
    row = rows["CycleHalt"]
    window = load_scenario("builtin:research").blueprint().circuit.cycle_window
    limit = 2 + window
    ok = (
        row["fired"] == INJECTIONS
        and row["halted"] == INJECTIONS
        and row["halt_reasons"] == {"CycleDetected": INJECTIONS}
        and row["max_commits_to_halt"] <= limit
    )
    say(2, ok, f"halted {row['halted']}/{INJECTIONS} by {row['halt_reasons']}, "
               f"worst {row['max_commits_to_halt']} commits from onset (limit {limit})")
    assert ok


def test_criterion_3_false_claims_pass_the_kernel(tmp_path, say, capsys):
    rows = inject(tmp_path, ["FalseClaim"])
    capsys.readouterr()
    row = rows["FalseClaim"]
    rejected = sum(v for k, v in row.items() if k.startswith("rejected_"))
    ok = row["injected_accepted"] == INJECTIONS and row["flagged_false"] == INJECTIONS and rejected == 0
    say(3, ok, f"accepted {row['injected_accepted']}/{INJECTIONS}, kernel rejections {rejected}, "
               f"flagged by ground truth {row['flagged_false']}/{INJECTIONS}")
    assert ok


def test_criterion_4_schema_preserved_under_fuzzing(fuzz_corpus, say):
    runs, proposals, elapsed = fuzz_corpus
    started = time.perf_counter()
    states = violations = 0
    for sc, result in runs:
        # an independent validator, not the kernel's own
        validator = jsonschema.Draft202012Validator(sc.blueprint().schema.doc)
        for _, state in trajectory(result.initial_state, result.log):
            states += 1
            violations += not validator.is_valid(state)
    elapsed += time.perf_counter() - started
    ok = len(runs) >= 100 and proposals >= 10_000 and violations == 0 and elapsed < 300
    say(4, ok, f"{proposals} proposals over {len(runs)} scenarios, {states} committed states, "
               f"{violations} schema violations; {elapsed:.1f}s (limit 300s)")
    assert ok


def _tamper(line: str, rng: random.Random) -> str | None:
    """Change one ASCII byte inside a logged patch value; None if there is nothing to change."""
    doc = json.loads(line)
    patch = doc["patch"]
    if isinstance(patch, str):
        spots = [("raw", i) for i, ch in enumerate(patch) if ch.isascii() and ch.isalnum()]
    elif isinstance(patch, list):
        spots = []
        for k, op in enumerate(patch):
            if isinstance(op, dict) and "value" in op:
                spots.extend(("op", k, i) for i in range(len(json.dumps(op["value"], separators=(",", ":"), ensure_ascii=False))))
    else:
        return None
    rng.shuffle(spots)
    for spot in spots:
        if spot[0] == "raw":
            text, i = patch, spot[1]
        else:
            text, i = json.dumps(patch[spot[1]]["value"], separators=(",", ":"), ensure_ascii=False), spot[2]
        ch = text[i]
        if not (ch.isascii() and ch.isalnum()):
            continue
        pool = "0123456789" if ch.isdigit() else "abcdefghijklmnopqrstuvwxyz"
        new = text[:i] + rng.choice([c for c in pool if c != ch]) + text[i + 1:]
        try:
            value = new if spot[0] == "raw" else json.loads(new)
        except ValueError:
            continue
        if spot[0] == "raw":
            doc["patch"] = value
        else:
            doc["patch"][spot[1]]["value"] = value
        out = canonical_text(doc)
        if len(out) == len(line) and sum(a != b for a, b in zip(out, line)) == 1:
            return out
        doc = json.loads(line)
        patch = doc["patch"]
    return None


def test_criterion_5_replay_fidelity_and_tamper_detection(tmp_path, say, capsys):
    rng = random.Random(5)
    runs = []
    for k in range(100):
        seed = 1000 + k
        path = tmp_path / f"scenario-{seed}.json"
        path.write_text(json.dumps(random_scenario(seed)))
        out = tmp_path / f"run-{seed}"
        main(["run", str(path), "--seed", str(seed), "--out", str(out)])
        runs.append(out)
    capsys.readouterr()

    def replay_code(out: Path, log: Path) -> int:
        code = main(["replay", str(log), str(out / "blueprint.json"), str(out / "initial_state.json")])
        capsys.readouterr()
        return code

    divergent = sum(replay_code(out, out / "transactions.ndjson") != 0 for out in runs)

    detected = trials = 0
    while trials < 100:
        out = rng.choice(runs)
        lines = (out / "transactions.ndjson").read_text().splitlines()
        i = rng.randrange(len(lines))
        tampered = _tamper(lines[i], rng)
        if tampered is None:
            continue
        trials += 1
        lines[i] = tampered
        log = tmp_path / "tampered.ndjson"
        log.write_text("\n".join(lines) + "\n")
        detected += replay_code(out, log) != 0

    ok = divergent == 0 and detected == 100
    say(5, ok, f"{100 - divergent}/100 seeded runs replay clean; {detected}/{trials} single-byte tampers detected")
    assert ok


def test_criterion_6_attribution(fuzz_corpus, say):
    runs, _, _ = fuzz_corpus
    commits = 0
    found = []
    for sc, result in runs:
        commits += result.counters.accepted
        report = attribution_violations(sc.blueprint(), result.initial_state, result.log)
        found.extend(report.violations)
    ok = not found and commits > 0
    say(6, ok, f"{commits} committed transactions over {len(runs)} runs, {len(found)} attribution violations")
    assert ok


def test_criterion_7_rfc6902_reference_agreement(say):
    results = [compare_with_reference(seed) for seed in range(1000)]
    mismatches = sum(not agree for agree, _ in results)
    applied = sum(ok for _, ok in results)
    ok = mismatches == 0
    say(7, ok, f"1000 random (state, patch) pairs, {mismatches} mismatches vs the reference applier "
               f"({applied} applied, {1000 - applied} failed in both)")
    assert ok


def test_criterion_8_determinism(tmp_path, say):
    scenario = tmp_path / "fuzz.json"
    scenario.write_text(json.dumps(random_scenario(8)))
    digests = {}
    for target in ("builtin:research", str(scenario)):
        logs = []
        for k in range(3):
            out = tmp_path / f"d-{len(digests)}-{k}"
            env = {**os.environ, "PYTHONHASHSEED": str(k + 1)}
            subprocess.run(
                [sys.executable, "-m", "patchboard", "run", target, "--seed", "42", "--out", str(out)],
                check=False, capture_output=True, env=env,
            )
            logs.append((out / "transactions.ndjson").read_bytes())
        digests[target] = logs
    identical = {t: len(set(v)) == 1 and len(v[0]) > 0 for t, v in digests.items()}
    ok = all(identical.values())
    say(8, ok, "; ".join(f"{'builtin research' if t.startswith('builtin') else 'fuzz scenario'}: "
                         f"3 runs {'byte-identical' if v else 'DIFFER'}" for t, v in identical.items()))
    assert ok


def test_criterion_9_clean_and_place_trace(tmp_path, say, capsys):
    out = tmp_path / "cp"
    code = main(["run", "builtin:clean_and_place", "--out", str(out)])
    capsys.readouterr()
    log, _ = read_log(out / "transactions.ndjson")
    final = json.loads((out / "final_state.json").read_text())

    def marks(t, status):
        return t.worker_id == "verifier" and t.accepted and any(
            op.get("path", "").endswith("/status") and op.get("value") == status for op in t.patch
        )

    def command(t):
        idx = t.event.path.segments[1]
        return final["actions"][int(idx)]["command"]

    rejected_puts = [t for t in log if marks(t, "inadmissible") and command(t).startswith("put ")]
    shape = False
    if len(rejected_puts) == 1:
        r = rejected_puts[0]
        after = [t for t in log if t.seq > r.seq]
        shape = bool(after) and after[0].worker_id == "repairer" and after[0].accepted and any(
            marks(t, "executed") and command(t) == command(r) for t in after[1:]
        )
    ok = code == 0 and final["done"] is True and shape
    say(9, ok, f"done={final['done']}, verifier-rejected placements {len(rejected_puts)}, "
               f"repair then successful retry: {shape}")
    assert ok
