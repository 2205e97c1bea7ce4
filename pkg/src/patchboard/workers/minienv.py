"""A five-action household world: navigate, pick up, wash, place.

The environment is plain JSON so it can live inside the shared state::

    {"location": "start", "holding": null,
     "objects": {"apple": {"at": "countertop", "clean": false}},
     "receptacles": ["countertop", "sinkbasin", "diningtable"],
     "goal": {"object": "apple", "receptacle": "diningtable", "clean": true},
     "done": false}

Actions: ``goto R``, ``take O from R``, ``clean O with sinkbasin`` and
``put O in/on R``. :func:`env_step` never mutates its input.
"""

from __future__ import annotations

import copy
import re
from typing import Any

from ..state import Pointer, resolve_pointer

SINK = "sinkbasin"

_GOTO = re.compile(r"goto (\w+)")
_TAKE = re.compile(r"take (\w+) from (\w+)")
_CLEAN = re.compile(r"clean (\w+) with (\w+)")
_PUT = re.compile(r"put (\w+) in/on (\w+)")


def new_env(obj: str = "apple", start: str = "countertop", goal: str = "diningtable") -> dict:
    return {
        "location": "start",
        "holding": None,
        "objects": {obj: {"at": start, "clean": False}},
        "receptacles": sorted({start, SINK, goal}),
        "goal": {"object": obj, "receptacle": goal, "clean": True},
        "done": False,
    }


def _goal_met(env: dict) -> bool:
    g = env["goal"]
    o = env["objects"].get(g["object"])
    return o is not None and o["at"] == g["receptacle"] and (o["clean"] or not g["clean"])


def env_step(env: dict, action: str) -> tuple[dict, str, bool, bool]:
    """Returns ``(next_env, observation, admissible, done)``.

    Inadmissible actions return *env* unchanged.
    """
    if env.get("done"):
        return env, "The task is already complete.", False, True
    nxt = copy.deepcopy(env)
    where = env["location"]
    held = env["holding"]

    if m := _GOTO.fullmatch(action):
        (r,) = m.groups()
        if r not in env["receptacles"]:
            return env, f"There is no {r} here.", False, False
        nxt["location"] = r
        seen = sorted(o for o, s in env["objects"].items() if s["at"] == r)
        obs = f"You arrive at {r}." + (f" You see: {', '.join(seen)}." if seen else " It is empty.")
    elif m := _TAKE.fullmatch(action):
        o, r = m.groups()
        obj = env["objects"].get(o)
        if held is not None or obj is None or obj["at"] != r or where != r:
            return env, "Nothing happens.", False, False
        nxt["holding"] = o
        nxt["objects"][o]["at"] = None
        obs = f"You pick up the {o} from the {r}."
    elif m := _CLEAN.fullmatch(action):
        o, r = m.groups()
        if held != o or r != SINK or where != SINK:
            return env, "Nothing happens.", False, False
        nxt["objects"][o]["clean"] = True
        obs = f"You clean the {o} using the {r}."
    elif m := _PUT.fullmatch(action):
        o, r = m.groups()
        if held != o or where != r or r not in env["receptacles"]:
            return env, f"You are not at the {r}." if where != r else "Nothing happens.", False, False
        nxt["holding"] = None
        nxt["objects"][o]["at"] = r
        obs = f"You put the {o} in/on the {r}."
    else:
        return env, "Unknown command.", False, False

    nxt["done"] = _goal_met(nxt)
    return nxt, obs, True, nxt["done"]


def admissible_plan(env: dict) -> list[str]:
    """The shortest admissible action sequence from a fresh env (for tests and docs)."""
    g = env["goal"]
    start = env["objects"][g["object"]]["at"]
    return [
        f"goto {start}",
        f"take {g['object']} from {start}",
        f"goto {SINK}",
        f"clean {g['object']} with {SINK}",
        f"goto {g['receptacle']}",
        f"put {g['object']} in/on {g['receptacle']}",
    ]


def run_actions(env: dict, actions: list[str]) -> list[tuple[str, bool, bool]]:
    trace = []
    for a in actions:
        env, obs, ok, done = env_step(env, a)
        trace.append((obs, ok, done))
    return trace


def verifier_patch(fields: Any, action_path: str) -> list[dict]:
    """Patch a verifier emits after executing the action stored at *action_path*."""
    ptr = Pointer.parse(action_path)
    action = resolve_pointer(fields, ptr)
    env = resolve_pointer(fields, Pointer(("env",)))
    if not isinstance(action, dict) or not isinstance(env, dict):
        return []
    nxt, obs, ok, done = env_step(env, str(action.get("command", "")))
    ops = [
        {"op": "replace", "path": action_path + "/status", "value": "executed" if ok else "inadmissible"},
        {"op": "replace", "path": action_path + "/observation", "value": obs},
    ]
    if ok:
        ops.append({"op": "replace", "path": "/env", "value": nxt})
    if done:
        ops.append({"op": "replace", "path": "/done", "value": True})
    return ops
