"""Worker implementations: scripted, built-in, fault-injecting, and the MiniEnv world."""

from .builtin import BUILTINS, FuzzWorker, MiniEnvVerifier, NoopWorker, SubprocessWorker, builtin, random_value
from .faults import FaultType, FaultWrapper, fault_types, inject, marker
from .minienv import admissible_plan, env_step, new_env, run_actions
from .scripted import ScriptedWorker, ScriptEntry, substitute

__all__ = [
    "BUILTINS",
    "FaultType",
    "FaultWrapper",
    "FuzzWorker",
    "MiniEnvVerifier",
    "NoopWorker",
    "ScriptEntry",
    "ScriptedWorker",
    "SubprocessWorker",
    "admissible_plan",
    "builtin",
    "env_step",
    "fault_types",
    "inject",
    "marker",
    "new_env",
    "random_value",
    "run_actions",
    "substitute",
]
