import pytest

from patchboard.blueprint import load_blueprint

NOTES_SCHEMA = {
    "type": "object",
    "required": ["notes", "status"],
    "properties": {
        "notes": {"type": "array", "items": {"type": "string", "maxLength": 40}},
        "status": {"type": "string", "enum": ["open", "done"]},
        "count": {"type": "integer", "minimum": 0},
    },
}


def notes_blueprint(**overrides) -> dict:
    """A small two-worker blueprint; keyword arguments replace top-level members."""
    doc = {
        "schema": NOTES_SCHEMA,
        "workers": [
            {
                "name": "writer",
                "read": [{"path": "/notes", "subtree": True}, {"path": "/status"}],
                "write": [{"path": "/notes/-", "ops": ["add"]}, {"path": "/count", "ops": ["add", "replace"]}],
                "view_budget": 400,
            },
            {
                "name": "closer",
                "read": [{"path": "/notes", "subtree": True}, {"path": "/status"}],
                "write": [{"path": "/status", "ops": ["replace"]}],
                "view_budget": 400,
            },
        ],
        "rules": [
            {"trigger": {"path": "/notes"}, "action": "writer", "on_init": True},
            {"trigger": {"path": "/notes/-"}, "action": "closer"},
        ],
        "budgets": {"max_worker_invocations": 40},
        "initial_state": {"notes": [], "status": "open"},
    }
    doc.update(overrides)
    return doc


@pytest.fixture
def blueprint():
    return load_blueprint(notes_blueprint())
