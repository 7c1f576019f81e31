"""Shared fixtures: a tiny two-role schema, small generated bundles, and a
canned chat-completion endpoint stub."""

from __future__ import annotations

import json
import threading
from contextlib import contextmanager
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

import calclash as cc


@contextmanager
def canned_endpoint(reply: str, status: int = 200):
    """A local chat-completion endpoint that always returns ``reply``."""

    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            self.rfile.read(int(self.headers.get("Content-Length", 0)))
            if status != 200:
                self.send_response(status)
                self.end_headers()
                return
            body = json.dumps(
                {"choices": [{"message": {"content": reply}}]}
            ).encode()
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def log_message(self, *args):
            pass

    server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield f"http://127.0.0.1:{server.server_port}/v1/chat/completions"
    finally:
        server.shutdown()
        thread.join()

TINY_SCHEMA_DICT = {
    "schema_version": 1,
    "schema_id": "tiny_desk",
    "name": "Tiny Desk Analytics",
    "mission": "Answering small questions with small data",
    "timezone": "UTC",
    "roles": [
        {
            "role_id": "lead",
            "title": "Team Lead",
            "department": "Analytics",
            "responsibilities": ["set direction", "review analyses"],
            "supervisor_role": None,
            "templates": [
                {
                    "template_id": "staff",
                    "topic": "staff meeting",
                    "cadence": "weekly",
                    "duration_minutes": 60,
                    "attendee_pattern": ["role:analyst"],
                    "event_type": "operations",
                    "preferred_weekday": 0,
                },
                {
                    "template_id": "planning",
                    "topic": "planning session",
                    "cadence": "weekly",
                    "duration_minutes": 45,
                    "attendee_pattern": ["role:analyst"],
                    "event_type": "technical",
                    "preferred_weekday": 1,
                },
                {
                    "template_id": "review",
                    "topic": "weekly review",
                    "cadence": "weekly",
                    "duration_minutes": 30,
                    "attendee_pattern": ["role:analyst"],
                    "event_type": "coordination",
                    "preferred_weekday": 2,
                },
            ],
            "principles": [
                {
                    "principle_id": "urgent",
                    "description": "urgent or deadline-bound work first",
                    "weight": 8.0,
                    "trigger": {
                        "op": "any",
                        "args": [
                            {"op": "urgency-flag-set"},
                            {"op": "deadline-within-hours", "hours": 24},
                        ],
                    },
                },
                {
                    "principle_id": "operations",
                    "description": "keep operations running",
                    "weight": 4.0,
                    "trigger": {"op": "event-type-equals", "value": "operations"},
                },
                {
                    "principle_id": "technical",
                    "description": "technical work",
                    "weight": 3.0,
                    "trigger": {"op": "event-type-equals", "value": "technical"},
                },
                {
                    "principle_id": "coordination",
                    "description": "coordination work",
                    "weight": 2.0,
                    "trigger": {"op": "event-type-equals", "value": "coordination"},
                },
            ],
            "conflict_reasons": [
                {
                    "reason_id": "deadline-push",
                    "description": "deadline collides",
                    "transform": [
                        {"op": "set-deadline-marker", "hours_after_start": 6},
                        {"op": "set-urgency", "value": True},
                        {"op": "set-event-type", "value": "operations"},
                    ],
                },
                {
                    "reason_id": "extra-sync",
                    "description": "extra coordination ask",
                    "transform": [
                        {"op": "set-event-type", "value": "coordination"},
                        {"op": "retitle-from-template", "templates": ["Extra sync"]},
                    ],
                },
                {
                    "reason_id": "idle-option",
                    "description": "optional development session",
                    "transform": [
                        {"op": "set-event-type", "value": "professional-development"},
                        {"op": "retitle-from-template", "templates": ["Skills workshop"]},
                    ],
                },
            ],
        },
        {
            "role_id": "analyst",
            "title": "Analyst",
            "department": "Analytics",
            "responsibilities": ["run analyses", "report findings"],
            "supervisor_role": "lead",
            "templates": [
                {
                    "template_id": "standup",
                    "topic": "standup",
                    "cadence": "weekly",
                    "duration_minutes": 30,
                    "attendee_pattern": ["supervisor"],
                    "event_type": "coordination",
                    "preferred_weekday": 0,
                },
                {
                    "template_id": "analysis",
                    "topic": "analysis block",
                    "cadence": "weekly",
                    "duration_minutes": 60,
                    "attendee_pattern": ["peers"],
                    "event_type": "technical",
                    "preferred_weekday": 1,
                },
                {
                    "template_id": "data-sync",
                    "topic": "data sync",
                    "cadence": "weekly",
                    "duration_minutes": 45,
                    "attendee_pattern": ["peers"],
                    "event_type": "operations",
                    "preferred_weekday": 3,
                },
            ],
            "principles": [
                {
                    "principle_id": "urgent",
                    "description": "urgent or deadline-bound work first",
                    "weight": 8.0,
                    "trigger": {
                        "op": "any",
                        "args": [
                            {"op": "urgency-flag-set"},
                            {"op": "deadline-within-hours", "hours": 24},
                        ],
                    },
                },
                {
                    "principle_id": "lead-present",
                    "description": "meetings with the lead matter",
                    "weight": 5.0,
                    "trigger": {"op": "attendee-role-contains", "role": "lead"},
                },
                {
                    "principle_id": "operations",
                    "description": "operational duty",
                    "weight": 3.0,
                    "trigger": {"op": "event-type-equals", "value": "operations"},
                },
                {
                    "principle_id": "technical",
                    "description": "analysis work",
                    "weight": 2.0,
                    "trigger": {"op": "event-type-equals", "value": "technical"},
                },
                {
                    "principle_id": "coordination",
                    "description": "coordination work",
                    "weight": 1.0,
                    "trigger": {"op": "event-type-equals", "value": "coordination"},
                },
            ],
            "conflict_reasons": [
                {
                    "reason_id": "urgent-request",
                    "description": "urgent request lands in the slot",
                    "transform": [
                        {"op": "set-deadline-marker", "hours_after_start": 4},
                        {"op": "set-urgency", "value": True},
                        {"op": "set-event-type", "value": "operations"},
                    ],
                },
                {
                    "reason_id": "lead-pull",
                    "description": "the lead asks for the slot",
                    "transform": [
                        {"op": "add-attendee-of-role", "role": "lead"},
                        {"op": "set-event-type", "value": "coordination"},
                    ],
                },
                {
                    "reason_id": "idle-option",
                    "description": "optional development session",
                    "transform": [
                        {"op": "set-event-type", "value": "professional-development"},
                        {"op": "retitle-from-template", "templates": ["Skills workshop"]},
                    ],
                },
            ],
        },
    ],
}

TINY_PLAN = {"lead": 1, "analyst": 3}


@pytest.fixture(scope="session")
def tiny_schema():
    return cc.schema_from_dict(TINY_SCHEMA_DICT)


@pytest.fixture(scope="session")
def tiny_org(tiny_schema):
    return cc.instantiate_org(tiny_schema, TINY_PLAN, seed=1)


@pytest.fixture(scope="session")
def tiny_bundle(tiny_schema):
    params = cc.GenParams(n_rounds=12, m=4)
    return cc.generate_bundle(tiny_schema, TINY_PLAN, seed=1, params=params)


@pytest.fixture(scope="session")
def tiny_dataset(tiny_bundle):
    profile = tiny_bundle.profiles[1]  # an analyst
    return profile, tiny_bundle.datasets[profile.user_id]
