"""Decision agents behind one interface: privileged oracle, uniform random,
greedy heuristics, and a remote chat-endpoint adapter.

Every agent returns raw text in the environment's output grammar.  The oracle
is the only code path that receives the hidden priority principles at run
time; it certifies generator/scorer consistency.  The remote adapter renders
observations through a configurable prompt template and never crashes an
episode: exhausted retries return a sentinel the environment scores invalid.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from importlib import resources

import requests

from .calgen import Event
from .env import Observation
from .jsonio import substream
from .schema import DecisionContext, OrgChart, UserProfile, principle_score

logger = logging.getLogger(__name__)

HEURISTIC_RULES = ("most-attendees", "earliest-start", "senior-attendee-first")

FAILURE_SENTINEL = "<transport-failure/>"


def _decision_text(accept: str, ranking: list[str], rationale: str) -> str:
    declines = [e for e in ranking if e != accept]
    return (
        "<decision>\n"
        f"accept: {accept}\n"
        f"decline: {', '.join(declines)}\n"
        f"ranking: {' > '.join(ranking)}\n"
        f"rationale: {rationale}\n"
        "</decision>"
    )


class OracleAgent:
    """Privileged baseline holding the hidden principles.

    Accepts the argmax of the weighted principle score over the observed
    events, ranks score-descending with event-id lexicographic tie-break,
    and never touches the hub.
    """

    kind = "oracle"

    def __init__(self, profile: UserProfile, org: OrgChart):
        self.profile = profile
        self.ctx = DecisionContext(org)

    def act(self, obs: Observation) -> str:
        events = [Event.from_dict(d) for d in obs.conflicts]
        scores = {
            e.event_id: principle_score(self.profile, e, self.ctx) for e in events
        }
        ranking = [
            e.event_id
            for e in sorted(events, key=lambda e: (-scores[e.event_id], e.event_id))
        ]
        return _decision_text(
            ranking[0], ranking, "highest weighted-principle score"
        )


class RandomAgent:
    """Uniform accept choice and uniform random ranking, deterministic per
    (seed, episode salt, round index)."""

    kind = "random"

    def __init__(self, seed: int, salt: str = ""):
        self.seed = seed
        self.salt = salt

    def act(self, obs: Observation) -> str:
        rng = substream(self.seed, "random-agent", self.salt, str(obs.round_index))
        ids = [d["event_id"] for d in obs.conflicts]
        ranking = list(ids)
        rng.shuffle(ranking)
        accept = rng.choice(ids)
        return _decision_text(accept, ranking, "random baseline")


class HeuristicAgent:
    """Deterministic rule-based baseline; ties break on event-id order."""

    def __init__(self, rule: str, org: OrgChart | None = None):
        if rule not in HEURISTIC_RULES:
            raise ValueError(f"unknown heuristic rule {rule!r}")
        if rule == "senior-attendee-first" and org is None:
            raise ValueError("senior-attendee-first needs an org chart")
        self.rule = rule
        self.org = org
        self.kind = f"heuristic:{rule}"

    def _seniority(self, person: str) -> int:
        # Distance to the org root; smaller is more senior.  Unknown people
        # (externals) rank least senior.
        depth = 0
        by_name = {m.person_name: m for m in self.org.members}
        m = by_name.get(person)
        if m is None:
            return 99
        while m.supervisor is not None:
            depth += 1
            m = by_name[m.supervisor]
        return depth

    def _key(self, d: dict):
        if self.rule == "most-attendees":
            return (-len(d["attendees"]), d["event_id"])
        if self.rule == "earliest-start":
            return (d["start"], d["event_id"])
        best = min((self._seniority(a) for a in d["attendees"]), default=99)
        return (best, d["event_id"])

    def act(self, obs: Observation) -> str:
        ranking = [d["event_id"] for d in sorted(obs.conflicts, key=self._key)]
        return _decision_text(ranking[0], ranking, f"rule: {self.rule}")


# ---------------------------------------------------------------------------
# Remote chat-endpoint adapter
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RemoteEndpointConfig:
    base_url: str
    model: str
    auth_env_var: str = "CALCLASH_API_TOKEN"
    temperature: float = 0.7
    max_output_tokens: int = 2048
    timeout: float = 60.0
    retry_budget: int = 2
    prompt_template: str = "default"

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")
        if self.retry_budget < 0:
            raise ValueError("retry budget must be >= 0")


def load_prompt_template(name: str) -> str:
    ref = resources.files("calclash").joinpath(f"data/prompts/{name}.txt")
    return ref.read_text(encoding="utf-8")


def _format_events(conflicts: list[dict]) -> str:
    lines = []
    for d in conflicts:
        extras = []
        if d.get("urgency"):
            extras.append("URGENT")
        if d.get("deadline_marker"):
            extras.append(f"deadline {d['deadline_marker']}")
        suffix = f" [{', '.join(extras)}]" if extras else ""
        lines.append(
            f"- {d['event_id']}: \"{d['title']}\" {d['start']}..{d['end']} "
            f"type={d['event_type']} modality={d['modality']} "
            f"attendees={', '.join(d['attendees'])}{suffix}"
        )
    return "\n".join(lines)


def _format_history(history: list[dict]) -> str:
    if not history:
        return "(no prior rounds)"
    lines = []
    for h in history:
        titles = {e["event_id"]: e["title"] for e in h["events"]}
        if h["accepted"]:
            lines.append(
                f"- round {h['round_id']}: accepted \"{titles.get(h['accepted'], '?')}\"; "
                f"declined {len(h['declined'])} other event(s)"
            )
        else:
            lines.append(f"- round {h['round_id']}: no valid decision was made")
    return "\n".join(lines)


def _format_hub(snapshot: list[dict]) -> str:
    if not snapshot:
        return "(empty)"
    return "\n".join(f"- {e['entry_id']}: {e['text']}" for e in snapshot)


def render_prompt(template: str, obs: Observation) -> str:
    ctx = obs.context or {}
    return template.format(
        org_name=ctx.get("org_name", "the organization"),
        mission=ctx.get("mission", ""),
        user_name=ctx.get("user_name", "the user"),
        responsibilities="; ".join(ctx.get("responsibilities", [])),
        org_chart=ctx.get("org_chart_text", ""),
        history=_format_history(obs.history),
        conflicts=_format_events(obs.conflicts),
        hub=_format_hub(obs.hub_snapshot),
        round_index=obs.round_index,
        turn_index=obs.turn_index,
        feedback="\n".join(obs.feedback) if obs.feedback else "(none)",
    )


class RemoteAgent:
    """One chat-style HTTP request per turn against an external endpoint."""

    def __init__(self, cfg: RemoteEndpointConfig, session: requests.Session | None = None):
        self.cfg = cfg
        self.kind = f"remote:{cfg.model}"
        self.session = session or requests.Session()
        self.template = load_prompt_template(cfg.prompt_template)

    def act(self, obs: Observation) -> str:
        prompt = render_prompt(self.template, obs)
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.cfg.auth_env_var, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        payload = {
            "model": self.cfg.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.cfg.temperature,
            "max_tokens": self.cfg.max_output_tokens,
        }
        last_error = None
        for attempt in range(self.cfg.retry_budget + 1):
            try:
                resp = self.session.post(
                    self.cfg.base_url,
                    json=payload,
                    headers=headers,
                    timeout=self.cfg.timeout,
                )
                resp.raise_for_status()
                body = resp.json()
                return body["choices"][0]["message"]["content"]
            except Exception as exc:  # transport or shape failure; keep the run alive
                last_error = exc
                logger.warning(
                    "remote request failed (attempt %d/%d): %s",
                    attempt + 1,
                    self.cfg.retry_budget + 1,
                    exc,
                )
        logger.error("retry budget exhausted for %s: %s", self.cfg.base_url, last_error)
        return FAILURE_SENTINEL


def make_agent(
    spec: str,
    seed: int = 0,
    profile: UserProfile | None = None,
    org: OrgChart | None = None,
    remote_cfg: RemoteEndpointConfig | None = None,
    salt: str = "",
):
    """Build an agent from a spec string: oracle | random | heuristic:<rule>
    | remote."""
    if spec == "oracle":
        if profile is None or org is None:
            raise ValueError("oracle agent needs the user profile and org chart")
        return OracleAgent(profile, org)
    if spec == "random":
        return RandomAgent(seed, salt=salt)
    if spec.startswith("heuristic:"):
        return HeuristicAgent(spec.split(":", 1)[1], org=org)
    if spec == "remote":
        if remote_cfg is None:
            raise ValueError("remote agent needs a RemoteEndpointConfig")
        return RemoteAgent(remote_cfg)
    raise ValueError(f"unknown agent spec {spec!r}")
