"""Sequential decision environment with the strategy-hub memory tool.

One episode walks a conflict dataset round by round.  Within a round the
agent gets up to K turns; hub actions (list / update the capacity-bounded
strategy memory) consume turns, and the first decision action closes the
round.  A round that exhausts K turns without a decision closes as invalid.

Observations never carry ground truth: serialized observations are scanned
for reserved truth keys in tests.

Agent output grammar (tagged text blocks):

    <hub>list</hub>

    <hub>update
    add: <strategy text>
    replace: <entry-id> | <strategy text>
    remove: <entry-id>
    </hub>

    <decision>
    accept: <event-id>
    decline: <event-id>, <event-id>, ...
    ranking: <event-id> > <event-id> > ...
    rationale: <free text>
    </decision>
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .conflicts import ConflictDataset, ConflictRound
from .jsonio import digest_of

DEFAULT_K = 6
DEFAULT_W = 20
DEFAULT_HUB_CAPACITY = 10

# Keys that must never appear in anything shown to the agent.
TRUTH_KEYS = {
    "truth_accept",
    "truth_ranking",
    "provenance",
    "anchor_label",
    "principle_id",
    "principles",
    "weight",
    "principle_score",
}


@dataclass
class StrategyEntry:
    entry_id: str
    text: str
    tag: str | None = None
    created_round: int = 0
    updated_round: int = 0

    def to_dict(self) -> dict:
        return {
            "entry_id": self.entry_id,
            "text": self.text,
            "tag": self.tag,
            "created_round": self.created_round,
            "updated_round": self.updated_round,
        }


class StrategyHub:
    """Fixed-capacity ordered set of natural-language decision strategies."""

    def __init__(self, capacity: int = DEFAULT_HUB_CAPACITY):
        self.capacity = capacity
        self.entries: list[StrategyEntry] = []
        self._next_id = 1

    def snapshot(self) -> list[dict]:
        return [e.to_dict() for e in self.entries]

    def clear(self) -> None:
        self.entries = []

    def apply(self, delta: "HubDelta", round_index: int) -> list[str]:
        """Apply add/replace/remove records; returns in-band error messages.

        Adds beyond capacity are rejected individually, leaving the hub
        unchanged for that record.
        """
        errors: list[str] = []
        for kind, arg1, arg2 in delta.records:
            if kind == "add":
                if len(self.entries) >= self.capacity:
                    errors.append(
                        f"hub full: capacity {self.capacity} reached, add rejected"
                    )
                    continue
                entry = StrategyEntry(
                    entry_id=f"s{self._next_id}",
                    text=arg1,
                    created_round=round_index,
                    updated_round=round_index,
                )
                self._next_id += 1
                self.entries.append(entry)
            elif kind == "replace":
                target = next(
                    (e for e in self.entries if e.entry_id == arg1), None
                )
                if target is None:
                    errors.append(f"no hub entry with id {arg1!r}")
                    continue
                target.text = arg2
                target.updated_round = round_index
            elif kind == "remove":
                before = len(self.entries)
                self.entries = [e for e in self.entries if e.entry_id != arg1]
                if len(self.entries) == before:
                    errors.append(f"no hub entry with id {arg1!r}")
        return errors


@dataclass(frozen=True)
class HubDelta:
    # records: (kind, arg1, arg2); add -> (add, text, ""), replace -> (replace, id, text),
    # remove -> (remove, id, "")
    records: tuple[tuple[str, str, str], ...]


@dataclass(frozen=True)
class Decision:
    accept_id: str
    decline_ids: tuple[str, ...]
    ranking: tuple[str, ...]
    rationale: str


@dataclass(frozen=True)
class AgentAction:
    kind: str  # "hub_list" | "hub_update" | "decision"
    delta: HubDelta | None = None
    decision: Decision | None = None


@dataclass(frozen=True)
class ParseFailure:
    reason: str  # "no-block" | "bad-id" | "not-a-permutation" | "multi-accept"
    detail: str = ""


@dataclass
class Observation:
    context: dict
    history: list[dict]
    conflicts: list[dict]
    hub_snapshot: list[dict]
    round_index: int
    turn_index: int
    feedback: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "context": self.context,
            "history": self.history,
            "conflicts": self.conflicts,
            "hub_snapshot": self.hub_snapshot,
            "round_index": self.round_index,
            "turn_index": self.turn_index,
            "feedback": self.feedback,
        }


def scan_for_truth_keys(obj) -> list[str]:
    """Return any reserved truth keys found anywhere in a serialized payload."""
    found: list[str] = []

    def walk(node) -> None:
        if isinstance(node, dict):
            for k, v in node.items():
                if k in TRUTH_KEYS:
                    found.append(k)
                walk(v)
        elif isinstance(node, list):
            for v in node:
                walk(v)

    walk(obj)
    return found


# ---------------------------------------------------------------------------
# Output grammar
# ---------------------------------------------------------------------------

_DECISION_RE = re.compile(r"<decision>(.*?)</decision>", re.DOTALL | re.IGNORECASE)
_HUB_RE = re.compile(r"<hub>(.*?)</hub>", re.DOTALL | re.IGNORECASE)


def _parse_decision_block(body: str, event_ids: list[str]) -> Decision | ParseFailure:
    fields: dict[str, str] = {}
    rationale_lines: list[str] = []
    in_rationale = False
    for line in body.strip().splitlines():
        m = re.match(r"\s*(accept|decline|ranking|rationale)\s*:\s*(.*)$", line, re.I)
        if m:
            key = m.group(1).lower()
            if key == "accept" and "accept" in fields:
                return ParseFailure("multi-accept", "repeated accept field")
            if key == "rationale":
                in_rationale = True
                rationale_lines.append(m.group(2))
            else:
                in_rationale = False
                fields[key] = m.group(2).strip()
        elif in_rationale:
            rationale_lines.append(line)
    if "accept" not in fields or "ranking" not in fields:
        return ParseFailure("no-block", "decision block missing accept or ranking")

    accepts = [a.strip() for a in re.split(r"[,\s]+", fields["accept"]) if a.strip()]
    if len(accepts) != 1:
        return ParseFailure("multi-accept", f"accept names {len(accepts)} events")
    accept_id = accepts[0]
    if accept_id not in event_ids:
        return ParseFailure("bad-id", f"unknown event id {accept_id!r}")

    decline_ids = [
        d.strip() for d in fields.get("decline", "").split(",") if d.strip()
    ]
    expected_declines = sorted(e for e in event_ids if e != accept_id)
    for d in decline_ids:
        if d not in event_ids:
            return ParseFailure("bad-id", f"unknown event id {d!r}")
    if sorted(decline_ids) != expected_declines:
        return ParseFailure(
            "bad-id", "decline list must name every non-accepted event exactly once"
        )

    ranking = [r.strip() for r in re.split(r"\s*>\s*", fields["ranking"]) if r.strip()]
    for r in ranking:
        if r not in event_ids:
            return ParseFailure("bad-id", f"unknown event id {r!r} in ranking")
    if sorted(ranking) != sorted(event_ids):
        return ParseFailure(
            "not-a-permutation", "ranking is not a permutation of the round's events"
        )
    return Decision(
        accept_id=accept_id,
        decline_ids=tuple(decline_ids),
        ranking=tuple(ranking),
        rationale="\n".join(rationale_lines).strip(),
    )


def _parse_hub_block(body: str) -> AgentAction | ParseFailure:
    body = body.strip()
    if body.lower() == "list":
        return AgentAction(kind="hub_list")
    if not body.lower().startswith("update"):
        return ParseFailure("no-block", f"unknown hub command {body.split()[:1]}")
    records: list[tuple[str, str, str]] = []
    for line in body.splitlines()[1:]:
        line = line.strip()
        if not line:
            continue
        m = re.match(r"(add|replace|remove)\s*:\s*(.*)$", line, re.I)
        if not m:
            return ParseFailure("no-block", f"malformed hub update line {line!r}")
        kind, rest = m.group(1).lower(), m.group(2).strip()
        if kind == "add":
            if not rest:
                return ParseFailure("no-block", "add record with empty text")
            records.append(("add", rest, ""))
        elif kind == "remove":
            records.append(("remove", rest, ""))
        else:
            parts = rest.split("|", 1)
            if len(parts) != 2:
                return ParseFailure(
                    "no-block", "replace record must be '<id> | <text>'"
                )
            records.append(("replace", parts[0].strip(), parts[1].strip()))
    if not records:
        return ParseFailure("no-block", "hub update with no records")
    return AgentAction(kind="hub_update", delta=HubDelta(tuple(records)))


def parse_agent_text(raw: str, event_ids: list[str]) -> AgentAction | ParseFailure:
    """Parse raw agent output into an action; failure is a value, never raises."""
    m = _DECISION_RE.search(raw)
    if m:
        parsed = _parse_decision_block(m.group(1), event_ids)
        if isinstance(parsed, ParseFailure):
            return parsed
        return AgentAction(kind="decision", decision=parsed)
    m = _HUB_RE.search(raw)
    if m:
        return _parse_hub_block(m.group(1))
    return ParseFailure("no-block", "no <decision> or <hub> block found")


# ---------------------------------------------------------------------------
# Episode
# ---------------------------------------------------------------------------

@dataclass
class RoundRecord:
    round_id: str
    round_index: int
    observation_digest: str
    turns: list[dict] = field(default_factory=list)
    hub_after: list[dict] = field(default_factory=list)
    valid: bool = False
    hub_used: int = 0
    stopping_turn: int = 0
    decision: dict | None = None
    self_consistent: bool | None = None

    def to_dict(self) -> dict:
        return {
            "round_id": self.round_id,
            "round_index": self.round_index,
            "observation_digest": self.observation_digest,
            "turns": self.turns,
            "hub_after": self.hub_after,
            "valid": self.valid,
            "hub_used": self.hub_used,
            "stopping_turn": self.stopping_turn,
            "decision": self.decision,
            "self_consistent": self.self_consistent,
        }


@dataclass(frozen=True)
class EnvConfig:
    w: int = DEFAULT_W
    k: int = DEFAULT_K
    hub_capacity: int = DEFAULT_HUB_CAPACITY
    hub_reset_per_round: bool = False


class EpisodeComplete(RuntimeError):
    pass


class Episode:
    """Sequential environment over one user's conflict dataset.

    Strictly single-threaded: call ``step`` with the parsed action (or a
    ``ParseFailure``) for the observation returned by ``reset``/``step``.
    """

    def __init__(
        self,
        dataset: ConflictDataset,
        config: EnvConfig = EnvConfig(),
        context: dict | None = None,
    ):
        if not dataset.rounds:
            raise ValueError("dataset has no rounds")
        self.dataset = dataset
        self.config = config
        self.context = context or {}
        self.hub = StrategyHub(capacity=config.hub_capacity)
        self.round_index = 0  # 1-based once started
        self.turn_index = 0
        self.records: list[RoundRecord] = []
        self.resolved: list[dict] = []  # history entries of closed rounds
        self._feedback: list[str] = []
        self.done = False

    # -- observation assembly ------------------------------------------------

    def _current_round(self) -> ConflictRound:
        return self.dataset.rounds[self.round_index - 1]

    def observation(self) -> Observation:
        rnd = self._current_round()
        history = self.resolved[-self.config.w :]
        obs = Observation(
            context=self.context,
            history=list(history),
            conflicts=[e.to_dict() for e in rnd.events],
            hub_snapshot=self.hub.snapshot(),
            round_index=self.round_index,
            turn_index=self.turn_index,
            feedback=list(self._feedback),
        )
        self._feedback = []
        return obs

    def reset(self) -> Observation:
        self.hub = StrategyHub(capacity=self.config.hub_capacity)
        self.round_index = 1
        self.turn_index = 1
        self.records = []
        self.resolved = []
        self._feedback = []
        self.done = False
        self._open_round()
        return self.observation()

    def _open_round(self) -> None:
        if self.config.hub_reset_per_round:
            self.hub.clear()
        rnd = self._current_round()
        obs_preview = Observation(
            context=self.context,
            history=list(self.resolved[-self.config.w :]),
            conflicts=[e.to_dict() for e in rnd.events],
            hub_snapshot=self.hub.snapshot(),
            round_index=self.round_index,
            turn_index=1,
        )
        self.records.append(
            RoundRecord(
                round_id=rnd.round_id,
                round_index=self.round_index,
                observation_digest=digest_of(obs_preview.to_dict()),
            )
        )

    # -- stepping ------------------------------------------------------------

    def step(self, action: AgentAction | ParseFailure, raw: str = "") -> Observation | None:
        """Advance one turn.  Returns the next observation, or None when the
        episode is complete."""
        if self.done:
            raise EpisodeComplete("step on completed episode")
        record = self.records[-1]
        rnd = self._current_round()
        turn: dict = {"turn_index": self.turn_index, "raw": raw, "feedback": None}

        if isinstance(action, ParseFailure):
            turn["action_kind"] = "invalid"
            turn["feedback"] = f"parse failure ({action.reason}): {action.detail}"
            self._feedback.append(turn["feedback"])
            record.turns.append(turn)
            return self._advance_turn()

        if action.kind == "hub_list":
            turn["action_kind"] = "hub_list"
            record.hub_used = 1
            record.turns.append(turn)
            return self._advance_turn()

        if action.kind == "hub_update":
            turn["action_kind"] = "hub_update"
            errors = self.hub.apply(action.delta, self.round_index)
            if errors:
                turn["feedback"] = "; ".join(errors)
                self._feedback.extend(errors)
            record.hub_used = 1
            record.turns.append(turn)
            return self._advance_turn()

        # decision: closes the round
        d = action.decision
        turn["action_kind"] = "decision"
        record.turns.append(turn)
        record.valid = True
        record.stopping_turn = self.turn_index
        record.decision = {
            "accept_id": d.accept_id,
            "decline_ids": list(d.decline_ids),
            "ranking": list(d.ranking),
            "rationale": d.rationale,
        }
        record.self_consistent = bool(d.ranking) and d.ranking[0] == d.accept_id
        record.hub_after = self.hub.snapshot()
        self.resolved.append(
            {
                "round_id": rnd.round_id,
                "events": [e.to_dict() for e in rnd.events],
                "accepted": d.accept_id,
                "declined": list(d.decline_ids),
            }
        )
        return self._next_round()

    def _advance_turn(self) -> Observation | None:
        record = self.records[-1]
        if self.turn_index >= self.config.k:
            # K turns exhausted with no decision: round closes invalid.
            rnd = self._current_round()
            record.valid = False
            record.stopping_turn = self.config.k
            record.hub_after = self.hub.snapshot()
            self.resolved.append(
                {
                    "round_id": rnd.round_id,
                    "events": [e.to_dict() for e in rnd.events],
                    "accepted": None,
                    "declined": [],
                }
            )
            return self._next_round()
        self.turn_index += 1
        return self.observation()

    def _next_round(self) -> Observation | None:
        if self.round_index >= len(self.dataset.rounds):
            self.done = True
            return None
        self.round_index += 1
        self.turn_index = 1
        self._feedback = []
        self._open_round()
        return self.observation()

    # -- trace export --------------------------------------------------------

    def trace_dict(self, agent_info: dict, dataset_digest: str, group_id: str | None = None, rollout_id: str = "r0") -> dict:
        return {
            "schema_version": 1,
            "org_id": self.dataset.org_id,
            "user_id": self.dataset.user_id,
            "dataset_digest": dataset_digest,
            "group_id": group_id,
            "rollout_id": rollout_id,
            "config": {
                "w": self.config.w,
                "k": self.config.k,
                "hub_capacity": self.config.hub_capacity,
                "hub_reset_per_round": self.config.hub_reset_per_round,
            },
            "agent": agent_info,
            "context": self.context,
            "rounds": [r.to_dict() for r in self.records],
            "status": "complete" if self.done else "partial",
        }
