"""Conflict-round injection with machine-derivable ground truth.

Each round starts from an anchor event sampled from the regular calendar and
pre-labeled accepted or declined.  Competitors are built by sampling a
(priority principle, conflict reason) pair and applying the reason's metadata
transform to a copy of the anchor's timeslot.  The weighted principle score is
the single source of ground truth: the accepted event is constructed to have
a strictly maximal score, and the truth ranking is the score-descending order
with event-id lexicographic tie-break below rank 0.

Round events are re-keyed to neutral ids (e1..eM) in a seeded shuffle so that
id patterns cannot reveal which event was the anchor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from datetime import datetime, timedelta

from .calgen import Calendar, Event, week_of
from .jsonio import substream
from .schema import (
    DecisionContext,
    OrgChart,
    PriorityPrinciple,
    ConflictReason,
    UserProfile,
    principle_score,
)

MAX_BUILD_ATTEMPTS = 32

# Last-resort competitor transform: an event type no bundled principle scores.
_WEAK_FALLBACK = ConflictReason(
    reason_id="weak-social-fallback",
    description="low-stakes social alternative",
    transform=(
        {"op": "set-event-type", "value": "social"},
        {
            "op": "retitle-from-template",
            "templates": ["Informal coffee chat", "Casual catch-up", "Social hour"],
        },
    ),
)


class ScoreSeparationError(RuntimeError):
    """Could not construct a dominated/dominating competitor."""


class AnchorError(ValueError):
    """Calendar cannot supply the requested anchors."""


@dataclass(frozen=True)
class GenParams:
    n_rounds: int = 104
    m: int = 5
    accept_ratio: float = 0.5
    rounds_per_week: int = 2
    distinct_principles: int | None = None  # difficulty knob; None = all


@dataclass
class ConflictRound:
    round_id: str
    user_id: str
    week: int
    timeslot: tuple[datetime, datetime]
    events: list[Event]
    truth_accept: str
    truth_ranking: list[str]
    anchor_label: str  # "accepted-anchor" | "declined-anchor"
    provenance: dict[str, tuple[str, str] | None]  # event_id -> (principle, reason)

    def public_dict(self) -> dict:
        """Agent-facing view: no truth fields."""
        return {
            "round_id": self.round_id,
            "week": self.week,
            "timeslot": [self.timeslot[0].isoformat(), self.timeslot[1].isoformat()],
            "events": [e.to_dict() for e in self.events],
        }

    def truth_dict(self) -> dict:
        return {
            "round_id": self.round_id,
            "week": self.week,
            "m": len(self.events),
            "truth_accept": self.truth_accept,
            "truth_ranking": list(self.truth_ranking),
            "anchor_label": self.anchor_label,
            "provenance": {
                eid: (list(pair) if pair else None)
                for eid, pair in self.provenance.items()
            },
        }


@dataclass
class ConflictDataset:
    org_id: str
    user_id: str
    rounds: list[ConflictRound]
    params: GenParams
    seed: int

    def public_dict(self) -> dict:
        return {
            "schema_version": 1,
            "org_id": self.org_id,
            "user_id": self.user_id,
            "params": {
                "n_rounds": self.params.n_rounds,
                "m": self.params.m,
                "rounds_per_week": self.params.rounds_per_week,
            },
            "seed": self.seed,
            "rounds": [r.public_dict() for r in self.rounds],
        }

    def truth_dict(self, dataset_digest: str) -> dict:
        return {
            "schema_version": 1,
            "org_id": self.org_id,
            "user_id": self.user_id,
            "dataset_digest": dataset_digest,
            "accept_ratio": self.params.accept_ratio,
            "rounds": [r.truth_dict() for r in self.rounds],
        }


# ---------------------------------------------------------------------------
# Transforms
# ---------------------------------------------------------------------------

def _apply_transform(
    base: Event,
    reason: ConflictReason,
    profile: UserProfile,
    org: OrgChart,
    rng,
) -> Event:
    """Apply a conflict reason's patch ops to a fresh copy of the anchor slot.

    The copy starts with neutral metadata (owner plus one same-role peer, no
    urgency, no deadline) so the resulting score reflects only the transform.
    Never touches the timeslot.
    """
    peers = sorted(
        m.person_name
        for m in org.members_with_role(profile.role_id)
        if m.person_name != profile.person_name
    )
    attendees = [profile.person_name]
    if peers:
        attendees.append(rng.choice(peers))
    event = replace(
        base,
        attendees=tuple(attendees),
        urgency=False,
        deadline_marker=None,
        title=f"Follow-up: {base.title}",
        description=reason.description,
        constraints=(),
    )
    for op in reason.transform:
        name = op["op"]
        if name == "set-urgency":
            event = replace(event, urgency=bool(op.get("value", True)))
        elif name == "add-attendee-of-role":
            pool = sorted(
                m.person_name
                for m in org.members_with_role(op["role"])
                if m.person_name not in event.attendees
            )
            if pool:
                event = replace(
                    event, attendees=event.attendees + (rng.choice(pool),)
                )
        elif name == "set-deadline-marker":
            hours = float(op.get("hours_after_start", 24))
            event = replace(
                event, deadline_marker=event.start + timedelta(hours=hours)
            )
        elif name == "set-modality":
            event = replace(event, modality=op["value"])
        elif name == "retitle-from-template":
            event = replace(event, title=rng.choice(op["templates"]))
        elif name == "set-event-type":
            event = replace(event, event_type=op["value"])
    return event


def _collect_event_types(principles: tuple[PriorityPrinciple, ...]) -> list[str]:
    types: list[str] = []

    def walk(node: dict) -> None:
        op = node.get("op")
        if op == "event-type-equals":
            if node["value"] not in types:
                types.append(node["value"])
        elif op in ("all", "any"):
            for a in node["args"]:
                walk(a)
        elif op == "not":
            walk(node["arg"])

    for p in principles:
        walk(p.trigger)
    return types


def _senior_root_member(org: OrgChart) -> str | None:
    roots = sorted(m.person_name for m in org.members if m.supervisor is None)
    return roots[0] if roots else None


def _build_dominating(
    base: Event,
    reason: ConflictReason,
    profile: UserProfile,
    org: OrgChart,
    ctx: DecisionContext,
    rng,
) -> Event:
    """Build an event justified by strong principle triggers: urgency plus an
    immediate deadline, a most-senior attendee, and the score-maximizing
    event type for this profile."""
    event = _apply_transform(base, reason, profile, org, rng)
    event = replace(
        event,
        urgency=True,
        deadline_marker=event.start,
        title=f"Urgent: {event.title}",
    )
    senior = _senior_root_member(org)
    if senior and senior not in event.attendees:
        event = replace(event, attendees=event.attendees + (senior,))
    best = event
    best_score = principle_score(profile, event, ctx)
    for etype in _collect_event_types(profile.principles):
        cand = replace(event, event_type=etype)
        s = principle_score(profile, cand, ctx)
        if s > best_score:
            best, best_score = cand, s
    return best


# ---------------------------------------------------------------------------
# Anchor sampling
# ---------------------------------------------------------------------------

def sample_anchors(
    calendar: Calendar,
    profile: UserProfile,
    org: OrgChart,
    n_rounds: int,
    accept_ratio: float,
    seed: int,
    rounds_per_week: int = 2,
) -> list[tuple[Event, str]]:
    """Sample anchor events spread over the week grid and assign labels.

    round(accept_ratio * n_rounds) anchors are labeled accepted, drawn
    preferentially from events whose principle score is in the top half for
    this user.  Deterministic per seed; anchors are returned in start order.
    """
    if not 0 < accept_ratio < 1:
        raise ValueError(f"accept_ratio must be in (0, 1), got {accept_ratio}")
    if len(calendar.events) < n_rounds:
        raise AnchorError(
            f"{calendar.user_id}: calendar has {len(calendar.events)} events, "
            f"need at least {n_rounds} anchors"
        )
    rng = substream(seed, "anchors", profile.user_id)
    by_id = {e.event_id: e for e in calendar.events}

    weeks_needed = math.ceil(n_rounds / rounds_per_week)
    anchors: list[Event] = []
    for week in sorted(calendar.week_index)[:weeks_needed]:
        ids = calendar.week_index[week]
        take = min(rounds_per_week, len(ids))
        for eid in sorted(rng.sample(ids, take)):
            anchors.append(by_id[eid])
    anchors.sort(key=lambda e: (e.start, e.event_id))
    if len(anchors) < n_rounds:
        raise AnchorError(
            f"{calendar.user_id}: only {len(anchors)} anchors available for "
            f"{n_rounds} rounds at {rounds_per_week}/week"
        )
    anchors = anchors[:n_rounds]

    ctx = DecisionContext(org)
    scores = {e.event_id: principle_score(profile, e, ctx) for e in calendar.events}
    ordered = sorted(scores.values())
    median = ordered[len(ordered) // 2]

    n_accept = round(accept_ratio * n_rounds)
    high = [e for e in anchors if scores[e.event_id] >= median and scores[e.event_id] > 0]
    low = [e for e in anchors if e not in high]
    rng.shuffle(high)
    rng.shuffle(low)
    accepted_ids = {e.event_id for e in (high + [e for e in low if scores[e.event_id] > 0])[:n_accept]}
    if len(accepted_ids) < n_accept:
        raise AnchorError(
            f"{calendar.user_id}: not enough positive-score events to label "
            f"{n_accept} accepted anchors"
        )
    return [
        (e, "accepted" if e.event_id in accepted_ids else "declined")
        for e in anchors
    ]


# ---------------------------------------------------------------------------
# Round construction
# ---------------------------------------------------------------------------

def _jitter_into_slot(event: Event, slot: tuple[datetime, datetime], rng) -> Event:
    """Place a competitor inside the anchor slot, keeping the slot midpoint
    covered so every pair of round events overlaps."""
    start, end = slot
    mid = start + (end - start) / 2
    lead = (mid - start).total_seconds()
    tail = (end - mid).total_seconds()
    new_start = start + timedelta(seconds=60 * int(rng.uniform(0, lead * 0.8) // 60))
    new_end = mid + timedelta(seconds=60 * max(1, int(rng.uniform(tail * 0.2, tail) // 60)))
    return replace(event, start=new_start, end=new_end)


def _sample_pair(
    principles: tuple[PriorityPrinciple, ...],
    reasons: tuple[ConflictReason, ...],
    rng,
) -> tuple[PriorityPrinciple, ConflictReason]:
    p = rng.choices(principles, weights=[p.weight for p in principles], k=1)[0]
    c = rng.choice(reasons)
    return p, c


def generate_competitors(
    anchor: Event,
    label: str,
    profile: UserProfile,
    m: int,
    seed: int,
    org: OrgChart,
    round_id: str | None = None,
    year: int | None = None,
    distinct_principles: int | None = None,
) -> ConflictRound:
    """Build one conflict round around an anchor.

    accepted anchor: the anchor plus m-1 competitors each strictly dominated
    by it.  declined anchor: one dominating competitor built from strong
    principle triggers, the anchor, and m-2 extra dominated competitors.
    """
    if m < 2:
        raise ValueError(f"m must be >= 2, got {m}")
    if label not in ("accepted", "declined"):
        raise ValueError(f"label must be accepted|declined, got {label!r}")
    ctx = DecisionContext(org)
    rng = substream(seed, "round", profile.user_id, anchor.event_id)
    round_id = round_id or f"{profile.user_id}-{anchor.event_id}"
    slot = (anchor.start, anchor.end)
    anchor_score = principle_score(profile, anchor, ctx)

    principles = profile.principles
    if distinct_principles is not None and distinct_principles < len(principles):
        principles = tuple(
            rng.sample(list(principles), max(1, distinct_principles))
        )
    reasons = profile.conflict_reasons

    def dominated(bound: float, idx: int) -> tuple[Event, tuple[str, str]]:
        last_pair = ("?", "?")
        for _ in range(MAX_BUILD_ATTEMPTS):
            p, c = _sample_pair(principles, reasons, rng)
            last_pair = (p.principle_id, c.reason_id)
            cand = _apply_transform(anchor, c, profile, org, rng)
            if principle_score(profile, cand, ctx) < bound:
                return cand, last_pair
        cand = _apply_transform(anchor, _WEAK_FALLBACK, profile, org, rng)
        if principle_score(profile, cand, ctx) < bound:
            return cand, ("none", _WEAK_FALLBACK.reason_id)
        raise ScoreSeparationError(
            f"{round_id}: cannot build competitor {idx} dominated by score "
            f"{bound} (last pair {last_pair})"
        )

    built: list[tuple[Event, tuple[str, str] | None]] = []
    if label == "accepted":
        if anchor_score <= 0:
            raise ScoreSeparationError(
                f"{round_id}: accepted anchor has score 0; no competitor can be dominated"
            )
        built.append((anchor, None))
        for j in range(m - 1):
            built.append(dominated(anchor_score, j))
        winner_key = 0
    else:
        last_pair = ("?", "?")
        winner = None
        for _ in range(MAX_BUILD_ATTEMPTS):
            p, c = _sample_pair(principles, reasons, rng)
            last_pair = (p.principle_id, c.reason_id)
            cand = _build_dominating(anchor, c, profile, org, ctx, rng)
            if principle_score(profile, cand, ctx) > anchor_score:
                winner = (cand, last_pair)
                break
        if winner is None:
            raise ScoreSeparationError(
                f"{round_id}: cannot build competitor dominating anchor score "
                f"{anchor_score} (last pair {last_pair})"
            )
        built.append(winner)
        built.append((anchor, None))
        winner_score = principle_score(profile, winner[0], ctx)
        for j in range(m - 2):
            built.append(dominated(winner_score, j))
        winner_key = 0

    # Jitter competitors into the slot (anchor keeps its full slot), then
    # re-key everything with neutral ids in a seeded shuffle.
    placed: list[tuple[Event, tuple[str, str] | None]] = []
    for ev, prov in built:
        if ev is not anchor:
            ev = _jitter_into_slot(ev, slot, rng)
        placed.append((ev, prov))
    order = list(range(len(placed)))
    rng.shuffle(order)
    events: list[Event] = []
    provenance: dict[str, tuple[str, str] | None] = {}
    accept_id = ""
    for pos, src in enumerate(order):
        ev, prov = placed[src]
        eid = f"e{pos + 1}"
        ev = replace(ev, event_id=eid)
        events.append(ev)
        provenance[eid] = prov
        if src == winner_key:
            accept_id = eid

    scores = {e.event_id: principle_score(profile, e, ctx) for e in events}
    ranking = sorted(events, key=lambda e: (-scores[e.event_id], e.event_id))
    truth_ranking = [e.event_id for e in ranking]
    top_score = scores[truth_ranking[0]]
    runner_up = scores[truth_ranking[1]]
    if truth_ranking[0] != accept_id or not top_score > runner_up:
        raise ScoreSeparationError(
            f"{round_id}: rank-0 separation violated "
            f"(accept={accept_id}, top={truth_ranking[0]})"
        )

    week = week_of(anchor.start, year or anchor.start.year)
    return ConflictRound(
        round_id=round_id,
        user_id=profile.user_id,
        week=week,
        timeslot=slot,
        events=events,
        truth_accept=accept_id,
        truth_ranking=truth_ranking,
        anchor_label=f"{label}-anchor",
        provenance=provenance,
    )


def build_dataset(
    profile: UserProfile,
    calendar: Calendar,
    org: OrgChart,
    params: GenParams,
    seed: int,
) -> ConflictDataset:
    """Full conflict dataset for one user: N rounds in timeslot order."""
    if params.n_rounds > 52 * params.rounds_per_week:
        raise ValueError(
            f"n_rounds={params.n_rounds} exceeds 52 weeks x "
            f"{params.rounds_per_week}/week"
        )
    anchors = sample_anchors(
        calendar,
        profile,
        org,
        params.n_rounds,
        params.accept_ratio,
        seed,
        rounds_per_week=params.rounds_per_week,
    )
    rounds = [
        generate_competitors(
            anchor,
            label,
            profile,
            params.m,
            seed,
            org,
            round_id=f"{profile.user_id}-r{idx + 1:03d}",
            year=calendar.year,
            distinct_principles=params.distinct_principles,
        )
        for idx, (anchor, label) in enumerate(anchors)
    ]
    return ConflictDataset(
        org_id=org.org_id,
        user_id=profile.user_id,
        rounds=rounds,
        params=params,
        seed=seed,
    )


def build_datasets(
    profiles: list[UserProfile],
    calendars: dict[str, Calendar],
    org: OrgChart,
    params: GenParams,
    seed: int,
) -> list[ConflictDataset]:
    return [
        build_dataset(p, calendars[p.user_id], org, params, seed) for p in profiles
    ]
