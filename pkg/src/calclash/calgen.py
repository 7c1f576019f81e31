"""Regular calendar generation: a conflict-free year of recurring events.

Events are placed Mon-Fri 09:00-18:00 by greedy earliest-fit on a 15-minute
grid.  Intervals are half-open [start, end) so back-to-back events do not
conflict.  Weekly templates instantiate once per week (52), biweekly on odd
weeks (26), monthly on the first matching weekday of each month (12).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from zoneinfo import ZoneInfo

from .schema import (
    Constraint,
    DecisionContext,
    MeetingTemplate,
    OrgChart,
    UserProfile,
)
from .jsonio import substream

BUSINESS_START_H = 9
BUSINESS_END_H = 18
SLOT_MINUTES = 15

_EXTERNAL_NAMES = [
    "Alex Morgan", "Taylor Reed", "Casey Flores", "Robin Hayes",
    "Jamie Sutton", "Morgan Blake", "Drew Calloway", "Avery Lindqvist",
]


class PlacementError(RuntimeError):
    """Weekly template load exceeds available business-hour minutes."""


@dataclass(frozen=True)
class Event:
    event_id: str
    title: str
    start: datetime
    end: datetime
    attendees: tuple[str, ...]
    event_type: str
    location: str
    modality: str
    urgency: bool = False
    deadline_marker: datetime | None = None
    description: str = ""
    constraints: tuple[Constraint, ...] = ()

    def to_dict(self) -> dict:
        return {
            "event_id": self.event_id,
            "title": self.title,
            "start": self.start.isoformat(),
            "end": self.end.isoformat(),
            "attendees": list(self.attendees),
            "event_type": self.event_type,
            "location": self.location,
            "modality": self.modality,
            "urgency": self.urgency,
            "deadline_marker": (
                self.deadline_marker.isoformat() if self.deadline_marker else None
            ),
            "description": self.description,
            "constraints": [
                {"kind": c.kind, "tag": c.tag, "key": c.key} for c in self.constraints
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Event":
        return cls(
            event_id=d["event_id"],
            title=d["title"],
            start=datetime.fromisoformat(d["start"]),
            end=datetime.fromisoformat(d["end"]),
            attendees=tuple(d["attendees"]),
            event_type=d["event_type"],
            location=d["location"],
            modality=d["modality"],
            urgency=bool(d.get("urgency", False)),
            deadline_marker=(
                datetime.fromisoformat(d["deadline_marker"])
                if d.get("deadline_marker")
                else None
            ),
            description=d.get("description", ""),
            constraints=tuple(
                Constraint(c["kind"], c["tag"], c["key"])
                for c in d.get("constraints", ())
            ),
        )


@dataclass
class Calendar:
    user_id: str
    year: int
    events: list[Event]
    week_index: dict[int, list[str]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "user_id": self.user_id,
            "year": self.year,
            "events": [e.to_dict() for e in self.events],
            "week_index": {str(w): ids for w, ids in sorted(self.week_index.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Calendar":
        return cls(
            user_id=d["user_id"],
            year=d["year"],
            events=[Event.from_dict(e) for e in d["events"]],
            week_index={int(w): ids for w, ids in d["week_index"].items()},
        )


def overlaps(a: Event, b: Event) -> bool:
    """Half-open interval intersection."""
    return a.start < b.end and b.start < a.end


def validate_no_overlap(cal: Calendar) -> list[tuple[str, str]]:
    """Return all overlapping event-id pairs (empty means conflict-free)."""
    bad: list[tuple[str, str]] = []
    ordered = sorted(cal.events, key=lambda e: (e.start, e.event_id))
    for i, e in enumerate(ordered):
        for later in ordered[i + 1 :]:
            if later.start >= e.end:
                break
            bad.append((e.event_id, later.event_id))
    return bad


def week_grid_start(year: int) -> date:
    """Monday of week 1: the first Monday on or after Jan 1."""
    d = date(year, 1, 1)
    while d.weekday() != 0:
        d += timedelta(days=1)
    return d


def week_of(dt: datetime, year: int) -> int:
    """1-based week number within the 52-week grid (clamped)."""
    start = week_grid_start(year)
    delta = (dt.date() - start).days
    return max(1, min(52, delta // 7 + 1))


def _resolve_attendees(
    template: MeetingTemplate,
    profile: UserProfile,
    org: OrgChart,
    rng,
) -> tuple[str, ...]:
    owner = profile.person_name
    out: list[str] = [owner]

    def add(name: str) -> None:
        if name not in out:
            out.append(name)

    me = next(m for m in org.members if m.person_name == owner)
    for sel in template.attendee_pattern:
        if sel == "supervisor":
            if me.supervisor:
                add(me.supervisor)
        elif sel == "direct-reports":
            for m in sorted(org.direct_reports(owner), key=lambda m: m.person_name)[:6]:
                add(m.person_name)
        elif sel == "peers":
            peers = sorted(
                m.person_name
                for m in org.members_with_role(me.role_id)
                if m.person_name != owner
            )
            for name in rng.sample(peers, min(3, len(peers))):
                add(name)
        elif sel.startswith("role:"):
            pool = sorted(
                m.person_name
                for m in org.members_with_role(sel[5:])
                if m.person_name != owner
            )
            for name in rng.sample(pool, min(3, len(pool))):
                add(name)
        elif sel == "external":
            add(rng.choice(_EXTERNAL_NAMES))
    return tuple(out)


class _DaySchedule:
    """Busy intervals per day; earliest-fit slot search."""

    def __init__(self) -> None:
        self._busy: dict[date, list[tuple[datetime, datetime]]] = {}

    def place(self, day: date, minutes: int, tz) -> tuple[datetime, datetime] | None:
        day_start = datetime(day.year, day.month, day.day, BUSINESS_START_H, tzinfo=tz)
        day_end = datetime(day.year, day.month, day.day, BUSINESS_END_H, tzinfo=tz)
        busy = sorted(self._busy.get(day, []))
        cursor = day_start
        step = timedelta(minutes=SLOT_MINUTES)
        dur = timedelta(minutes=minutes)
        while cursor + dur <= day_end:
            candidate = (cursor, cursor + dur)
            if all(not (candidate[0] < b[1] and b[0] < candidate[1]) for b in busy):
                self._busy.setdefault(day, []).append(candidate)
                return candidate
            cursor += step
        return None


def _instance_dates(template: MeetingTemplate, year: int) -> list[tuple[str, date]]:
    """(occurrence key, target date) pairs for one template over the year."""
    start = week_grid_start(year)
    out: list[tuple[str, date]] = []
    if template.cadence in ("weekly", "biweekly"):
        weeks = range(1, 53) if template.cadence == "weekly" else range(1, 53, 2)
        for w in weeks:
            day = start + timedelta(days=(w - 1) * 7 + template.preferred_weekday)
            out.append((f"w{w:02d}", day))
    else:  # monthly: first matching weekday of each month, inside the grid
        for month in range(1, 13):
            d = date(year, month, 1)
            while d.weekday() != template.preferred_weekday:
                d += timedelta(days=1)
            while d < start:  # January days before the week grid begins
                d += timedelta(days=7)
            out.append((f"m{month:02d}", d))
    return out


def generate_regular_calendar(
    profile: UserProfile, org: OrgChart, year: int, seed: int
) -> Calendar:
    """Deterministic, conflict-free year of regular events for one user."""
    if not profile.templates:
        raise ValueError(f"{profile.user_id}: profile has no templates")
    tz = ZoneInfo(org.timezone)
    schedule = _DaySchedule()
    events: list[Event] = []

    weekly_minutes = sum(
        t.duration_minutes for t in profile.templates if t.cadence == "weekly"
    )
    capacity = 5 * (BUSINESS_END_H - BUSINESS_START_H) * 60
    if weekly_minutes > capacity:
        raise PlacementError(
            f"{profile.user_id}: weekly template load {weekly_minutes}min exceeds "
            f"business-hour capacity {capacity}min"
        )

    for template in profile.templates:
        rng = substream(seed, "calendar", profile.user_id, template.template_id)
        attendees = _resolve_attendees(template, profile, org, rng)
        title_tpl = (
            rng.choice(template.title_templates)
            if template.title_templates
            else "{topic}"
        )
        title = title_tpl.format(topic=template.topic)
        location = (
            f"{org.name} {template.location_type}"
            if template.modality != "remote"
            else "Video call"
        )
        for key, target_day in _instance_dates(template, year):
            placed = None
            day = target_day
            for offset in range(14):  # slide to later weekdays if the day is full
                if day.weekday() < 5:
                    placed = schedule.place(day, template.duration_minutes, tz)
                    if placed:
                        break
                day = target_day + timedelta(days=offset + 1)
            if placed is None:
                raise PlacementError(
                    f"{profile.user_id}: cannot place {template.template_id} "
                    f"occurrence {key} (week of {target_day.isoformat()} is full)"
                )
            start_dt, end_dt = placed
            events.append(
                Event(
                    event_id=f"{profile.user_id}-{template.template_id}-{key}",
                    title=title,
                    start=start_dt,
                    end=end_dt,
                    attendees=attendees,
                    event_type=template.event_type,
                    location=location,
                    modality=template.modality,
                    description=f"{template.topic} ({template.cadence})",
                    constraints=template.constraints,
                )
            )

    events.sort(key=lambda e: (e.start, e.event_id))
    week_index: dict[int, list[str]] = {}
    for e in events:
        week_index.setdefault(week_of(e.start, year), []).append(e.event_id)
    return Calendar(user_id=profile.user_id, year=year, events=events, week_index=week_index)
