"""Organizational schemas: roles, meeting templates, weighted priority
principles, conflict-reason operators, and org instantiation.

A schema is the hidden ground-truth preference structure.  Priority principles
are weighted trigger predicates over event attributes; the sum of fired
weights defines an event's ground-truth score (see ``principle_score``).
Schemas load from JSON files whose field names match the dataclasses below.
All objects are immutable after load and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

from .jsonio import load_json, substream

if TYPE_CHECKING:
    from .calgen import Event

SCHEMA_VERSION = 1

# Closed vocabulary of predicate leaf tests.  Every leaf references a declared
# event attribute so evaluation is total on any well-formed event.
LEAF_OPS = {
    "attendee-role-contains",
    "event-type-equals",
    "urgency-flag-set",
    "deadline-within-hours",
    "modality-equals",
    "title-contains-tag",
}
COMBINATOR_OPS = {"all", "any", "not"}
MAX_PREDICATE_DEPTH = 8

CADENCES = ("weekly", "biweekly", "monthly")

# Patch operations a conflict reason may apply to a copy of an anchor event.
# None of them touch the timeslot.
TRANSFORM_OPS = {
    "set-urgency",
    "add-attendee-of-role",
    "set-deadline-marker",
    "set-modality",
    "retitle-from-template",
    "set-event-type",
}


class SchemaError(ValueError):
    """Schema file fails validation; message names the offending path."""


@dataclass(frozen=True)
class Role:
    role_id: str
    title: str
    department: str
    responsibilities: tuple[str, ...]
    supervisor_role: str | None = None


@dataclass(frozen=True)
class Constraint:
    kind: str  # "hard" | "soft"
    tag: str
    key: str


@dataclass(frozen=True)
class MeetingTemplate:
    template_id: str
    topic: str
    cadence: str
    duration_minutes: int
    attendee_pattern: tuple[str, ...]
    event_type: str
    constraints: tuple[Constraint, ...] = ()
    title_templates: tuple[str, ...] = ()
    location_type: str = "conference-room"
    modality: str = "in-person"
    preferred_weekday: int = 0  # 0=Monday .. 4=Friday


@dataclass(frozen=True)
class PriorityPrinciple:
    principle_id: str
    description: str
    weight: float
    trigger: dict  # predicate tree, see LEAF_OPS / COMBINATOR_OPS


@dataclass(frozen=True)
class ConflictReason:
    reason_id: str
    description: str
    transform: tuple[dict, ...]  # ordered patch ops from TRANSFORM_OPS


@dataclass(frozen=True)
class RoleSchema:
    role: Role
    templates: tuple[MeetingTemplate, ...]
    principles: tuple[PriorityPrinciple, ...]
    conflict_reasons: tuple[ConflictReason, ...]


@dataclass(frozen=True)
class OrgSchema:
    schema_id: str
    name: str
    mission: str
    timezone: str
    roles: dict[str, RoleSchema]

    def role_ids(self) -> list[str]:
        return list(self.roles)


@dataclass(frozen=True)
class Member:
    person_name: str
    role_id: str
    supervisor: str | None  # person_name of supervisor, None for roots
    responsibilities: tuple[str, ...]


@dataclass(frozen=True)
class OrgChart:
    org_id: str
    name: str
    mission: str
    timezone: str
    members: tuple[Member, ...]

    def role_of(self, person_name: str) -> str | None:
        return self._roles_by_name().get(person_name)

    def _roles_by_name(self) -> dict[str, str]:
        cache = getattr(self, "_role_cache", None)
        if cache is None:
            cache = {m.person_name: m.role_id for m in self.members}
            object.__setattr__(self, "_role_cache", cache)
        return cache

    def members_with_role(self, role_id: str) -> list[Member]:
        return [m for m in self.members if m.role_id == role_id]

    def direct_reports(self, person_name: str) -> list[Member]:
        return [m for m in self.members if m.supervisor == person_name]

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "org_id": self.org_id,
            "name": self.name,
            "mission": self.mission,
            "timezone": self.timezone,
            "members": [
                {
                    "person_name": m.person_name,
                    "role_id": m.role_id,
                    "supervisor": m.supervisor,
                    "responsibilities": list(m.responsibilities),
                }
                for m in self.members
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OrgChart":
        return cls(
            org_id=d["org_id"],
            name=d["name"],
            mission=d["mission"],
            timezone=d.get("timezone", "UTC"),
            members=tuple(
                Member(
                    person_name=m["person_name"],
                    role_id=m["role_id"],
                    supervisor=m.get("supervisor"),
                    responsibilities=tuple(m.get("responsibilities", ())),
                )
                for m in d["members"]
            ),
        )


@dataclass(frozen=True)
class UserProfile:
    user_id: str
    person_name: str
    role_id: str
    org_id: str
    templates: tuple[MeetingTemplate, ...]
    principles: tuple[PriorityPrinciple, ...]
    conflict_reasons: tuple[ConflictReason, ...]


@dataclass(frozen=True)
class DecisionContext:
    """Context a trigger may consult: the org chart for role lookups."""

    org: OrgChart

    def role_of(self, person_name: str) -> str | None:
        return self.org.role_of(person_name)


# ---------------------------------------------------------------------------
# Predicate evaluation
# ---------------------------------------------------------------------------

def _validate_predicate(tree: Any, path: str, depth: int = 1) -> None:
    if depth > MAX_PREDICATE_DEPTH:
        raise SchemaError(f"{path}: predicate tree deeper than {MAX_PREDICATE_DEPTH}")
    if not isinstance(tree, dict) or "op" not in tree:
        raise SchemaError(f"{path}: predicate node must be an object with an 'op' field")
    op = tree["op"]
    if op in COMBINATOR_OPS:
        if op == "not":
            _validate_predicate(tree.get("arg"), f"{path}.arg", depth + 1)
        else:
            args = tree.get("args")
            if not isinstance(args, list) or not args:
                raise SchemaError(f"{path}: '{op}' needs a non-empty 'args' list")
            for i, a in enumerate(args):
                _validate_predicate(a, f"{path}.args[{i}]", depth + 1)
    elif op in LEAF_OPS:
        if op == "attendee-role-contains" and "role" not in tree:
            raise SchemaError(f"{path}: attendee-role-contains needs 'role'")
        if op in ("event-type-equals", "modality-equals") and "value" not in tree:
            raise SchemaError(f"{path}: {op} needs 'value'")
        if op == "deadline-within-hours" and not isinstance(tree.get("hours"), (int, float)):
            raise SchemaError(f"{path}: deadline-within-hours needs numeric 'hours'")
        if op == "title-contains-tag" and "tag" not in tree:
            raise SchemaError(f"{path}: title-contains-tag needs 'tag'")
    else:
        raise SchemaError(f"{path}: unknown predicate op '{op}'")


def eval_predicate(tree: dict, event: "Event", ctx: DecisionContext) -> int:
    """Evaluate a predicate tree to 0/1.  Total: never raises on a valid event."""
    op = tree["op"]
    if op == "all":
        return int(all(eval_predicate(a, event, ctx) for a in tree["args"]))
    if op == "any":
        return int(any(eval_predicate(a, event, ctx) for a in tree["args"]))
    if op == "not":
        return int(not eval_predicate(tree["arg"], event, ctx))
    if op == "attendee-role-contains":
        want = tree["role"]
        return int(any(ctx.role_of(a) == want for a in event.attendees))
    if op == "event-type-equals":
        return int(event.event_type == tree["value"])
    if op == "urgency-flag-set":
        return int(bool(event.urgency))
    if op == "deadline-within-hours":
        if event.deadline_marker is None:
            return 0
        delta_h = (event.deadline_marker - event.start).total_seconds() / 3600.0
        return int(delta_h <= float(tree["hours"]))
    if op == "modality-equals":
        return int(event.modality == tree["value"])
    if op == "title-contains-tag":
        return int(tree["tag"].lower() in event.title.lower())
    return 0  # unreachable for validated trees


def evaluate_trigger(p: PriorityPrinciple, event: "Event", ctx: DecisionContext) -> int:
    return eval_predicate(p.trigger, event, ctx)


def principle_score(profile: UserProfile, event: "Event", ctx: DecisionContext) -> float:
    """Weighted sum of fired triggers: sum of w_k over principles whose
    trigger evaluates to 1 on (event, ctx)."""
    return float(
        sum(p.weight * evaluate_trigger(p, event, ctx) for p in profile.principles)
    )


# ---------------------------------------------------------------------------
# Schema loading / validation
# ---------------------------------------------------------------------------

def _parse_template(d: dict, path: str, role_ids: set[str]) -> MeetingTemplate:
    cadence = d.get("cadence")
    if cadence not in CADENCES:
        raise SchemaError(f"{path}.cadence: must be one of {CADENCES}, got {cadence!r}")
    dur = d.get("duration_minutes")
    if not isinstance(dur, int) or dur <= 0:
        raise SchemaError(f"{path}.duration_minutes: must be a positive integer")
    pattern = tuple(d.get("attendee_pattern", ()))
    for sel in pattern:
        if sel.startswith("role:"):
            if sel[5:] not in role_ids:
                raise SchemaError(f"{path}.attendee_pattern: unknown role selector {sel!r}")
        elif sel not in ("supervisor", "direct-reports", "peers", "external"):
            raise SchemaError(f"{path}.attendee_pattern: unknown selector {sel!r}")
    return MeetingTemplate(
        template_id=d["template_id"],
        topic=d["topic"],
        cadence=cadence,
        duration_minutes=dur,
        attendee_pattern=pattern,
        event_type=d.get("event_type", "coordination"),
        constraints=tuple(
            Constraint(kind=c["kind"], tag=c["tag"], key=c["key"])
            for c in d.get("constraints", ())
        ),
        title_templates=tuple(d.get("title_templates", ())),
        location_type=d.get("location_type", "conference-room"),
        modality=d.get("modality", "in-person"),
        preferred_weekday=int(d.get("preferred_weekday", 0)),
    )


def _parse_principle(d: dict, path: str) -> PriorityPrinciple:
    w = d.get("weight")
    if not isinstance(w, (int, float)) or w <= 0:
        raise SchemaError(f"{path} ({d.get('principle_id')}): weight must be > 0")
    _validate_predicate(d.get("trigger"), f"{path}.trigger")
    return PriorityPrinciple(
        principle_id=d["principle_id"],
        description=d.get("description", ""),
        weight=float(w),
        trigger=d["trigger"],
    )


def _parse_reason(d: dict, path: str, role_ids: set[str]) -> ConflictReason:
    ops = d.get("transform")
    if not isinstance(ops, list) or not ops:
        raise SchemaError(f"{path}: transform must be a non-empty list of patch ops")
    for i, op in enumerate(ops):
        name = op.get("op")
        if name not in TRANSFORM_OPS:
            raise SchemaError(f"{path}.transform[{i}]: unknown op {name!r}")
        if name == "add-attendee-of-role" and op.get("role") not in role_ids:
            raise SchemaError(f"{path}.transform[{i}]: unknown role {op.get('role')!r}")
        if name == "retitle-from-template" and not op.get("templates"):
            raise SchemaError(f"{path}.transform[{i}]: needs non-empty 'templates'")
    return ConflictReason(
        reason_id=d["reason_id"],
        description=d.get("description", ""),
        transform=tuple(ops),
    )


def schema_from_dict(data: dict) -> OrgSchema:
    if "roles" not in data or not data["roles"]:
        raise SchemaError("schema must declare at least one role")
    role_ids = {r["role_id"] for r in data["roles"]}
    roles: dict[str, RoleSchema] = {}
    for rd in data["roles"]:
        rid = rd["role_id"]
        path = f"roles[{rid}]"
        if rid in roles:
            raise SchemaError(f"{path}: duplicate role_id")
        sup = rd.get("supervisor_role")
        if sup is not None and sup not in role_ids:
            raise SchemaError(f"{path}.supervisor_role: unknown role {sup!r}")
        role = Role(
            role_id=rid,
            title=rd.get("title", rid),
            department=rd.get("department", ""),
            responsibilities=tuple(rd.get("responsibilities", ())),
            supervisor_role=sup,
        )
        templates = tuple(
            _parse_template(t, f"{path}.templates[{t.get('template_id')}]", role_ids)
            for t in rd.get("templates", ())
        )
        if not templates:
            raise SchemaError(f"{path}: templates must be non-empty")
        principles = tuple(
            _parse_principle(p, f"{path}.principles[{i}]")
            for i, p in enumerate(rd.get("principles", ()))
        )
        if not principles:
            raise SchemaError(f"{path}: principles must be non-empty")
        reasons = tuple(
            _parse_reason(c, f"{path}.conflict_reasons[{c.get('reason_id')}]", role_ids)
            for c in rd.get("conflict_reasons", ())
        )
        if not reasons:
            raise SchemaError(f"{path}: conflict_reasons must be non-empty")
        roles[rid] = RoleSchema(role, templates, principles, reasons)
    return OrgSchema(
        schema_id=data.get("schema_id", "org"),
        name=data.get("name", data.get("schema_id", "org")),
        mission=data.get("mission", ""),
        timezone=data.get("timezone", "UTC"),
        roles=roles,
    )


def schema_to_dict(schema: OrgSchema) -> dict:
    """Inverse of ``schema_from_dict`` (round-trips through JSON)."""
    return {
        "schema_version": SCHEMA_VERSION,
        "schema_id": schema.schema_id,
        "name": schema.name,
        "mission": schema.mission,
        "timezone": schema.timezone,
        "roles": [
            {
                "role_id": rs.role.role_id,
                "title": rs.role.title,
                "department": rs.role.department,
                "responsibilities": list(rs.role.responsibilities),
                "supervisor_role": rs.role.supervisor_role,
                "templates": [
                    {
                        "template_id": t.template_id,
                        "topic": t.topic,
                        "cadence": t.cadence,
                        "duration_minutes": t.duration_minutes,
                        "attendee_pattern": list(t.attendee_pattern),
                        "event_type": t.event_type,
                        "constraints": [
                            {"kind": c.kind, "tag": c.tag, "key": c.key}
                            for c in t.constraints
                        ],
                        "title_templates": list(t.title_templates),
                        "location_type": t.location_type,
                        "modality": t.modality,
                        "preferred_weekday": t.preferred_weekday,
                    }
                    for t in rs.templates
                ],
                "principles": [
                    {
                        "principle_id": p.principle_id,
                        "description": p.description,
                        "weight": p.weight,
                        "trigger": p.trigger,
                    }
                    for p in rs.principles
                ],
                "conflict_reasons": [
                    {
                        "reason_id": c.reason_id,
                        "description": c.description,
                        "transform": list(c.transform),
                    }
                    for c in rs.conflict_reasons
                ],
            }
            for rs in schema.roles.values()
        ],
    }


def load_schema(path: str) -> OrgSchema:
    """Load and fully validate a schema file.  Raises SchemaError with the
    offending path on any invariant violation."""
    try:
        data = load_json(path)
    except Exception as exc:  # malformed file
        raise SchemaError(f"{path}: cannot parse schema file: {exc}") from exc
    return schema_from_dict(data)


# ---------------------------------------------------------------------------
# Org instantiation
# ---------------------------------------------------------------------------

_FIRST_NAMES = [
    "Sarah", "Emily", "Michael", "Aisha", "James", "Lila", "Rajiv", "Nina",
    "Samuel", "Mia", "Elena", "Noah", "Olivia", "Jordan", "Sophia", "Lucas",
    "Zoe", "Ethan", "Ava", "Daniel", "Grace", "Omar", "Priya", "Felix",
    "Hannah", "Ivan", "Clara", "Mateo", "Yuki", "Amara", "Leo", "Tara",
]
_LAST_NAMES = [
    "Mitchell", "White", "Lee", "Patel", "Carter", "Nguyen", "Sharma",
    "Garcia", "Thompson", "Martinez", "Kim", "Rodriguez", "Rivera", "Chen",
    "Anderson", "Park", "Brooks", "Silva", "Novak", "Okafor", "Ito", "Haddad",
    "Kowalski", "Moreau", "Singh", "Berg", "Diaz", "Quinn", "Vega", "Walsh",
]


class OrgBuildError(ValueError):
    """Requested headcounts cannot satisfy the supervision structure."""


def _draw_names(rng, count: int) -> list[str]:
    names: list[str] = []
    seen: set[str] = set()
    while len(names) < count:
        name = f"{rng.choice(_FIRST_NAMES)} {rng.choice(_LAST_NAMES)}"
        if name in seen:
            continue
        seen.add(name)
        names.append(name)
    return names


def instantiate_org(
    schema: OrgSchema,
    size_plan: dict[str, int],
    seed: int,
    org_id: str | None = None,
) -> tuple[OrgChart, list[UserProfile]]:
    """Instantiate an org chart and one profile per member.

    Deterministic for fixed (schema, size_plan, seed).  Supervisors are
    assigned round-robin among members of the schema's supervisor role.
    """
    for rid in size_plan:
        if rid not in schema.roles:
            raise OrgBuildError(f"size_plan references unknown role {rid!r}")
    for rid, count in size_plan.items():
        if count <= 0:
            continue
        sup = schema.roles[rid].role.supervisor_role
        if sup is not None and size_plan.get(sup, 0) < 1:
            raise OrgBuildError(
                f"role {rid!r} needs supervisors of role {sup!r} "
                f"but the plan allocates none"
            )

    rng = substream(seed, "org", schema.schema_id)
    total = sum(size_plan.values())
    names = _draw_names(rng, total)
    org_id = org_id or f"{schema.schema_id}-{seed}"

    members: list[Member] = []
    by_role: dict[str, list[str]] = {}
    name_iter = iter(names)
    # Instantiate in schema role order so supervisor pools exist before use.
    for rid, rs in schema.roles.items():
        for _ in range(size_plan.get(rid, 0)):
            person = next(name_iter)
            by_role.setdefault(rid, []).append(person)
            members.append(
                Member(
                    person_name=person,
                    role_id=rid,
                    supervisor=None,  # filled below
                    responsibilities=rs.role.responsibilities,
                )
            )
    resolved: list[Member] = []
    counters: dict[str, int] = {}
    for m in members:
        sup_role = schema.roles[m.role_id].role.supervisor_role
        sup_name = None
        if sup_role is not None:
            pool = by_role.get(sup_role, [])
            idx = counters.get(m.role_id, 0)
            sup_name = pool[idx % len(pool)]
            counters[m.role_id] = idx + 1
        resolved.append(
            Member(m.person_name, m.role_id, sup_name, m.responsibilities)
        )

    org = OrgChart(
        org_id=org_id,
        name=schema.name,
        mission=schema.mission,
        timezone=schema.timezone,
        members=tuple(resolved),
    )
    profiles = [
        UserProfile(
            user_id=f"{org_id}-u{idx:02d}",
            person_name=m.person_name,
            role_id=m.role_id,
            org_id=org_id,
            templates=schema.roles[m.role_id].templates,
            principles=schema.roles[m.role_id].principles,
            conflict_reasons=schema.roles[m.role_id].conflict_reasons,
        )
        for idx, m in enumerate(resolved)
    ]
    return org, profiles
