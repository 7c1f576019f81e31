"""Pipeline orchestration: build full data bundles, persist them with content
digests, and drive agents through episodes.

A bundle is one instantiated organization plus, per member, a regular
calendar, a public conflict dataset, and a separate hidden-truth file.  All
files are canonical JSON; ``manifest.json`` records a sha256 digest per file
so downstream steps can refuse to score mismatched artifacts.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path

from .calgen import Calendar, Event, generate_regular_calendar, validate_no_overlap
from .conflicts import ConflictDataset, ConflictRound, GenParams, build_dataset
from .env import Episode, EnvConfig, parse_agent_text
from .jsonio import digest_of, dump_canonical, load_json, sha256_text, canonical_text
from .schema import (
    OrgChart,
    OrgSchema,
    UserProfile,
    instantiate_org,
    schema_from_dict,
    schema_to_dict,
)

logger = logging.getLogger(__name__)

DEFAULT_YEAR = 2026

# Default headcount per role when a size plan is not given: every declared
# role gets two members (enough for peers and supervision chains), except
# roles nothing reports to, which get one.
def default_size_plan(schema: OrgSchema) -> dict[str, int]:
    supervisors = {
        rs.role.supervisor_role
        for rs in schema.roles.values()
        if rs.role.supervisor_role
    }
    plan: dict[str, int] = {}
    for rid, rs in schema.roles.items():
        if rs.role.supervisor_role is None and rid in supervisors:
            plan[rid] = 1
        else:
            plan[rid] = 2
    return plan


class IntegrityError(RuntimeError):
    """A bundle file does not match the digest recorded in the manifest."""


BUNDLED_SCHEMAS = ("research_lab", "tech_company")


def resolve_schema(name_or_path: str) -> OrgSchema:
    """Load a schema by bundled name (research_lab, tech_company) or by path."""
    if name_or_path in BUNDLED_SCHEMAS:
        from importlib import resources

        ref = resources.files("calclash").joinpath(f"data/{name_or_path}.json")
        with resources.as_file(ref) as p:
            return schema_from_dict(load_json(p))
    return schema_from_dict(load_json(name_or_path))


@dataclass
class Bundle:
    schema: OrgSchema
    org: OrgChart
    profiles: list[UserProfile]
    calendars: dict[str, Calendar]
    datasets: dict[str, ConflictDataset]
    seed: int
    year: int
    params: GenParams


def generate_bundle(
    schema: OrgSchema,
    size_plan: dict[str, int],
    seed: int,
    year: int = DEFAULT_YEAR,
    params: GenParams = GenParams(),
) -> Bundle:
    """Instantiate an org and build calendar + conflict dataset per member."""
    org, profiles = instantiate_org(schema, size_plan, seed)
    calendars: dict[str, Calendar] = {}
    datasets: dict[str, ConflictDataset] = {}
    for profile in profiles:
        cal = generate_regular_calendar(profile, org, year, seed)
        bad = validate_no_overlap(cal)
        if bad:
            raise RuntimeError(f"{profile.user_id}: calendar self-overlap {bad[:3]}")
        calendars[profile.user_id] = cal
        datasets[profile.user_id] = build_dataset(profile, cal, org, params, seed)
    return Bundle(schema, org, profiles, calendars, datasets, seed, year, params)


# ---------------------------------------------------------------------------
# Bundle persistence
# ---------------------------------------------------------------------------

def write_bundle(bundle: Bundle, out_dir: str | Path) -> dict:
    """Write org/calendars/datasets/truth plus a digest manifest; returns the
    manifest dict."""
    out = Path(out_dir)
    digests: dict[str, str] = {}
    digests["org.json"] = dump_canonical(bundle.org.to_dict(), out / "org.json")
    # The schema lives next to truth/: it holds the hidden principles and is
    # needed to rebuild profiles (oracle agent, regeneration checks).
    digests["schema.json"] = dump_canonical(
        schema_to_dict(bundle.schema), out / "schema.json"
    )
    for uid in sorted(bundle.datasets):
        cal_rel = f"calendars/{uid}.json"
        digests[cal_rel] = dump_canonical(
            bundle.calendars[uid].to_dict(), out / cal_rel
        )
        ds = bundle.datasets[uid]
        public = ds.public_dict()
        ds_rel = f"datasets/{uid}.json"
        ds_digest = dump_canonical(public, out / ds_rel)
        digests[ds_rel] = ds_digest
        truth_rel = f"truth/{uid}.json"
        digests[truth_rel] = dump_canonical(
            ds.truth_dict(dataset_digest=ds_digest), out / truth_rel
        )
    manifest = {
        "schema_version": 1,
        "org_id": bundle.org.org_id,
        "seed": bundle.seed,
        "year": bundle.year,
        "params": {
            "n_rounds": bundle.params.n_rounds,
            "m": bundle.params.m,
            "accept_ratio": bundle.params.accept_ratio,
            "rounds_per_week": bundle.params.rounds_per_week,
            "distinct_principles": bundle.params.distinct_principles,
        },
        "users": [p.user_id for p in bundle.profiles],
        "files": digests,
    }
    dump_canonical(manifest, out / "manifest.json")
    return manifest


def verify_bundle_files(bundle_dir: str | Path) -> dict:
    """Check every file against the manifest digests; returns the manifest."""
    root = Path(bundle_dir)
    manifest = load_json(root / "manifest.json")
    for rel, want in manifest["files"].items():
        path = root / rel
        if not path.exists():
            raise IntegrityError(f"{rel}: listed in manifest but missing")
        got = sha256_text(path.read_text(encoding="utf-8"))
        if got != want:
            raise IntegrityError(
                f"{rel}: digest mismatch (manifest {want[:12]}.., file {got[:12]}..)"
            )
    return manifest


def dataset_from_files(public: dict, truth: dict) -> ConflictDataset:
    """Rebuild an in-memory dataset by joining the public file with its truth
    file (matched per round id)."""
    if public["user_id"] != truth["user_id"]:
        raise ValueError(
            f"user mismatch: dataset {public['user_id']} vs truth {truth['user_id']}"
        )
    truth_by_id = {r["round_id"]: r for r in truth["rounds"]}
    rounds: list[ConflictRound] = []
    for rd in public["rounds"]:
        tr = truth_by_id.get(rd["round_id"])
        if tr is None:
            raise ValueError(f"truth file missing round {rd['round_id']}")
        rounds.append(
            ConflictRound(
                round_id=rd["round_id"],
                user_id=public["user_id"],
                week=rd["week"],
                timeslot=(
                    datetime.fromisoformat(rd["timeslot"][0]),
                    datetime.fromisoformat(rd["timeslot"][1]),
                ),
                events=[Event.from_dict(e) for e in rd["events"]],
                truth_accept=tr["truth_accept"],
                truth_ranking=list(tr["truth_ranking"]),
                anchor_label=tr["anchor_label"],
                provenance={
                    eid: (tuple(pair) if pair else None)
                    for eid, pair in tr["provenance"].items()
                },
            )
        )
    params = GenParams(
        n_rounds=public["params"]["n_rounds"],
        m=public["params"]["m"],
        accept_ratio=truth.get("accept_ratio", 0.5),
        rounds_per_week=public["params"]["rounds_per_week"],
    )
    return ConflictDataset(
        org_id=public["org_id"],
        user_id=public["user_id"],
        rounds=rounds,
        params=params,
        seed=public["seed"],
    )


def load_bundle_user(bundle_dir: str | Path, user_id: str) -> tuple[ConflictDataset, str]:
    """Load one user's dataset (with truth) plus the public dataset digest."""
    root = Path(bundle_dir)
    public = load_json(root / "datasets" / f"{user_id}.json")
    truth = load_json(root / "truth" / f"{user_id}.json")
    digest = sha256_text(canonical_text(public))
    if truth.get("dataset_digest") != digest:
        raise IntegrityError(
            f"{user_id}: truth file was built for a different dataset "
            f"(digest {truth.get('dataset_digest', '?')[:12]}.. vs {digest[:12]}..)"
        )
    return dataset_from_files(public, truth), digest


def load_org(bundle_dir: str | Path) -> OrgChart:
    return OrgChart.from_dict(load_json(Path(bundle_dir) / "org.json"))


# ---------------------------------------------------------------------------
# Episode running
# ---------------------------------------------------------------------------

def org_chart_text(org: OrgChart) -> str:
    lines = []
    for m in org.members:
        if m.supervisor:
            lines.append(f"- {m.person_name} ({m.role_id}), reports to {m.supervisor}")
        else:
            lines.append(f"- {m.person_name} ({m.role_id})")
    return "\n".join(lines)


def build_context(profile: UserProfile, org: OrgChart) -> dict:
    """Agent-visible situational context; carries no truth fields."""
    member = next(m for m in org.members if m.person_name == profile.person_name)
    return {
        "org_name": org.name,
        "mission": org.mission,
        "user_name": profile.person_name,
        "user_id": profile.user_id,
        "role_id": profile.role_id,
        "responsibilities": list(member.responsibilities),
        "org_chart_text": org_chart_text(org),
    }


def run_episode(
    dataset: ConflictDataset,
    agent,
    config: EnvConfig = EnvConfig(),
    context: dict | None = None,
    dataset_digest: str = "",
    group_id: str | None = None,
    rollout_id: str = "r0",
) -> dict:
    """Drive one agent through every round of a dataset; returns the trace."""
    episode = Episode(dataset, config=config, context=context)
    obs = episode.reset()
    while obs is not None:
        raw = agent.act(obs)
        event_ids = [e["event_id"] for e in obs.conflicts]
        action = parse_agent_text(raw, event_ids)
        obs = episode.step(action, raw=raw)
    agent_info = {"kind": getattr(agent, "kind", "unknown")}
    return episode.trace_dict(
        agent_info,
        dataset_digest=dataset_digest,
        group_id=group_id,
        rollout_id=rollout_id,
    )


def run_bundle(
    bundle_dir: str | Path,
    agent_factory,
    out_dir: str | Path,
    config: EnvConfig = EnvConfig(),
    users: list[str] | None = None,
    workers: int = 1,
    group_id: str | None = None,
    rollout_id: str = "r0",
    resume: bool = True,
) -> list[Path]:
    """Run an agent over every user dataset in a bundle and write trace files.

    ``agent_factory(profile, org)`` builds a fresh agent per user.  Existing
    complete traces are skipped when ``resume`` is set.  Returns the written
    (or reused) trace paths.
    """
    root = Path(bundle_dir)
    manifest = verify_bundle_files(root)
    org = load_org(root)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    todo = users or manifest["users"]

    def one(uid: str) -> Path:
        trace_path = out / f"{uid}.trace.json"
        if resume and trace_path.exists():
            existing = load_json(trace_path)
            if existing.get("status") == "complete":
                logger.info("%s: complete trace exists, skipping", uid)
                return trace_path
        dataset, digest = load_bundle_user(root, uid)
        profile = profile_from_bundle(root, uid, org=org)
        agent = agent_factory(profile, org)
        trace = run_episode(
            dataset,
            agent,
            config=config,
            context=build_context(profile, org),
            dataset_digest=digest,
            group_id=group_id,
            rollout_id=rollout_id,
        )
        dump_canonical(trace, trace_path)
        return trace_path

    if workers <= 1:
        return [one(uid) for uid in todo]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, todo))


def replay_trace(dataset: ConflictDataset, trace: dict) -> dict:
    """Re-derive a trace by feeding its recorded raw agent outputs back
    through a fresh environment.  Byte-equality of the result certifies the
    environment replays deterministically."""
    cfg = trace["config"]
    config = EnvConfig(
        w=cfg["w"],
        k=cfg["k"],
        hub_capacity=cfg["hub_capacity"],
        hub_reset_per_round=cfg["hub_reset_per_round"],
    )
    raws = [turn["raw"] for rec in trace["rounds"] for turn in rec["turns"]]
    episode = Episode(dataset, config=config, context=trace.get("context") or {})
    obs = episode.reset()
    for raw in raws:
        if obs is None:
            raise ValueError("trace has more turns than the dataset allows")
        event_ids = [e["event_id"] for e in obs.conflicts]
        obs = episode.step(parse_agent_text(raw, event_ids), raw=raw)
    return episode.trace_dict(
        trace["agent"],
        dataset_digest=trace["dataset_digest"],
        group_id=trace.get("group_id"),
        rollout_id=trace.get("rollout_id", "r0"),
    )


def load_bundle_schema(bundle_dir: str | Path) -> OrgSchema:
    return schema_from_dict(load_json(Path(bundle_dir) / "schema.json"))


def profile_from_bundle(
    bundle_dir: str | Path, user_id: str, org: OrgChart | None = None
) -> UserProfile:
    """Rebuild a user profile from a persisted bundle: identity from the org
    chart position (user ids index members), hidden principles from the
    stored schema by role."""
    root = Path(bundle_dir)
    org = org or load_org(root)
    schema = load_bundle_schema(root)
    idx = int(user_id.rsplit("u", 1)[1])
    member = org.members[idx]
    rs = schema.roles[member.role_id]
    return UserProfile(
        user_id=user_id,
        person_name=member.person_name,
        role_id=member.role_id,
        org_id=org.org_id,
        templates=rs.templates,
        principles=rs.principles,
        conflict_reasons=rs.conflict_reasons,
    )
