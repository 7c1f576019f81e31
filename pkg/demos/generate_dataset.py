"""Walkthrough: build a full data bundle from a bundled organization schema.

Instantiates a small company, generates a conflict-free year of regular
meetings per member, injects conflict rounds with hidden ground truth, and
writes everything (public datasets separate from truth files) under
``demo_out/bundle`` with a digest manifest.

Run:  python3 demos/generate_dataset.py
"""

from collections import Counter
from pathlib import Path

import calclash as cc

OUT = Path(__file__).parent / "demo_out" / "bundle"


def main() -> None:
    schema = cc.resolve_schema("tech_company")
    print(f"schema: {schema.name} with roles {', '.join(schema.roles)}")

    params = cc.GenParams(n_rounds=104, m=5)
    bundle = cc.generate_bundle(
        schema, {"ceo": 1, "em": 2, "swe": 6, "hr": 1}, seed=42, params=params
    )
    manifest = cc.write_bundle(bundle, OUT)
    print(f"wrote {len(manifest['files'])} files to {OUT}")

    profile = bundle.profiles[3]  # a software engineer
    cal = bundle.calendars[profile.user_id]
    print(f"\n{profile.person_name} ({profile.role_id}):")
    print(f"  {len(cal.events)} regular events, first week:")
    for e in cal.events[:4]:
        print(f"    {e.start:%a %H:%M}-{e.end:%H:%M}  {e.title}")

    ds = bundle.datasets[profile.user_id]
    labels = Counter(r.anchor_label for r in ds.rounds)
    print(f"  {len(ds.rounds)} conflict rounds: {dict(labels)}")

    rnd = ds.rounds[0]
    ctx = cc.DecisionContext(bundle.org)
    print(f"\nround {rnd.round_id} (truth hidden from agents):")
    for e in rnd.events:
        score = cc.principle_score(profile, e, ctx)
        mark = " <- must accept" if e.event_id == rnd.truth_accept else ""
        print(f"  {e.event_id}  score {score:5.1f}  {e.title!r}{mark}")


if __name__ == "__main__":
    main()
