"""Walkthrough: shaped rewards, returns-to-go, and group-relative advantages.

Runs a small group of random-agent rollouts over the same dataset, scores
each round with the four-component shaped reward (format, decision, ranking,
hub interaction; the last two weighted by the round-index curriculum),
computes discounted returns-to-go, normalizes them per round position across
the group, and exports the flat CSV a trainer would consume.

Run:  python3 demos/reward_advantage_export.py
"""

from pathlib import Path

import calclash as cc

OUT = Path(__file__).parent / "demo_out"
GROUP_SIZE = 4


def main() -> None:
    schema = cc.resolve_schema("tech_company")
    params = cc.GenParams(n_rounds=20, m=5)
    bundle = cc.generate_bundle(schema, {"ceo": 1, "em": 1, "swe": 2}, seed=3, params=params)
    profile = bundle.profiles[2]
    ds = bundle.datasets[profile.user_id]
    truth = ds.truth_dict("demo")

    traces = []
    for k in range(GROUP_SIZE):
        agent = cc.make_agent("random", seed=k, salt=profile.user_id)
        trace = cc.run_episode(
            ds, agent, context=cc.build_context(profile, bundle.org),
            group_id="demo-group", rollout_id=f"r{k}",
        )
        traces.append(trace)

    cfg = cc.RewardConfig(gamma=0.9)
    batch = cc.score_group(traces, truth, cfg, prompt_id=profile.user_id)

    print(f"group of {GROUP_SIZE} rollouts x {params.n_rounds} rounds (gamma={cfg.gamma})")
    print("\nround 1 across the group:")
    for i, rid in enumerate(batch.rollout_ids):
        rr = batch.components[i][0]
        print(
            f"  {rid}: r_f={rr.r_f} r_a={rr.r_a} r_r={rr.r_r:.2f} r_i={rr.r_i} "
            f"shaped={rr.shaped:.3f} return={batch.returns[i, 0]:.3f} "
            f"advantage={batch.advantages[i, 0]:+.3f}"
        )
    print(f"\nper-round advantage column means (all ~0): "
          f"max |mean| = {abs(batch.advantages.mean(axis=0)).max():.2e}")

    path = OUT / "advantages.csv"
    cc.export_advantages_csv([batch], path)
    print(f"exported {batch.rewards.size} rows to {path}")


if __name__ == "__main__":
    main()
