"""Command-line pipeline: generate data bundles, run agents, score traces,
export rewards/advantages, and replay traces for determinism checks.

Exit codes: 0 success, 1 usage error, 2 data error (validation, integrity,
trace/truth mismatch), 3 partial run failures.
"""

from __future__ import annotations

import logging
import sys
from pathlib import Path

import click

from .agents import RemoteEndpointConfig, make_agent
from .conflicts import GenParams
from .env import EnvConfig
from .jsonio import digest_of, dump_canonical, load_json
from .metrics import instance_metrics
from .rewards import RewardConfig, export_advantages_csv, score_group
from .runner import (
    BUNDLED_SCHEMAS,
    IntegrityError,
    default_size_plan,
    DEFAULT_YEAR,
    generate_bundle,
    load_bundle_user,
    load_org,
    profile_from_bundle,
    replay_trace,
    resolve_schema,
    run_bundle,
    verify_bundle_files,
    write_bundle,
)

logger = logging.getLogger(__name__)

EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_PARTIAL = 3

# The spec'd exit-code contract reserves 2 for data errors; route click's
# usage errors (which default to 2) to 1 instead.
click.UsageError.exit_code = EXIT_USAGE


class DataError(click.ClickException):
    exit_code = EXIT_DATA


def _with_config(ctx: click.Context, config: str | None, **params) -> dict:
    """Merge a JSON config file with CLI flags; explicit flags win."""
    merged = dict(params)
    if config:
        try:
            file_vals = load_json(config)
        except Exception as exc:
            raise DataError(f"cannot read config file {config}: {exc}") from exc
        for key, value in file_vals.items():
            if key not in merged:
                raise click.UsageError(f"unknown config key {key!r} in {config}")
            src = ctx.get_parameter_source(key)
            if src is not None and src.name == "DEFAULT":
                merged[key] = value
    return merged


def _parse_size_plan(text: str | None) -> dict[str, int] | None:
    if not text:
        return None
    plan: dict[str, int] = {}
    for part in text.split(","):
        if "=" not in part:
            raise click.UsageError(
                f"size plan entries must be role=count, got {part!r}"
            )
        role, count = part.split("=", 1)
        try:
            plan[role.strip()] = int(count)
        except ValueError:
            raise click.UsageError(f"size plan count must be an integer: {part!r}")
    return plan


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Enable debug logging.")
def main(verbose: bool) -> None:
    """Deterministic calendar-conflict decision benchmark pipeline."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )


@main.command()
@click.option("--schema", "schema_ref", required=True,
              help=f"Bundled schema name ({', '.join(BUNDLED_SCHEMAS)}) or a JSON file path.")
@click.option("--size-plan", default=None,
              help="Headcount per role, e.g. 'ceo=1,em=2,swe=6,hr=1'. Default: a small plan derived from the schema.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--year", type=int, default=DEFAULT_YEAR, show_default=True)
@click.option("--n-rounds", type=int, default=104, show_default=True)
@click.option("--m", type=int, default=5, show_default=True, help="Events per conflict round.")
@click.option("--accept-ratio", type=float, default=0.5, show_default=True)
@click.option("--rounds-per-week", type=int, default=2, show_default=True)
@click.option("--distinct-principles", type=int, default=None,
              help="Difficulty knob: restrict competitor generation to this many sampled principles.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--config", default=None, type=click.Path(exists=True, dir_okay=False),
              help="JSON file supplying defaults for any flag (flags win).")
@click.pass_context
def generate(ctx, schema_ref, size_plan, seed, year, n_rounds, m, accept_ratio,
             rounds_per_week, distinct_principles, out_dir, config):
    """Build an org, per-user calendars, conflict datasets, and truth files."""
    opts = _with_config(
        ctx, config, schema_ref=schema_ref, size_plan=size_plan, seed=seed,
        year=year, n_rounds=n_rounds, m=m, accept_ratio=accept_ratio,
        rounds_per_week=rounds_per_week, distinct_principles=distinct_principles,
        out_dir=out_dir,
    )
    if opts["n_rounds"] > 52 * opts["rounds_per_week"]:
        raise DataError(
            f"n_rounds={opts['n_rounds']} exceeds available rounds "
            f"(52 weeks x {opts['rounds_per_week']}/week)"
        )
    try:
        schema = resolve_schema(opts["schema_ref"])
    except Exception as exc:
        raise DataError(f"schema load failed: {exc}") from exc
    plan = _parse_size_plan(opts["size_plan"]) or default_size_plan(schema)
    params = GenParams(
        n_rounds=opts["n_rounds"],
        m=opts["m"],
        accept_ratio=opts["accept_ratio"],
        rounds_per_week=opts["rounds_per_week"],
        distinct_principles=opts["distinct_principles"],
    )
    try:
        bundle = generate_bundle(schema, plan, opts["seed"], opts["year"], params)
        manifest = write_bundle(bundle, opts["out_dir"])
    except Exception as exc:
        raise DataError(f"generation failed: {exc}") from exc
    click.echo(
        f"wrote bundle for {len(manifest['users'])} users "
        f"({params.n_rounds} rounds each) to {opts['out_dir']}"
    )


def _remote_cfg_from_opts(opts: dict) -> RemoteEndpointConfig:
    if not opts["endpoint_url"]:
        raise click.UsageError("--agent remote requires --endpoint-url")
    return RemoteEndpointConfig(
        base_url=opts["endpoint_url"],
        model=opts["model"],
        auth_env_var=opts["auth_env_var"],
        temperature=opts["temperature"],
        timeout=opts["timeout"],
        retry_budget=opts["retry_budget"],
        prompt_template=opts["prompt_template"],
    )


@main.command()
@click.option("--bundle", "bundle_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--agent", "agent_spec", default="oracle", show_default=True,
              help="oracle | random | heuristic:<rule> | remote")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--users", default=None, help="Comma-separated user ids (default: all in the bundle).")
@click.option("--k", type=int, default=6, show_default=True, help="Turn budget per round.")
@click.option("--w", type=int, default=20, show_default=True, help="History window (rounds).")
@click.option("--hub-capacity", type=int, default=10, show_default=True)
@click.option("--hub-reset-per-round", is_flag=True,
              help="Clear the strategy hub at the start of every round.")
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--group-id", default=None, help="Group label for reward-advantage runs.")
@click.option("--rollout-id", default="r0", show_default=True)
@click.option("--no-resume", is_flag=True, help="Rerun episodes even if complete traces exist.")
@click.option("--endpoint-url", default=None, help="Remote agent: chat completion URL.")
@click.option("--model", default="", help="Remote agent: model name.")
@click.option("--auth-env-var", default="CALCLASH_API_TOKEN", show_default=True,
              help="Environment variable holding the bearer token.")
@click.option("--temperature", type=float, default=0.7, show_default=True)
@click.option("--timeout", type=float, default=60.0, show_default=True)
@click.option("--retry-budget", type=int, default=2, show_default=True)
@click.option("--prompt-template", default="default", show_default=True,
              help="Prompt template name: default | react | mem_react")
@click.option("--config", default=None, type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def run(ctx, bundle_dir, agent_spec, out_dir, seed, users, k, w, hub_capacity,
        hub_reset_per_round, workers, group_id, rollout_id, no_resume,
        endpoint_url, model, auth_env_var, temperature, timeout, retry_budget,
        prompt_template, config):
    """Run an agent over every dataset in a bundle; one trace file per user."""
    opts = _with_config(
        ctx, config, bundle_dir=bundle_dir, agent_spec=agent_spec,
        out_dir=out_dir, seed=seed, users=users, k=k, w=w,
        hub_capacity=hub_capacity, hub_reset_per_round=hub_reset_per_round,
        workers=workers, group_id=group_id, rollout_id=rollout_id,
        no_resume=no_resume, endpoint_url=endpoint_url, model=model,
        auth_env_var=auth_env_var, temperature=temperature, timeout=timeout,
        retry_budget=retry_budget, prompt_template=prompt_template,
    )
    env_config = EnvConfig(
        w=opts["w"], k=opts["k"], hub_capacity=opts["hub_capacity"],
        hub_reset_per_round=opts["hub_reset_per_round"],
    )
    remote_cfg = (
        _remote_cfg_from_opts(opts) if opts["agent_spec"] == "remote" else None
    )
    spec = opts["agent_spec"]

    def factory(profile, org):
        return make_agent(
            spec, seed=opts["seed"], profile=profile, org=org,
            remote_cfg=remote_cfg, salt=profile.user_id,
        )

    try:
        verify_bundle_files(opts["bundle_dir"])
    except (IntegrityError, FileNotFoundError) as exc:
        raise DataError(str(exc)) from exc

    user_list = opts["users"].split(",") if opts["users"] else None
    failures: list[str] = []
    written: list[Path] = []
    # Run users one batch at a time so one failing episode cannot stop the rest.
    manifest_users = user_list or load_json(Path(opts["bundle_dir"]) / "manifest.json")["users"]
    for uid in manifest_users:
        try:
            paths = run_bundle(
                opts["bundle_dir"], factory, opts["out_dir"],
                config=env_config, users=[uid], workers=1,
                group_id=opts["group_id"], rollout_id=opts["rollout_id"],
                resume=not opts["no_resume"],
            )
            written.extend(paths)
        except Exception as exc:
            logger.error("%s: episode failed: %s", uid, exc)
            failures.append(uid)
    click.echo(f"wrote {len(written)} trace(s) to {opts['out_dir']}")
    if failures:
        click.echo(f"failed users: {', '.join(failures)}", err=True)
        sys.exit(EXIT_PARTIAL)


def _load_traces(traces_dir: str) -> list[dict]:
    paths = sorted(Path(traces_dir).glob("*.trace.json"))
    if not paths:
        raise DataError(f"no *.trace.json files in {traces_dir}")
    return [load_json(p) for p in paths]


def _checked_truth(bundle_dir: str, trace: dict) -> dict:
    """Load the truth file for a trace, refusing digest mismatches."""
    uid = trace["user_id"]
    truth_path = Path(bundle_dir) / "truth" / f"{uid}.json"
    if not truth_path.exists():
        raise DataError(f"no truth file for user {uid} in {bundle_dir}")
    truth = load_json(truth_path)
    if trace.get("dataset_digest") != truth.get("dataset_digest"):
        raise DataError(
            f"{uid}: trace was produced on a different dataset "
            f"(trace digest {str(trace.get('dataset_digest'))[:12]}.., "
            f"truth digest {str(truth.get('dataset_digest'))[:12]}..)"
        )
    return truth


@main.command()
@click.option("--bundle", "bundle_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--traces", "traces_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--no-plots", is_flag=True, help="Skip the error-vs-round plot image.")
@click.option("--config", default=None, type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def score(ctx, bundle_dir, traces_dir, out_dir, no_plots, config):
    """Score traces: per-instance reports, aggregate checkpoint table,
    per-round CSV, and an error-vs-round plot."""
    opts = _with_config(
        ctx, config, bundle_dir=bundle_dir, traces_dir=traces_dir,
        out_dir=out_dir, no_plots=no_plots,
    )
    traces = _load_traces(opts["traces_dir"])
    out = Path(opts["out_dir"])
    out.mkdir(parents=True, exist_ok=True)

    reports = []
    for trace in traces:
        truth = _checked_truth(opts["bundle_dir"], trace)
        try:
            report = instance_metrics(trace, truth)
        except ValueError as exc:
            raise DataError(f"{trace['user_id']}: {exc}") from exc
        reports.append(report)
        dump_canonical(report.to_dict(), out / f"{report.user_id}.report.json")

    # Aggregate checkpoint table: mean AER over users at each round checkpoint.
    checkpoints = sorted({cp for r in reports for cp in r.checkpoints})
    aggregate = {
        "schema_version": 1,
        "n_users": len(reports),
        "aer": sum(r.aer for r in reports) / len(reports),
        "avg_ord": sum(r.avg_ord for r in reports) / len(reports),
        "err": sum(r.err for r in reports) / len(reports),
        "checkpoints": {
            str(cp): (
                sum(r.checkpoints[cp] for r in reports if cp in r.checkpoints)
                / sum(1 for r in reports if cp in r.checkpoints)
            )
            for cp in checkpoints
        },
    }
    dump_canonical(aggregate, out / "aggregate.json")

    import csv

    with open(out / "rounds.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["user_id", "round", "round_id", "valid", "correct", "ord", "m"])
        for report in reports:
            for i, r in enumerate(report.per_round):
                writer.writerow(
                    [report.user_id, i + 1, r.round_id, r.valid, r.correct,
                     "" if r.ord is None else repr(r.ord), r.m]
                )

    if not opts["no_plots"]:
        _write_error_plot(reports, out / "error_vs_round.png")
    table = " ".join(
        f"N={cp}:{aggregate['checkpoints'][str(cp)]:.3f}" for cp in checkpoints
    )
    click.echo(
        f"scored {len(reports)} trace(s): AER {aggregate['aer']:.3f}, "
        f"ORD {aggregate['avg_ord']:.3f}, ERR {aggregate['err']:.3f} | {table}"
    )


def _write_error_plot(reports, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    n = max(len(r.per_round) for r in reports)
    xs = range(1, n + 1)
    # Cumulative mean error per user, averaged across users at each round.
    ys = []
    for t in xs:
        vals = [
            sum(1 - rr.correct for rr in r.per_round[:t]) / t
            for r in reports
            if len(r.per_round) >= t
        ]
        ys.append(sum(vals) / len(vals))
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(list(xs), ys, lw=2)
    ax.set_xlabel("decision round")
    ax.set_ylabel("cumulative mean error rate")
    ax.set_ylim(-0.02, 1.02)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


@main.command()
@click.option("--bundle", "bundle_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--traces", "traces_dirs", required=True, multiple=True,
              type=click.Path(exists=True, file_okay=False),
              help="Trace directories; rollouts of one group share a group id.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--lambda-f", type=float, default=1.0, show_default=True)
@click.option("--lambda-a", type=float, default=1.0, show_default=True)
@click.option("--gamma", type=float, default=1.0, show_default=True)
@click.option("--epsilon", type=float, default=1e-8, show_default=True)
@click.option("--no-curriculum", is_flag=True,
              help="Fix the ranking/interaction weights at 0.25 instead of the round-index schedule.")
@click.option("--config", default=None, type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def rewards(ctx, bundle_dir, traces_dirs, out_dir, lambda_f, lambda_a, gamma,
            epsilon, no_curriculum, config):
    """Compute shaped rewards, returns-to-go, and group advantages; export CSV."""
    opts = _with_config(
        ctx, config, bundle_dir=bundle_dir, traces_dirs=traces_dirs,
        out_dir=out_dir, lambda_f=lambda_f, lambda_a=lambda_a, gamma=gamma,
        epsilon=epsilon, no_curriculum=no_curriculum,
    )
    cfg = RewardConfig(
        lambda_f=opts["lambda_f"], lambda_a=opts["lambda_a"],
        gamma=opts["gamma"], epsilon=opts["epsilon"],
        curriculum=not opts["no_curriculum"],
    )
    traces = [t for d in opts["traces_dirs"] for t in _load_traces(d)]
    groups: dict[tuple[str, str], list[dict]] = {}
    for trace in traces:
        gid = trace.get("group_id")
        if gid is None:
            raise DataError(
                f"trace for {trace['user_id']} rollout {trace.get('rollout_id')} "
                "has no group_id; advantages need grouped rollouts (run with --group-id)"
            )
        groups.setdefault((trace["user_id"], gid), []).append(trace)

    batches = []
    for (uid, gid), members in sorted(groups.items()):
        if len(members) < 2:
            raise DataError(
                f"group {gid!r} for user {uid} has {len(members)} rollout(s); "
                "group size must be >= 2"
            )
        truth = _checked_truth(opts["bundle_dir"], members[0])
        for m in members[1:]:
            _checked_truth(opts["bundle_dir"], m)
        members.sort(key=lambda t: t.get("rollout_id", ""))
        batches.append(score_group(members, truth, cfg, prompt_id=f"{uid}/{gid}"))

    out = Path(opts["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    export_advantages_csv(batches, out / "advantages.csv")
    dump_canonical(
        {"schema_version": 1, "reward_config": cfg.to_dict(),
         "groups": [b.prompt_id for b in batches]},
        out / "rewards_manifest.json",
    )
    n_rows = sum(b.rewards.size for b in batches)
    click.echo(f"exported {n_rows} reward rows for {len(batches)} group(s) to {out / 'advantages.csv'}")


@main.command()
@click.option("--bundle", "bundle_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--traces", "traces_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--config", default=None, type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def replay(ctx, bundle_dir, traces_dir, config):
    """Re-derive each trace from its recorded raw outputs and verify the
    result is byte-identical."""
    opts = _with_config(ctx, config, bundle_dir=bundle_dir, traces_dir=traces_dir)
    traces = _load_traces(opts["traces_dir"])
    mismatches = []
    for trace in traces:
        uid = trace["user_id"]
        try:
            dataset, digest = load_bundle_user(opts["bundle_dir"], uid)
        except (IntegrityError, FileNotFoundError) as exc:
            raise DataError(str(exc)) from exc
        if trace.get("dataset_digest") != digest:
            raise DataError(f"{uid}: trace dataset digest does not match the bundle")
        replayed = replay_trace(dataset, trace)
        if digest_of(replayed) != digest_of(trace):
            mismatches.append(uid)
    if mismatches:
        raise DataError(f"replay mismatch for: {', '.join(mismatches)}")
    click.echo(f"replayed {len(traces)} trace(s): all byte-identical")


if __name__ == "__main__":
    main()
