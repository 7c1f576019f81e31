"""Bundle persistence, integrity checking, episode running, and the CLI."""

import json

import pytest
from click.testing import CliRunner

import calclash as cc
from calclash.cli import main

from conftest import TINY_SCHEMA_DICT, canned_endpoint


@pytest.fixture(scope="module")
def bundle_dir(tiny_bundle, tmp_path_factory):
    out = tmp_path_factory.mktemp("bundle")
    cc.write_bundle(tiny_bundle, out)
    return out


# -- persistence and integrity -----------------------------------------------

def test_manifest_covers_every_file(bundle_dir):
    manifest = cc.load_json(bundle_dir / "manifest.json")
    on_disk = {
        str(p.relative_to(bundle_dir))
        for p in bundle_dir.rglob("*.json")
        if p.name != "manifest.json"
    }
    assert set(manifest["files"]) == on_disk


def test_verify_bundle_passes_then_catches_tamper(bundle_dir, tmp_path):
    cc.verify_bundle_files(bundle_dir)  # must not raise
    import shutil

    copy = tmp_path / "tampered"
    shutil.copytree(bundle_dir, copy)
    victim = next((copy / "datasets").glob("*.json"))
    data = json.loads(victim.read_text())
    data["seed"] += 1
    victim.write_text(json.dumps(data))
    with pytest.raises(cc.IntegrityError, match="digest mismatch"):
        cc.verify_bundle_files(copy)


def test_truth_digest_binds_dataset(bundle_dir, tiny_bundle):
    uid = tiny_bundle.profiles[0].user_id
    ds, digest = cc.load_bundle_user(bundle_dir, uid)
    truth = cc.load_json(bundle_dir / "truth" / f"{uid}.json")
    assert truth["dataset_digest"] == digest


def test_dataset_from_files_round_trip(bundle_dir, tiny_bundle):
    uid = tiny_bundle.profiles[2].user_id
    rebuilt, _ = cc.load_bundle_user(bundle_dir, uid)
    original = tiny_bundle.datasets[uid]
    assert rebuilt.public_dict() == original.public_dict()
    assert rebuilt.truth_dict("d") == original.truth_dict("d")


def test_profile_from_bundle_matches_original(bundle_dir, tiny_bundle):
    for p in tiny_bundle.profiles:
        rebuilt = cc.profile_from_bundle(bundle_dir, p.user_id)
        assert rebuilt == p


def test_write_bundle_deterministic(tiny_bundle, tmp_path):
    m1 = cc.write_bundle(tiny_bundle, tmp_path / "a")
    m2 = cc.write_bundle(tiny_bundle, tmp_path / "b")
    assert m1["files"] == m2["files"]


# -- run_bundle --------------------------------------------------------------

def _oracle_factory(profile, org):
    return cc.make_agent("oracle", profile=profile, org=org)


def test_run_bundle_oracle_and_resume(bundle_dir, tmp_path):
    out = tmp_path / "traces"
    paths = cc.run_bundle(bundle_dir, _oracle_factory, out)
    assert len(paths) == 4
    stamps = {p: p.stat().st_mtime_ns for p in paths}
    # second invocation resumes: complete traces are not rewritten
    again = cc.run_bundle(bundle_dir, _oracle_factory, out)
    assert {p: p.stat().st_mtime_ns for p in again} == stamps
    trace = cc.load_json(paths[0])
    assert trace["status"] == "complete"
    assert trace["agent"]["kind"] == "oracle"


def test_run_bundle_parallel_equals_serial(bundle_dir, tmp_path):
    serial = cc.run_bundle(bundle_dir, _oracle_factory, tmp_path / "s", workers=1)
    parallel = cc.run_bundle(bundle_dir, _oracle_factory, tmp_path / "p", workers=4)
    for a, b in zip(sorted(serial), sorted(parallel)):
        assert a.read_bytes() == b.read_bytes()


def test_replay_trace_reproduces(bundle_dir, tmp_path):
    paths = cc.run_bundle(bundle_dir, _oracle_factory, tmp_path / "t")
    for p in paths:
        trace = cc.load_json(p)
        uid = trace["user_id"]
        ds, _ = cc.load_bundle_user(bundle_dir, uid)
        assert cc.digest_of(cc.replay_trace(ds, trace)) == cc.digest_of(trace)


# -- CLI ---------------------------------------------------------------------

@pytest.fixture(scope="module")
def cli_env(tmp_path_factory):
    """A generated bundle plus oracle traces, via the CLI itself."""
    root = tmp_path_factory.mktemp("cli")
    schema_path = root / "schema.json"
    schema_path.write_text(json.dumps(TINY_SCHEMA_DICT))
    runner = CliRunner()
    r = runner.invoke(main, [
        "generate", "--schema", str(schema_path), "--size-plan", "lead=1,analyst=2",
        "--seed", "3", "--n-rounds", "8", "--m", "4",
        "--out", str(root / "bundle"),
    ])
    assert r.exit_code == 0, r.output
    r = runner.invoke(main, [
        "run", "--bundle", str(root / "bundle"), "--agent", "oracle",
        "--out", str(root / "traces"),
    ])
    assert r.exit_code == 0, r.output
    return root


def test_cli_score(cli_env):
    runner = CliRunner()
    r = runner.invoke(main, [
        "score", "--bundle", str(cli_env / "bundle"),
        "--traces", str(cli_env / "traces"), "--out", str(cli_env / "report"),
    ])
    assert r.exit_code == 0, r.output
    assert "AER 0.000" in r.output
    agg = cc.load_json(cli_env / "report" / "aggregate.json")
    assert agg["aer"] == 0.0 and agg["avg_ord"] == 1.0
    assert (cli_env / "report" / "rounds.csv").exists()
    assert (cli_env / "report" / "error_vs_round.png").exists()


def test_cli_replay(cli_env):
    r = CliRunner().invoke(main, [
        "replay", "--bundle", str(cli_env / "bundle"),
        "--traces", str(cli_env / "traces"),
    ])
    assert r.exit_code == 0, r.output
    assert "byte-identical" in r.output


def test_cli_rewards_grouped(cli_env):
    runner = CliRunner()
    for rid, seed in (("ra", "1"), ("rb", "2")):
        r = runner.invoke(main, [
            "run", "--bundle", str(cli_env / "bundle"), "--agent", "random",
            "--seed", seed, "--group-id", "g0", "--rollout-id", rid,
            "--out", str(cli_env / rid),
        ])
        assert r.exit_code == 0, r.output
    r = runner.invoke(main, [
        "rewards", "--bundle", str(cli_env / "bundle"),
        "--traces", str(cli_env / "ra"), "--traces", str(cli_env / "rb"),
        "--out", str(cli_env / "rew"),
    ])
    assert r.exit_code == 0, r.output
    assert (cli_env / "rew" / "advantages.csv").exists()


def test_cli_rewards_single_rollout_is_data_error(cli_env):
    r = CliRunner().invoke(main, [
        "rewards", "--bundle", str(cli_env / "bundle"),
        "--traces", str(cli_env / "ra"), "--out", str(cli_env / "rewfail"),
    ])
    assert r.exit_code == 2
    assert "group size must be >= 2" in r.output


def test_cli_score_refuses_digest_mismatch(cli_env, tmp_path):
    trace_path = next((cli_env / "traces").glob("*.trace.json"))
    trace = cc.load_json(trace_path)
    trace["dataset_digest"] = "0" * 64
    bad_dir = tmp_path / "bad"
    bad_dir.mkdir()
    (bad_dir / trace_path.name).write_text(json.dumps(trace))
    r = CliRunner().invoke(main, [
        "score", "--bundle", str(cli_env / "bundle"),
        "--traces", str(bad_dir), "--out", str(tmp_path / "out"),
    ])
    assert r.exit_code == 2
    assert "different dataset" in r.output


def test_cli_usage_error_exit_code():
    r = CliRunner().invoke(main, ["generate", "--out", "x"])  # missing --schema
    assert r.exit_code == 1


def test_cli_excessive_rounds_is_data_error(cli_env, tmp_path):
    r = CliRunner().invoke(main, [
        "generate", "--schema", str(cli_env / "schema.json"),
        "--n-rounds", "200", "--out", str(tmp_path / "never"),
    ])
    assert r.exit_code == 2
    assert "exceeds available rounds" in r.output


def test_cli_config_file_defaults_with_flag_override(cli_env, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n_rounds": 6, "m": 3, "seed": 9}))
    r = CliRunner().invoke(main, [
        "generate", "--schema", str(cli_env / "schema.json"),
        "--size-plan", "lead=1,analyst=2",
        "--config", str(cfg), "--m", "4",  # flag beats config
        "--out", str(tmp_path / "b"),
    ])
    assert r.exit_code == 0, r.output
    manifest = cc.load_json(tmp_path / "b" / "manifest.json")
    assert manifest["params"]["n_rounds"] == 6  # from config
    assert manifest["params"]["m"] == 4  # flag override
    assert manifest["seed"] == 9


def test_cli_remote_agent_against_stub(cli_env, tmp_path):
    reply = (
        "<decision>\naccept: e1\ndecline: e2, e3, e4\n"
        "ranking: e1 > e2 > e3 > e4\nrationale: canned\n</decision>"
    )
    with canned_endpoint(reply) as url:
        r = CliRunner().invoke(main, [
            "run", "--bundle", str(cli_env / "bundle"), "--agent", "remote",
            "--endpoint-url", url, "--model", "stub",
            "--out", str(tmp_path / "remote"),
        ])
    assert r.exit_code == 0, r.output
    trace = cc.load_json(next((tmp_path / "remote").glob("*.trace.json")))
    assert trace["status"] == "complete"
    assert all(rec["valid"] for rec in trace["rounds"])
