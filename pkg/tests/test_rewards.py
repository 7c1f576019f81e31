"""Shaped rewards, curriculum schedule, returns, and group advantages."""

import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import calclash as cc
from calclash.rewards import (
    EXPORT_COLUMNS,
    RewardConfig,
    curriculum_weights,
    export_advantages_csv,
    returns_to_go,
    roundwise_advantages,
    score_group,
    score_round,
    trajectory_return,
)


# -- curriculum --------------------------------------------------------------

def test_curriculum_hand_values():
    # t/N = 0.5 -> both weights 0.25; endpoints shift emphasis
    assert curriculum_weights(5, 10) == (0.25, 0.25)
    lam_r, lam_i = curriculum_weights(1, 10)
    assert lam_r == pytest.approx(0.05)
    assert lam_i == pytest.approx(0.45)
    lam_r, lam_i = curriculum_weights(10, 10)
    assert lam_r == 0.5
    assert lam_i == 0.0


@given(n=st.integers(1, 200), data=st.data())
@settings(max_examples=80, deadline=None)
def test_curriculum_weights_sum_half(n, data):
    t = data.draw(st.integers(1, n))
    lam_r, lam_i = curriculum_weights(t, n)
    assert lam_r + lam_i == pytest.approx(0.5, abs=1e-12)
    assert 0 <= lam_r <= 0.5 and 0 <= lam_i <= 0.5


def test_curriculum_out_of_range():
    with pytest.raises(ValueError):
        curriculum_weights(0, 10)
    with pytest.raises(ValueError):
        curriculum_weights(11, 10)


# -- score_round, hand-applied -----------------------------------------------

TRUTH = {"m": 5, "truth_accept": "e2"}


def _record(accept, ranking, valid=True, hub_used=0):
    return {
        "valid": valid,
        "decision": None if not valid else {"accept_id": accept, "ranking": ranking},
        "hub_used": hub_used,
    }


def test_score_round_perfect():
    cfg = RewardConfig()
    rr = score_round(
        _record("e2", ["e2", "e1", "e3", "e4", "e5"], hub_used=1), TRUTH, cfg, t=5, n=10
    )
    # r_f=1, r_a=1, r_r=1, r_i=1, lambdas 0.25/0.25 -> 1 + 1 + 0.25 + 0.25
    assert (rr.r_f, rr.r_a, rr.r_r, rr.r_i) == (1, 1, 1.0, 1)
    assert rr.shaped == pytest.approx(2.5)


def test_score_round_partial_ranking():
    cfg = RewardConfig()
    # truth at position 2 of 5 -> r_r = 1 - 2/4 = 0.5; wrong accept
    rr = score_round(
        _record("e1", ["e1", "e3", "e2", "e4", "e5"]), TRUTH, cfg, t=10, n=10
    )
    assert (rr.r_f, rr.r_a, rr.r_i) == (1, 0, 0)
    assert rr.r_r == pytest.approx(0.5)
    # shaped = 1*1 + 1*0 + 0.5*0.5 + 0*0
    assert rr.shaped == pytest.approx(1.25)


def test_score_round_invalid():
    cfg = RewardConfig()
    rr = score_round(_record(None, None, valid=False, hub_used=1), TRUTH, cfg, 1, 10)
    assert (rr.r_f, rr.r_a, rr.r_r) == (0, 0, 0.0)
    assert rr.r_i == 1
    assert rr.shaped == pytest.approx(0.45)  # lambda_i(1/10) = 0.45


def test_score_round_curriculum_disabled():
    cfg = RewardConfig(curriculum=False)
    rr = score_round(_record("e2", ["e2", "e1", "e3", "e4", "e5"]), TRUTH, cfg, 1, 10)
    assert rr.lambda_r_t == rr.lambda_i_t == 0.25


def test_reward_config_validation():
    with pytest.raises(ValueError):
        RewardConfig(gamma=0)
    with pytest.raises(ValueError):
        RewardConfig(gamma=1.5)
    with pytest.raises(ValueError):
        RewardConfig(lambda_f=-1)
    with pytest.raises(ValueError):
        RewardConfig(epsilon=0)
    cfg = RewardConfig(lambda_a=0.5, gamma=0.9)
    assert RewardConfig.from_dict(cfg.to_dict()) == cfg


# -- returns, hand-derived ---------------------------------------------------

def test_trajectory_return_hand_values():
    assert trajectory_return([1.0] * 10, 1.0) == 10.0
    assert trajectory_return([1, 1], 0.5) == 1.5
    assert trajectory_return([2, 0, 1], 0.9) == pytest.approx(2.81)


def test_returns_to_go_hand_values():
    g = returns_to_go(np.array([[1.0, 2.0, 4.0]]), 0.5)
    assert np.allclose(g, [[3.0, 4.0, 4.0]])
    g = returns_to_go(np.array([[1.0, 1.0, 1.0]]), 1.0)
    assert np.allclose(g, [[3.0, 2.0, 1.0]])


def test_returns_to_go_head_matches_trajectory_return():
    rng = np.random.default_rng(0)
    r = rng.random((3, 7))
    for gamma in (0.5, 0.9, 1.0):
        g = returns_to_go(r, gamma)
        for i in range(3):
            assert g[i, 0] == pytest.approx(trajectory_return(r[i], gamma))


# -- advantages, hand-derived ------------------------------------------------

def test_advantages_hand_values():
    returns = np.array([[1.0], [2.0], [3.0]])
    mu, sigma, adv = roundwise_advantages(returns, epsilon=0.0 + 1e-300)
    assert mu[0] == pytest.approx(2.0)
    assert sigma[0] == pytest.approx(math.sqrt(2 / 3))
    assert adv[:, 0] == pytest.approx([-1.224744871, 0.0, 1.224744871])


def test_advantages_mean_zero_columns():
    rng = np.random.default_rng(3)
    returns = rng.normal(size=(6, 11))
    _, _, adv = roundwise_advantages(returns)
    assert np.allclose(adv.mean(axis=0), 0.0, atol=1e-9)


def test_advantages_group_of_one_rejected():
    with pytest.raises(ValueError, match=">= 2"):
        roundwise_advantages(np.ones((1, 4)))


def test_advantages_epsilon_guards_constant_columns():
    returns = np.full((4, 3), 2.0)
    _, sigma, adv = roundwise_advantages(returns, epsilon=1e-8)
    assert np.all(sigma > 0)
    assert np.allclose(adv, 0.0)


# -- group scoring and export ------------------------------------------------

def _mk_traces(n_rounds=6, g=3):
    truth = {
        "rounds": [
            {"round_id": f"r{i}", "m": 5, "truth_accept": "e1"} for i in range(n_rounds)
        ]
    }
    traces = []
    for k in range(g):
        rounds = []
        for i in range(n_rounds):
            # rollout k answers correctly when (i + k) is even
            ok = (i + k) % 2 == 0
            rounds.append(
                {
                    "round_id": f"r{i}",
                    "valid": True,
                    "decision": {
                        "accept_id": "e1" if ok else "e2",
                        "ranking": ["e1", "e2", "e3", "e4", "e5"]
                        if ok
                        else ["e2", "e1", "e3", "e4", "e5"],
                    },
                    "hub_used": 0,
                }
            )
        traces.append({"rollout_id": f"r{k}", "rounds": rounds})
    return traces, truth


def test_score_group_shapes_and_decomposition():
    traces, truth = _mk_traces()
    cfg = RewardConfig(gamma=0.9)
    batch = score_group(traces, truth, cfg, prompt_id="p")
    assert batch.rewards.shape == (3, 6)
    # shaped rewards recompose from exported components
    for i in range(3):
        for t in range(6):
            rr = batch.components[i][t]
            assert rr.shaped == pytest.approx(
                cfg.lambda_f * rr.r_f + cfg.lambda_a * rr.r_a
                + rr.lambda_r_t * rr.r_r + rr.lambda_i_t * rr.r_i
            )
    assert np.allclose(batch.advantages.mean(axis=0), 0.0, atol=1e-9)


def test_score_group_requires_two_rollouts():
    traces, truth = _mk_traces(g=1)
    with pytest.raises(ValueError, match=">= 2"):
        score_group(traces, truth, RewardConfig())


def test_score_group_length_mismatch():
    traces, truth = _mk_traces()
    traces[1]["rounds"] = traces[1]["rounds"][:-1]
    with pytest.raises(ValueError, match="rounds"):
        score_group(traces, truth, RewardConfig())


def test_export_csv_round_trips_values(tmp_path):
    traces, truth = _mk_traces()
    cfg = RewardConfig(gamma=0.9)
    batch = score_group(traces, truth, cfg, prompt_id="p")
    path = tmp_path / "adv.csv"
    export_advantages_csv([batch], path)
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    assert list(rows[0]) == EXPORT_COLUMNS
    assert len(rows) == 3 * 6
    for row in rows:
        i = batch.rollout_ids.index(row["rollout_id"])
        t = int(row["round"]) - 1
        assert float(row["shaped"]) == batch.rewards[i, t]
        assert float(row["return_to_go"]) == batch.returns[i, t]
        assert float(row["advantage"]) == batch.advantages[i, t]
        # decomposition invariant straight from the exported columns
        lam_r, lam_i = curriculum_weights(t + 1, 6)
        assert float(row["shaped"]) == pytest.approx(
            cfg.lambda_f * int(row["r_f"]) + cfg.lambda_a * int(row["r_a"])
            + lam_r * float(row["r_r"]) + lam_i * int(row["r_i"])
        )
