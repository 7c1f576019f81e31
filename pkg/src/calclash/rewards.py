"""Shaped round rewards, curriculum weights, discounted returns, and
round-position-grouped advantages, exported for any downstream trainer.

Four per-round components: format (valid output), decision (correct accept),
ranking (1 - pos/(M-1) of the true event in the agent ranking), and hub
interaction.  Format and decision weights are fixed; the ranking and
interaction weights interpolate linearly with the normalized round index so
emphasis shifts from memory interaction early to ranking quality late:

    lambda_r(t) = 0.5 * t/N        lambda_i(t) = 0.5 * (1 - t/N)

Advantages normalize return-to-go per round position across a group of
rollouts, using the population standard deviation with an epsilon floor
inside the square root.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .metrics import ord_score, round_accuracy


@dataclass(frozen=True)
class RewardConfig:
    lambda_f: float = 1.0
    lambda_a: float = 1.0
    gamma: float = 1.0
    epsilon: float = 1e-8
    curriculum: bool = True

    def __post_init__(self):
        if self.lambda_f < 0 or self.lambda_a < 0:
            raise ValueError("lambda_f and lambda_a must be >= 0")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must be in (0, 1]")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")

    def to_dict(self) -> dict:
        return {
            "lambda_f": self.lambda_f,
            "lambda_a": self.lambda_a,
            "gamma": self.gamma,
            "epsilon": self.epsilon,
            "curriculum": self.curriculum,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RewardConfig":
        return cls(**{k: d[k] for k in d if k in cls.__dataclass_fields__})


@dataclass(frozen=True)
class RoundReward:
    r_f: int
    r_a: int
    r_r: float
    r_i: int
    lambda_r_t: float
    lambda_i_t: float
    shaped: float


def curriculum_weights(t: int, n: int) -> tuple[float, float]:
    """(lambda_r, lambda_i) at round t of n; their sum is 0.5 for every t."""
    if not 1 <= t <= n:
        raise ValueError(f"round index {t} out of range 1..{n}")
    i_t = t / n
    return 0.5 * i_t, 0.5 * (1 - i_t)


def score_round(
    record: dict, truth_round: dict, cfg: RewardConfig, t: int, n: int
) -> RoundReward:
    """Shaped reward for one round record against its ground truth."""
    valid = bool(record["valid"]) and record.get("decision") is not None
    r_f = int(valid)
    decision = record.get("decision") if valid else None
    r_a = round_accuracy(decision, truth_round["truth_accept"])
    m = truth_round["m"]
    if valid and m >= 2:
        ranking = decision["ranking"]
        if truth_round["truth_accept"] in ranking:
            pos = ranking.index(truth_round["truth_accept"])
            r_r = 1.0 - pos / (m - 1)
        else:
            r_r = 0.0
    else:
        r_r = 0.0
    r_i = int(record.get("hub_used", 0))
    if cfg.curriculum:
        lam_r, lam_i = curriculum_weights(t, n)
    else:
        lam_r, lam_i = 0.25, 0.25
    shaped = cfg.lambda_f * r_f + cfg.lambda_a * r_a + lam_r * r_r + lam_i * r_i
    return RoundReward(r_f, r_a, r_r, r_i, lam_r, lam_i, shaped)


def trajectory_return(rewards: list[float] | np.ndarray, gamma: float) -> float:
    """Discounted sum over one trajectory: sum_t gamma^(t-1) * r_t."""
    r = np.asarray(rewards, dtype=float)
    if r.ndim != 1 or r.size < 1:
        raise ValueError("rewards must be a non-empty 1-D sequence")
    return float(np.sum(r * gamma ** np.arange(r.size)))


def returns_to_go(rewards: np.ndarray, gamma: float) -> np.ndarray:
    """Per-position discounted suffix sums: G[t] = r[t] + gamma * G[t+1]."""
    r = np.asarray(rewards, dtype=float)
    if r.ndim != 2:
        raise ValueError(f"expected a G x N matrix, got shape {r.shape}")
    g = np.empty_like(r)
    g[:, -1] = r[:, -1]
    for t in range(r.shape[1] - 2, -1, -1):
        g[:, t] = r[:, t] + gamma * g[:, t + 1]
    return g


def roundwise_advantages(
    returns: np.ndarray, epsilon: float = 1e-8
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Group-normalize returns separately at each round position.

    mu_t is the group mean, sigma_t the population std with epsilon inside
    the root, advantage = (G - mu) / sigma.  Requires a group of >= 2.
    """
    g = np.asarray(returns, dtype=float)
    if g.ndim != 2:
        raise ValueError(f"expected a G x N matrix, got shape {g.shape}")
    if g.shape[0] < 2:
        raise ValueError("group size must be >= 2 for round-wise normalization")
    mu = g.mean(axis=0)
    sigma = np.sqrt(np.mean((g - mu) ** 2, axis=0) + epsilon)
    return mu, sigma, (g - mu) / sigma


@dataclass
class AdvantageBatch:
    prompt_id: str
    rollout_ids: list[str]
    components: list[list[RoundReward]]  # [rollout][round]
    rewards: np.ndarray  # G x N shaped rewards
    returns: np.ndarray  # G x N return-to-go
    mu: np.ndarray
    sigma: np.ndarray
    advantages: np.ndarray


def score_group(
    traces: list[dict],
    truth: dict,
    cfg: RewardConfig,
    prompt_id: str = "",
) -> AdvantageBatch:
    """Score a group of rollouts over the same dataset and compute round-wise
    advantages across the group."""
    if len(traces) < 2:
        raise ValueError("group size must be >= 2")
    n = len(truth["rounds"])
    components: list[list[RoundReward]] = []
    for trace in traces:
        if len(trace["rounds"]) != n:
            raise ValueError(
                f"rollout {trace.get('rollout_id')} has {len(trace['rounds'])} "
                f"rounds, truth has {n}"
            )
        components.append(
            [
                score_round(rec, tr, cfg, t + 1, n)
                for t, (rec, tr) in enumerate(zip(trace["rounds"], truth["rounds"]))
            ]
        )
    rewards = np.array([[rr.shaped for rr in row] for row in components])
    returns = returns_to_go(rewards, cfg.gamma)
    mu, sigma, adv = roundwise_advantages(returns, cfg.epsilon)
    return AdvantageBatch(
        prompt_id=prompt_id,
        rollout_ids=[t.get("rollout_id", f"r{i}") for i, t in enumerate(traces)],
        components=components,
        rewards=rewards,
        returns=returns,
        mu=mu,
        sigma=sigma,
        advantages=adv,
    )


EXPORT_COLUMNS = [
    "prompt_id",
    "rollout_id",
    "round",
    "r_f",
    "r_a",
    "r_r",
    "r_i",
    "shaped",
    "return_to_go",
    "advantage",
]


def export_advantages_csv(batches: list[AdvantageBatch], path: str | Path) -> None:
    """Flat tabular export keyed by (rollout id, round)."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(EXPORT_COLUMNS)
        for batch in batches:
            for i, rid in enumerate(batch.rollout_ids):
                for t in range(batch.rewards.shape[1]):
                    rr = batch.components[i][t]
                    writer.writerow(
                        [
                            batch.prompt_id,
                            rid,
                            t + 1,
                            rr.r_f,
                            rr.r_a,
                            repr(rr.r_r),
                            rr.r_i,
                            repr(rr.shaped),
                            repr(float(batch.returns[i, t])),
                            repr(float(batch.advantages[i, t])),
                        ]
                    )
