"""Per-round and per-instance decision metrics.

Per round: decision accuracy (invalid rounds count as incorrect) and optimal
rank distance ORD = 1 - pos/(M-1) for rounds with M >= 3, where pos is the
0-indexed position of the true accepted event in the agent ranking.

Per instance: average error rate (AER), average ORD over rounds where ORD is
defined, and the error reduction rate ERR = (E_Q1 - E_Q4) / E_Q1 comparing
mean error in the first and last quarters (ceiling-division quarter size);
ERR = 0 by convention when E_Q1 = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


@dataclass
class RoundMetrics:
    round_id: str
    valid: int
    correct: int
    ord: float | None  # None when M < 3
    m: int


@dataclass
class MetricsReport:
    user_id: str
    per_round: list[RoundMetrics]
    aer: float
    avg_ord: float
    err: float
    quarter_errors: tuple[float, float, float, float]
    checkpoints: dict[int, float] = field(default_factory=dict)  # N -> mean AER over first N rounds

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "user_id": self.user_id,
            "aer": self.aer,
            "avg_ord": self.avg_ord,
            "err": self.err,
            "quarter_errors": list(self.quarter_errors),
            "checkpoints": {str(k): v for k, v in sorted(self.checkpoints.items())},
            "per_round": [
                {
                    "round_id": r.round_id,
                    "valid": r.valid,
                    "correct": r.correct,
                    "ord": r.ord,
                    "m": r.m,
                }
                for r in self.per_round
            ],
        }


def round_accuracy(decision: dict | None, truth_accept: str) -> int:
    """1 iff the round is valid and the accepted event matches ground truth."""
    if not decision or not decision.get("accept_id"):
        return 0
    return int(decision["accept_id"] == truth_accept)


def ord_score(ranking: list[str], truth_accept: str, m: int) -> float:
    """Optimal rank distance for a valid ranking; requires m >= 3."""
    if m < 3:
        raise ValueError(f"ORD is defined for M >= 3, got M={m}")
    if sorted(ranking) != sorted(set(ranking)) or truth_accept not in ranking:
        return 0.0  # invalid ranking contributes worst-case
    pos = ranking.index(truth_accept)
    return 1.0 - pos / (m - 1)


def _round_ord(record: dict, truth_round: dict) -> float | None:
    m = truth_round["m"]
    if m < 3:
        return None
    if not record["valid"] or not record.get("decision"):
        return 0.0
    return ord_score(
        record["decision"]["ranking"], truth_round["truth_accept"], m
    )


def err_from_errors(errors: list[int | float]) -> tuple[float, tuple[float, float, float, float]]:
    """Error reduction rate plus per-quarter mean errors."""
    n = len(errors)
    q = math.ceil(n / 4)
    quarters = []
    for i in range(4):
        chunk = errors[i * q : (i + 1) * q] if i < 3 else errors[-q:]
        quarters.append(sum(chunk) / len(chunk) if chunk else 0.0)
    e_q1, e_q4 = quarters[0], quarters[3]
    err = 0.0 if e_q1 == 0 else (e_q1 - e_q4) / e_q1
    return err, tuple(quarters)


def instance_metrics(trace: dict, truth: dict) -> MetricsReport:
    """Score one episode trace against its truth file."""
    t_rounds = truth["rounds"]
    records = trace["rounds"]
    if len(records) != len(t_rounds):
        raise ValueError(
            f"trace has {len(records)} rounds but truth has {len(t_rounds)}"
        )
    per_round: list[RoundMetrics] = []
    for rec, tr in zip(records, t_rounds):
        if rec["round_id"] != tr["round_id"]:
            raise ValueError(
                f"round id mismatch: trace {rec['round_id']} vs truth {tr['round_id']}"
            )
        correct = round_accuracy(rec.get("decision") if rec["valid"] else None, tr["truth_accept"])
        per_round.append(
            RoundMetrics(
                round_id=tr["round_id"],
                valid=int(rec["valid"]),
                correct=correct,
                ord=_round_ord(rec, tr),
                m=tr["m"],
            )
        )
    errors = [1 - r.correct for r in per_round]
    aer = sum(errors) / len(errors)
    ords = [r.ord for r in per_round if r.ord is not None]
    avg_ord = sum(ords) / len(ords) if ords else 0.0
    err, quarters = err_from_errors(errors)
    checkpoints: dict[int, float] = {}
    n = len(errors)
    for cp in (1, 25, 50, 75, 104):
        if cp <= n:
            checkpoints[cp] = sum(errors[:cp]) / cp
    checkpoints[n] = aer
    return MetricsReport(
        user_id=trace["user_id"],
        per_round=per_round,
        aer=aer,
        avg_ord=avg_ord,
        err=err,
        quarter_errors=quarters,
        checkpoints=checkpoints,
    )
