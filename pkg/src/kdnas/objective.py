"""KD-guided score and Pareto-frontier bookkeeping.

The score compares a student against its teacher's resource budget:

    s     = NP_s/NP_t + FLOPS_s/FLOPS_t + Latency_s/Latency_t
    score = Acc_target / (Acc_student * (1[Acc_target <= Acc_student] + eps)) * s

Lower is better. Missing the accuracy target knocks the indicator to zero and
inflates the score by roughly 1/eps, so under-performing students are kept
comparable but never competitive.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class TeacherBudget:
    """Teacher resource totals and the accuracy target students must reach."""

    np_teacher: int
    flops_teacher: int
    latency_teacher: float
    acc_target: float

    def __post_init__(self):
        if min(self.np_teacher, self.flops_teacher) <= 0 or self.latency_teacher <= 0:
            raise ValueError("teacher resources must be strictly positive")
        if not 0 < self.acc_target <= 1:
            raise ValueError("acc_target must be in (0, 1]")


@dataclass(frozen=True)
class Metrics:
    """Measured quantities for one evaluated student."""

    acc_student: float
    np_student: int
    flops_student: int
    latency_student: float

    def __post_init__(self):
        if not 0 <= self.acc_student <= 1:
            raise ValueError("acc_student must be in [0, 1]")
        if self.np_student < 0 or self.flops_student < 0 or self.latency_student < 0:
            raise ValueError("student resources must be non-negative")


@dataclass(frozen=True)
class ScoreBreakdown:
    s: float
    indicator: int
    score: float


def kd_score(m: Metrics, b: TeacherBudget, epsilon: float = 0.01) -> ScoreBreakdown:
    """Score one student against the teacher budget. Lower is better."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if m.acc_student == 0:
        raise ValueError("acc_student is zero; evaluation should be reported as failed")
    s = (m.np_student / b.np_teacher
         + m.flops_student / b.flops_teacher
         + m.latency_student / b.latency_teacher)
    indicator = 1 if b.acc_target <= m.acc_student else 0
    score = b.acc_target / (m.acc_student * (indicator + epsilon)) * s
    return ScoreBreakdown(s=s, indicator=indicator, score=score)


def dominates(a: Metrics, b: Metrics) -> bool:
    """True iff `a` is at least as good as `b` everywhere and better somewhere.

    "Good" means higher accuracy and lower parameter count, flops and latency.
    """
    if (a.acc_student < b.acc_student or a.np_student > b.np_student
            or a.flops_student > b.flops_student or a.latency_student > b.latency_student):
        return False
    return (a.acc_student > b.acc_student or a.np_student < b.np_student
            or a.flops_student < b.flops_student or a.latency_student < b.latency_student)


def pareto_front(records: list) -> list:
    """Non-dominated subset of `records`, original order preserved.

    Each record exposes a `.metrics` attribute. Records with identical metrics
    never dominate each other, so duplicates are all retained. Implemented as
    an incremental front sweep rather than the all-pairs definition, which the
    test suite uses as an independent oracle.
    """
    front: list = []
    for rec in records:
        m = rec.metrics
        if any(dominates(kept.metrics, m) for kept in front):
            continue
        front = [kept for kept in front if not dominates(m, kept.metrics)]
        front.append(rec)
    # The sweep can reorder survivors; restore input order by identity.
    surviving = {id(rec) for rec in front}
    return [rec for rec in records if id(rec) in surviving]
