"""KD-guided score arithmetic, dominance ordering, Pareto extraction."""

import dataclasses

import numpy as np
import pytest

from kdnas.objective import Metrics, TeacherBudget, dominates, kd_score, pareto_front

BUDGET = TeacherBudget(np_teacher=1000, flops_teacher=1000, latency_teacher=1.0,
                       acc_target=0.80)


def metrics(acc, np_r, fl_r, lat_r):
    """Build Metrics from the three resource ratios against BUDGET."""
    return Metrics(acc_student=acc, np_student=int(np_r * 1000),
                   flops_student=int(fl_r * 1000), latency_student=lat_r)


@dataclasses.dataclass
class Rec:
    metrics: Metrics


def brute_force_front(records):
    """All-pairs non-domination oracle."""
    return [r for r in records
            if not any(dominates(other.metrics, r.metrics) for other in records)]


class TestKdScore:
    def test_above_target_example(self):
        b = kd_score(metrics(0.81, 0.5, 0.4, 0.6), BUDGET, epsilon=0.01)
        assert b.s == pytest.approx(1.5, abs=1e-12)
        assert b.indicator == 1
        assert b.score == pytest.approx(0.80 / (0.81 * 1.01) * 1.5, abs=1e-9)

    def test_below_target_penalty_regime(self):
        b = kd_score(metrics(0.79, 0.5, 0.4, 0.6), BUDGET, epsilon=0.01)
        assert b.indicator == 0
        assert b.score == pytest.approx(0.80 / (0.79 * 0.01) * 1.5, abs=1e-9)
        assert b.score > 100  # roughly the 1/epsilon blow-up

    def test_student_equals_teacher(self):
        b = kd_score(metrics(0.80, 1.0, 1.0, 1.0), BUDGET, epsilon=0.01)
        assert b.indicator == 1
        assert b.score == pytest.approx(3.0 / 1.01, abs=1e-9)

    def test_jump_ratio_at_target_boundary(self):
        eps = 0.01
        below = kd_score(metrics(np.nextafter(0.80, 0), 0.5, 0.4, 0.6), BUDGET, eps)
        above = kd_score(metrics(0.80, 0.5, 0.4, 0.6), BUDGET, eps)
        assert above.score / below.score == pytest.approx(eps / (1 + eps), rel=1e-12)

    def test_resource_scaling(self):
        base = kd_score(metrics(0.85, 0.3, 0.2, 0.1), BUDGET)
        scaled = kd_score(metrics(0.85, 0.9, 0.6, 0.3), BUDGET)
        assert scaled.s == pytest.approx(3 * base.s, rel=1e-12)
        assert scaled.score == pytest.approx(3 * base.score, rel=1e-12)
        assert scaled.indicator == base.indicator

    def test_zero_accuracy_rejected(self):
        with pytest.raises(ValueError, match="acc_student"):
            kd_score(metrics(0.0, 1, 1, 1), BUDGET)

    def test_nonpositive_epsilon_rejected(self):
        with pytest.raises(ValueError, match="epsilon"):
            kd_score(metrics(0.9, 1, 1, 1), BUDGET, epsilon=0.0)


class TestDominates:
    def test_equal_never_dominates(self):
        a = metrics(0.8, 1, 1, 1)
        assert not dominates(a, a)

    def test_single_strict_improvement_suffices(self):
        a = metrics(0.9, 1, 1, 1)
        b = metrics(0.8, 1, 1, 1)
        assert dominates(a, b)
        assert not dominates(b, a)

    def test_tradeoff_is_incomparable(self):
        a = metrics(0.9, 1, 1, 2.0)
        b = metrics(0.8, 1, 1, 1.0)
        assert not dominates(a, b)
        assert not dominates(b, a)

    def test_strict_partial_order_on_random_triples(self):
        rng = np.random.default_rng(5)
        def rand_metrics():
            return Metrics(acc_student=float(rng.integers(1, 5)) / 5,
                           np_student=int(rng.integers(1, 4)),
                           flops_student=int(rng.integers(1, 4)),
                           latency_student=float(rng.integers(1, 4)))
        for _ in range(3000):
            a, b, c = rand_metrics(), rand_metrics(), rand_metrics()
            assert not dominates(a, a)
            if dominates(a, b):
                assert not dominates(b, a)
            if dominates(a, b) and dominates(b, c):
                assert dominates(a, c)


class TestParetoFront:
    def test_single_record(self):
        recs = [Rec(metrics(0.8, 1, 1, 1))]
        assert pareto_front(recs) == recs

    def test_empty(self):
        assert pareto_front([]) == []

    def test_duplicates_all_retained(self):
        recs = [Rec(metrics(0.8, 1, 1, 1)), Rec(metrics(0.8, 1, 1, 1)),
                Rec(metrics(0.7, 2, 2, 2))]
        front = pareto_front(recs)
        assert front == recs[:2]

    def test_matches_brute_force_on_random_records(self):
        rng = np.random.default_rng(31)
        recs = [Rec(Metrics(acc_student=float(rng.integers(1, 9)) / 10,
                            np_student=int(rng.integers(1, 8)),
                            flops_student=int(rng.integers(1, 8)),
                            latency_student=float(rng.integers(1, 8))))
                for _ in range(600)]
        front = pareto_front(recs)
        oracle = brute_force_front(recs)
        assert [id(r) for r in front] == [id(r) for r in oracle]

    def test_front_properties(self):
        rng = np.random.default_rng(33)
        recs = [Rec(Metrics(acc_student=float(rng.random()),
                            np_student=int(rng.integers(1, 100)),
                            flops_student=int(rng.integers(1, 100)),
                            latency_student=float(rng.random())))
                for _ in range(200)]
        front = pareto_front(recs)
        members = {id(r) for r in front}
        for a in front:
            assert not any(dominates(b.metrics, a.metrics) for b in front)
        for r in recs:
            if id(r) not in members:
                assert any(dominates(f.metrics, r.metrics) for f in front)

    def test_order_preserved(self):
        rng = np.random.default_rng(37)
        recs = [Rec(Metrics(acc_student=float(rng.random()),
                            np_student=int(rng.integers(1, 50)),
                            flops_student=int(rng.integers(1, 50)),
                            latency_student=float(rng.random())))
                for _ in range(120)]
        front = pareto_front(recs)
        positions = [recs.index(r) for r in front]
        assert positions == sorted(positions)
