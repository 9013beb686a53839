"""KD loss and orthogonality penalty: values, reductions, gradients."""

import math

import numpy as np
import pytest
import torch

from kdtrainer.losses import KDConfig, conv1x1_view, kd_loss, linear_view, orth_penalty


def softmax_kl_oracle(z_t, z_s, tau):
    """Brute-force softened softmax + KL, in plain numpy."""
    z_t, z_s = np.asarray(z_t, float), np.asarray(z_s, float)
    p_t = np.exp(z_t / tau) / np.exp(z_t / tau).sum(axis=1, keepdims=True)
    p_s = np.exp(z_s / tau) / np.exp(z_s / tau).sum(axis=1, keepdims=True)
    return float(np.mean((p_t * np.log(p_t / p_s)).sum(axis=1)))


class TestKdLoss:
    def test_identical_logits_reduce_to_weighted_ce(self):
        torch.manual_seed(0)
        logits = torch.randn(16, 10)
        labels = torch.randint(0, 10, (16,))
        cfg = KDConfig(temperature=1.0, alpha=0.7)
        loss = kd_loss(logits, logits.clone(), labels, cfg)
        ce = torch.nn.functional.cross_entropy(logits, labels)
        assert abs(float(loss) - 0.3 * float(ce)) <= 1e-6

    def test_alpha_zero_is_plain_cross_entropy(self):
        torch.manual_seed(1)
        student, teacher = torch.randn(8, 5), torch.randn(8, 5)
        labels = torch.randint(0, 5, (8,))
        loss = kd_loss(student, teacher, labels, KDConfig(alpha=0.0))
        ce = torch.nn.functional.cross_entropy(student, labels)
        assert float(loss) == pytest.approx(float(ce), abs=1e-7)

    def test_two_class_example(self):
        student = torch.tensor([[0.0, 0.0]])
        teacher = torch.tensor([[2.0, 0.0]])
        labels = torch.tensor([0])
        loss = kd_loss(student, teacher, labels, KDConfig(temperature=1.0, alpha=1.0))
        oracle = softmax_kl_oracle([[2.0, 0.0]], [[0.0, 0.0]], 1.0)
        assert float(loss) == pytest.approx(oracle, abs=1e-7)
        assert float(loss) == pytest.approx(0.3278, abs=5e-5)

    def test_temperature_squared_scaling(self):
        torch.manual_seed(2)
        student, teacher = torch.randn(12, 6).double(), torch.randn(12, 6).double()
        labels = torch.randint(0, 6, (12,))
        for tau in (1.0, 2.0, 4.0):
            loss = kd_loss(student, teacher, labels, KDConfig(temperature=tau, alpha=1.0))
            oracle = softmax_kl_oracle(teacher.numpy(), student.numpy(), tau)
            assert float(loss) == pytest.approx(tau * tau * oracle, rel=1e-9)

    def test_kl_term_non_negative_and_zero_iff_equal(self):
        torch.manual_seed(3)
        for _ in range(50):
            student, teacher = torch.randn(4, 7), torch.randn(4, 7)
            labels = torch.randint(0, 7, (4,))
            kl_only = kd_loss(student, teacher, labels, KDConfig(alpha=1.0))
            assert float(kl_only) >= -1e-9
        same = torch.randn(4, 7)
        zero = kd_loss(same, same.clone(), torch.zeros(4, dtype=torch.long),
                       KDConfig(alpha=1.0))
        assert abs(float(zero)) <= 1e-6

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="shapes"):
            kd_loss(torch.zeros(2, 3), torch.zeros(2, 4), torch.zeros(2).long(),
                    KDConfig())

    def test_gradient_matches_central_differences(self):
        torch.manual_seed(4)
        student = torch.randn(5, 4, dtype=torch.double, requires_grad=True)
        teacher = torch.randn(5, 4, dtype=torch.double)
        labels = torch.randint(0, 4, (5,))
        cfg = KDConfig(temperature=2.0, alpha=0.6)

        kd_loss(student, teacher, labels, cfg).backward()
        analytic = student.grad.clone()

        eps = 1e-6
        numeric = torch.zeros_like(student)
        with torch.no_grad():
            for i in range(student.shape[0]):
                for j in range(student.shape[1]):
                    for sign in (1.0, -1.0):
                        student[i, j] += sign * eps
                        val = float(kd_loss(student, teacher, labels, cfg))
                        numeric[i, j] += sign * val / (2 * eps)
                        student[i, j] -= sign * eps
        rel = (analytic - numeric).norm() / numeric.norm()
        assert float(rel) <= 1e-4


class TestOrthPenalty:
    def test_orthonormal_columns_give_zero(self):
        q, _ = torch.linalg.qr(torch.randn(8, 4, dtype=torch.double))
        assert float(orth_penalty([q], lam=1.0)) == pytest.approx(0.0, abs=1e-20)

    def test_hand_computed_example(self):
        w = torch.tensor([[1.0, 1.0], [0.0, 1.0]])
        assert float(orth_penalty([w], lam=1.0)) == pytest.approx(3.0, abs=1e-7)

    def test_linear_in_lambda(self):
        torch.manual_seed(5)
        w = torch.randn(6, 3)
        base = float(orth_penalty([w], lam=1.0))
        assert float(orth_penalty([w], lam=2.5)) == pytest.approx(2.5 * base, rel=1e-6)

    def test_averages_over_weight_count(self):
        torch.manual_seed(6)
        w = torch.randn(5, 5)
        one = float(orth_penalty([w], lam=1.0))
        two = float(orth_penalty([w, w.clone()], lam=1.0))
        assert two == pytest.approx(one, rel=1e-6)

    def test_empty_list_with_positive_lambda_rejected(self):
        with pytest.raises(ValueError, match="no target weights"):
            orth_penalty([], lam=0.1)

    def test_gradient_matches_central_differences(self):
        torch.manual_seed(7)
        w = torch.randn(4, 6, dtype=torch.double, requires_grad=True)
        orth_penalty([w], lam=0.3).backward()
        analytic = w.grad.clone()
        eps = 1e-6
        numeric = torch.zeros_like(w)
        with torch.no_grad():
            for i in range(w.shape[0]):
                for j in range(w.shape[1]):
                    for sign in (1.0, -1.0):
                        w[i, j] += sign * eps
                        numeric[i, j] += sign * float(orth_penalty([w], 0.3)) / (2 * eps)
                        w[i, j] -= sign * eps
        rel = (analytic - numeric).norm() / numeric.norm()
        assert float(rel) <= 1e-4

    def test_norm_preservation_of_semi_orthogonal_maps(self):
        # rows of W orthonormal (W W^T = I): then |W^T x| = |x| for every x
        torch.manual_seed(8)
        for d_x, d_y in ((8, 16), (4, 32), (16, 16)):
            q, _ = torch.linalg.qr(torch.randn(d_y, d_x, dtype=torch.double))
            w = q.T  # (d_x, d_y) with W W^T = I
            assert torch.allclose(w @ w.T, torch.eye(d_x, dtype=torch.double), atol=1e-10)
            for _ in range(10):
                x = torch.randn(d_x, dtype=torch.double)
                assert float(abs((w.T @ x).norm() - x.norm())) <= 1e-6

    def test_views_transpose_into_rows_as_inputs(self):
        conv_w = torch.arange(24.0).reshape(4, 6, 1, 1)
        assert conv1x1_view(conv_w).shape == (6, 4)
        lin_w = torch.zeros(3, 5)
        assert linear_view(lin_w).shape == (5, 3)

    def test_descent_reduces_orthogonality_gap(self):
        torch.manual_seed(9)
        w = (torch.randn(64, 128) * math.sqrt(2.0 / 64)).requires_grad_(True)
        optimizer = torch.optim.Adam([w], lr=1e-2)

        def gap():
            with torch.no_grad():
                return float(torch.linalg.norm(w.T @ w - torch.eye(128)))

        before = gap()
        for _ in range(200):
            optimizer.zero_grad()
            orth_penalty([w], lam=1.0).backward()
            optimizer.step()
        assert gap() <= 0.5 * before
