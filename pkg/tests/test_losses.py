import math

import numpy as np
import pytest

from cahmc.advtrain import combined_loss, cross_entropy, fgsm, nt_xent
from cahmc.errors import ConfigError, ContractError, DegenerateInputError
from cahmc.tensor import Tensor


def nt_xent_oracle(z_clean, z_adv, tau):
    """Independent brute force: explicit double loop over all 2N anchors
    and their 2N - 1 candidates, plain float math."""
    pool = np.concatenate([z_clean, z_adv], axis=0)
    m = pool.shape[0]
    n = m // 2

    def cos(a, b):
        return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))

    losses = []
    for i in range(m):
        partner = i + n if i < n else i - n
        numerator = math.exp(cos(pool[i], pool[partner]) / tau)
        denominator = 0.0
        for k in range(m):
            if k == i:
                continue
            denominator += math.exp(cos(pool[i], pool[k]) / tau)
        losses.append(-math.log(numerator / denominator))
    return sum(losses) / m


class TestCrossEntropy:
    def test_certain_correct_prediction_is_zero(self):
        probs = Tensor([[1.0, 0.0]])
        assert cross_entropy(probs, [0]).item() == 0.0

    def test_uniform_binary_is_ln2(self):
        probs = Tensor([[0.5, 0.5]])
        assert cross_entropy(probs, [1]).item() == pytest.approx(math.log(2.0), abs=1e-12)

    def test_two_example_fixture(self):
        # -(ln 0.9 + ln 0.8) / 2 = 0.164252...
        probs = Tensor([[0.9, 0.1], [0.2, 0.8]])
        assert cross_entropy(probs, [0, 1]).item() == pytest.approx(0.164252, abs=1e-6)

    def test_label_out_of_range(self):
        with pytest.raises(ContractError):
            cross_entropy(Tensor([[0.5, 0.5]]), [2])

    def test_clamps_zero_probability(self):
        probs = Tensor([[0.0, 1.0]])
        value = cross_entropy(probs, [0]).item()
        assert math.isfinite(value)
        assert value == pytest.approx(-math.log(1e-12))

    def test_gradient_flows(self):
        probs = Tensor([[0.7, 0.3]], requires_grad=True)
        cross_entropy(probs, [0]).backward()
        assert probs.grad is not None


class TestFgsm:
    def test_ascent_direction(self):
        r = fgsm(np.array([0.3, -0.2, 0.0]), 0.01, "ascent").r
        np.testing.assert_array_equal(r, [0.01, -0.01, 0.0])

    def test_paper_literal_direction(self):
        r = fgsm(np.array([0.3, -0.2, 0.0]), 0.01, "paper_literal").r
        np.testing.assert_array_equal(r, [-0.01, 0.01, 0.0])

    def test_zero_epsilon_gives_zero_perturbation(self):
        r = fgsm(np.array([1.0, -2.0]), 0.0).r
        np.testing.assert_array_equal(r, [0.0, 0.0])

    def test_negative_epsilon_rejected(self):
        with pytest.raises(ConfigError):
            fgsm(np.array([1.0]), -0.1)

    def test_unknown_direction_rejected(self):
        with pytest.raises(ConfigError):
            fgsm(np.array([1.0]), 0.1, "sideways")

    def test_elements_restricted_to_three_values(self):
        rng = np.random.default_rng(0)
        grad = rng.standard_normal((20, 7))
        grad[3, :] = 0.0
        eps = 0.004
        r = fgsm(grad, eps).r
        assert set(np.unique(r)) <= {-eps, 0.0, eps}
        assert np.abs(r).max() == eps


class TestNtXent:
    def test_single_pair_is_zero(self):
        z = Tensor([[1.0, 2.0]])
        z2 = Tensor([[0.5, -1.0]])
        assert nt_xent(z, z2, 0.5).item() == 0.0

    def test_orthogonal_fixture_tau_1(self):
        z = Tensor([[1.0, 0.0], [0.0, 1.0]])
        z2 = Tensor([[1.0, 0.0], [0.0, 1.0]])
        expected = -math.log(math.e / (math.e + 2.0))  # 0.551444...
        assert nt_xent(z, z2, 1.0).item() == pytest.approx(expected, abs=1e-9)
        assert nt_xent(z, z2, 1.0).item() == pytest.approx(0.551444, abs=1e-6)

    def test_orthogonal_fixture_tau_half(self):
        # closed form log(1 + 2 / e^2) = 0.2395448, oracle-confirmed
        z = Tensor([[1.0, 0.0], [0.0, 1.0]])
        z2 = Tensor([[1.0, 0.0], [0.0, 1.0]])
        expected = math.log(1.0 + 2.0 / math.e**2)
        assert nt_xent(z, z2, 0.5).item() == pytest.approx(expected, abs=1e-9)
        assert nt_xent(z, z2, 0.5).item() == pytest.approx(
            nt_xent_oracle(z.data, z2.data, 0.5), abs=1e-10
        )

    @pytest.mark.parametrize("n", [1, 2, 4, 8])
    def test_matches_brute_force_oracle(self, n):
        rng = np.random.default_rng(n)
        for trial in range(25):
            z = rng.standard_normal((n, 5))
            z2 = rng.standard_normal((n, 5))
            tau = float(rng.uniform(0.05, 1.5))
            mine = nt_xent(Tensor(z), Tensor(z2), tau).item()
            assert mine == pytest.approx(nt_xent_oracle(z, z2, tau), abs=1e-10)

    def test_symmetric_in_arguments(self):
        rng = np.random.default_rng(3)
        z = rng.standard_normal((4, 6))
        z2 = rng.standard_normal((4, 6))
        a = nt_xent(Tensor(z), Tensor(z2), 0.3).item()
        b = nt_xent(Tensor(z2), Tensor(z), 0.3).item()
        assert a == pytest.approx(b, abs=1e-12)

    def test_invariant_under_pair_permutation(self):
        rng = np.random.default_rng(4)
        z = rng.standard_normal((5, 6))
        z2 = rng.standard_normal((5, 6))
        perm = rng.permutation(5)
        a = nt_xent(Tensor(z), Tensor(z2), 0.2).item()
        b = nt_xent(Tensor(z[perm]), Tensor(z2[perm]), 0.2).item()
        assert a == pytest.approx(b, abs=1e-12)

    def test_invariant_under_common_rotation(self):
        rng = np.random.default_rng(5)
        z = rng.standard_normal((4, 6))
        z2 = rng.standard_normal((4, 6))
        q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
        a = nt_xent(Tensor(z), Tensor(z2), 0.4).item()
        b = nt_xent(Tensor(z @ q), Tensor(z2 @ q), 0.4).item()
        assert a == pytest.approx(b, abs=1e-10)

    def test_zero_norm_row_rejected(self):
        z = Tensor([[1.0, 0.0], [0.0, 0.0]])
        z2 = Tensor([[1.0, 0.0], [0.0, 1.0]])
        with pytest.raises(DegenerateInputError):
            nt_xent(z, z2, 0.5)

    def test_nonpositive_temperature_rejected(self):
        z = Tensor([[1.0, 0.0]])
        with pytest.raises(ConfigError):
            nt_xent(z, z, 0.0)

    def test_gradient_matches_finite_differences(self):
        from cahmc.tensor import grad_check

        rng = np.random.default_rng(6)
        z = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
        z2 = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
        report = grad_check(lambda a, b: nt_xent(a, b, 0.3), [z, z2])
        assert report.passed, report


class TestCombinedLoss:
    def test_lambda_zero_is_mean_of_ce_terms(self):
        assert combined_loss(1.0, 3.0, 7.0, 0.0) == 2.0

    def test_lambda_one_is_contrastive_term(self):
        assert combined_loss(1.0, 3.0, 7.0, 1.0) == 7.0

    def test_weighted_fixture(self):
        assert combined_loss(1.0, 3.0, 5.0, 0.4) == pytest.approx(3.2, abs=1e-12)

    def test_endpoints_exact_on_random_tensors(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            a, b, c = (Tensor(v) for v in rng.uniform(0.01, 5.0, 3))
            assert combined_loss(a, b, c, 0.0).item() == (a.item() + b.item()) / 2.0
            assert combined_loss(a, b, c, 1.0).item() == c.item()

    def test_lambda_out_of_range_rejected(self):
        with pytest.raises(ConfigError):
            combined_loss(1.0, 1.0, 1.0, 1.5)

    def test_gradients_flow_to_all_terms(self):
        a = Tensor(1.0, requires_grad=True)
        b = Tensor(2.0, requires_grad=True)
        c = Tensor(3.0, requires_grad=True)
        combined_loss(a, b, c, 0.4).backward()
        assert a.grad == pytest.approx(0.3)
        assert b.grad == pytest.approx(0.3)
        assert c.grad == pytest.approx(0.4)
