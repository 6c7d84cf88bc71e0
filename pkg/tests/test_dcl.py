"""Memory bank, contrastive weights, lambda_N schedule and the contrastive loss."""

import math

import numpy as np
import pytest

from src.dcl.bank import QUERY_ROW, MemoryBank, refresh_bank
from src.dcl.loss import DclMode, DclOptions, contrastive_weights, dcl_loss
from src.dcl.oracle import dcl_exact_nll
from src.dcl.schedule import LambdaNMode, LambdaNSchedule, lambda_for_epoch, lambda_n
from src.dcl.weights import (
    SchemeVariant,
    WeightScheme,
    anchor_weights,
    negative_weight_node,
    negative_weights,
    positive_weight_matrix,
    positive_weights,
    top_k_positive_matrix,
    unweighted_matrices,
)
from src.model.network import forward_logits
from src.numerics.autodiff import backward, constant, parameter, softmax_rows
from src.numerics.matrix import softmax_rows as softmax_values
from src.utils.errors import ContractError, DegenerateFeatureError, StaleBankError


def random_bank(rng, m: int, n: int, d: int = 4, num_support: int = 0) -> MemoryBank:
    labels = np.full(m, QUERY_ROW, dtype=np.int64)
    labels[:num_support] = np.arange(num_support) % n
    return MemoryBank(
        features=rng.standard_normal((m, d)),
        predictions=softmax_values(rng.standard_normal((m, n)) * 2),
        support_labels=labels,
    )


def oracle_positive_weights(features: np.ndarray, anchor: int) -> np.ndarray:
    """Independent pairwise-cosine loop."""
    shifted = []
    for i in range(features.shape[0]):
        if i == anchor:
            continue
        a, b = features[anchor], features[i]
        cos = sum(x * y for x, y in zip(a, b)) / (
            math.sqrt(sum(x * x for x in a)) * math.sqrt(sum(y * y for y in b))
        )
        shifted.append((cos + 1.0) / 2.0)
    mean = sum(shifted) / len(shifted)
    return np.array([s / mean for s in shifted])


def brute_force_dcl(live, bank_predictions, positive, negative, lambda_n_value) -> float:
    m = live.shape[0]
    total = 0.0
    for t in range(m):
        for i in range(m):
            if i == t:
                continue
            sim = sum(live[t, c] * bank_predictions[i, c] for c in range(live.shape[1]))
            total += -positive[t, i] * sim + lambda_n_value * negative[t, i] * sim
    return total / m


class TestBank:
    def test_refresh_matches_forward(self, episode_model, small_episode):
        bank = refresh_bank(episode_model, small_episode)
        expected = softmax_values(forward_logits(episode_model, small_episode.all_x()).value)
        np.testing.assert_allclose(bank.predictions, expected, atol=1e-15)
        assert bank.size == small_episode.size
        assert bank.num_support == small_episode.num_support
        np.testing.assert_array_equal(bank.support_labels[: bank.num_support], small_episode.support_y)

    def test_rejects_non_probability_rows(self):
        with pytest.raises(ContractError):
            MemoryBank(np.ones((2, 2)), np.ones((2, 3)), np.full(2, QUERY_ROW))


class TestPositiveWeights:
    def test_identical_features_give_ones(self):
        bank = MemoryBank(np.ones((4, 3)), np.full((4, 2), 0.5), np.full(4, QUERY_ROW))
        np.testing.assert_allclose(positive_weights(bank, 0), np.ones(3))

    def test_matches_pairwise_oracle(self, rng):
        for _ in range(20):
            bank = random_bank(rng, m=int(rng.integers(2, 12)), n=3)
            for t in range(bank.size):
                w = positive_weights(bank, t)
                np.testing.assert_allclose(w, oracle_positive_weights(bank.features, t), atol=1e-12)
                assert w.mean() == pytest.approx(1.0, abs=1e-9)
                assert np.all(w >= 0)

    def test_matrix_rows_match_vectors(self, rng):
        bank = random_bank(rng, m=6, n=3)
        matrix = positive_weight_matrix(bank)
        np.testing.assert_array_equal(np.diag(matrix), np.zeros(6))
        for t in range(6):
            np.testing.assert_allclose(np.delete(matrix[t], t), positive_weights(bank, t), atol=1e-12)

    def test_zero_feature_is_degenerate(self):
        features = np.array([[0.0, 0.0], [1.0, 0.0]])
        bank = MemoryBank(features, np.full((2, 2), 0.5), np.full(2, QUERY_ROW))
        with pytest.raises(DegenerateFeatureError):
            positive_weights(bank, 1)

    def test_anchor_out_of_range(self, rng):
        with pytest.raises(ContractError):
            positive_weights(random_bank(rng, m=3, n=2), 3)

    def test_antipodal_pair_falls_back_to_ones(self):
        features = np.array([[1.0, 0.0], [-1.0, 0.0]])
        bank = MemoryBank(features, np.full((2, 2), 0.5), np.full(2, QUERY_ROW))
        np.testing.assert_array_equal(positive_weights(bank, 0), [1.0])


class TestNegativeWeights:
    W = np.array([0.5, 1.0, 1.5])

    def test_reverse_order(self):
        scheme = WeightScheme.create(SchemeVariant.REVERSE_ORDER)
        np.testing.assert_array_equal(negative_weights(scheme, self.W), [1.5, 1.0, 0.5])

    def test_opposite(self):
        scheme = WeightScheme.create(SchemeVariant.OPPOSITE)
        np.testing.assert_allclose(negative_weights(scheme, self.W), [1.5, 1.0, 0.5])

    def test_logistic_midpoint(self):
        scheme = WeightScheme.create(SchemeVariant.NONLINEAR_LOGISTIC)
        assert negative_weights(scheme, np.array([1.0]))[0] == pytest.approx(0.5)
        assert scheme.is_learnable and len(scheme.parameters()) == 2

    def test_reverse_order_is_a_permutation(self, rng):
        scheme = WeightScheme.create(SchemeVariant.REVERSE_ORDER)
        w = np.round(rng.uniform(0, 2, 9), 1)  # rounding forces ties
        neg = negative_weights(scheme, w)
        np.testing.assert_array_equal(np.sort(neg), np.sort(w))
        assert neg.sum() == pytest.approx(w.sum(), abs=1e-12)

    def test_reverse_order_ties_are_deterministic(self):
        scheme = WeightScheme.create(SchemeVariant.REVERSE_ORDER)
        neg = negative_weights(scheme, np.array([1.0, 1.0, 2.0]))
        np.testing.assert_array_equal(neg, [1.0, 2.0, 1.0])

    def test_empty_vector(self):
        with pytest.raises(ContractError):
            negative_weights(WeightScheme.create(SchemeVariant.OPPOSITE), np.array([]))

    def test_reverse_order_ranks_mirror(self, rng):
        m = 9
        bank = random_bank(rng, m=m, n=3)
        scheme = WeightScheme.create(SchemeVariant.REVERSE_ORDER)
        for anchor in range(m):
            weights = anchor_weights(bank, anchor, scheme)
            assert weights.anchor_index == anchor
            assert weights.positive.shape == weights.negative.shape == (m - 1,)
            pos_rank = np.argsort(np.argsort(weights.positive, kind="stable"), kind="stable")
            neg_rank = np.argsort(np.argsort(weights.negative, kind="stable"), kind="stable")
            np.testing.assert_array_equal(pos_rank + neg_rank, np.full(m - 1, m - 2))

    @pytest.mark.parametrize("variant", list(SchemeVariant))
    def test_node_matches_vectors(self, rng, variant):
        bank = random_bank(rng, m=5, n=3)
        scheme = WeightScheme.create(variant)
        positive = positive_weight_matrix(bank)
        node = negative_weight_node(scheme, positive)
        for t in range(5):
            expected = negative_weights(scheme, np.delete(positive[t], t))
            np.testing.assert_allclose(np.delete(node.value[t], t), expected, atol=1e-12)
            assert node.value[t, t] == 0.0


class TestSchedule:
    def test_endpoints(self):
        schedule = LambdaNSchedule(100)
        assert lambda_n(schedule, 0) == 1.0
        assert lambda_n(schedule, 100) == pytest.approx(11.0**-5, abs=1e-12)
        assert lambda_n(schedule, 50) == pytest.approx(6.0**-5, rel=1e-12)

    @pytest.mark.parametrize("total", [1, 7, 100])
    def test_strictly_decreasing(self, total):
        schedule = LambdaNSchedule(total)
        values = [schedule.value(h) for h in range(total + 1)]
        assert values[0] == 1.0
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_out_of_range(self):
        with pytest.raises(ContractError):
            lambda_n(LambdaNSchedule(10), 11)
        with pytest.raises(ContractError):
            LambdaNSchedule(0)

    def test_modes(self):
        schedule = LambdaNSchedule(10)
        assert lambda_for_epoch(schedule, 4, LambdaNMode.FIXED_MAX) == 1.0
        assert lambda_for_epoch(schedule, 4, LambdaNMode.FIXED_MIN) == pytest.approx(11.0**-5)
        assert lambda_for_epoch(schedule, 4, LambdaNMode.VARIABLE) == pytest.approx(5.0**-5)


class TestSelection:
    def test_top_k_support_rules(self, rng):
        bank = MemoryBank(
            features=rng.standard_normal((6, 3)),
            predictions=np.full((6, 2), 0.5),
            support_labels=np.array([0, 1, 0, QUERY_ROW, QUERY_ROW, QUERY_ROW]),
        )
        full = positive_weight_matrix(bank)
        selected = top_k_positive_matrix(full, bank, k=2, sigma=2.0)
        assert np.all((selected > 0).sum(axis=1) == 2)
        # Support anchor 0 never picks the other-label support row 1
        assert selected[0, 1] == 0.0
        # Kept support entries carry the boost
        for t, i in zip(*np.nonzero(selected)):
            boosted = bank.is_support[i] and (
                not bank.is_support[t] or bank.support_labels[i] == bank.support_labels[t]
            )
            assert selected[t, i] == pytest.approx(full[t, i] * (2.0 if boosted else 1.0))

    def test_query_anchor_prefers_boosted_support(self):
        # Query row 2 is equally close to support row 0 and query row 1
        features = np.array([[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]])
        bank = MemoryBank(features, np.full((3, 2), 0.5), np.array([0, QUERY_ROW, QUERY_ROW]))
        selected = top_k_positive_matrix(positive_weight_matrix(bank), bank, k=1, sigma=2.0)
        assert selected[2, 0] == pytest.approx(2.0)
        assert selected[2, 1] == 0.0

    def test_unweighted_sets(self, rng):
        bank = random_bank(rng, m=7, n=3)
        positive, negative = unweighted_matrices(bank, k=3)
        assert np.all(positive.sum(axis=1) == 3)
        assert np.all(negative.sum(axis=1) == 3)
        assert np.all(positive * negative == 0)
        assert np.all(np.diag(positive) == 0) and np.all(np.diag(negative) == 0)


class TestDclLoss:
    def test_identical_one_hot_pair(self):
        predictions = np.array([[1.0, 0.0], [1.0, 0.0]])
        bank = MemoryBank(np.array([[1.0, 2.0], [1.0, 2.0]]), predictions, np.full(2, QUERY_ROW))
        scheme = WeightScheme.create(SchemeVariant.REVERSE_ORDER)
        loss = dcl_loss(constant(predictions), bank, scheme, lambda_n_value=0.0)
        assert float(loss.value[0, 0]) == pytest.approx(-1.0)

    def test_empty_objective(self, rng):
        bank = random_bank(rng, m=4, n=3)
        zeros = np.zeros((4, 4))
        scheme = WeightScheme.create(SchemeVariant.OPPOSITE)
        loss = dcl_loss(constant(bank.predictions), bank, scheme, 0.0, weights=(zeros, zeros))
        assert float(loss.value[0, 0]) == 0.0

    @pytest.mark.parametrize("variant", list(SchemeVariant))
    def test_matches_brute_force(self, rng, variant):
        for _ in range(100):
            m = int(rng.integers(2, 17))
            bank = random_bank(rng, m=m, n=3)
            live = softmax_values(rng.standard_normal((m, 3)))
            scheme = WeightScheme.create(variant)
            lam = float(rng.uniform(0, 1))

            positive = np.zeros((m, m))
            negative = np.zeros((m, m))
            for t in range(m):
                others = [i for i in range(m) if i != t]
                pos = oracle_positive_weights(bank.features, t)
                positive[t, others] = pos
                negative[t, others] = negative_weights(scheme, pos)

            value = float(dcl_loss(constant(live), bank, scheme, lam).value[0, 0])
            assert value == pytest.approx(
                brute_force_dcl(live, bank.predictions, positive, negative, lam), abs=1e-10
            )

    def test_stale_bank(self, rng):
        bank = random_bank(rng, m=4, n=3)
        scheme = WeightScheme.create(SchemeVariant.REVERSE_ORDER)
        with pytest.raises(StaleBankError):
            dcl_loss(constant(np.full((5, 3), 1 / 3)), bank, scheme, 1.0)

    def test_top_k_and_unweighted_run(self, rng):
        bank = random_bank(rng, m=8, n=3, num_support=3)
        scheme = WeightScheme.create(SchemeVariant.REVERSE_ORDER)
        live = constant(bank.predictions)
        for options in (DclOptions(mode=DclMode.TOPK, top_k=3), DclOptions(weighted=False, top_k=3)):
            positive, _ = contrastive_weights(bank, scheme, options)
            assert np.all((positive > 0).sum(axis=1) == 3)
            assert np.isfinite(dcl_loss(live, bank, scheme, 0.5, options).value[0, 0])

    def test_gradient_reaches_logistic_parameters(self, rng):
        bank = random_bank(rng, m=5, n=3)
        scheme = WeightScheme.create(SchemeVariant.NONLINEAR_LOGISTIC)
        logits = parameter(rng.standard_normal((5, 3)))
        backward(dcl_loss(softmax_rows(logits), bank, scheme, 1.0))
        assert scheme.k.grad[0, 0] != 0.0
        assert scheme.x0.grad[0, 0] != 0.0
        assert np.abs(logits.grad).sum() > 0.0

    def test_weights_ignore_live_predictions(self, rng):
        bank = random_bank(rng, m=5, n=3)
        scheme = WeightScheme.create(SchemeVariant.OPPOSITE)
        before = contrastive_weights(bank, scheme)
        logits = parameter(rng.standard_normal((5, 3)))
        backward(dcl_loss(softmax_rows(logits), bank, scheme, 1.0))
        after = contrastive_weights(bank, scheme)
        np.testing.assert_array_equal(before[0], after[0])
        np.testing.assert_array_equal(before[1].value, after[1].value)


class TestExactNll:
    def test_identical_sets_give_zero(self, rng):
        bank = random_bank(rng, m=5, n=3)
        w = positive_weight_matrix(bank)
        scheme = WeightScheme.create(SchemeVariant.REVERSE_ORDER)
        assert dcl_exact_nll(bank.predictions, bank, scheme, 1.0, weights=(w, w)) == pytest.approx(
            0.0, abs=1e-12
        )

    def test_single_positive(self, rng):
        bank = random_bank(rng, m=3, n=2)
        live = softmax_values(rng.standard_normal((3, 2)))
        positive = np.zeros((3, 3))
        positive[0, 2] = 1.0
        scheme = WeightScheme.create(SchemeVariant.REVERSE_ORDER)
        value = dcl_exact_nll(live, bank, scheme, 1.0, weights=(positive, np.zeros((3, 3))))
        scores = live[0] @ bank.predictions.T
        expected = -(scores[2] - math.log(np.exp(scores).sum())) / 3
        assert value == pytest.approx(expected, abs=1e-12)

    def test_equals_bound_for_reverse_order(self, rng):
        for _ in range(20):
            m = int(rng.integers(2, 17))
            bank = random_bank(rng, m=m, n=4)
            live = softmax_values(rng.standard_normal((m, 4)))
            scheme = WeightScheme.create(SchemeVariant.REVERSE_ORDER)
            bound = float(dcl_loss(constant(live), bank, scheme, 1.0).value[0, 0])
            assert dcl_exact_nll(live, bank, scheme, 1.0) == pytest.approx(bound, abs=1e-10)

    @pytest.mark.parametrize(
        "variant, lambda_n_value",
        [
            (SchemeVariant.OPPOSITE, 0.5),
            (SchemeVariant.NONLINEAR_LOGISTIC, 0.5),
            (SchemeVariant.REVERSE_ORDER, 0.3),
        ],
    )
    def test_directional_agreement(self, rng, variant, lambda_n_value):
        agree = 0
        gaps = []
        for _ in range(20):
            bank = random_bank(rng, m=6, n=3)
            scheme = WeightScheme.create(variant)
            logits = parameter(rng.standard_normal((6, 3)))
            loss = dcl_loss(softmax_rows(logits), bank, scheme, lambda_n_value)
            nll_before = dcl_exact_nll(softmax_rows(logits), bank, scheme, lambda_n_value)
            gaps.append(abs(float(loss.value[0, 0]) - nll_before))
            backward(loss)
            logits.value -= 0.5 * logits.grad
            loss_after = dcl_loss(softmax_rows(logits), bank, scheme, lambda_n_value)
            nll_after = dcl_exact_nll(softmax_rows(logits), bank, scheme, lambda_n_value)
            if loss_after.value[0, 0] < loss.value[0, 0] and nll_after < nll_before:
                agree += 1
        # the bound is not the likelihood itself in these settings
        assert max(gaps) > 1e-6
        assert agree >= 16
