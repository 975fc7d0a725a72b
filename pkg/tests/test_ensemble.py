import math

import numpy as np
import pytest

from ensemblekit.ensemble import (
    REJECT,
    bayes_combined_scores,
    combined_scores,
    hard_vote_absolute,
    hard_vote_relative,
    logodds_weights,
    metric_weights,
    model_outputs,
    one_hot_outputs,
    prune,
    weighted_soft_vote,
)
from ensemblekit.errors import ValidationError
from helpers import random_score_tensor

TABLE6 = {
    "VGG16": 95.49,
    "VGG19": 95.03,
    "InceptionV3": 93.83,
    "Xception": 96.59,
    "ResNet50": 98.90,
    "DenseNet201": 98.25,
}


class TestWeightedSoftVote:
    def test_hand_combination(self):
        scores = np.array([[[0.6, 0.4]], [[0.3, 0.7]]])
        combined = combined_scores(scores, [0.5, 0.5])
        assert np.allclose(combined, [[0.45, 0.55]])
        assert weighted_soft_vote(scores, [0.5, 0.5]).tolist() == [1]

    def test_basis_weight_reproduces_single_classifier(self):
        rng = np.random.default_rng(0)
        scores = random_score_tensor(rng, 4, 25, 3)
        for i in range(4):
            w = np.zeros(4)
            w[i] = 1.0
            assert (weighted_soft_vote(scores, w) == np.argmax(scores[i], axis=1)).all()

    def test_argmax_tie_takes_lowest_class(self):
        scores = np.array([[[0.5, 0.5]]])
        assert weighted_soft_vote(scores, [1.0]).tolist() == [0]

    def test_weight_count_mismatch(self):
        rng = np.random.default_rng(1)
        scores = random_score_tensor(rng, 3, 4)
        with pytest.raises(ValidationError):
            weighted_soft_vote(scores, [0.5, 0.5])

    def test_all_zero_weights_rejected(self):
        rng = np.random.default_rng(2)
        with pytest.raises(ValidationError):
            weighted_soft_vote(random_score_tensor(rng, 2, 3), [0.0, 0.0])


class TestVoteProperties:
    """Randomized invariants, 200 instances each."""

    def _random_instance(self, rng):
        t = int(rng.integers(1, 6))
        n = int(rng.integers(1, 30))
        l = int(rng.integers(2, 5))
        scores = random_score_tensor(rng, t, n, l)
        weights = rng.random(t) + 1e-6
        return scores, weights

    def test_scale_invariance(self):
        rng = np.random.default_rng(10)
        for _ in range(200):
            scores, weights = self._random_instance(rng)
            lam = float(rng.uniform(0.01, 100))
            a = weighted_soft_vote(scores, weights)
            b = weighted_soft_vote(scores, lam * weights)
            assert (a == b).all()

    def test_unanimity(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            scores, weights = self._random_instance(rng)
            t, n, l = scores.shape
            target = rng.integers(0, l, size=n)
            # force a shared strict argmax everywhere
            for i in range(t):
                scores[i, np.arange(n), target] = scores[i].max(axis=1) + 0.5
                scores[i] /= scores[i].sum(axis=1, keepdims=True)
            assert (weighted_soft_vote(scores, weights) == target).all()

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(12)
        for _ in range(200):
            scores, weights = self._random_instance(rng)
            perm = rng.permutation(scores.shape[0])
            a = weighted_soft_vote(scores, weights)
            b = weighted_soft_vote(scores[perm], weights[perm])
            assert (a == b).all()

    def test_basis_reproduction(self):
        rng = np.random.default_rng(13)
        for _ in range(200):
            scores, _ = self._random_instance(rng)
            i = int(rng.integers(0, scores.shape[0]))
            w = np.zeros(scores.shape[0])
            w[i] = 1.0
            assert (weighted_soft_vote(scores, w) == np.argmax(scores[i], axis=1)).all()


class TestMajorityVotes:
    def test_absolute_majority_wins(self):
        votes = np.array([[[1.0, 0.0]], [[1.0, 0.0]], [[0.0, 1.0]]])
        assert hard_vote_absolute(votes).tolist() == [0]

    def test_even_split_rejects(self):
        votes = np.array([[[1.0, 0.0]], [[1.0, 0.0]], [[0.0, 1.0]], [[0.0, 1.0]]])
        assert hard_vote_absolute(votes).tolist() == [REJECT]

    def test_unanimous(self):
        votes = np.array([[[0.0, 1.0]], [[0.0, 1.0]], [[0.0, 1.0]]])
        assert hard_vote_absolute(votes).tolist() == [1]

    def test_half_is_not_a_majority_with_three_classes(self):
        # 2 of 4 votes is not > T/2 even if it is a plurality
        one_hot = np.zeros((4, 1, 3))
        one_hot[0, 0, 0] = one_hot[1, 0, 0] = 1.0
        one_hot[2, 0, 1] = 1.0
        one_hot[3, 0, 2] = 1.0
        assert hard_vote_absolute(one_hot).tolist() == [REJECT]
        assert hard_vote_relative(one_hot).tolist() == [0]

    def test_relative_plurality_and_tie_break(self):
        one_hot = np.zeros((3, 2, 3))
        # sample 0: votes {c0: 1, c1: 2}; sample 1: one vote each
        one_hot[0, 0, 1] = one_hot[1, 0, 1] = one_hot[2, 0, 0] = 1.0
        one_hot[0, 1, 2] = one_hot[1, 1, 0] = one_hot[2, 1, 1] = 1.0
        assert hard_vote_relative(one_hot).tolist() == [1, 0]

    def test_relative_vote_against_tally_oracle(self):
        rng = np.random.default_rng(20)
        for _ in range(1000):
            l = int(rng.integers(2, 5))
            votes = rng.integers(0, l, size=5)
            one_hot = np.zeros((5, 1, l))
            for i, v in enumerate(votes):
                one_hot[i, 0, v] = 1.0
            tally = [0] * l
            for v in votes:
                tally[v] += 1
            best = max(range(l), key=lambda j: (tally[j], -j))
            assert hard_vote_relative(one_hot).tolist() == [best]


class TestLogOddsWeights:
    def test_single_classifier(self):
        assert logodds_weights([0.9]).tolist() == [1.0]

    def test_hand_values(self):
        w = logodds_weights([0.9, 0.8])
        raw = np.array([math.log(9), math.log(4)])
        assert np.allclose(w, raw / raw.sum(), atol=1e-12)
        assert abs(w[0] - 0.6131) < 5e-4 and abs(w[1] - 0.3869) < 5e-4

    def test_boundary_accuracies_rejected(self):
        for bad in ([1.0], [0.0], [0.9, 1.0]):
            with pytest.raises(ValidationError):
                logodds_weights(bad)

    def test_worse_than_chance_clamped_to_zero(self):
        w = logodds_weights([0.9, 0.4])
        assert w[1] == 0.0 and w[0] == 1.0

    def test_all_at_or_below_chance_rejected(self):
        with pytest.raises(ValidationError, match="chance"):
            logodds_weights([0.5, 0.4])


class TestBayesCombined:
    def test_single_classifier_follows_its_label(self):
        rng = np.random.default_rng(30)
        scores = random_score_tensor(rng, 1, 10, 2)
        hard = one_hot_outputs(scores)
        combined = bayes_combined_scores(hard, [0.9], [0.5, 0.5])
        assert (np.argmax(combined, axis=1) == np.argmax(scores[0], axis=1)).all()

    def test_disagreement_follows_the_stronger_classifier(self):
        hard = np.zeros((2, 1, 2))
        hard[0, 0, 0] = 1.0  # p=0.9 says class 0
        hard[1, 0, 1] = 1.0  # p=0.6 says class 1
        combined = bayes_combined_scores(hard, [0.9, 0.6], [0.5, 0.5])
        assert np.argmax(combined, axis=1).tolist() == [0]

    def test_skewed_priors_can_override_votes(self):
        hard = np.zeros((1, 1, 2))
        hard[0, 0, 1] = 1.0  # one vote for class 1 at p=0.6
        priors = [0.99, 0.01]
        combined = bayes_combined_scores(hard, [0.6], priors)
        # direct evaluation of the combination rule
        h0 = math.log(priors[0])
        h1 = math.log(priors[1]) + math.log(0.6 / 0.4)
        assert np.allclose(combined, [[h0, h1]])
        assert h0 > h1
        assert np.argmax(combined, axis=1).tolist() == [0]

    def test_equal_priors_match_weighted_vote_with_raw_logodds(self):
        rng = np.random.default_rng(31)
        for _ in range(200):
            t = int(rng.integers(1, 5))
            n = int(rng.integers(1, 20))
            l = int(rng.integers(2, 4))
            scores = random_score_tensor(rng, t, n, l)
            acc = rng.uniform(0.55, 0.95, size=t)
            hard = one_hot_outputs(scores)
            bayes = np.argmax(bayes_combined_scores(hard, acc, np.full(l, 1 / l)), axis=1)
            weights = np.log(acc / (1 - acc))
            voted = weighted_soft_vote(hard, weights)
            assert (bayes == voted).all()

    def test_bad_priors_rejected(self):
        hard = np.zeros((1, 1, 2))
        hard[0, 0, 0] = 1.0
        with pytest.raises(ValidationError):
            bayes_combined_scores(hard, [0.9], [0.7, 0.7])
        with pytest.raises(ValidationError):
            bayes_combined_scores(hard, [0.9], [1.0, 0.0])


class TestMetricWeights:
    def test_published_accuracy_fixture(self):
        kept = ["VGG16", "Xception", "ResNet50", "DenseNet201"]
        values = [TABLE6[m] for m in kept]
        w = metric_weights(values)
        assert abs(sum(values) - 389.23) < 1e-9
        for i, v in enumerate(values):
            assert abs(w[i] - v / 389.23) <= 1e-12
        assert abs(w.sum() - 1.0) <= 1e-12

    def test_equal_values_uniform(self):
        assert np.allclose(metric_weights([3.0, 3.0, 3.0]), 1 / 3)

    def test_single_value(self):
        assert metric_weights([0.7]).tolist() == [1.0]

    def test_non_positive_rejected(self):
        with pytest.raises(ValidationError):
            metric_weights([1.0, 0.0])
        with pytest.raises(ValidationError):
            metric_weights([1.0, -0.1])


class TestPrune:
    def test_published_keep_four(self):
        kept = prune(TABLE6, keep=4)
        assert set(kept) == {"VGG16", "Xception", "ResNet50", "DenseNet201"}

    def test_keep_all_is_identity(self):
        assert prune(TABLE6, keep=6) == list(TABLE6)

    def test_result_preserves_input_order(self):
        assert prune(TABLE6, keep=4) == ["VGG16", "Xception", "ResNet50", "DenseNet201"]

    def test_tie_at_the_cut_keeps_lexicographically_first(self):
        values = {"b": 1.0, "a": 1.0, "c": 2.0}
        assert prune(values, keep=2) == ["a", "c"]

    def test_out_of_range(self):
        with pytest.raises(ValidationError):
            prune(TABLE6, keep=0)
        with pytest.raises(ValidationError):
            prune(TABLE6, keep=7)


class TestOneHot:
    def test_one_hot_matches_model_outputs(self):
        rng = np.random.default_rng(40)
        scores = random_score_tensor(rng, 3, 15, 4)
        hard = one_hot_outputs(scores)
        assert hard.shape == scores.shape
        assert (hard.sum(axis=2) == 1).all()
        assert (np.argmax(hard, axis=2) == model_outputs(scores)).all()
