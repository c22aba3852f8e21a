import math

import numpy as np
import pytest

from dualthresh.calibration import AbstentionGroundTruth, CalibratedThresholds
from dualthresh.core import LabeledSample
from dualthresh.prediction import (
    abstain_decision,
    evaluate_sample,
    evaluate_samples,
    prediction_set,
)


def thresholds(q_conf, q_abs, k=2, alpha=0.1, n=10):
    return CalibratedThresholds(
        q_conf=q_conf, q_abs=q_abs, alpha=alpha, n_calibration=n,
        youden_j=0.5, k_classes=k,
    )


def random_prob_vector(rng, k):
    p = rng.dirichlet(np.ones(k) * rng.uniform(0.3, 3.0))
    return p / p.sum()


class TestPredictionSet:
    def test_hand_computed_members(self):
        # -ln 0.6 = 0.511 is the only score under ln 2
        pset = prediction_set([0.6, 0.3, 0.1], math.log(2))
        assert pset.members == (0,)
        assert pset.size == 1

    def test_sentinel_includes_everything(self):
        pset = prediction_set([0.7, 0.1, 0.1, 0.1], math.inf)
        assert pset.members == (0, 1, 2, 3)

    def test_boundary_is_inclusive(self):
        pset = prediction_set([0.25, 0.25, 0.25, 0.25], math.log(4))
        assert pset.members == (0, 1, 2, 3)

    def test_empty_set_is_legal(self):
        pset = prediction_set([0.5, 0.5], 0.1)
        assert pset.members == ()
        assert pset.size == 0

    def test_monotone_in_q_conf(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            p = random_prob_vector(rng, int(rng.integers(2, 15)))
            q1, q2 = sorted(rng.uniform(0.0, 4.0, size=2))
            small = set(prediction_set(p, q1).members)
            large = set(prediction_set(p, q2).members)
            assert small <= large


class TestAbstainDecision:
    def test_confident_sample_not_abstained(self):
        assert abstain_decision([0.9, 0.1], 0.2) is False

    def test_uncertain_sample_abstained(self):
        assert abstain_decision([0.5, 0.5], 0.2) is True

    def test_one_hot_never_abstains(self):
        for q_abs in (0.0, 0.1, 5.0):
            assert abstain_decision([0.0, 1.0], q_abs) is False

    def test_equivalent_to_confidence_cutoff(self):
        # -log(max p) > q  <=>  max p < exp(-q), up to the clamp
        rng = np.random.default_rng(8)
        for _ in range(10_000):
            p = random_prob_vector(rng, int(rng.integers(2, 8)))
            q_abs = float(rng.uniform(0.0, 3.0))
            assert abstain_decision(p, q_abs) == (p.max() < math.exp(-q_abs))


class TestEvaluateSample:
    def test_confident_correct_sample(self):
        rec = evaluate_sample(
            LabeledSample("a", 0, [0.9, 0.1]), thresholds(0.3, 0.2)
        )
        assert rec.covered and not rec.abstained and not rec.should_abstain
        assert rec.top1 == 0
        assert rec.score_top1 == pytest.approx(0.10536051565782628, abs=1e-12)

    def test_uncertain_wrong_sample(self):
        rec = evaluate_sample(
            LabeledSample("b", 1, [0.5, 0.5]), thresholds(0.3, 0.2)
        )
        assert rec.prediction_set.size == 0
        assert not rec.covered
        assert rec.abstained
        # argmax tie breaks to class 0, which differs from the label
        assert rec.top1 == 0
        assert rec.should_abstain

    def test_sentinel_threshold_always_covers(self):
        rng = np.random.default_rng(12)
        thr = thresholds(math.inf, 0.5, k=4)
        for _ in range(100):
            p = random_prob_vector(rng, 4)
            label = int(rng.integers(0, 4))
            rec = evaluate_sample(LabeledSample("x", label, p), thr)
            assert rec.covered
            assert rec.prediction_set.size == 4

    def test_not_covered_ground_truth(self):
        thr = thresholds(0.3, 0.2)
        rec = evaluate_sample(
            LabeledSample("a", 0, [0.9, 0.1]), thr,
            ground_truth=AbstentionGroundTruth.NOT_COVERED,
        )
        assert rec.should_abstain is False
        rec = evaluate_sample(
            LabeledSample("b", 0, [0.5, 0.5]), thr,
            ground_truth=AbstentionGroundTruth.NOT_COVERED,
        )
        assert rec.should_abstain is True

    def test_class_count_mismatch(self):
        with pytest.raises(ValueError, match="classes"):
            evaluate_sample(
                LabeledSample("a", 0, [0.2, 0.3, 0.5]), thresholds(0.3, 0.2, k=2)
            )

    def test_covered_recomputable_and_margin_bounded(self):
        rng = np.random.default_rng(21)
        thr = thresholds(1.0, 0.7, k=6)
        samples = [
            LabeledSample(f"s{i}", int(rng.integers(0, 6)), random_prob_vector(rng, 6))
            for i in range(300)
        ]
        for rec, smp in zip(evaluate_samples(samples, thr), samples):
            assert rec.covered == (rec.label in rec.prediction_set.members)
            score_label = -math.log(max(float(smp.probs[smp.label]), 1e-12))
            assert rec.covered == (score_label <= thr.q_conf)
            assert rec.margin <= rec.confidence

    def test_deterministic_and_order_preserving(self):
        rng = np.random.default_rng(33)
        thr = thresholds(1.0, 0.7, k=4)
        samples = [
            LabeledSample(f"s{i}", int(rng.integers(0, 4)), random_prob_vector(rng, 4))
            for i in range(50)
        ]
        first = evaluate_samples(samples, thr)
        second = evaluate_samples(samples, thr)
        assert first == second
        assert [r.sample_id for r in first] == [s.sample_id for s in samples]

    def test_single_sample_matches_batch(self):
        rng = np.random.default_rng(44)
        thr = thresholds(1.2, 0.6, k=5)
        samples = [
            LabeledSample(f"s{i}", int(rng.integers(0, 5)), random_prob_vector(rng, 5))
            for i in range(40)
        ]
        batch = evaluate_samples(samples, thr)
        singles = [evaluate_sample(s, thr) for s in samples]
        assert batch == singles

    def test_empty_batch(self):
        assert evaluate_samples([], thresholds(1.0, 0.5)) == []

    def test_record_fields_match_public_metrics(self):
        # the batch kernel must agree exactly with the single-vector
        # operations, including on vectors with exact zeros
        from dualthresh.core import nonconformity
        from dualthresh.metrics import confidence, margin, normalized_entropy

        rng = np.random.default_rng(55)
        thr = thresholds(1.0, 0.6, k=5)
        vectors = [random_prob_vector(rng, 5) for _ in range(60)]
        vectors += [np.array([0.5, 0.5, 0.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0, 0.0, 0.0])]
        samples = [LabeledSample(f"s{i}", 0, p) for i, p in enumerate(vectors)]
        for rec, smp in zip(evaluate_samples(samples, thr), samples):
            assert rec.entropy == normalized_entropy(smp.probs)
            assert rec.confidence == confidence(smp.probs)
            assert rec.margin == margin(smp.probs)
            assert rec.score_top1 == nonconformity(smp.probs, rec.top1)
            assert rec.prediction_set == prediction_set(smp.probs, thr.q_conf)
            assert rec.abstained == abstain_decision(smp.probs, thr.q_abs)
