"""MCC, AUC-ROC and ECE against brute-force reference implementations."""

import numpy as np
import pytest

from quanvnext.metrics import ConfusionCounts, accuracy, auc_roc, confusion_counts, ece, mcc


# -- independent oracles -----------------------------------------------------

def mcc_reference(tp, tn, fp, fn):
    import math
    denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if denom == 0:
        return 0.0
    return (tp * tn - fp * fn) / math.sqrt(denom)


def auc_pairwise(scores, labels):
    scores = np.asarray(scores)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                wins += 1.0
            elif p == q:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def ece_reference(confidences, correct, n_bins=10):
    confidences = np.asarray(confidences, dtype=float)
    correct = np.asarray(correct, dtype=bool)
    total = 0.0
    for b in range(n_bins):
        lo = b / n_bins
        hi = (b + 1) / n_bins
        if b == n_bins - 1:
            mask = (confidences >= lo) & (confidences <= hi)
        else:
            mask = (confidences >= lo) & (confidences < hi)
        if mask.sum() == 0:
            continue
        total += mask.sum() * abs(correct[mask].mean() - confidences[mask].mean())
    return total / len(confidences)


class TestConfusionCounts:
    def test_counting(self):
        counts = confusion_counts([1, 1, 0, 0, 1], [1, 0, 0, 1, 1])
        assert (counts.tp, counts.tn, counts.fp, counts.fn) == (2, 1, 1, 1)
        assert counts.total == 5

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            ConfusionCounts(-1, 0, 0, 0)


class TestMcc:
    def test_perfect(self):
        assert mcc(ConfusionCounts(10, 10, 0, 0)) == 1.0

    def test_total_misclassification(self):
        assert mcc(ConfusionCounts(0, 0, 10, 10)) == -1.0

    def test_symmetric_counts_zero(self):
        assert mcc(ConfusionCounts(25, 25, 25, 25)) == 0.0

    def test_degenerate_margin_zero(self):
        assert mcc(ConfusionCounts(5, 0, 0, 5)) == 0.0

    def test_class_swap_invariance(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            tp, tn, fp, fn = (int(v) for v in rng.integers(0, 40, size=4))
            assert mcc(ConfusionCounts(tp, tn, fp, fn)) == pytest.approx(
                mcc(ConfusionCounts(tn, tp, fn, fp)), abs=1e-15
            )

    def test_matches_reference_on_random_counts(self):
        rng = np.random.default_rng(1)
        for _ in range(500):
            tp, tn, fp, fn = (int(v) for v in rng.integers(0, 60, size=4))
            assert mcc(ConfusionCounts(tp, tn, fp, fn)) == pytest.approx(
                mcc_reference(tp, tn, fp, fn), abs=1e-12
            )


class TestAucRoc:
    def test_perfect_separation(self):
        assert auc_roc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0

    def test_all_ties_half(self):
        assert auc_roc([0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0]) == 0.5

    def test_hand_case(self):
        assert auc_roc([0.9, 0.4, 0.6, 0.3], [1, 0, 1, 0]) == 1.0

    def test_single_class_rejected(self):
        with pytest.raises(ValueError):
            auc_roc([0.5, 0.6], [1, 1])

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            n = int(rng.integers(4, 30))
            labels = rng.integers(0, 2, size=n)
            if labels.min() == labels.max():
                labels[0] = 1 - labels[0]
            scores = rng.normal(size=n)
            base = auc_roc(scores, labels)
            assert auc_roc(np.exp(scores), labels) == pytest.approx(base, abs=1e-12)
            assert auc_roc(3 * scores + 7, labels) == pytest.approx(base, abs=1e-12)

    def test_matches_pairwise_reference(self):
        rng = np.random.default_rng(3)
        for _ in range(300):
            n = int(rng.integers(4, 40))
            labels = rng.integers(0, 2, size=n)
            if labels.min() == labels.max():
                labels[0] = 1 - labels[0]
            scores = np.round(rng.random(n), 2)  # force ties
            assert auc_roc(scores, labels) == pytest.approx(
                auc_pairwise(scores, labels), abs=1e-12
            )


class TestEce:
    def test_perfectly_confident_and_correct(self):
        assert ece(np.ones(10), np.ones(10, dtype=bool)) == 0.0

    def test_single_bin_hand_value(self):
        assert ece([0.9, 0.9], [True, False]) == pytest.approx(0.4, abs=1e-12)

    def test_calibrated_bins_zero(self):
        confidences = np.array([0.75] * 4)
        correct = np.array([True, True, True, False])
        assert ece(confidences, correct) == pytest.approx(0.0, abs=1e-12)

    def test_boundary_one_in_top_bin(self):
        assert ece([1.0, 0.95], [True, True]) == pytest.approx(0.025, abs=1e-12)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            ece([1.2], [True])

    def test_matches_reference_on_random_sets(self):
        rng = np.random.default_rng(4)
        for _ in range(300):
            n = int(rng.integers(1, 60))
            confidences = rng.random(n)
            correct = rng.random(n) < confidences
            assert ece(confidences, correct) == pytest.approx(
                ece_reference(confidences, correct), abs=1e-12
            )


class TestAccuracy:
    def test_basic(self):
        assert accuracy([1, 0, 1, 0], [1, 0, 0, 0]) == 0.75


class TestCrossChecks:
    def test_against_sklearn(self):
        from sklearn.metrics import matthews_corrcoef, roc_auc_score

        rng = np.random.default_rng(5)
        for _ in range(50):
            n = int(rng.integers(6, 40))
            labels = rng.integers(0, 2, size=n)
            if labels.min() == labels.max():
                labels[0] = 1 - labels[0]
            scores = rng.random(n)
            preds = (scores > 0.5).astype(int)
            assert auc_roc(scores, labels) == pytest.approx(
                roc_auc_score(labels, scores), abs=1e-12
            )
            assert mcc(confusion_counts(labels, preds)) == pytest.approx(
                matthews_corrcoef(labels, preds), abs=1e-12
            )
