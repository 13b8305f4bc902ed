"""Interval arithmetic, tolerance-adjusted event scoring, metric identities,
rank AUC, and the constrained permutation test."""

import numpy as np
import pytest

from bodyresponse.classify import MetricError
from bodyresponse.core import EventSpan, LabelEvent
from bodyresponse.evaluate import (
    PERMUTED_METRICS,
    PlacementError,
    SubjectEval,
    adjust_predictions,
    compute_metrics,
    confusion_from_events,
    intersect_minutes,
    merge_spans,
    metrics_from_counts,
    permutation_test,
    roc_auc,
    subtract_spans,
    total_minutes,
)


def _stress(start, end):
    return LabelEvent(EventSpan(start, end), "stress", "synthetic_truth")


def _calm(start, end):
    return LabelEvent(EventSpan(start, end), "no_stress", "synthetic_truth")


class TestIntervals:
    def test_merge(self):
        spans = [EventSpan(5, 8), EventSpan(0, 3), EventSpan(2, 6), EventSpan(10, 12)]
        assert merge_spans(spans) == [EventSpan(0, 8), EventSpan(10, 12)]

    def test_merge_adjacent(self):
        assert merge_spans([EventSpan(0, 3), EventSpan(3, 5)]) == [EventSpan(0, 5)]

    def test_total_and_intersect(self):
        a = merge_spans([EventSpan(0, 10)])
        b = merge_spans([EventSpan(5, 7), EventSpan(9, 20)])
        assert total_minutes(a) == 10
        assert intersect_minutes(a, b) == 3

    def test_subtract(self):
        a = [EventSpan(0, 10)]
        b = [EventSpan(3, 5), EventSpan(8, 20)]
        assert subtract_spans(a, b) == [EventSpan(0, 3), EventSpan(5, 8)]

    def test_subtract_all(self):
        assert subtract_spans([EventSpan(2, 4)], [EventSpan(0, 10)]) == []

    def test_random_set_identity(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            mk = lambda: merge_spans(
                [
                    EventSpan(int(s), int(s) + int(d))
                    for s, d in zip(rng.integers(0, 100, 5), rng.integers(1, 20, 5))
                ]
            )
            a, b = mk(), mk()
            # |a| = |a ∩ b| + |a \ b|
            assert total_minutes(a) == intersect_minutes(a, b) + total_minutes(
                subtract_spans(a, b)
            )


class TestAdjustPredictions:
    def test_near_miss_credits_full_label(self):
        # prediction ends 8 minutes before the label starts: within tolerance
        adj = adjust_predictions([EventSpan(10, 15)], [_stress(23, 40)])
        assert adj == [EventSpan(23, 40)]

    def test_far_miss_keeps_prediction(self):
        adj = adjust_predictions([EventSpan(10, 15)], [_stress(26, 40)])
        assert adj == [EventSpan(10, 15)]

    def test_one_prediction_credits_two_labels_once(self):
        # a long prediction touching both labels is discarded a single time
        adj = adjust_predictions(
            [EventSpan(10, 60)], [_stress(15, 20), _stress(40, 50)]
        )
        assert adj == [EventSpan(15, 20), EventSpan(40, 50)]

    def test_unmatched_extra_prediction_survives(self):
        adj = adjust_predictions(
            [EventSpan(0, 5), EventSpan(100, 110)], [_stress(2, 6)]
        )
        assert adj == [EventSpan(2, 6), EventSpan(100, 110)]

    def test_no_stress_labels_do_not_attract(self):
        adj = adjust_predictions([EventSpan(10, 15)], [_calm(16, 30)])
        assert adj == [EventSpan(10, 15)]

    def test_label_minutes_never_shrink(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            preds = [
                EventSpan(int(s), int(s + d))
                for s, d in zip(rng.integers(0, 200, 4), rng.integers(3, 15, 4))
            ]
            labels = [
                _stress(int(s), int(s + d))
                for s, d in zip(rng.integers(0, 200, 3), rng.integers(3, 15, 3))
            ]
            adj = adjust_predictions(preds, labels)
            for lab in labels:
                hit = any(p.overlaps(lab.span.expand(10)) for p in merge_spans(preds))
                if hit:
                    assert intersect_minutes(adj, [lab.span]) == lab.span.duration


class TestMetrics:
    def test_confusion_counts(self):
        labels = [_stress(0, 10), _calm(10, 30)]
        tp, fn, fp, tn = confusion_from_events([EventSpan(5, 15)], labels)
        assert (tp, fn, fp, tn) == (5, 5, 5, 15)

    def test_unlabeled_minutes_ignored(self):
        labels = [_stress(0, 10)]
        tp, fn, fp, tn = confusion_from_events([EventSpan(5, 100)], labels)
        assert (tp, fn, fp, tn) == (5, 5, 0, 0)

    def test_stress_precedence(self):
        labels = [_stress(0, 10), _calm(5, 20)]
        tp, fn, fp, tn = confusion_from_events([EventSpan(0, 10)], labels)
        assert (tp, fn, fp, tn) == (10, 0, 0, 10)

    def test_identities(self):
        m = metrics_from_counts(30, 10, 5, 55)
        assert m.balanced_accuracy == pytest.approx((m.sensitivity + m.specificity) / 2)
        assert m.fpr == pytest.approx(1.0 - m.specificity)
        assert m.accuracy == pytest.approx(85 / 100)
        assert m.f1 == pytest.approx(2 * m.ppv * m.sensitivity / (m.ppv + m.sensitivity))

    def test_undefined_ratios_are_none(self):
        m = metrics_from_counts(0, 0, 3, 7)  # no positives labeled
        assert m.sensitivity is None
        assert m.balanced_accuracy is None
        assert m.f1 is None
        assert m.specificity == pytest.approx(0.7)

    def test_no_predictions_ppv_none(self):
        m = metrics_from_counts(0, 10, 0, 20)
        assert m.ppv is None and m.f1 is None

    def test_zero_universe(self):
        with pytest.raises(MetricError):
            metrics_from_counts(0, 0, 0, 0)

    def test_compute_metrics_vectors(self):
        pred = np.array([1, 1, 0, 0, 1, 0], dtype=bool)
        truth = np.array([1, 0, 1, 0, 1, 0], dtype=bool)
        m = compute_metrics(pred, truth)
        assert m.sensitivity == pytest.approx(2 / 3)
        assert m.specificity == pytest.approx(2 / 3)


class TestRocAuc:
    def test_perfect_and_inverted(self):
        y = np.array([0, 0, 1, 1])
        assert roc_auc(np.array([0.1, 0.2, 0.8, 0.9]), y) == 1.0
        assert roc_auc(np.array([0.9, 0.8, 0.2, 0.1]), y) == 0.0

    def test_all_ties(self):
        assert roc_auc(np.full(6, 0.5), np.array([0, 1, 0, 1, 0, 1])) == 0.5

    def test_brute_force_pairwise(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            n = int(rng.integers(5, 60))
            probs = np.round(rng.random(n), 1)
            y = rng.random(n) < 0.5
            if y.all() or not y.any():
                y[0] = ~y[0]
            pos, neg = probs[y], probs[~y]
            wins = sum((p > q) + 0.5 * (p == q) for p in pos for q in neg)
            assert roc_auc(probs, y) == pytest.approx(
                wins / (pos.size * neg.size), abs=1e-9
            )

    def test_single_class(self):
        with pytest.raises(MetricError):
            roc_auc(np.array([0.1, 0.2]), np.array([1, 1]))


def _subject(preds, labels, days):
    return SubjectEval(pred_events=preds, label_events=labels, day_spans=days)


class TestPermutationTest:
    def test_count_and_duration_preserved(self):
        day = EventSpan(0, 800)
        preds = [EventSpan(100, 112), EventSpan(300, 308), EventSpan(600, 620)]
        per = {"S000": _subject(preds, [_stress(100, 112), _calm(0, 100)], [day])}
        # inspect the shuffle directly
        from bodyresponse.evaluate import _shuffle_day

        for seed in range(20):
            rng = np.random.default_rng(seed)
            out = _shuffle_day(preds, day, rng)
            assert len(out) == len(preds)
            assert sorted(e.duration for e in out) == sorted(e.duration for e in preds)
            merged = merge_spans(out)
            assert total_minutes(merged) == sum(e.duration for e in preds)
            assert all(day.start <= e.start and e.end <= day.end for e in out)

    def test_p_value_range_and_determinism(self):
        day = EventSpan(0, 400)
        per = {
            "S000": _subject(
                [EventSpan(50, 60)], [_stress(50, 60), _calm(100, 300)], [day]
            ),
            "S001": _subject(
                [EventSpan(200, 210)], [_stress(200, 210), _calm(0, 150)], [day]
            ),
        }
        r1 = permutation_test(per, n=50, master_seed=3)
        r2 = permutation_test(per, n=50, master_seed=3)
        assert r1.p_values == r2.p_values
        assert r1.null_mean == r2.null_mean
        for m in PERMUTED_METRICS:
            p = r1.p_values[m]
            if p is not None:
                assert 1 / 50 <= p <= 1.0
        # predictions sit exactly on the labels: beating chance is easy
        assert r1.p_values["balanced_accuracy"] == pytest.approx(1 / 50)

    def test_different_seed_changes_nulls(self):
        day = EventSpan(0, 400)
        per = {"S000": _subject([EventSpan(50, 60)],
                                [_stress(50, 60), _calm(100, 300)], [day])}
        a = permutation_test(per, n=30, master_seed=0, keep_nulls=True)
        b = permutation_test(per, n=30, master_seed=1, keep_nulls=True)
        assert not np.array_equal(a.nulls["accuracy"], b.nulls["accuracy"])

    def test_degenerate_no_events(self):
        per = {"S000": _subject([], [_stress(0, 5), _calm(10, 40)],
                                [EventSpan(0, 100)])}
        rep = permutation_test(per, n=25, master_seed=0)
        assert all(rep.p_values[m] == 1.0 for m in PERMUTED_METRICS)

    def test_overfull_day_raises(self):
        day = EventSpan(0, 10)
        per = {"S000": _subject([EventSpan(0, 6), EventSpan(6, 10)],
                                [_stress(0, 6)], [day])}
        with pytest.raises(PlacementError):
            permutation_test(per, n=5, master_seed=0)

    def test_event_outside_day_rejected(self):
        from bodyresponse.core import ConfigError

        per = {"S000": _subject([EventSpan(990, 1010)], [_stress(0, 5)],
                                [EventSpan(0, 1000)])}
        with pytest.raises(ConfigError):
            permutation_test(per, n=2, master_seed=0)
