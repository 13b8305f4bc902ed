"""Event-based scoring with the +/-10-minute adjustment, the full metric
set, and chance estimation via a constrained permutation test.

Metrics are computed over labeled minutes only; minutes carrying no label
contribute nothing to the confusion counts.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from .core import ConfigError, EventSpan, LabelEvent, NO_STRESS, STRESS
from .classify import MetricError

ADJUST_TOLERANCE_MIN = 10
PERMUTATION_ITERATIONS = 1000
MAX_PLACEMENT_ATTEMPTS = 10000

PERMUTED_METRICS = (
    "accuracy",
    "balanced_accuracy",
    "sensitivity",
    "specificity",
    "ppv",
    "npv",
    "f1",
    "fpr",
)


class PlacementError(RuntimeError):
    """A subject-day is too full to re-place its events without overlap."""


@dataclass
class MetricSet:
    roc_auc: float | None = None
    accuracy: float | None = None
    balanced_accuracy: float | None = None
    sensitivity: float | None = None
    specificity: float | None = None
    ppv: float | None = None
    npv: float | None = None
    f1: float | None = None
    fpr: float | None = None

    def as_dict(self) -> dict[str, float | None]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class PermutationReport:
    n_iterations: int
    master_seed: int
    null_mean: dict[str, float | None]
    p_values: dict[str, float | None]
    nulls: dict[str, np.ndarray] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Interval arithmetic

def merge_spans(spans: list[EventSpan]) -> list[EventSpan]:
    if not spans:
        return []
    out: list[list[int]] = []
    for s in sorted(spans):
        if out and s.start <= out[-1][1]:
            out[-1][1] = max(out[-1][1], s.end)
        else:
            out.append([s.start, s.end])
    return [EventSpan(a, b) for a, b in out]


def total_minutes(spans: list[EventSpan]) -> int:
    return sum(s.duration for s in spans)


def intersect_minutes(a: list[EventSpan], b: list[EventSpan]) -> int:
    """Overlap length between two merged (disjoint) span lists."""
    total = 0
    for sa in a:
        for sb in b:
            total += max(0, min(sa.end, sb.end) - max(sa.start, sb.start))
    return total


def subtract_spans(a: list[EventSpan], b: list[EventSpan]) -> list[EventSpan]:
    """Minutes in a but not in b (both merged)."""
    out = []
    for sa in a:
        cur = sa.start
        for sb in sorted(b):
            if sb.end <= cur or sb.start >= sa.end:
                continue
            if sb.start > cur:
                out.append(EventSpan(cur, sb.start))
            cur = max(cur, sb.end)
        if cur < sa.end:
            out.append(EventSpan(cur, sa.end))
    return out


# ---------------------------------------------------------------------------
# Prediction adjustment

def adjust_predictions(pred_events: list[EventSpan],
                       label_events: list[LabelEvent],
                       tolerance: int = ADJUST_TOLERANCE_MIN) -> list[EventSpan]:
    """Adjusted predicted-stress spans.

    A stress label overlapped by any predicted event within the tolerance is
    marked fully predicted-stress and every predicted event touching its
    expanded span is discarded (a single prediction may credit several
    labels). Unmatched predicted events keep their own minutes. Label minutes
    themselves are never altered.
    """
    preds = merge_spans(pred_events)
    stress = [ev.span for ev in label_events if ev.polarity == STRESS]
    matched: list[EventSpan] = []
    discarded = np.zeros(len(preds), dtype=bool)
    for lab in stress:
        expanded = lab.expand(tolerance)
        hit = False
        for j, p in enumerate(preds):
            if p.overlaps(expanded):
                hit = True
                discarded[j] = True
        if hit:
            matched.append(lab)
    kept = [p for j, p in enumerate(preds) if not discarded[j]]
    return merge_spans(matched + kept)


# ---------------------------------------------------------------------------
# Metrics

def _label_universe(label_events: list[LabelEvent]):
    stress = merge_spans([ev.span for ev in label_events if ev.polarity == STRESS])
    nostress = merge_spans([ev.span for ev in label_events if ev.polarity == NO_STRESS])
    # stress takes precedence where labels disagree on a minute
    nostress = subtract_spans(nostress, stress)
    return stress, nostress


def confusion_from_events(pred_spans: list[EventSpan],
                          label_events: list[LabelEvent]):
    """(tp, fn, fp, tn) minute counts over the labeled universe."""
    stress, nostress = _label_universe(label_events)
    pred = merge_spans(pred_spans)
    tp = intersect_minutes(pred, stress)
    fp = intersect_minutes(pred, nostress)
    fn = total_minutes(stress) - tp
    tn = total_minutes(nostress) - fp
    return tp, fn, fp, tn


def _ratio(num: float, den: float) -> float | None:
    return None if den == 0 else num / den


def metrics_from_counts(tp: int, fn: int, fp: int, tn: int,
                        roc_auc: float | None = None) -> MetricSet:
    total = tp + fn + fp + tn
    if total == 0:
        raise MetricError("zero labeled minutes")
    sens = _ratio(tp, tp + fn)
    spec = _ratio(tn, tn + fp)
    ppv = _ratio(tp, tp + fp)
    npv = _ratio(tn, tn + fn)
    bal = None if sens is None or spec is None else (sens + spec) / 2.0
    f1 = (
        None
        if ppv is None or sens is None or (ppv + sens) == 0
        else 2.0 * ppv * sens / (ppv + sens)
    )
    return MetricSet(
        roc_auc=roc_auc,
        accuracy=(tp + tn) / total,
        balanced_accuracy=bal,
        sensitivity=sens,
        specificity=spec,
        ppv=ppv,
        npv=npv,
        f1=f1,
        fpr=None if spec is None else 1.0 - spec,
    )


def compute_metrics(pred: np.ndarray, truth: np.ndarray,
                    probs: np.ndarray | None = None) -> MetricSet:
    """Metrics from aligned per-minute boolean vectors (labeled minutes only)."""
    pred = np.asarray(pred, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    if pred.size != truth.size:
        raise ConfigError("prediction/label length mismatch")
    if pred.size == 0:
        raise MetricError("zero labeled minutes")
    tp = int(np.sum(pred & truth))
    fn = int(np.sum(~pred & truth))
    fp = int(np.sum(pred & ~truth))
    tn = int(np.sum(~pred & ~truth))
    auc = None
    if probs is not None and np.any(truth) and not np.all(truth):
        auc = roc_auc(np.asarray(probs, dtype=float), truth)
    return metrics_from_counts(tp, fn, fp, tn, roc_auc=auc)


def roc_auc(probs: np.ndarray, y: np.ndarray) -> float:
    """Rank-based AUC (ties count half), equal to the pairwise-comparison
    probability P(score_pos > score_neg) + 0.5 * P(equal)."""
    y = np.asarray(y, dtype=bool)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC needs both classes")
    from scipy.stats import rankdata

    ranks = rankdata(probs)
    return float((ranks[y].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


# ---------------------------------------------------------------------------
# Permutation test

@dataclass
class SubjectEval:
    """One subject's events for permutation scoring."""

    pred_events: list[EventSpan]
    label_events: list[LabelEvent]
    day_spans: list[EventSpan]


def _events_by_day(pred_events: list[EventSpan], day_spans: list[EventSpan]):
    by_day: dict[int, list[EventSpan]] = {i: [] for i in range(len(day_spans))}
    for ev in pred_events:
        placed = False
        for i, day in enumerate(day_spans):
            if day.start <= ev.start and ev.end <= day.end:
                by_day[i].append(ev)
                placed = True
                break
        if not placed:
            raise ConfigError(f"predicted event {ev} outside every day span")
    return by_day


def _shuffle_day(events: list[EventSpan], day: EventSpan,
                 rng: np.random.Generator) -> list[EventSpan]:
    """Re-place events uniformly within the day, preserving durations,
    rejecting overlaps."""
    placed: list[EventSpan] = []
    for ev in sorted(events, key=lambda e: (-e.duration, e.start)):
        dur = ev.duration
        hi = day.end - dur
        if hi < day.start:
            raise PlacementError(f"event of {dur} min cannot fit day {day}")
        for _ in range(MAX_PLACEMENT_ATTEMPTS):
            start = int(rng.integers(day.start, hi + 1))
            cand = EventSpan(start, start + dur)
            if not any(cand.overlaps(p) for p in placed):
                placed.append(cand)
                break
        else:
            raise PlacementError(f"could not place {dur}-minute event in day {day}")
    return placed


def _pooled_metrics(per_subject: dict[str, SubjectEval],
                    preds: dict[str, list[EventSpan]],
                    tolerance: int) -> MetricSet:
    tp = fn = fp = tn = 0
    for sid, se in per_subject.items():
        adj = adjust_predictions(preds[sid], se.label_events, tolerance)
        a, b, c, d = confusion_from_events(adj, se.label_events)
        tp, fn, fp, tn = tp + a, fn + b, fp + c, tn + d
    return metrics_from_counts(tp, fn, fp, tn)


def permutation_test(per_subject: dict[str, SubjectEval],
                     n: int = PERMUTATION_ITERATIONS,
                     master_seed: int = 0,
                     tolerance: int = ADJUST_TOLERANCE_MIN,
                     keep_nulls: bool = False) -> PermutationReport:
    """Chance-level estimation by re-placing predicted events uniformly
    within each subject-day (durations preserved, no overlaps).

    p = count(null >= actual) / n, floored at 1/n. With no predicted events
    the null is degenerate and every p-value is 1.0.
    """
    sids = sorted(per_subject)
    actual = _pooled_metrics(per_subject, {s: per_subject[s].pred_events for s in sids},
                             tolerance)
    any_events = any(per_subject[s].pred_events for s in sids)
    by_day = {s: _events_by_day(per_subject[s].pred_events, per_subject[s].day_spans)
              for s in sids}

    nulls = {m: np.full(n, np.nan) for m in PERMUTED_METRICS}
    for it in range(n):
        shuffled: dict[str, list[EventSpan]] = {}
        for si, sid in enumerate(sids):
            se = per_subject[sid]
            evs: list[EventSpan] = []
            for di, day in enumerate(se.day_spans):
                if not by_day[sid][di]:
                    continue
                rng = np.random.default_rng(
                    np.random.SeedSequence([master_seed, it, si, di])
                )
                evs.extend(_shuffle_day(by_day[sid][di], day, rng))
            shuffled[sid] = evs
        ms = _pooled_metrics(per_subject, shuffled, tolerance)
        for m in PERMUTED_METRICS:
            v = getattr(ms, m)
            if v is not None:
                nulls[m][it] = v

    null_mean: dict[str, float | None] = {}
    p_values: dict[str, float | None] = {}
    for m in PERMUTED_METRICS:
        arr = nulls[m]
        defined = arr[np.isfinite(arr)]
        null_mean[m] = float(defined.mean()) if defined.size else None
        actual_v = getattr(actual, m)
        if not any_events:
            p_values[m] = 1.0
        elif actual_v is None or defined.size == 0:
            p_values[m] = None
        else:
            count = int(np.sum(defined >= actual_v))
            p_values[m] = max(count, 1) / n
    return PermutationReport(
        n_iterations=n,
        master_seed=master_seed,
        null_mean=null_mean,
        p_values=p_values,
        nulls=nulls if keep_nulls else {},
    )
