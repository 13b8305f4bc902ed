"""End-to-end acceptance suite.

Eleven criteria covering oracle equivalence, calibration, the synthetic
stress-detection proxy, chance estimation, determinism, and scheduler
conformance. Each test prints a PASS line with the measured values.
"""

import hashlib
import json
import time
from pathlib import Path

import numpy as np
import pytest

from bodyresponse import cli
from bodyresponse.classify import (
    EVALUATION_THRESHOLD,
    PRODUCTION_THRESHOLD,
    TIERS,
    loso_cv,
    pin_fpr,
    smooth_events,
)
from bodyresponse.confounders import build_mask
from bodyresponse.core import EventSpan
from bodyresponse.evaluate import (
    SubjectEval,
    _events_by_day,
    _shuffle_day,
    adjust_predictions,
    compute_metrics,
    confusion_from_events,
    merge_spans,
    metrics_from_counts,
    permutation_test,
)
from bodyresponse.featurize import aggregate_window  # noqa: F401 (used via cli helpers)
from bodyresponse.featurize import build_catalog, channel_descriptors, make_windows, normalize_per_user
from bodyresponse.preprocess import build_minute_table, hrv_metrics, user_channel_stats
from bodyresponse.synthgen import SynthConfig, gen_free_living_day, generate_dataset, schedule_notifications

from test_featurize import ORACLES, random_series
from test_preprocess import _rel_err, _usable_window, oracle_hrv


def _report(capsys, line):
    with capsys.disabled():
        print(f"\n{line}")


# ---------------------------------------------------------------------------
# 1. HRV oracle suite

def test_criterion_1_hrv_oracle(capsys):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(40, 400))
        rr = rng.uniform(400.0, 1500.0, size=n)
        if rng.random() < 0.3:
            rr = np.round(rr / 8.0) * 8.0  # quantized intervals exercise ties
        m = hrv_metrics(_usable_window(rr))
        want = oracle_hrv(rr)
        for name, w in want.items():
            worst = max(worst, _rel_err(getattr(m, name), w))
    elapsed = time.perf_counter() - t0
    assert worst <= 1e-9
    assert elapsed < 10.0
    _report(capsys, f"PASS criterion 1: 9 HRV metrics x 1000 windows, "
                    f"max rel err {worst:.2e} <= 1e-9, runtime {elapsed:.2f}s < 10s")


# ---------------------------------------------------------------------------
# 2. Feature-catalog oracle suite

def test_criterion_2_catalog_oracle(capsys):
    rng = np.random.default_rng(77)
    descriptors = channel_descriptors("hr_mean")
    assert len({d.function for d in descriptors}) == 12
    worst = 0.0
    for _ in range(1000):
        x = random_series(rng)
        for d in descriptors:
            got = d.evaluate(x)
            params = dict(d.params)
            if d.attribute:
                params["attr"] = d.attribute
            want = ORACLES[d.function](list(x), params)
            worst = max(worst, abs(got - want) / max(abs(want), 1.0))
    assert worst <= 1e-9
    _report(capsys, f"PASS criterion 2: 12 catalog functions x 1000 series, "
                    f"max rel err {worst:.2e} <= 1e-9")


# ---------------------------------------------------------------------------
# 3. Post-processing properties

def test_criterion_3_smoothing_properties(capsys):
    rng = np.random.default_rng(5)
    for _ in range(10_000):
        flags = rng.random(int(rng.integers(1, 80))) < 0.5
        events = smooth_events(flags)
        for e in events:
            assert e.duration >= 3
        for a, b in zip(events, events[1:]):
            assert b.start - a.end >= 5
        out = np.zeros(flags.size, dtype=bool)
        for e in events:
            out[e.start : e.end] = True
        assert smooth_events(out) == events
    _report(capsys, "PASS criterion 3: 10000 random flag vectors, all event "
                    "lengths >= 3, gaps >= 5, idempotent")


# ---------------------------------------------------------------------------
# 4. Confounder calibration

def test_criterion_4_confounder_calibration(capsys):
    cfg = SynthConfig(n_subjects=3, days_per_subject=2, include_session=False,
                      master_seed=4)
    flagged = {"exercise": [], "water": [], "loose_wear": []}
    mask_of = {"exercise": "hr", "water": "eda", "loose_wear": "eda"}
    clean_fp = {"hr": [], "eda": []}
    for subject in generate_dataset(cfg):
        table = build_minute_table(subject.bundle)
        mask = build_mask(subject.bundle, table)
        masks = {"hr": mask.hr_unusable, "eda": mask.eda_unusable}
        episodes = [(s, k) for s, k in subject.truth if k in mask_of]
        for span, kind in episodes:
            idx = np.searchsorted(table.minutes, span.minutes())
            flagged[kind].extend(masks[mask_of[kind]][idx].tolist())
        dirty = np.zeros(table.minutes.size, dtype=bool)
        for span, _ in episodes:
            grown = span.expand(12)
            dirty |= (table.minutes >= grown.start) & (table.minutes < grown.end)
        for which in ("hr", "eda"):
            clean_fp[which].extend(masks[which][~dirty].tolist())
    coverage = {k: float(np.mean(v)) for k, v in flagged.items()}
    fp = {k: float(np.mean(v)) for k, v in clean_fp.items()}
    for kind, cov in coverage.items():
        assert cov >= 0.90, f"{kind} coverage {cov:.3f}"
    for which, rate in fp.items():
        assert rate < 0.05, f"{which} clean false-positive rate {rate:.3f}"
    _report(capsys, "PASS criterion 4: coverage "
                    + ", ".join(f"{k} {v:.2f}" for k, v in coverage.items())
                    + " (all >= 0.90); clean-minute FP "
                    + ", ".join(f"{k} {v:.3f}" for k, v in fp.items())
                    + " (all < 0.05)")


# ---------------------------------------------------------------------------
# 5-7. Synthetic stress-session proxy (shared LOSO run)

@pytest.fixture(scope="module")
def session_loso():
    t0 = time.perf_counter()
    cfg = SynthConfig(n_subjects=10, days_per_subject=0, include_session=True,
                      master_seed=0)
    catalog = build_catalog()
    sids, anchors, ys, rows = [], [], [], []
    for subject in generate_dataset(cfg):
        table = build_minute_table(subject.bundle)
        norm = normalize_per_user(table, user_channel_stats(table))
        stress, nostress = cli._anchor_labels(subject.labels)
        for w in make_windows(norm, cli.ALL_FEATURE_CHANNELS):
            y = cli._label_of(w.anchor, stress, nostress)
            if y is None:
                continue
            sids.append(subject.subject_id)
            anchors.append(w.anchor)
            ys.append(y)
            rows.append(aggregate_window(w, cli.ALL_FEATURE_CHANNELS, catalog))
    X = np.vstack(rows)
    y = np.asarray(ys, dtype=int)
    result = loso_cv(X, y, np.asarray(sids), np.asarray(anchors, dtype=np.int64),
                     catalog)
    elapsed = time.perf_counter() - t0
    return result, y, elapsed


def _tier_ba(result, y, tier, threshold):
    p = result.probs[tier]
    return compute_metrics(p >= threshold, y == 1)


def test_criterion_5_session_proxy(session_loso, capsys):
    result, y, elapsed = session_loso
    m = _tier_ba(result, y, "eda_st_hr_hrv", EVALUATION_THRESHOLD)
    assert m.balanced_accuracy >= 0.70
    assert elapsed < 300.0
    _report(capsys, f"PASS criterion 5: 10-subject LOSO full tier balanced "
                    f"accuracy {m.balanced_accuracy:.3f} >= 0.70 at threshold "
                    f"0.50, runtime {elapsed:.1f}s < 300s")


def test_criterion_6_tier_ordering(session_loso, capsys):
    result, y, _ = session_loso
    bas = [
        _tier_ba(result, y, t, EVALUATION_THRESHOLD).balanced_accuracy
        for t in TIERS
    ]
    assert bas[0] <= bas[1] + 0.02
    assert bas[1] <= bas[2] + 0.02
    _report(capsys, "PASS criterion 6: tier balanced accuracies "
                    + " <= ".join(f"{b:.3f}" for b in bas)
                    + " (0.02 slack)")


def test_criterion_7_threshold_tradeoff(session_loso, capsys):
    result, y, _ = session_loso
    lo = _tier_ba(result, y, "eda_st_hr_hrv", EVALUATION_THRESHOLD)
    hi = _tier_ba(result, y, "eda_st_hr_hrv", PRODUCTION_THRESHOLD)
    assert hi.specificity > lo.specificity
    assert hi.sensitivity < lo.sensitivity
    _report(capsys, f"PASS criterion 7: threshold 0.50 -> 0.72 moves "
                    f"specificity {lo.specificity:.3f} -> {hi.specificity:.3f} "
                    f"(up), sensitivity {lo.sensitivity:.3f} -> "
                    f"{hi.sensitivity:.3f} (down)")


# ---------------------------------------------------------------------------
# 8. Permutation machinery

def _free_living_eval(master_seed):
    """2 subjects x 2 days; predictions equal the injected arousal truth."""
    cfg = SynthConfig(n_subjects=2, days_per_subject=2, include_session=False,
                      master_seed=master_seed)
    per = {}
    for si in range(2):
        labels, spans, days = [], [], []
        for di in range(2):
            _, lab, truth, _, day_span, _ = gen_free_living_day(
                cfg, si, di, with_streams=False
            )
            labels.extend(lab)
            spans.extend(s for s, k in truth if k == "arousal")
            days.append(day_span)
        per[f"S{si:03d}"] = SubjectEval(pred_events=spans, label_events=labels,
                                        day_spans=days)
    return per


def test_criterion_8a_shuffle_preservation(capsys):
    per = _free_living_eval(0)
    sids = sorted(per)
    checked = 0
    for it in range(1000):
        for si, sid in enumerate(sids):
            se = per[sid]
            by_day = _events_by_day(se.pred_events, se.day_spans)
            for di, day in enumerate(se.day_spans):
                if not by_day[di]:
                    continue
                rng = np.random.default_rng(np.random.SeedSequence([0, it, si, di]))
                out = _shuffle_day(by_day[di], day, rng)
                assert len(out) == len(by_day[di])
                assert sorted(e.duration for e in out) == sorted(
                    e.duration for e in by_day[di]
                )
                merged = merge_spans(out)
                assert sum(e.duration for e in merged) == sum(
                    e.duration for e in by_day[di]
                )
                assert all(day.start <= e.start and e.end <= day.end for e in out)
                checked += 1
    _report(capsys, f"PASS criterion 8a: {checked} shuffled subject-days over "
                    f"1000 iterations preserve event counts and durations")


@pytest.fixture(scope="module")
def permutation_runs():
    runs = []
    for seed in range(20):
        per = _free_living_eval(seed)
        tp = fn = fp = tn = 0
        for se in per.values():
            adj = adjust_predictions(se.pred_events, se.label_events)
            a, b, c, d = confusion_from_events(adj, se.label_events)
            tp, fn, fp, tn = tp + a, fn + b, fp + c, tn + d
        actual = metrics_from_counts(tp, fn, fp, tn).balanced_accuracy
        rep = permutation_test(per, n=1000, master_seed=seed, keep_nulls=True)
        runs.append((actual, rep))
    return runs


def test_criterion_8b_actual_beats_null(permutation_runs, capsys):
    wins = 0
    for actual, rep in permutation_runs:
        nulls = rep.nulls["balanced_accuracy"]
        nulls = nulls[np.isfinite(nulls)]
        if actual > nulls.max():
            wins += 1
    assert wins >= 19  # >= 95% of 20 seeded runs
    actuals = [a for a, _ in permutation_runs]
    _report(capsys, f"PASS criterion 8b: actual balanced accuracy (min "
                    f"{min(actuals):.3f}) beats all 1000 null draws in "
                    f"{wins}/20 seeded runs (>= 19 required)")


def test_criterion_8c_null_mean_above_half(permutation_runs, capsys):
    means = [rep.null_mean["balanced_accuracy"] for _, rep in permutation_runs]
    assert all(m > 0.5 for m in means)
    _report(capsys, f"PASS criterion 8c: null-mean balanced accuracy "
                    f"{min(means):.3f}..{max(means):.3f} > 0.5 under the "
                    f"+/-10-minute adjustment in all 20 runs")


# ---------------------------------------------------------------------------
# 9. pin_fpr correctness

def test_criterion_9_pin_fpr_oracle(capsys):
    rng = np.random.default_rng(909)

    def fpr(probs, labels, t):
        return float(np.mean(probs[labels == 0] >= t))

    for _ in range(1000):
        n = int(rng.integers(5, 120))
        probs = np.round(rng.random(n), int(rng.integers(1, 4)))
        labels = (rng.random(n) < rng.uniform(0.2, 0.8)).astype(int)
        if not np.any(labels == 0):
            labels[int(rng.integers(0, n))] = 0
        target = float(rng.choice([0.0, 0.01, 0.05, 0.1, 0.25, 0.5]))
        t = pin_fpr(probs, labels, target)
        assert fpr(probs, labels, t) <= target
        candidates = np.unique(
            np.concatenate([[0.0], probs, np.nextafter(probs, np.inf)])
        )
        below = candidates[candidates < t]
        if below.size:
            assert fpr(probs, labels, float(below[-1])) > target
    _report(capsys, "PASS criterion 9: 1000 random score/label sets, returned "
                    "threshold FPR <= target and next-lower candidate FPR > "
                    "target")


# ---------------------------------------------------------------------------
# 10. Determinism of the CLI chain

def _hash_tree(root: Path) -> dict[str, str]:
    out = {}
    for p in sorted(root.rglob("*")):
        if p.is_file():
            out[str(p.relative_to(root))] = hashlib.sha256(p.read_bytes()).hexdigest()
    return out


def test_criterion_10_cli_determinism(tmp_path, capsys):
    out = tmp_path / "out"
    ini = tmp_path / "run.ini"
    ini.write_text(
        "[paths]\n"
        f"out_dir = {out}\n"
        "[synth]\n"
        "n_subjects = 3\n"
        "master_seed = 11\n"
        "[evaluate]\n"
        "iterations = 50\n"
    )
    commands = ("synth", "preprocess", "featurize", "train", "predict",
                "evaluate", "report")
    for cmd in commands:
        assert cli.run([cmd, "-c", str(ini)]) == 0
    first = _hash_tree(out)
    for cmd in commands:
        assert cli.run([cmd, "-c", str(ini)]) == 0
    second = _hash_tree(out)
    assert first == second
    _report(capsys, f"PASS criterion 10: two CLI chain runs produced "
                    f"byte-identical artifacts ({len(first)} files)")


# ---------------------------------------------------------------------------
# 11. Scheduler conformance

def test_criterion_11_scheduler_conformance(capsys):
    total = 0
    for day in range(100):
        rng = np.random.default_rng(day)
        wake_start = day * 1440 + 8 * 60
        wake_end = day * 1440 + 22 * 60
        n_triggers = int(rng.integers(0, 7))
        triggers = sorted(
            int(t) for t in rng.integers(wake_start, wake_end, n_triggers)
        )
        sent = schedule_notifications(wake_start, wake_end, triggers,
                                      np.random.default_rng(1000 + day))
        assert 5 <= len(sent) <= 7
        assert all(wake_start <= t < wake_end for t in sent)
        assert all(b - a >= 45 for a, b in zip(sent, sent[1:]))
        # a 2.75 h quiet stretch forces a notification within 0-20 min while
        # the daily maximum has not been reached
        last = wake_start
        for t in sent:
            assert t - last <= 165 + 20
            last = t
        if len(sent) < 7:
            assert wake_end - last <= 165 + 20
        total += len(sent)
    _report(capsys, f"PASS criterion 11: 100 synthetic days, {total} "
                    f"notifications, counts in [5, 7], gaps >= 45 min, forced "
                    f"rule within 0-20 min, all inside the waking window")
