"""Confounder filters: exercise, water exposure, and loose device wear.

Each filter flags minutes where a confounding behavior corrupts HR and/or
EDA; apply_masks lowers the minute-table validity flags accordingly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import AlignmentError, EventSpan, MinuteTable, SignalBundle

# Exercise detection: logistic model over trailing 10-minute means of the six
# minutely accelerometer aggregates. Weights are calibrated against the
# synthetic activity model (rest vs exercise aggregate distributions); the
# published interface is the per-minute probability plus the two thresholds.
EXERCISE_WINDOW_MIN = 10
EXERCISE_HR_THRESHOLD = 0.80
EXERCISE_EDA_THRESHOLD = 0.90
EXERCISE_WEIGHTS = np.array([40.0, 6.0, 2.0, 0.5, 2.0, 3.0])
EXERCISE_CENTERS = np.array([1.12, 0.15, 0.5, 1.0, 0.7, 0.2])

# Water exposure: within-minute barometric pressure std above P_THRESH
# combined with a rising tonic EDA slope above S_THRESH.
WATER_PRESSURE_STD_HPA = 0.3
WATER_EDA_SLOPE_US_MIN = 0.1
WATER_MIN_PRESSURE_SAMPLES = 3

# Loose wear: open-circuit floor and post-contact stabilization window.
OPEN_CIRCUIT_FLOOR_US = 0.02
LOOSE_WEAR_FRACTION = 0.5
LOOSE_WEAR_POST_MINUTES = 5


@dataclass
class ConfounderMask:
    minutes: np.ndarray
    hr_unusable: np.ndarray
    eda_unusable: np.ndarray
    reasons: list[set[str]] = field(default_factory=list)

    def __post_init__(self):
        if not self.reasons:
            self.reasons = [set() for _ in range(self.minutes.size)]


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def exercise_probability(accel_minutes: np.ndarray, accel_vals: np.ndarray,
                         minute: int) -> float | None:
    """Probability of exercise from the trailing 10-minute accel window."""
    sel = (accel_minutes > minute - EXERCISE_WINDOW_MIN) & (accel_minutes <= minute)
    if not np.any(sel):
        return None
    feats = accel_vals[sel].mean(axis=0)
    score = float(EXERCISE_WEIGHTS @ (feats - EXERCISE_CENTERS))
    return float(_sigmoid(score))


def exercise_filter(accel_minutes: np.ndarray, accel_vals: np.ndarray,
                    eda_magnitude: np.ndarray, minutes: np.ndarray,
                    minute: int):
    """(hr_unusable, eda_unusable, p_exercise) for one minute.

    HR is unusable at p >= 0.80. EDA is unusable at p >= 0.90 only when the
    minute's EDA magnitude significantly exceeds (mean + 2 std of) the prior
    10 minutes.
    """
    p = exercise_probability(accel_minutes, accel_vals, minute)
    if p is None:
        return False, False, None
    hr_unusable = p >= EXERCISE_HR_THRESHOLD
    eda_unusable = False
    if p >= EXERCISE_EDA_THRESHOLD:
        i = int(np.searchsorted(minutes, minute))
        if i < minutes.size and minutes[i] == minute and np.isfinite(eda_magnitude[i]):
            prior = eda_magnitude[max(0, i - EXERCISE_WINDOW_MIN) : i]
            prior = prior[np.isfinite(prior)]
            if prior.size:
                eda_unusable = bool(
                    eda_magnitude[i] > prior.mean() + 2.0 * prior.std()
                )
    return bool(hr_unusable), bool(eda_unusable), p


def water_filter(press_t_s: np.ndarray, press_hpa: np.ndarray,
                 eda_slope: float, minute: int,
                 p_thresh: float = WATER_PRESSURE_STD_HPA,
                 s_thresh: float = WATER_EDA_SLOPE_US_MIN) -> bool:
    """Flag a minute as water-confounded for EDA.

    Requires both high within-minute pressure variation and a rising tonic
    EDA slope; fewer than 3 pressure samples never flags.
    """
    lo, hi = np.searchsorted(press_t_s, [minute * 60.0, (minute + 1) * 60.0])
    if hi - lo < WATER_MIN_PRESSURE_SAMPLES:
        return False
    if not np.isfinite(eda_slope):
        return False
    return bool(press_hpa[lo:hi].std() > p_thresh and eda_slope > s_thresh)


def loose_wear_filter(eda_t_ms: np.ndarray, eda_us: np.ndarray, minute: int,
                      floor_us: float = OPEN_CIRCUIT_FLOOR_US) -> set[int]:
    """Minutes excluded for EDA because of open-circuit contact loss.

    If half or more of the minute's raw samples sit at the open-circuit
    floor, the minute and the 5 following minutes are excluded.
    """
    lo, hi = np.searchsorted(eda_t_ms, [minute * 60_000.0, (minute + 1) * 60_000.0])
    if hi <= lo:
        return set()
    frac = float(np.mean(eda_us[lo:hi] < floor_us))
    if frac >= LOOSE_WEAR_FRACTION:
        return set(range(minute, minute + LOOSE_WEAR_POST_MINUTES + 1))
    return set()


# ---------------------------------------------------------------------------
# Whole-table mask construction (vectorized over minutes)

def build_mask(bundle: SignalBundle, table: MinuteTable) -> ConfounderMask:
    minutes = table.minutes
    n = minutes.size
    hr_unusable = np.zeros(n, dtype=bool)
    eda_unusable = np.zeros(n, dtype=bool)
    reasons: list[set[str]] = [set() for _ in range(n)]

    # --- exercise: trailing means via cumulative sums over the minute axis
    if bundle.accel_minutes.size:
        amap = np.full((n, 6), np.nan)
        idx = bundle.accel_minutes - minutes[0]
        ok = (idx >= 0) & (idx < n)
        amap[idx[ok]] = bundle.accel_vals[ok]
        have = np.isfinite(amap[:, 0])
        csum = np.cumsum(np.where(have[:, None], amap, 0.0), axis=0)
        ccnt = np.cumsum(have.astype(np.int64))
        w = EXERCISE_WINDOW_MIN
        tail_sum = csum - np.vstack([np.zeros((w, 6)), csum[:-w]])[:n]
        tail_cnt = ccnt - np.concatenate([np.zeros(w, dtype=np.int64), ccnt[:-w]])[:n]
        with np.errstate(invalid="ignore", divide="ignore"):
            feats = tail_sum / np.maximum(tail_cnt, 1)[:, None]
        p = _sigmoid(feats @ EXERCISE_WEIGHTS - EXERCISE_WEIGHTS @ EXERCISE_CENTERS)
        p[tail_cnt == 0] = np.nan
        ex_hr = np.nan_to_num(p) >= EXERCISE_HR_THRESHOLD
        hr_unusable |= ex_hr

        eda_mag = table.channels["eda_magnitude"]
        ex_eda = np.zeros(n, dtype=bool)
        candidates = np.flatnonzero(
            (np.nan_to_num(p) >= EXERCISE_EDA_THRESHOLD) & np.isfinite(eda_mag)
        )
        for i in candidates:
            prior = eda_mag[max(0, i - EXERCISE_WINDOW_MIN) : i]
            prior = prior[np.isfinite(prior)]
            if prior.size and eda_mag[i] > prior.mean() + 2.0 * prior.std():
                ex_eda[i] = True
        eda_unusable |= ex_eda
        for i in np.flatnonzero(ex_hr | ex_eda):
            reasons[i].add("exercise")

    # --- water: within-minute pressure std
    if bundle.press_t_s.size:
        midx = (bundle.press_t_s // 60).astype(np.int64) - minutes[0]
        ok = (midx >= 0) & (midx < n)
        midx, pv = midx[ok], bundle.press_hpa[ok]
        cnt = np.bincount(midx, minlength=n)
        s1 = np.bincount(midx, weights=pv, minlength=n)
        s2 = np.bincount(midx, weights=pv * pv, minlength=n)
        with np.errstate(invalid="ignore", divide="ignore"):
            var = s2 / np.maximum(cnt, 1) - (s1 / np.maximum(cnt, 1)) ** 2
        std = np.sqrt(np.maximum(var, 0.0))
        slope = table.channels["eda_slope"]
        water = (
            (cnt >= WATER_MIN_PRESSURE_SAMPLES)
            & (std > WATER_PRESSURE_STD_HPA)
            & np.isfinite(slope)
            & (slope > WATER_EDA_SLOPE_US_MIN)
        )
        eda_unusable |= water
        for i in np.flatnonzero(water):
            reasons[i].add("water")

    # --- loose wear: open-circuit fraction per minute, dilated 5 min forward
    if bundle.eda_t_ms.size:
        midx = (bundle.eda_t_ms // 60_000).astype(np.int64) - minutes[0]
        ok = (midx >= 0) & (midx < n)
        midx = midx[ok]
        low = bundle.eda_us[ok] < OPEN_CIRCUIT_FLOOR_US
        cnt = np.bincount(midx, minlength=n)
        nlow = np.bincount(midx, weights=low.astype(float), minlength=n)
        trigger = (cnt > 0) & (nlow / np.maximum(cnt, 1) >= LOOSE_WEAR_FRACTION)
        loose = np.zeros(n, dtype=bool)
        for k in range(LOOSE_WEAR_POST_MINUTES + 1):
            loose[k:] |= trigger[: n - k]
        eda_unusable |= loose
        for i in np.flatnonzero(loose):
            reasons[i].add("loose_wear")

    return ConfounderMask(minutes=minutes.copy(), hr_unusable=hr_unusable,
                          eda_unusable=eda_unusable, reasons=reasons)


def apply_masks(table: MinuteTable, mask: ConfounderMask,
                sleep_spans: list[EventSpan] | None = None) -> MinuteTable:
    """Lower validity flags per the mask and sleep spans; values on
    invalidated minutes are removed. Returns a new table."""
    if mask.minutes.size != table.minutes.size or not np.array_equal(
        mask.minutes, table.minutes
    ):
        raise AlignmentError("mask and table minute axes differ")
    out = table.copy()
    out.validity["HR"] &= ~mask.hr_unusable
    out.validity["HRV"] &= ~mask.hr_unusable
    out.validity["EDA"] &= ~mask.eda_unusable
    out.validity["ST"] &= ~mask.eda_unusable
    if sleep_spans:
        asleep = np.zeros(table.minutes.size, dtype=bool)
        for span in sleep_spans:
            asleep |= (table.minutes >= span.start) & (table.minutes < span.end)
        out.validity["EDA"] &= ~asleep
        out.validity["ST"] &= ~asleep
    out.enforce_validity()
    return out
