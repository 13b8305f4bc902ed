"""Derivation of the 14 minutely channels from raw streams.

Channels: mean HR, nine time-domain HRV metrics over a trailing 5-minute
R-R window, tonic EDA slope/magnitude, and skin-temperature slope/magnitude.
Every minute carries a validity flag per signal group; channel values exist
only on valid minutes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.signal import lfilter

from .core import (
    CHANNELS,
    GROUP_NAMES,
    HRV_CHANNELS,
    MinuteTable,
    MissingData,
    SignalBundle,
)

# R-R artifact rejection: rolling median over this many intervals, reject
# intervals deviating more than the fraction below from the local median.
RR_MEDIAN_WINDOW = 11
RR_REJECT_FRACTION = 0.25

RR_WINDOW_MINUTES = 5
RR_MIN_VALID_FRACTION = 0.20
RR_MAX_GAP_S = 10.0

# Histogram bins for the two Shannon entropies (natural log).
RR_ENTROPY_BINS = np.arange(200.0, 2000.0 + 8.0, 8.0)
RR_DIFF_ENTROPY_BINS = np.arange(-500.0, 500.0 + 8.0, 8.0)

HR_MAX_BRIDGE_S = 60.0
HR_MIN_COVERED_SECONDS = 30  # half of a minute

EDA_RAW_HZ = 200
EDA_BOXCAR = 8  # 200 Hz -> 25 Hz
EDA_HZ = EDA_RAW_HZ // EDA_BOXCAR
EDA_MEDIAN_SAMPLES = 5 * 60 * EDA_HZ  # 5-minute rolling median
EDA_LOWPASS_TAU_S = 60.0
EDA_MIN_MINUTE_SAMPLES = 60 * EDA_HZ // 2  # 50% of a minute


@dataclass
class RrWindow:
    """Cleaned R-R intervals within one trailing 5-minute window."""

    minute: int
    t_ms: np.ndarray
    rr_ms: np.ndarray
    valid_fraction: float
    max_gap_s: float

    @property
    def usable(self) -> bool:
        return (
            self.valid_fraction >= RR_MIN_VALID_FRACTION
            and self.max_gap_s <= RR_MAX_GAP_S
        )


@dataclass
class HrvMetrics:
    rr_mean_ms: float
    rr_median_ms: float
    rr_p20_ms: float
    rr_p80_ms: float
    rr_entropy_nats: float
    rr_diff_entropy_nats: float
    sdnn_ms: float
    rmssd_ms: float
    pnn30: float

    def as_dict(self) -> dict[str, float]:
        return {
            "rr_mean_ms": self.rr_mean_ms,
            "rr_median_ms": self.rr_median_ms,
            "rr_p20_ms": self.rr_p20_ms,
            "rr_p80_ms": self.rr_p80_ms,
            "rr_entropy_nats": self.rr_entropy_nats,
            "rr_diff_entropy_nats": self.rr_diff_entropy_nats,
            "sdnn_ms": self.sdnn_ms,
            "rmssd_ms": self.rmssd_ms,
            "pnn30": self.pnn30,
        }


# ---------------------------------------------------------------------------
# Heart rate

def hr_minutely(hr_t_s: np.ndarray, hr_bpm: np.ndarray, minutes: np.ndarray):
    """Minutely mean HR from gappy 1 Hz samples.

    Gaps up to 60 s between consecutive samples are bridged by linear
    interpolation on a secondly grid; longer gaps leave seconds uncovered.
    A minute is valid when at least half of its seconds are covered, and its
    value is the mean over the covered seconds.
    """
    n = minutes.size
    mean = np.full(n, np.nan)
    valid = np.zeros(n, dtype=bool)
    if hr_t_s.size == 0 or n == 0:
        return mean, valid

    t0, t1 = int(np.floor(minutes[0] * 60)), int(np.ceil(minutes[-1] * 60 + 60))
    sec = np.arange(t0, t1, dtype=float)
    interp = np.interp(sec, hr_t_s, hr_bpm)

    covered = np.zeros(sec.size, dtype=bool)
    # seconds lying on or between bridgeable sample pairs (difference-array
    # trick to mark all [a, b] ranges at once)
    gaps = np.diff(hr_t_s)
    bridge = gaps <= HR_MAX_BRIDGE_S
    if np.any(bridge):
        lo = np.clip(np.ceil(hr_t_s[:-1][bridge]).astype(int) - t0, 0, sec.size)
        hi = np.clip(np.floor(hr_t_s[1:][bridge]).astype(int) - t0 + 1, 0, sec.size)
        delta = np.zeros(sec.size + 1, dtype=np.int64)
        np.add.at(delta, lo, 1)
        np.add.at(delta, hi, -1)
        covered = np.cumsum(delta[:-1]) > 0
    # isolated samples cover their own second
    own = np.round(hr_t_s).astype(int) - t0
    own = own[(own >= 0) & (own < sec.size)]
    covered[own] = True

    midx = (sec.astype(np.int64) // 60) - minutes[0]
    in_range = (midx >= 0) & (midx < n) & covered
    counts = np.bincount(midx[in_range], minlength=n)
    sums = np.bincount(midx[in_range], weights=interp[in_range], minlength=n)
    valid = counts >= HR_MIN_COVERED_SECONDS
    mean[valid] = sums[valid] / counts[valid]
    return mean, valid


# ---------------------------------------------------------------------------
# R-R cleaning and HRV metrics

def median_filter_accept(rr_ms: np.ndarray) -> np.ndarray:
    """Accept mask for R-R intervals: rolling-median outlier rejection."""
    n = rr_ms.size
    if n == 0:
        return np.zeros(0, dtype=bool)
    half = RR_MEDIAN_WINDOW // 2
    med = np.empty(n)
    if n >= RR_MEDIAN_WINDOW:
        windows = np.lib.stride_tricks.sliding_window_view(rr_ms, RR_MEDIAN_WINDOW)
        med[half : n - half] = np.median(windows, axis=1)
        edge = range(half)
    else:
        edge = range(n)
    for i in list(edge) + [n - 1 - i for i in edge]:
        lo, hi = max(0, i - half), min(n, i + half + 1)
        med[i] = np.median(rr_ms[lo:hi])
    return np.abs(rr_ms - med) <= RR_REJECT_FRACTION * med


def rr_clean(rr_t_ms: np.ndarray, rr_ms: np.ndarray, minute: int) -> RrWindow:
    """Clean the trailing 5-minute R-R window ending with `minute`.

    valid_fraction is the accepted-interval coverage of the 300 s window;
    max_gap_s is the largest stretch (including window edges) without an
    accepted beat.
    """
    w0 = (minute - RR_WINDOW_MINUTES + 1) * 60_000
    w1 = (minute + 1) * 60_000
    lo, hi = np.searchsorted(rr_t_ms, [w0, w1])
    t_w, rr_w = rr_t_ms[lo:hi], rr_ms[lo:hi]
    accept = median_filter_accept(rr_w)
    t_a, rr_a = t_w[accept], rr_w[accept]
    valid_fraction = float(rr_a.sum() / (RR_WINDOW_MINUTES * 60_000))
    edges = np.concatenate([[w0], t_a, [w1]])
    max_gap_s = float(np.max(np.diff(edges)) / 1000.0) if edges.size > 1 else 300.0
    return RrWindow(minute=minute, t_ms=t_a, rr_ms=rr_a,
                    valid_fraction=valid_fraction, max_gap_s=max_gap_s)


def _hist_entropy(values: np.ndarray, bins: np.ndarray) -> float:
    clipped = np.clip(values, bins[0], bins[-1])
    counts, _ = np.histogram(clipped, bins=bins)
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts[counts > 0] / total
    return float(-(p * np.log(p)).sum())


def hrv_metrics(window: RrWindow) -> HrvMetrics:
    """Nine time-domain HRV metrics on a usable cleaned window.

    SDNN is the population standard deviation; percentiles use linear
    interpolation between closest ranks; PNN30 counts successive absolute
    differences strictly greater than 30 ms.
    """
    if not window.usable:
        raise MissingData(f"minute {window.minute}: R-R window unusable")
    rr = window.rr_ms
    if rr.size < 2:
        raise MissingData(f"minute {window.minute}: fewer than 2 intervals")
    diffs = np.diff(rr)
    return HrvMetrics(
        rr_mean_ms=float(rr.mean()),
        rr_median_ms=float(np.median(rr)),
        rr_p20_ms=float(np.percentile(rr, 20)),
        rr_p80_ms=float(np.percentile(rr, 80)),
        rr_entropy_nats=_hist_entropy(rr, RR_ENTROPY_BINS),
        rr_diff_entropy_nats=_hist_entropy(diffs, RR_DIFF_ENTROPY_BINS),
        sdnn_ms=float(rr.std()),
        rmssd_ms=float(np.sqrt(np.mean(diffs**2))),
        pnn30=float(np.mean(np.abs(diffs) > 30.0)),
    )


# ---------------------------------------------------------------------------
# EDA tonic chain

def _exp_smooth_zero_phase(x: np.ndarray, alpha: float) -> np.ndarray:
    """First-order exponential smoother run forward then backward (no lag)."""
    b, a = [alpha], [1.0, alpha - 1.0]
    fwd, _ = lfilter(b, a, x, zi=[(1 - alpha) * x[0]])
    bwd, _ = lfilter(b, a, fwd[::-1], zi=[(1 - alpha) * fwd[-1]])
    return bwd[::-1]


def eda_smooth(eda_t_ms: np.ndarray, eda_us: np.ndarray):
    """200 Hz raw EDA -> smoothed 25 Hz tonic estimate.

    Non-overlapping 8-sample boxcar (by 40 ms time bin), 5-minute centered
    rolling median, then a zero-phase exponential smoother with a 60 s time
    constant. Returns (bin start grid in ms, smoothed values with NaN gaps).
    """
    if eda_t_ms.size == 0:
        return np.empty(0, dtype=np.int64), np.empty(0)
    bin_ms = 1000 // EDA_HZ
    bins = (eda_t_ms // bin_ms).astype(np.int64)
    b0 = bins[0]
    idx = bins - b0
    n = int(idx[-1]) + 1
    sums = np.bincount(idx, weights=eda_us, minlength=n)
    counts = np.bincount(idx, minlength=n)
    x = np.full(n, np.nan)
    has = counts > 0
    x[has] = sums[has] / counts[has]

    med = (
        pd.Series(x)
        .rolling(EDA_MEDIAN_SAMPLES, center=True, min_periods=1)
        .median()
        .to_numpy()
    )
    med[~has] = np.nan  # rolling median must not invent samples inside gaps

    alpha = (1.0 / EDA_HZ) / (EDA_LOWPASS_TAU_S + 1.0 / EDA_HZ)
    out = np.full(n, np.nan)
    # smooth each contiguous run of valid samples independently
    run_starts = np.flatnonzero(has & ~np.concatenate([[False], has[:-1]]))
    run_ends = np.flatnonzero(has & ~np.concatenate([has[1:], [False]])) + 1
    for a_i, b_i in zip(run_starts, run_ends):
        out[a_i:b_i] = _exp_smooth_zero_phase(med[a_i:b_i], alpha)
    grid_ms = (np.arange(n, dtype=np.int64) + b0) * bin_ms
    return grid_ms, out


def eda_tonic(eda_t_ms: np.ndarray, eda_us: np.ndarray, minutes: np.ndarray):
    """Minutely tonic EDA slope (uS/min) and magnitude (uS)."""
    n = minutes.size
    slope = np.full(n, np.nan)
    magnitude = np.full(n, np.nan)
    valid = np.zeros(n, dtype=bool)
    grid_ms, smoothed = eda_smooth(eda_t_ms, eda_us)
    if grid_ms.size == 0:
        return slope, magnitude, valid
    midx = (grid_ms // 60_000) - minutes[0]
    ok = np.isfinite(smoothed) & (midx >= 0) & (midx < n)
    midx_ok = midx[ok]
    y = smoothed[ok]
    # time within the owning minute (slope is shift-invariant per minute and
    # absolute epoch minutes would lose precision in the squared sums)
    t_min = (grid_ms[ok] % 60_000) / 60_000.0
    counts = np.bincount(midx_ok, minlength=n)
    valid = counts >= EDA_MIN_MINUTE_SAMPLES
    sum_y = np.bincount(midx_ok, weights=y, minlength=n)
    sum_t = np.bincount(midx_ok, weights=t_min, minlength=n)
    sum_ty = np.bincount(midx_ok, weights=t_min * y, minlength=n)
    sum_tt = np.bincount(midx_ok, weights=t_min * t_min, minlength=n)
    with np.errstate(invalid="ignore", divide="ignore"):
        denom = sum_tt - sum_t * sum_t / np.maximum(counts, 1)
        numer = sum_ty - sum_t * sum_y / np.maximum(counts, 1)
        sl = numer / denom
        mg = sum_y / np.maximum(counts, 1)
    slope[valid] = sl[valid]
    magnitude[valid] = mg[valid]
    return slope, magnitude, valid


# ---------------------------------------------------------------------------
# Skin temperature

def st_minutely(st_t_s: np.ndarray, st_c: np.ndarray, minutes: np.ndarray):
    """Minutely skin-temperature slope (degC/min) and magnitude (degC).

    Slope is the ordinary least-squares fit within the minute; at least two
    samples are required, otherwise the minute is invalid.
    """
    n = minutes.size
    slope = np.full(n, np.nan)
    magnitude = np.full(n, np.nan)
    valid = np.zeros(n, dtype=bool)
    if st_t_s.size == 0:
        return slope, magnitude, valid
    midx = (st_t_s // 60).astype(np.int64) - minutes[0]
    ok = (midx >= 0) & (midx < n)
    # time within the owning minute, for the same precision reason as above
    midx, t_min, y = midx[ok], (st_t_s[ok] % 60.0) / 60.0, st_c[ok]
    counts = np.bincount(midx, minlength=n)
    sum_y = np.bincount(midx, weights=y, minlength=n)
    sum_t = np.bincount(midx, weights=t_min, minlength=n)
    sum_ty = np.bincount(midx, weights=t_min * y, minlength=n)
    sum_tt = np.bincount(midx, weights=t_min * t_min, minlength=n)
    with np.errstate(invalid="ignore", divide="ignore"):
        denom = sum_tt - sum_t * sum_t / np.maximum(counts, 1)
        numer = sum_ty - sum_t * sum_y / np.maximum(counts, 1)
        sl = numer / denom
        mg = sum_y / np.maximum(counts, 1)
    valid = (counts >= 2) & (denom > 0)
    slope[valid] = sl[valid]
    magnitude[valid] = mg[valid]
    return slope, magnitude, valid


# ---------------------------------------------------------------------------
# Whole-table assembly

def build_minute_table(bundle: SignalBundle) -> MinuteTable:
    """Derive all 14 channels for every minute the subject's streams cover."""
    m0, m1 = bundle.minute_range()
    minutes = np.arange(m0, m1, dtype=np.int64)
    n = minutes.size
    channels = {ch: np.full(n, np.nan) for ch in CHANNELS}
    validity = {g: np.zeros(n, dtype=bool) for g in GROUP_NAMES}

    hr_mean, hr_valid = hr_minutely(bundle.hr_t_s, bundle.hr_bpm, minutes)
    channels["hr_mean"] = hr_mean
    validity["HR"] = hr_valid

    for i, m in enumerate(minutes):
        w = rr_clean(bundle.rr_t_ms, bundle.rr_ms, int(m))
        if not w.usable or w.rr_ms.size < 2:
            continue
        for name, value in hrv_metrics(w).as_dict().items():
            channels[name][i] = value
        validity["HRV"][i] = True

    # HRV derives from the cardiac stream: require HR data somewhere in the
    # underlying 5-minute window.
    hr_near = np.zeros(n, dtype=bool)
    for k in range(RR_WINDOW_MINUTES):
        hr_near[k:] |= hr_valid[: n - k]
    validity["HRV"] &= hr_near

    eda_slope, eda_mag, eda_valid = eda_tonic(bundle.eda_t_ms, bundle.eda_us, minutes)
    channels["eda_slope"] = eda_slope
    channels["eda_magnitude"] = eda_mag

    st_slope, st_mag, st_valid = st_minutely(bundle.st_t_s, bundle.st_c, minutes)
    channels["st_slope"] = st_slope
    channels["st_magnitude"] = st_mag

    # EDA and ST availability are coupled at ingest time.
    both = eda_valid & st_valid
    validity["EDA"] = both
    validity["ST"] = both.copy()

    table = MinuteTable(minutes=minutes, channels=channels, validity=validity)
    table.enforce_validity()
    return table


def user_channel_stats(table: MinuteTable) -> dict[str, tuple[float, float]]:
    """Per-channel (mean, std) over the subject's valid minutes."""
    stats = {}
    for ch in CHANNELS:
        col = table.channels[ch]
        vals = col[np.isfinite(col)]
        if vals.size:
            stats[ch] = (float(vals.mean()), float(vals.std()))
        else:
            stats[ch] = (0.0, 0.0)
    return stats
