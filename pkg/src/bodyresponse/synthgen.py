"""Seeded synthetic subjects: lab-style stress sessions and free-living days
with ground-truth arousal events, confounder episodes, label streams, and a
notification scheduler.

All randomness is counter-based: a fixed master seed yields byte-identical
output. Template amplitudes are configuration, not physiological claims.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .core import (
    ConfigError,
    EventSpan,
    LabelEvent,
    SignalBundle,
    eda_survey_to_label,
    stress_log_to_label,
)
from .evaluate import merge_spans, subtract_spans

EDA_RAW_HZ = 200
MS_PER_EDA_SAMPLE = 1000 // EDA_RAW_HZ

# Minutely accelerometer aggregate distributions (mean vector, std vector)
# for sedentary vs exercising minutes. Order: magnitude mean/std, cadence,
# zero-crossing rate, axis-energy ratio, jerk mean.
ACCEL_REST_MEAN = np.array([1.0, 0.05, 0.1, 0.5, 0.6, 0.05])
ACCEL_REST_STD = np.array([0.02, 0.01, 0.05, 0.10, 0.05, 0.02])
ACCEL_EXERCISE_MEAN = np.array([2.2, 0.7, 2.6, 3.0, 0.95, 1.05])
ACCEL_EXERCISE_STD = np.array([0.10, 0.05, 0.20, 0.30, 0.03, 0.10])

WAKE_START_MIN = 8 * 60  # 8am local
WAKE_END_MIN = 22 * 60  # 10pm local

NOTIFY_MIN_GAP = 45
NOTIFY_FORCED_AFTER = 165  # 2.75 hours
NOTIFY_FORCED_JITTER = 20
NOTIFY_MIN_DAILY = 5
NOTIFY_MAX_DAILY = 7


@dataclass(frozen=True)
class ArousalTemplate:
    """Qualitative arousal response: HR and EDA rise, HRV dips, skin
    temperature drifts down. Linear rise then exponential decay."""

    rise_min: float = 3.0
    decay_tau_min: float = 4.0
    hr_amp_bpm: float = 12.0
    eda_amp_us: float = 1.2
    hrv_suppress: float = 0.7  # fractional reduction of R-R jitter at peak
    st_amp_c: float = 0.15
    rr_base_jitter_ms: float = 35.0

    def shape(self, t_min: np.ndarray, duration_min: float) -> np.ndarray:
        t = np.asarray(t_min, dtype=float)
        up = np.clip(t / self.rise_min, 0.0, 1.0)
        down = np.exp(-np.maximum(t - self.rise_min, 0.0) / self.decay_tau_min)
        out = np.where(t < self.rise_min, up, down)
        return np.where((t >= 0) & (t < duration_min), out, 0.0)

    def hr_delta_bpm(self, t_min, duration_min, amplitude=1.0):
        return amplitude * self.hr_amp_bpm * self.shape(t_min, duration_min)

    def eda_delta_us(self, t_min, duration_min, amplitude=1.0):
        return amplitude * self.eda_amp_us * self.shape(t_min, duration_min)

    def jitter_scale(self, t_min, duration_min, amplitude=1.0):
        s = 1.0 - amplitude * self.hrv_suppress * self.shape(t_min, duration_min)
        return np.clip(s, 0.1, 1.0)

    def rmssd_delta_ms(self, t_min, duration_min, amplitude=1.0):
        base = np.sqrt(2.0) * self.rr_base_jitter_ms
        return base * (self.jitter_scale(t_min, duration_min, amplitude) - 1.0)

    def sdnn_delta_ms(self, t_min, duration_min, amplitude=1.0):
        return self.rr_base_jitter_ms * (
            self.jitter_scale(t_min, duration_min, amplitude) - 1.0
        )

    def st_delta_c(self, t_min, duration_min, amplitude=1.0):
        return -amplitude * self.st_amp_c * self.shape(t_min, duration_min)


@dataclass
class SynthConfig:
    n_subjects: int = 10
    days_per_subject: int = 0  # free-living days; 0 = lab sessions only
    include_session: bool = True  # one lab-style stress session per subject
    master_seed: int = 0
    amplitude: float = 1.0
    template: ArousalTemplate = field(default_factory=ArousalTemplate)
    base_day: int = 20000  # epoch day index of day 0
    utc_offset_min: int = 0
    # P(k arousal events), k = 1..4; mode at 2
    event_count_probs: tuple = (0.35, 0.40, 0.15, 0.10)
    event_duration_range: tuple = (8, 14)
    # confounder episode counts per free-living day
    exercise_per_day: float = 1.0
    water_per_day: float = 1.0
    loose_per_day: float = 1.0
    # stream-dropout rates per signal group, free-living days only
    missingness: dict = field(
        default_factory=lambda: {"HR": 0.10, "HRV": 0.39, "EDA": 0.02}
    )
    hr_noise_bpm: float = 0.4
    eda_noise_us: float = 0.02
    st_noise_c: float = 0.02

    def __post_init__(self):
        for k, v in self.missingness.items():
            if v < 0:
                raise ConfigError(f"negative missingness rate for {k}")
        for name in ("exercise_per_day", "water_per_day", "loose_per_day"):
            if getattr(self, name) < 0:
                raise ConfigError(f"negative rate {name}")
        if self.amplitude < 0:
            raise ConfigError("amplitude must be >= 0")


@dataclass
class SubjectData:
    subject_id: str
    bundle: SignalBundle
    labels: list[LabelEvent]
    truth: list[tuple[EventSpan, str]]
    notifications: list[int]
    day_spans: list[EventSpan]


# ---------------------------------------------------------------------------
# Notification scheduler

def schedule_notifications(wake_start: int, wake_end: int,
                           trigger_minutes: list[int],
                           rng: np.random.Generator,
                           min_gap: int = NOTIFY_MIN_GAP,
                           forced_after: int = NOTIFY_FORCED_AFTER,
                           forced_jitter: int = NOTIFY_FORCED_JITTER,
                           min_daily: int = NOTIFY_MIN_DAILY,
                           max_daily: int = NOTIFY_MAX_DAILY) -> list[int]:
    """Notification minutes for one day.

    Triggers fire when at least min_gap minutes have passed since the last
    notification; a quiet stretch of forced_after minutes schedules a
    uniformly jittered notification 0..forced_jitter minutes later; a quota
    rule guarantees the daily minimum fits before the window closes. The
    daily maximum stops everything, including forced notifications.
    """
    if wake_end - wake_start < (min_daily - 1) * min_gap + 1:
        raise ConfigError("waking window too short for the daily minimum")
    triggers = set(trigger_minutes)
    sent: list[int] = []
    last = wake_start  # quiet clock starts at wake-up
    pending_forced: int | None = None
    for t in range(wake_start, wake_end):
        if len(sent) >= max_daily:
            break
        needed = min_daily - len(sent)
        notify = False
        if pending_forced is not None and t >= pending_forced:
            notify = True
        elif t - last >= forced_after and pending_forced is None:
            delay = int(rng.integers(0, forced_jitter + 1))
            pending_forced = min(t + delay, wake_end - 1)
            if t >= pending_forced:
                notify = True
        if not notify and needed > 0:
            latest = wake_end - ((needed - 1) * min_gap + 1)
            if t >= latest and t - last >= min_gap:
                notify = True
        if not notify and t in triggers and t - last >= min_gap:
            notify = True
        if notify:
            sent.append(t)
            last = t
            pending_forced = None
    return sent


# ---------------------------------------------------------------------------
# Event / episode placement

def _sample_event_count(rng: np.random.Generator, probs) -> int:
    return int(rng.choice(np.arange(1, len(probs) + 1), p=np.asarray(probs)))


def _place_spans(rng: np.random.Generator, region: EventSpan, durations: list[int],
                 occupied: list[EventSpan], margin: int = 12,
                 attempts: int = 400) -> list[EventSpan]:
    """Place spans of the given durations inside region, keeping margin
    minutes away from each other and from already-occupied spans."""
    placed: list[EventSpan] = []
    taken = list(occupied)
    for dur in durations:
        hi = region.end - dur
        if hi <= region.start:
            continue
        for _ in range(attempts):
            start = int(rng.integers(region.start, hi))
            cand = EventSpan(start, start + dur)
            grown = cand.expand(margin)
            if not any(grown.overlaps(s) for s in taken):
                placed.append(cand)
                taken.append(cand)
                break
    return placed


def _choose_missing_minutes(rng: np.random.Generator, n_minutes: int,
                            rate: float, mean_run: int = 4) -> np.ndarray:
    """Boolean drop mask over a block, targeting the given minute fraction."""
    dropped = np.zeros(n_minutes, dtype=bool)
    if rate <= 0 or n_minutes == 0:
        return dropped
    target = rate * n_minutes
    guard = 0
    while dropped.sum() < target and guard < 50 * n_minutes:
        guard += 1
        run = int(np.clip(rng.geometric(1.0 / mean_run), 1, 3 * mean_run))
        start = int(rng.integers(0, n_minutes))
        dropped[start : start + run] = True
    return dropped


# ---------------------------------------------------------------------------
# Raw stream synthesis for one contiguous block of minutes

def gen_arousal_event(template: ArousalTemplate, amplitude: float,
                      onset_minute: int, duration_min: int,
                      block: EventSpan) -> tuple[dict, EventSpan]:
    """Additive per-second perturbations for one arousal event.

    Returns ({'hr', 'eda', 'st', 'jitter_scale'} per-second arrays covering
    the block) and the ground-truth span. At amplitude 0 every perturbation
    is identically zero but the truth span is still recorded.
    """
    if amplitude < 0:
        raise ConfigError("amplitude must be >= 0")
    if not (block.start <= onset_minute and onset_minute + duration_min <= block.end):
        raise ConfigError("event does not fit inside the block")
    sec = np.arange(block.start * 60, block.end * 60)
    t_min = sec / 60.0 - onset_minute
    deltas = {
        "hr": template.hr_delta_bpm(t_min, duration_min, amplitude),
        "eda": template.eda_delta_us(t_min, duration_min, amplitude),
        "st": template.st_delta_c(t_min, duration_min, amplitude),
        "jitter_scale": template.jitter_scale(t_min, duration_min, amplitude),
    }
    return deltas, EventSpan(onset_minute, onset_minute + duration_min)


def _in_spans_per_sec(block: EventSpan, spans: list[EventSpan]) -> np.ndarray:
    sec_min = np.arange(block.start * 60, block.end * 60) // 60
    mask = np.zeros(sec_min.size, dtype=bool)
    for s in spans:
        mask |= (sec_min >= s.start) & (sec_min < s.end)
    return mask


def _ramp_decay_per_sec(block: EventSpan, spans: list[EventSpan],
                        rate_us_min: float, decay_tau_min: float) -> np.ndarray:
    """EDA perturbation that ramps during each span and decays after it."""
    sec = np.arange(block.start * 60, block.end * 60)
    out = np.zeros(sec.size, dtype=float)
    t_min = sec / 60.0
    for s in spans:
        dur = s.duration
        rel = t_min - s.start
        during = np.clip(rel, 0.0, dur) * rate_us_min
        after = np.exp(-np.maximum(rel - dur, 0.0) / decay_tau_min)
        out += np.where(rel >= 0, np.minimum(during, dur * rate_us_min) * after, 0.0)
    return out


@dataclass
class _Block:
    """Raw streams for one contiguous stretch of minutes."""

    hr_t_s: np.ndarray
    hr_bpm: np.ndarray
    rr_t_ms: np.ndarray
    rr_ms: np.ndarray
    eda_t_ms: np.ndarray
    eda_us: np.ndarray
    st_t_s: np.ndarray
    st_c: np.ndarray
    accel_minutes: np.ndarray
    accel_vals: np.ndarray
    press_t_s: np.ndarray
    press_hpa: np.ndarray


def _gen_block(rng: np.random.Generator, config: SynthConfig, block: EventSpan,
               subject_params: dict, arousals: list[tuple[int, int]],
               exercise: list[EventSpan], water: list[EventSpan],
               loose: list[EventSpan],
               missing: dict[str, np.ndarray] | None = None) -> _Block:
    tpl = config.template
    amp = config.amplitude
    n_min = block.duration
    n_sec = n_min * 60
    sec = np.arange(block.start * 60, block.end * 60, dtype=np.int64)
    t_min_f = sec / 60.0

    # slow physiological wander
    ph = rng.uniform(0, 2 * np.pi, size=6)
    hr_wander = 1.5 * np.sin(2 * np.pi * t_min_f / 35.0 + ph[0]) + 0.8 * np.sin(
        2 * np.pi * t_min_f / 11.0 + ph[1]
    )
    eda_wander = 0.5 * np.sin(2 * np.pi * t_min_f / 47.0 + ph[2]) + 0.2 * np.sin(
        2 * np.pi * t_min_f / 13.0 + ph[3]
    )
    st_wander = 0.25 * np.sin(2 * np.pi * t_min_f / 53.0 + ph[4])

    hr_delta = np.zeros(n_sec)
    eda_delta = np.zeros(n_sec)
    st_delta = np.zeros(n_sec)
    jitter_scale = np.ones(n_sec)
    for onset, dur in arousals:
        d, _ = gen_arousal_event(tpl, amp, onset, dur, block)
        hr_delta += d["hr"]
        eda_delta += d["eda"]
        st_delta += d["st"]
        jitter_scale = np.minimum(jitter_scale, d["jitter_scale"])

    in_exercise = _in_spans_per_sec(block, exercise)
    in_water = _in_spans_per_sec(block, water)
    in_loose = _in_spans_per_sec(block, loose)

    hr_inst = (
        subject_params["base_hr"]
        + hr_wander
        + hr_delta
        + 45.0 * in_exercise
    )
    hr_stream = hr_inst + rng.normal(0, config.hr_noise_bpm, size=n_sec)
    hr_stream = np.clip(hr_stream, 35.0, 220.0)

    # R-R beats follow instantaneous HR with event/exercise-modulated jitter
    jitter = tpl.rr_base_jitter_ms * jitter_scale * np.where(in_exercise, 0.4, 1.0)
    beats_t: list[float] = []
    beats_rr: list[float] = []
    t_ms = block.start * 60_000 + float(rng.uniform(0, 1000))
    end_ms = block.end * 60_000
    noise_pool = rng.normal(0, 1, size=int(n_sec * 2.6) + 16)
    k = 0
    while t_ms < end_ms:
        idx = min(int(t_ms // 1000) - block.start * 60, n_sec - 1)
        rr = 60000.0 / hr_inst[idx] + jitter[idx] * noise_pool[k % noise_pool.size]
        k += 1
        rr = float(np.clip(rr, 310.0, 1990.0))
        t_ms += rr
        if t_ms < end_ms:
            beats_t.append(t_ms)
            beats_rr.append(rr)
    rr_t = np.asarray(beats_t)
    rr_v = np.asarray(beats_rr)

    # tonic EDA per second, then 200 Hz with sensor noise
    eda_sec = (
        subject_params["base_eda"]
        + eda_wander
        + eda_delta
        # the conductance rise outlasts the splash (wet skin dries slowly)
        + _ramp_decay_per_sec(
            block, [EventSpan(w.start, w.end + 3) for w in water], 0.4, 3.0
        )
        + _ramp_decay_per_sec(block, exercise, 0.08, 5.0)
    )
    eda_raw = np.repeat(eda_sec, EDA_RAW_HZ) + rng.normal(
        0, config.eda_noise_us, size=n_sec * EDA_RAW_HZ
    )
    loose_raw = np.repeat(in_loose, EDA_RAW_HZ)
    if np.any(loose_raw):
        eda_raw[loose_raw] = np.abs(
            rng.normal(0.004, 0.003, size=int(loose_raw.sum()))
        )
    eda_raw = np.clip(eda_raw, 0.0, None)
    eda_t = block.start * 60_000 + np.arange(n_sec * EDA_RAW_HZ, dtype=np.int64) * MS_PER_EDA_SAMPLE

    # skin temperature every 10 s
    st_t = sec[::10].astype(float)
    st_vals = (
        subject_params["base_st"]
        + st_wander[::10]
        + st_delta[::10]
        + rng.normal(0, config.st_noise_c, size=st_t.size)
    )
    st_vals = np.clip(st_vals, 25.0, 42.0)

    # barometric pressure at 1 Hz; water exposure adds variation
    press = subject_params["base_press"] + rng.normal(0, 0.03, size=n_sec)
    if np.any(in_water):
        press[in_water] += rng.normal(0, 0.6, size=int(in_water.sum()))

    # minutely accelerometer aggregates
    minutes = np.arange(block.start, block.end, dtype=np.int64)
    ex_minute = np.zeros(n_min, dtype=bool)
    for s in exercise:
        ex_minute |= (minutes >= s.start) & (minutes < s.end)
    accel = rng.normal(ACCEL_REST_MEAN, ACCEL_REST_STD, size=(n_min, 6))
    if np.any(ex_minute):
        accel[ex_minute] = rng.normal(
            ACCEL_EXERCISE_MEAN, ACCEL_EXERCISE_STD, size=(int(ex_minute.sum()), 6)
        )
    accel = np.clip(accel, 0.0, None)

    # apply per-group stream dropouts
    if missing:
        def _minute_mask(stream_minute, group):
            drop = missing.get(group)
            if drop is None or not np.any(drop):
                return np.ones(stream_minute.size, dtype=bool)
            idx = stream_minute - block.start
            return ~drop[idx]

        keep = _minute_mask((sec // 60).astype(np.int64), "HR")
        hr_t, hr_stream = sec[keep].astype(float), hr_stream[keep]
        keep = _minute_mask((rr_t // 60_000).astype(np.int64), "HRV")
        rr_t, rr_v = rr_t[keep], rr_v[keep]
        keep = _minute_mask((eda_t // 60_000).astype(np.int64), "EDA")
        eda_t, eda_raw = eda_t[keep], eda_raw[keep]
        keep = _minute_mask((st_t // 60).astype(np.int64), "EDA")
        st_t, st_vals = st_t[keep], st_vals[keep]
    else:
        hr_t = sec.astype(float)

    return _Block(
        hr_t_s=hr_t, hr_bpm=hr_stream,
        rr_t_ms=rr_t, rr_ms=rr_v,
        eda_t_ms=eda_t, eda_us=eda_raw,
        st_t_s=st_t, st_c=st_vals,
        accel_minutes=minutes, accel_vals=accel,
        press_t_s=sec.astype(float), press_hpa=press,
    )


# ---------------------------------------------------------------------------
# Session (lab-style) generation

SESSION_PERIODS = (
    ("lead_in", 5),
    ("baseline", 15),
    ("anticipation", 10),
    ("stressor", 10),
    ("debrief", 10),
    ("recovery", 15),
    ("tail", 5),
)
SESSION_MINUTES = sum(d for _, d in SESSION_PERIODS)


def gen_session(config: SynthConfig, subject_idx: int):
    """One lab-style stress session: period structure with 1-4 arousal events
    at varying offsets; per-minute truth labels."""
    rng = np.random.default_rng(
        np.random.SeedSequence([config.master_seed, 7, subject_idx])
    )
    noise_rng = np.random.default_rng(
        np.random.SeedSequence([config.master_seed, 7, subject_idx, 999])
    )
    sp_rng = np.random.default_rng(
        np.random.SeedSequence([config.master_seed, 3, subject_idx])
    )
    subject_params = _subject_params(sp_rng)

    day0 = (config.base_day + config.days_per_subject) * 1440
    s0 = day0 + WAKE_START_MIN + 120
    block = EventSpan(s0, s0 + SESSION_MINUTES)

    n_events = _sample_event_count(rng, config.event_count_probs)
    durations = [
        int(rng.integers(*config.event_duration_range)) for _ in range(n_events)
    ]
    region = EventSpan(s0 + 8, s0 + SESSION_MINUTES - 16)
    spans = _place_spans(rng, region, durations, occupied=[], margin=6)
    arousals = [(s.start, s.duration) for s in spans]

    blk = _gen_block(noise_rng, config, block, subject_params, arousals, [], [], [])
    truth = [(EventSpan(o, o + d), "arousal") for o, d in sorted(arousals)]
    stress_spans = merge_spans([t[0] for t in truth])
    labels = [
        LabelEvent(span=s, polarity="stress", source="synthetic_truth")
        for s in stress_spans
    ]
    labels += [
        LabelEvent(span=s, polarity="no_stress", source="synthetic_truth")
        for s in subtract_spans([block], stress_spans)
    ]
    labels.sort(key=lambda ev: ev.span.start)
    return blk, labels, truth, block


# ---------------------------------------------------------------------------
# Free-living day generation

def gen_free_living_day(config: SynthConfig, subject_idx: int, day_idx: int,
                        with_streams: bool = True):
    """A full free-living day: waking-window streams with arousal events,
    confounder episodes, sleep spans, per-group missingness, scheduled
    notifications, and both label streams.

    with_streams=False skips raw-stream synthesis (returns None in its
    place) without changing any event, notification, or label draw; stream
    noise lives on a separate counter-based RNG stream.
    """
    rng = np.random.default_rng(
        np.random.SeedSequence([config.master_seed, 11, subject_idx, day_idx])
    )
    noise_rng = np.random.default_rng(
        np.random.SeedSequence([config.master_seed, 11, subject_idx, day_idx, 999])
    )
    sp_rng = np.random.default_rng(
        np.random.SeedSequence([config.master_seed, 3, subject_idx])
    )
    subject_params = _subject_params(sp_rng)

    day_start = (config.base_day + day_idx) * 1440
    day_span = EventSpan(day_start, day_start + 1440)
    # waking window in epoch minutes (fixed per-subject UTC offset)
    wake_start = day_start + WAKE_START_MIN - config.utc_offset_min
    wake_end = day_start + WAKE_END_MIN - config.utc_offset_min
    block = EventSpan(wake_start, wake_end)

    n_events = _sample_event_count(rng, config.event_count_probs)
    durations = [
        int(rng.integers(*config.event_duration_range)) for _ in range(n_events)
    ]
    region = EventSpan(wake_start + 31, wake_end - 20)
    arousal_spans = _place_spans(rng, region, durations, occupied=[], margin=12)
    occupied = list(arousal_spans)

    def _episodes(rate, dur_lo, dur_hi):
        count = min(int(rng.poisson(rate)), 3)
        durs = [int(rng.integers(dur_lo, dur_hi + 1)) for _ in range(count)]
        placed = _place_spans(rng, region, durs, occupied, margin=12)
        occupied.extend(placed)
        return placed

    exercise_spans = _episodes(config.exercise_per_day, 20, 30)
    water_spans = _episodes(config.water_per_day, 8, 12)
    loose_spans = _episodes(config.loose_per_day, 5, 8)

    missing = {
        g: _choose_missing_minutes(rng, block.duration, config.missingness.get(g, 0.0))
        for g in ("HR", "HRV", "EDA")
    }

    arousals = [(s.start, s.duration) for s in arousal_spans]
    blk = None
    if with_streams:
        blk = _gen_block(noise_rng, config, block, subject_params, arousals,
                         exercise_spans, water_spans, loose_spans, missing)

    truth: list[tuple[EventSpan, str]] = []
    truth += [(s, "arousal") for s in sorted(arousal_spans)]
    truth += [(s, "exercise") for s in sorted(exercise_spans)]
    truth += [(s, "water") for s in sorted(water_spans)]
    truth += [(s, "loose_wear") for s in sorted(loose_spans)]
    truth.append((EventSpan(day_start, wake_start), "sleep"))
    truth.append((EventSpan(wake_end, day_start + 1440), "sleep"))

    # notifications: the on-device detector proxy triggers at arousal onsets
    triggers = [s.start for s in arousal_spans]
    notifications = schedule_notifications(wake_start, wake_end, triggers, rng)

    labels: list[LabelEvent] = []
    for notify in notifications:
        labels.append(_stress_log_label(rng, notify, arousal_spans))
    for s in sorted(arousal_spans):
        labels.append(eda_survey_to_label("Stress", s))
    for s in sorted(water_spans):
        labels.append(eda_survey_to_label("Humidity", s))
    for s in sorted(exercise_spans):
        labels.append(eda_survey_to_label("Heat/Exertion", s))

    realized_missing = {g: float(m.mean()) for g, m in missing.items()}
    return blk, labels, truth, notifications, day_span, realized_missing


_LOOKBACK_BINS = (("0-5", 5), ("5-15", 15), ("15-30", 30), ("30-60", 60))


def _stress_log_label(rng: np.random.Generator, notify: int,
                      arousal_spans: list[EventSpan]) -> LabelEvent:
    recent = [s for s in arousal_spans if s.start < notify]
    choice = None
    if recent:
        delta = notify - max(s.start for s in recent)
        for name, hi in _LOOKBACK_BINS:
            if delta <= hi:
                choice = name
                break
        else:
            choice = "60+"
    else:
        choice = str(rng.choice([name for name, _ in _LOOKBACK_BINS] + ["60+"]))
    probe = stress_log_to_label(3, choice, notify)
    overlaps = any(probe.span.overlaps(s) for s in arousal_spans)
    base = 4 if overlaps else 1
    likert = int(np.clip(base + rng.integers(-1, 2), 1, 5))
    return stress_log_to_label(likert, choice, notify)


# ---------------------------------------------------------------------------
# Whole-dataset assembly

def _subject_params(rng: np.random.Generator) -> dict:
    return {
        "base_hr": float(rng.uniform(58.0, 76.0)),
        "base_eda": float(rng.uniform(1.5, 4.0)),
        "base_st": float(rng.uniform(32.0, 34.5)),
        "base_press": float(rng.uniform(1000.0, 1025.0)),
    }


def _concat_blocks(subject_id: str, blocks: list[_Block]) -> SignalBundle:
    def cat(attr):
        return np.concatenate([getattr(b, attr) for b in blocks])

    bundle = SignalBundle(
        subject_id=subject_id,
        hr_t_s=cat("hr_t_s"), hr_bpm=cat("hr_bpm"),
        rr_t_ms=cat("rr_t_ms"), rr_ms=cat("rr_ms"),
        eda_t_ms=cat("eda_t_ms"), eda_us=cat("eda_us"),
        st_t_s=cat("st_t_s"), st_c=cat("st_c"),
        accel_minutes=cat("accel_minutes"),
        accel_vals=np.concatenate([b.accel_vals for b in blocks], axis=0),
        press_t_s=cat("press_t_s"), press_hpa=cat("press_hpa"),
    )
    bundle.validate()
    return bundle


def generate_subject(config: SynthConfig, subject_idx: int) -> SubjectData:
    subject_id = f"S{subject_idx:03d}"
    blocks: list[_Block] = []
    labels: list[LabelEvent] = []
    truth: list[tuple[EventSpan, str]] = []
    notifications: list[int] = []
    day_spans: list[EventSpan] = []
    for day_idx in range(config.days_per_subject):
        blk, lab, tru, noti, day_span, _ = gen_free_living_day(
            config, subject_idx, day_idx
        )
        blocks.append(blk)
        labels.extend(lab)
        truth.extend(tru)
        notifications.extend(noti)
        day_spans.append(day_span)
    if config.include_session:
        blk, lab, tru, session_span = gen_session(config, subject_idx)
        blocks.append(blk)
        labels.extend(lab)
        truth.extend(tru)
        day_spans.append(session_span)
    if not blocks:
        raise ConfigError("config generates no data (no days, no session)")
    return SubjectData(
        subject_id=subject_id,
        bundle=_concat_blocks(subject_id, blocks),
        labels=labels,
        truth=truth,
        notifications=notifications,
        day_spans=day_spans,
    )


def generate_dataset(config: SynthConfig) -> list[SubjectData]:
    return [generate_subject(config, i) for i in range(config.n_subjects)]
