"""Shared domain types, the minutely timeline, and stress/no-stress label construction.

All cross-stream alignment is done on integer epoch minutes (minutes since
epoch, UTC). Event spans are half-open minute intervals [start, end).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# ---------------------------------------------------------------------------
# Errors

class InvalidLabel(ValueError):
    """Label inputs outside their documented domain."""


class AlignmentError(ValueError):
    """Two minutely structures do not share the same minute axis."""


class ConfigError(ValueError):
    """Bad or missing configuration / descriptor inputs."""


class MissingData(ValueError):
    """An operation was asked to run on data flagged unusable."""


class DataError(ValueError):
    """Non-finite or otherwise corrupt data values."""


# ---------------------------------------------------------------------------
# Channel & group vocabulary

HRV_CHANNELS = [
    "rr_mean_ms",
    "rr_median_ms",
    "rr_p20_ms",
    "rr_p80_ms",
    "rr_entropy_nats",
    "rr_diff_entropy_nats",
    "sdnn_ms",
    "rmssd_ms",
    "pnn30",
]

CHANNELS = HRV_CHANNELS + [
    "hr_mean",
    "eda_slope",
    "eda_magnitude",
    "st_slope",
    "st_magnitude",
]

GROUPS = {
    "HRV": tuple(HRV_CHANNELS),
    "HR": ("hr_mean",),
    "EDA": ("eda_slope", "eda_magnitude"),
    "ST": ("st_slope", "st_magnitude"),
}

GROUP_NAMES = ("HR", "HRV", "EDA", "ST")

CHANNEL_GROUP = {ch: g for g, chs in GROUPS.items() for ch in chs}

STRESS = "stress"
NO_STRESS = "no_stress"
POLARITIES = (STRESS, NO_STRESS)

SOURCES = ("tsst_manual", "stress_log", "eda_survey", "synthetic_truth")

EDA_SURVEY_RESPONSES = ("Heat/Exertion", "Humidity", "Stress", "Unknown")

# Lookback answer choices -> label duration in minutes. The two endpoint
# durations (3 and 60) are fixed; interior bins use the rounded midpoint of
# the stated range.
LOOKBACK_MINUTES = {
    "0-5": 3,
    "5-15": 10,
    "15-30": 23,
    "30-60": 45,
    "60+": 60,
}


# ---------------------------------------------------------------------------
# Value types

@dataclass(frozen=True, order=True)
class EventSpan:
    """Half-open minute interval [start, end)."""

    start: int
    end: int

    def __post_init__(self):
        if self.end <= self.start:
            raise InvalidLabel(f"degenerate span [{self.start}, {self.end})")

    @property
    def duration(self) -> int:
        return self.end - self.start

    def overlaps(self, other: "EventSpan") -> bool:
        return self.start < other.end and other.start < self.end

    def expand(self, pad: int) -> "EventSpan":
        return EventSpan(self.start - pad, self.end + pad)

    def minutes(self) -> np.ndarray:
        return np.arange(self.start, self.end, dtype=np.int64)


@dataclass(frozen=True)
class LabelEvent:
    """A stress / no-stress label over a minute span, with its provenance."""

    span: EventSpan
    polarity: str
    source: str
    likert: int | None = None

    def __post_init__(self):
        if self.polarity not in POLARITIES:
            raise InvalidLabel(f"unknown polarity {self.polarity!r}")
        if self.source not in SOURCES:
            raise InvalidLabel(f"unknown source {self.source!r}")
        if (self.likert is not None) != (self.source == "stress_log"):
            raise InvalidLabel("likert present iff source is stress_log")
        if self.likert is not None:
            if not 1 <= self.likert <= 5:
                raise InvalidLabel(f"likert {self.likert} outside [1, 5]")
            expected = NO_STRESS if self.likert <= 2 else STRESS
            if self.polarity != expected:
                raise InvalidLabel(
                    f"polarity {self.polarity} inconsistent with likert {self.likert}"
                )


@dataclass
class SignalBundle:
    """Per-subject raw streams on a shared epoch timeline.

    Streams are parallel (time, value) numpy arrays. Times are strictly
    increasing within each stream. accel_vals rows hold the six minutely
    accelerometer aggregates (magnitude mean/std, cadence, zero-crossing
    rate, axis-energy ratio, jerk mean).
    """

    subject_id: str
    hr_t_s: np.ndarray = field(default_factory=lambda: np.empty(0))
    hr_bpm: np.ndarray = field(default_factory=lambda: np.empty(0))
    rr_t_ms: np.ndarray = field(default_factory=lambda: np.empty(0))
    rr_ms: np.ndarray = field(default_factory=lambda: np.empty(0))
    eda_t_ms: np.ndarray = field(default_factory=lambda: np.empty(0))
    eda_us: np.ndarray = field(default_factory=lambda: np.empty(0))
    st_t_s: np.ndarray = field(default_factory=lambda: np.empty(0))
    st_c: np.ndarray = field(default_factory=lambda: np.empty(0))
    accel_minutes: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    accel_vals: np.ndarray = field(default_factory=lambda: np.empty((0, 6)))
    press_t_s: np.ndarray = field(default_factory=lambda: np.empty(0))
    press_hpa: np.ndarray = field(default_factory=lambda: np.empty(0))

    def validate(self):
        for name in ("hr_t_s", "rr_t_ms", "eda_t_ms", "st_t_s", "press_t_s"):
            t = getattr(self, name)
            if t.size > 1 and not np.all(np.diff(t) > 0):
                raise DataError(f"{name} not strictly increasing")
        if self.rr_ms.size and not (
            np.all(self.rr_ms > 200) and np.all(self.rr_ms < 4000)
        ):
            raise DataError("rr_ms outside (200, 4000)")
        if self.eda_us.size and not np.all(self.eda_us >= 0):
            raise DataError("eda_us negative")
        if self.st_c.size and not (
            np.all(self.st_c > 20) and np.all(self.st_c < 45)
        ):
            raise DataError("st_c outside (20, 45)")

    def minute_range(self) -> tuple[int, int]:
        """[first, last) minute covered by any stream."""
        starts, ends = [], []
        for t, scale in (
            (self.hr_t_s, 1.0),
            (self.rr_t_ms, 1e-3),
            (self.eda_t_ms, 1e-3),
            (self.st_t_s, 1.0),
            (self.press_t_s, 1.0),
        ):
            if t.size:
                starts.append(t[0] * scale)
                ends.append(t[-1] * scale)
        if self.accel_minutes.size:
            starts.append(self.accel_minutes[0] * 60.0)
            ends.append(self.accel_minutes[-1] * 60.0 + 59.0)
        if not starts:
            raise MissingData(f"subject {self.subject_id}: all streams empty")
        return int(min(starts) // 60), int(max(ends) // 60) + 1


@dataclass
class MinuteTable:
    """Aligned minutely grid of the 14 derived channels plus group validity."""

    minutes: np.ndarray  # sorted int64 epoch minutes
    channels: dict[str, np.ndarray]  # name -> float array, NaN = missing
    validity: dict[str, np.ndarray]  # group -> bool array

    def __post_init__(self):
        n = self.minutes.size
        for name, col in self.channels.items():
            if col.size != n:
                raise AlignmentError(f"channel {name} length mismatch")
        for g, v in self.validity.items():
            if v.size != n:
                raise AlignmentError(f"validity {g} length mismatch")

    def copy(self) -> "MinuteTable":
        return MinuteTable(
            self.minutes.copy(),
            {k: v.copy() for k, v in self.channels.items()},
            {k: v.copy() for k, v in self.validity.items()},
        )

    def enforce_validity(self):
        """NaN out channel values wherever the owning group is invalid."""
        for name, col in self.channels.items():
            base = name[:-2] if name.endswith("_z") else name
            col[~self.validity[CHANNEL_GROUP[base]]] = np.nan


@dataclass
class SubjectDataset:
    subject_id: str
    bundle: SignalBundle
    labels: list[LabelEvent]
    user_stats: dict[str, tuple[float, float]]  # channel -> (mean, std)


# ---------------------------------------------------------------------------
# Label construction

def stress_log_to_label(likert: int, lookback_choice: str, notify_minute: int) -> LabelEvent:
    """Build a label from a stress-log response.

    Likert 1-2 maps to no-stress, 3-5 to stress. The label covers the
    lookback duration immediately before the notification minute.
    """
    if not isinstance(likert, (int, np.integer)) or not 1 <= likert <= 5:
        raise InvalidLabel(f"likert {likert!r} outside [1, 5]")
    if lookback_choice not in LOOKBACK_MINUTES:
        raise InvalidLabel(f"unknown lookback choice {lookback_choice!r}")
    duration = LOOKBACK_MINUTES[lookback_choice]
    polarity = NO_STRESS if likert <= 2 else STRESS
    span = EventSpan(int(notify_minute) - duration, int(notify_minute))
    return LabelEvent(span=span, polarity=polarity, source="stress_log", likert=int(likert))


def eda_survey_to_label(response: str, event_span: EventSpan) -> LabelEvent:
    """Build a label from a retrospective survey about one detected EDA event.

    Only the 'Stress' response yields a stress label; the span is the EDA
    event's own span.
    """
    if response not in EDA_SURVEY_RESPONSES:
        raise InvalidLabel(f"unknown survey response {response!r}")
    polarity = STRESS if response == "Stress" else NO_STRESS
    return LabelEvent(span=event_span, polarity=polarity, source="eda_survey")
