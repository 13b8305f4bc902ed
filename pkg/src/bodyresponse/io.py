"""CSV / JSON file formats for every pipeline artifact.

All writers are deterministic: fixed column order, fixed float formatting,
newline='\\n'. Floats use repr-level precision so values round-trip exactly.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np
import pandas as pd

from .core import (
    CHANNELS,
    GROUP_NAMES,
    EventSpan,
    LabelEvent,
    SignalBundle,
    MinuteTable,
    DataError,
)

STREAM_FILES = {
    "hr": ("hr.csv", ("timestamp_s", "bpm")),
    "rr": ("rr.csv", ("timestamp_ms", "rr_ms")),
    "eda": ("eda.csv", ("timestamp_ms", "microsiemens")),
    "st": ("st.csv", ("timestamp_s", "deg_c")),
    "pressure": ("pressure.csv", ("timestamp_s", "hpa")),
}

ACCEL_COLUMNS = ("epoch_minute", "a1", "a2", "a3", "a4", "a5", "a6")


def _atomic_write_text(path: Path, text: str):
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, newline="\n")
    os.replace(tmp, path)


def _write_csv(path: Path, df: pd.DataFrame):
    # default float formatting is the shortest round-trip repr: lossless and
    # deterministic, so artifacts hash identically across runs
    text = df.to_csv(index=False, lineterminator="\n")
    _atomic_write_text(Path(path), text)


# ---------------------------------------------------------------------------
# Raw streams

def write_bundle(bundle: SignalBundle, subject_dir: Path):
    subject_dir = Path(subject_dir)
    subject_dir.mkdir(parents=True, exist_ok=True)
    pairs = {
        "hr": (bundle.hr_t_s, bundle.hr_bpm),
        "rr": (bundle.rr_t_ms, bundle.rr_ms),
        "eda": (bundle.eda_t_ms, bundle.eda_us),
        "st": (bundle.st_t_s, bundle.st_c),
        "pressure": (bundle.press_t_s, bundle.press_hpa),
    }
    for key, (t, v) in pairs.items():
        fname, cols = STREAM_FILES[key]
        _write_csv(subject_dir / fname, pd.DataFrame({cols[0]: t, cols[1]: v}))
    accel = pd.DataFrame(bundle.accel_vals, columns=ACCEL_COLUMNS[1:])
    accel.insert(0, "epoch_minute", bundle.accel_minutes)
    _write_csv(subject_dir / "accel.csv", accel)


def read_bundle(subject_dir: Path, subject_id: str) -> SignalBundle:
    subject_dir = Path(subject_dir)
    arrays = {}
    for key, (fname, cols) in STREAM_FILES.items():
        path = subject_dir / fname
        if not path.exists():
            raise DataError(f"missing stream file {path}")
        df = pd.read_csv(path)
        if tuple(df.columns) != cols:
            raise DataError(f"{path}: expected columns {cols}, got {tuple(df.columns)}")
        arrays[key] = (df[cols[0]].to_numpy(float), df[cols[1]].to_numpy(float))
    accel = pd.read_csv(subject_dir / "accel.csv")
    if tuple(accel.columns) != ACCEL_COLUMNS:
        raise DataError(f"{subject_dir / 'accel.csv'}: bad columns")
    bundle = SignalBundle(
        subject_id=subject_id,
        hr_t_s=arrays["hr"][0],
        hr_bpm=arrays["hr"][1],
        rr_t_ms=arrays["rr"][0],
        rr_ms=arrays["rr"][1],
        eda_t_ms=arrays["eda"][0],
        eda_us=arrays["eda"][1],
        st_t_s=arrays["st"][0],
        st_c=arrays["st"][1],
        accel_minutes=accel["epoch_minute"].to_numpy(np.int64),
        accel_vals=accel[list(ACCEL_COLUMNS[1:])].to_numpy(float),
        press_t_s=arrays["pressure"][0],
        press_hpa=arrays["pressure"][1],
    )
    bundle.validate()
    return bundle


# ---------------------------------------------------------------------------
# Labels

LABEL_COLUMNS = ("subject_id", "start_minute", "end_minute", "polarity", "source", "likert")


def labels_to_frame(labels: dict[str, list[LabelEvent]]) -> pd.DataFrame:
    rows = []
    for sid in sorted(labels):
        for ev in labels[sid]:
            rows.append(
                (sid, ev.span.start, ev.span.end, ev.polarity, ev.source,
                 "" if ev.likert is None else ev.likert)
            )
    return pd.DataFrame(rows, columns=LABEL_COLUMNS)


def write_labels(labels: dict[str, list[LabelEvent]], path: Path):
    _write_csv(Path(path), labels_to_frame(labels))


def read_labels(path: Path) -> dict[str, list[LabelEvent]]:
    df = pd.read_csv(path, dtype={"subject_id": str})
    if tuple(df.columns) != LABEL_COLUMNS:
        raise DataError(f"{path}: expected columns {LABEL_COLUMNS}")
    out: dict[str, list[LabelEvent]] = {}
    for row in df.itertuples(index=False):
        likert = None if pd.isna(row.likert) or row.likert == "" else int(row.likert)
        ev = LabelEvent(
            span=EventSpan(int(row.start_minute), int(row.end_minute)),
            polarity=row.polarity,
            source=row.source,
            likert=likert,
        )
        out.setdefault(row.subject_id, []).append(ev)
    return out


# ---------------------------------------------------------------------------
# Truth spans emitted by the synthetic generator

TRUTH_COLUMNS = ("subject_id", "start_minute", "end_minute", "kind")
TRUTH_KINDS = ("arousal", "exercise", "water", "loose_wear", "sleep")


def write_truth(truth: dict[str, list[tuple[EventSpan, str]]], path: Path):
    rows = []
    for sid in sorted(truth):
        for span, kind in truth[sid]:
            rows.append((sid, span.start, span.end, kind))
    _write_csv(Path(path), pd.DataFrame(rows, columns=TRUTH_COLUMNS))


def read_truth(path: Path) -> dict[str, list[tuple[EventSpan, str]]]:
    df = pd.read_csv(path, dtype={"subject_id": str})
    out: dict[str, list[tuple[EventSpan, str]]] = {}
    for row in df.itertuples(index=False):
        out.setdefault(row.subject_id, []).append(
            (EventSpan(int(row.start_minute), int(row.end_minute)), row.kind)
        )
    return out


# ---------------------------------------------------------------------------
# Minute table / confounder mask

def write_minute_table(table: MinuteTable, path: Path):
    df = pd.DataFrame({"epoch_minute": table.minutes})
    for ch in CHANNELS:
        df[ch] = table.channels[ch]
    for g in GROUP_NAMES:
        df[f"{g.lower()}_valid"] = table.validity[g].astype(int)
    _write_csv(Path(path), df)


def read_minute_table(path: Path) -> MinuteTable:
    df = pd.read_csv(path)
    return MinuteTable(
        minutes=df["epoch_minute"].to_numpy(np.int64),
        channels={ch: df[ch].to_numpy(float) for ch in CHANNELS},
        validity={g: df[f"{g.lower()}_valid"].to_numpy(bool) for g in GROUP_NAMES},
    )


def write_mask(minutes, hr_unusable, eda_unusable, reasons, path: Path):
    df = pd.DataFrame(
        {
            "epoch_minute": minutes,
            "hr_unusable": np.asarray(hr_unusable).astype(int),
            "eda_unusable": np.asarray(eda_unusable).astype(int),
            "reasons": [";".join(sorted(r)) for r in reasons],
        }
    )
    _write_csv(Path(path), df)


# ---------------------------------------------------------------------------
# Features / predictions / events

def write_features(path: Path, subject_ids, anchors, labels, names, matrix):
    df = pd.DataFrame(matrix, columns=list(names))
    df.insert(0, "label", labels)
    df.insert(0, "anchor_minute", anchors)
    df.insert(0, "subject_id", subject_ids)
    _write_csv(Path(path), df)


def read_features(path: Path):
    df = pd.read_csv(path, dtype={"subject_id": str})
    names = [c for c in df.columns if c not in ("subject_id", "anchor_minute", "label")]
    return (
        df["subject_id"].to_numpy(),
        df["anchor_minute"].to_numpy(np.int64),
        df["label"].to_numpy(),
        names,
        df[names].to_numpy(float),
    )


def write_predictions(path: Path, rows):
    """rows: iterable of (subject_id, minute, probability or None, tier or None, flag)."""
    recs = [
        (sid, m, "" if p is None else f"{p:.10g}", "" if t is None else t, int(f))
        for sid, m, p, t, f in rows
    ]
    df = pd.DataFrame(recs, columns=("subject_id", "minute", "probability", "tier", "flag"))
    _write_csv(Path(path), df)


def read_predictions(path: Path):
    df = pd.read_csv(path, dtype={"subject_id": str})
    out = []
    for row in df.itertuples(index=False):
        prob = None if pd.isna(row.probability) else float(row.probability)
        tier = None if (isinstance(row.tier, float) and pd.isna(row.tier)) else row.tier
        out.append((row.subject_id, int(row.minute), prob, tier, bool(row.flag)))
    return out


def write_events(events: dict[str, list[EventSpan]], path: Path):
    rows = []
    for sid in sorted(events):
        for ev in events[sid]:
            rows.append((sid, ev.start, ev.end))
    _write_csv(Path(path), pd.DataFrame(rows, columns=("subject_id", "start_minute", "end_minute")))


def read_events(path: Path) -> dict[str, list[EventSpan]]:
    df = pd.read_csv(path, dtype={"subject_id": str})
    out: dict[str, list[EventSpan]] = {}
    for row in df.itertuples(index=False):
        out.setdefault(row.subject_id, []).append(
            EventSpan(int(row.start_minute), int(row.end_minute))
        )
    return out


# ---------------------------------------------------------------------------
# JSON helpers

def write_json(obj, path: Path):
    _atomic_write_text(Path(path), json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path: Path):
    return json.loads(Path(path).read_text())
