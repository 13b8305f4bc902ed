"""Batch command-line surface wiring the pipeline stages together.

Commands: synth, preprocess, featurize, train, predict, evaluate, report.
Each command reads an INI config, verifies the upstream stage's manifest,
writes its documented artifacts atomically, and records a manifest of input
and output hashes. Identical config + seed => byte-identical artifacts.

Exit codes: 1 config/schema errors, 2 data errors (including stale upstream
manifests), 3 internal errors.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import os
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import io as bio
from .classify import (
    EVALUATION_THRESHOLD,
    PRODUCTION_THRESHOLD,
    TIER_GROUPS,
    TIERS,
    MetricError,
    ModelCascade,
    TieredModel,
    TrainError,
    cascade_predict,
    loso_cv,
    smooth_events,
)
from .confounders import apply_masks, build_mask
from .core import (
    CHANNELS,
    GROUP_NAMES,
    AlignmentError,
    ConfigError,
    DataError,
    EventSpan,
    InvalidLabel,
    MissingData,
)
from .evaluate import (
    PlacementError,
    SubjectEval,
    adjust_predictions,
    compute_metrics,
    confusion_from_events,
    merge_spans,
    metrics_from_counts,
    permutation_test,
)
from .featurize import (
    SelectionError,
    aggregate_window,
    build_catalog,
    make_windows,
    normalize_per_user,
)
from .preprocess import build_minute_table, user_channel_stats
from .synthgen import ArousalTemplate, SynthConfig, generate_dataset


class ManifestError(DataError):
    """An upstream artifact changed after its manifest was written."""


# ---------------------------------------------------------------------------
# Configuration

DEFAULTS: dict[str, dict] = {
    "paths": {"out_dir": ""},
    "synth": {
        "n_subjects": 10,
        "days_per_subject": 0,
        "include_session": True,
        "master_seed": 0,
        "amplitude": 1.0,
        "exercise_per_day": 1.0,
        "water_per_day": 1.0,
        "loose_per_day": 1.0,
        "missing_hr": 0.10,
        "missing_hrv": 0.39,
        "missing_eda": 0.02,
    },
    "train": {"lam": 0.0, "seed": 0},
    "predict": {"mode": "evaluation"},
    "evaluate": {"iterations": 1000, "tolerance": 10},
    "report": {"svg": True},
}

ENV_PREFIX = "BODYRESP_"


def _coerce(raw: str, default):
    if isinstance(default, bool):
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"expected boolean, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def load_config(path: str | Path, env: dict | None = None) -> dict:
    """Parse the INI config, apply BODYRESP_ env overrides, reject unknown
    sections/keys, and fill defaults."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    cfg = {sec: dict(vals) for sec, vals in DEFAULTS.items()}
    for sec in parser.sections():
        if sec not in DEFAULTS:
            raise ConfigError(f"{path}: unknown section [{sec}]")
        for key, raw in parser.items(sec):
            if key not in DEFAULTS[sec]:
                raise ConfigError(f"{path}: unknown key {key!r} in [{sec}]")
            cfg[sec][key] = _coerce(raw, DEFAULTS[sec][key])
    env = os.environ if env is None else env
    for sec, keys in DEFAULTS.items():
        for key in keys:
            name = f"{ENV_PREFIX}{sec.upper()}_{key.upper()}"
            if name in env:
                cfg[sec][key] = _coerce(env[name], DEFAULTS[sec][key])
    if not cfg["paths"]["out_dir"]:
        raise ConfigError("config must set out_dir in [paths]")
    if cfg["predict"]["mode"] not in ("evaluation", "production"):
        raise ConfigError(f"unknown mode {cfg['predict']['mode']!r}")
    return cfg


# ---------------------------------------------------------------------------
# Manifests

UPSTREAM = {
    "synth": (),
    "preprocess": ("synth",),
    "featurize": ("preprocess",),
    "train": ("featurize",),
    "predict": ("train",),
    "evaluate": ("predict",),
    "report": ("evaluate",),
}


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _check_upstream(out_dir: Path, command: str) -> dict[str, str]:
    """Verify every upstream manifest's outputs still hash identically.
    Returns the combined input-hash map for this command's manifest."""
    inputs: dict[str, str] = {}
    for up in UPSTREAM[command]:
        mpath = out_dir / f"manifest_{up}.json"
        if not mpath.exists():
            raise ManifestError(f"missing upstream manifest {mpath}; run '{up}' first")
        manifest = bio.read_json(mpath)
        for rel, recorded in manifest["outputs"].items():
            fpath = out_dir / rel
            if not fpath.exists():
                raise ManifestError(f"{fpath}: upstream output missing")
            current = _sha256(fpath)
            if current != recorded:
                raise ManifestError(
                    f"{fpath}: hash {current[:12]} != manifest {recorded[:12]} (stale)"
                )
            inputs[rel] = recorded
    return inputs


def _write_manifest(out_dir: Path, command: str, inputs: dict[str, str],
                    outputs: list[Path], cfg: dict):
    rels = sorted(str(Path(p).relative_to(out_dir)) for p in outputs)
    bio.write_json(
        {
            "command": command,
            "inputs": inputs,
            "outputs": {rel: _sha256(out_dir / rel) for rel in rels},
            "config": cfg,
        },
        out_dir / f"manifest_{command}.json",
    )


# ---------------------------------------------------------------------------
# Commands

def _subject_ids(out_dir: Path) -> list[str]:
    data = out_dir / "data"
    if not data.is_dir():
        raise DataError(f"no data directory at {data}")
    return sorted(p.name for p in data.iterdir() if p.is_dir())


def cmd_synth(cfg: dict, out_dir: Path) -> list[Path]:
    s = cfg["synth"]
    sc = SynthConfig(
        n_subjects=s["n_subjects"],
        days_per_subject=s["days_per_subject"],
        include_session=s["include_session"],
        master_seed=s["master_seed"],
        amplitude=s["amplitude"],
        template=ArousalTemplate(),
        exercise_per_day=s["exercise_per_day"],
        water_per_day=s["water_per_day"],
        loose_per_day=s["loose_per_day"],
        missingness={"HR": s["missing_hr"], "HRV": s["missing_hrv"],
                     "EDA": s["missing_eda"]},
    )
    outputs: list[Path] = []
    labels, truth, notif_rows, day_rows = {}, {}, [], []
    for subject in generate_dataset(sc):
        sid = subject.subject_id
        sdir = out_dir / "data" / sid
        bio.write_bundle(subject.bundle, sdir)
        outputs += sorted(sdir.iterdir())
        labels[sid] = subject.labels
        truth[sid] = subject.truth
        notif_rows += [(sid, m) for m in subject.notifications]
        day_rows += [(sid, d.start, d.end) for d in subject.day_spans]
    bio.write_labels(labels, out_dir / "labels.csv")
    bio.write_truth(truth, out_dir / "truth.csv")
    bio._write_csv(out_dir / "notifications.csv",
                   pd.DataFrame(notif_rows, columns=("subject_id", "minute")))
    bio._write_csv(out_dir / "days.csv",
                   pd.DataFrame(day_rows, columns=("subject_id", "start_minute", "end_minute")))
    outputs += [out_dir / f for f in
                ("labels.csv", "truth.csv", "notifications.csv", "days.csv")]
    return outputs


def cmd_preprocess(cfg: dict, out_dir: Path) -> list[Path]:
    outputs: list[Path] = []
    (out_dir / "minutes").mkdir(parents=True, exist_ok=True)
    (out_dir / "masks").mkdir(parents=True, exist_ok=True)
    truth_path = out_dir / "truth.csv"
    truth = bio.read_truth(truth_path) if truth_path.exists() else {}
    stats_all: dict[str, dict] = {}
    for sid in _subject_ids(out_dir):
        bundle = bio.read_bundle(out_dir / "data" / sid, sid)
        table = build_minute_table(bundle)
        mask = build_mask(bundle, table)
        sleep = [span for span, kind in truth.get(sid, []) if kind == "sleep"]
        masked = apply_masks(table, mask, sleep_spans=sleep)
        bio.write_minute_table(masked, out_dir / "minutes" / f"{sid}.csv")
        bio.write_mask(mask.minutes, mask.hr_unusable, mask.eda_unusable,
                       mask.reasons, out_dir / "masks" / f"{sid}.csv")
        stats_all[sid] = {ch: list(v) for ch, v in user_channel_stats(masked).items()}
        outputs += [out_dir / "minutes" / f"{sid}.csv", out_dir / "masks" / f"{sid}.csv"]
    bio.write_json(stats_all, out_dir / "stats.json")
    outputs.append(out_dir / "stats.json")
    return outputs


def _anchor_labels(label_events) -> tuple[list[EventSpan], list[EventSpan]]:
    from .evaluate import _label_universe

    return _label_universe(label_events)


def _label_of(minute: int, stress, nostress) -> int | None:
    for s in stress:
        if s.start <= minute < s.end:
            return 1
    for s in nostress:
        if s.start <= minute < s.end:
            return 0
    return None


ALL_FEATURE_CHANNELS = CHANNELS + [f"{c}_z" for c in CHANNELS]


def cmd_featurize(cfg: dict, out_dir: Path) -> list[Path]:
    catalog = build_catalog()
    labels = bio.read_labels(out_dir / "labels.csv")
    stats_all = bio.read_json(out_dir / "stats.json")
    sids, anchors, ys, rows = [], [], [], []
    for sid in _subject_ids(out_dir):
        table = bio.read_minute_table(out_dir / "minutes" / f"{sid}.csv")
        stats = {ch: tuple(v) for ch, v in stats_all[sid].items()}
        norm = normalize_per_user(table, stats)
        stress, nostress = _anchor_labels(labels.get(sid, []))
        for w in make_windows(norm, ALL_FEATURE_CHANNELS, GROUP_NAMES):
            y = _label_of(w.anchor, stress, nostress)
            if y is None:
                continue
            sids.append(sid)
            anchors.append(w.anchor)
            ys.append(y)
            rows.append(aggregate_window(w, ALL_FEATURE_CHANNELS, catalog))
    if not rows:
        raise DataError("no labeled windows produced; nothing to featurize")
    matrix = np.vstack(rows)
    names = [d.name for d in catalog]
    bio.write_features(out_dir / "features.csv", sids, anchors, ys, names, matrix)
    return [out_dir / "features.csv"]


def cmd_train(cfg: dict, out_dir: Path) -> list[Path]:
    subjects, anchors, labels, names, X = bio.read_features(out_dir / "features.csv")
    catalog = build_catalog()
    if names != [d.name for d in catalog]:
        raise DataError(f"{out_dir / 'features.csv'}: feature columns do not match the catalog")
    result = loso_cv(
        X, labels.astype(int), subjects, anchors, catalog,
        lam=cfg["train"]["lam"], seed=cfg["train"]["seed"],
    )
    models = {
        sid: {tier: model.to_dict() for tier, model in tiers.items()}
        for sid, tiers in result.fold_models.items()
    }
    bio.write_json({"format_version": 1, "subjects": models}, out_dir / "models.json")
    oof = pd.DataFrame({"subject_id": subjects, "anchor_minute": anchors,
                        "label": labels.astype(int)})
    for tier in TIERS:
        oof[f"p_{tier}"] = result.probs[tier]
    bio._write_csv(out_dir / "oof.csv", oof)
    return [out_dir / "models.json", out_dir / "oof.csv"]


def cmd_predict(cfg: dict, out_dir: Path) -> list[Path]:
    mode = cfg["predict"]["mode"]
    threshold = PRODUCTION_THRESHOLD if mode == "production" else EVALUATION_THRESHOLD
    model_doc = bio.read_json(out_dir / "models.json")
    stats_all = bio.read_json(out_dir / "stats.json")
    pred_rows, events = [], {}
    for sid in _subject_ids(out_dir):
        if sid not in model_doc["subjects"]:
            raise DataError(f"models.json: no fold models for subject {sid}")
        tiers = {
            tier: TieredModel.from_dict(doc)
            for tier, doc in model_doc["subjects"][sid].items()
        }
        for model in tiers.values():
            model.threshold = threshold
        cascade = ModelCascade(tiers=tiers)
        table = bio.read_minute_table(out_dir / "minutes" / f"{sid}.csv")
        stats = {ch: tuple(v) for ch, v in stats_all[sid].items()}
        norm = normalize_per_user(table, stats)
        tier_prob_maps: dict[str, dict[int, float]] = {}
        for tier in TIERS:
            if tier not in tiers:
                continue
            model = tiers[tier]
            windows = make_windows(norm, ALL_FEATURE_CHANNELS, TIER_GROUPS[tier])
            if windows:
                M = np.vstack(
                    [aggregate_window(w, ALL_FEATURE_CHANNELS, model.descriptors)
                     for w in windows]
                )
                probs = model.predict_proba(M)
            else:
                probs = np.empty(0)
            tier_prob_maps[tier] = {
                w.anchor: float(p) for w, p in zip(windows, probs)
            }
        flags = np.zeros(norm.minutes.size, dtype=bool)
        for i, minute in enumerate(norm.minutes):
            group_valid = {g: bool(norm.validity[g][i]) for g in GROUP_NAMES}
            tier_probs = {
                t: tier_prob_maps.get(t, {}).get(int(minute)) for t in TIERS
            }
            pred = cascade_predict(int(minute), group_valid, tier_probs, cascade)
            flags[i] = pred.flag
            pred_rows.append((sid, pred.minute, pred.probability, pred.tier_used, pred.flag))
        events[sid] = smooth_events(flags, norm.minutes)
    bio.write_predictions(out_dir / "predictions.csv", pred_rows)
    bio.write_events(events, out_dir / "events.csv")
    return [out_dir / "predictions.csv", out_dir / "events.csv"]


def _tier_metrics(oof: pd.DataFrame, threshold: float) -> dict[str, dict]:
    out = {}
    y = oof["label"].to_numpy(int) == 1
    for tier in TIERS:
        p = oof[f"p_{tier}"].to_numpy(float)
        have = np.isfinite(p)
        if not np.any(have):
            continue
        try:
            ms = compute_metrics(p[have] >= threshold, y[have], probs=p[have])
        except MetricError:
            continue
        out[tier] = {k: v for k, v in ms.as_dict().items() if v is not None}
    return out


def cmd_evaluate(cfg: dict, out_dir: Path) -> list[Path]:
    mode = cfg["predict"]["mode"]
    threshold = PRODUCTION_THRESHOLD if mode == "production" else EVALUATION_THRESHOLD
    events = bio.read_events(out_dir / "events.csv")
    labels = bio.read_labels(out_dir / "labels.csv")
    days = bio.read_events(out_dir / "days.csv")
    tol = cfg["evaluate"]["tolerance"]
    per_subject = {}
    tp = fn = fp = tn = 0
    for sid in sorted(labels):
        se = SubjectEval(
            pred_events=events.get(sid, []),
            label_events=labels[sid],
            day_spans=days.get(sid, []),
        )
        per_subject[sid] = se
        adj = adjust_predictions(se.pred_events, se.label_events, tol)
        a, b, c, d = confusion_from_events(adj, se.label_events)
        tp, fn, fp, tn = tp + a, fn + b, fp + c, tn + d
    actual = metrics_from_counts(tp, fn, fp, tn)
    perm = permutation_test(
        per_subject,
        n=cfg["evaluate"]["iterations"],
        master_seed=cfg["synth"]["master_seed"],
        tolerance=tol,
    )
    oof = pd.read_csv(out_dir / "oof.csv", dtype={"subject_id": str})
    report = {
        "config": cfg,
        "seed": cfg["synth"]["master_seed"],
        "mode": mode,
        "threshold": threshold,
        "event_metrics": {k: v for k, v in actual.as_dict().items() if v is not None},
        "tier_metrics": _tier_metrics(oof, threshold),
        "permutation": {
            "n_iterations": perm.n_iterations,
            "null_mean": perm.null_mean,
            "p_values": perm.p_values,
        },
    }
    bio.write_json(report, out_dir / "report.json")
    return [out_dir / "report.json"]


SVG_ROW_H = 26
SVG_W = 900


def _svg_rects(spans, lo, hi, y, color, height=8):
    parts = []
    scale = SVG_W / max(hi - lo, 1)
    for s in spans:
        x = (s.start - lo) * scale
        w = max(s.duration * scale, 1.0)
        parts.append(
            f'<rect x="{x:.2f}" y="{y}" width="{w:.2f}" height="{height}" fill="{color}"/>'
        )
    return parts


def cmd_report(cfg: dict, out_dir: Path) -> list[Path]:
    report = bio.read_json(out_dir / "report.json")
    rows = []
    for tier in TIERS:
        for metric, value in sorted(report["tier_metrics"].get(tier, {}).items()):
            rows.append((tier, metric, f"{value:.10g}"))
    for metric, value in sorted(report["event_metrics"].items()):
        rows.append(("events_adjusted", metric, f"{value:.10g}"))
    bio._write_csv(out_dir / "report.csv",
                   pd.DataFrame(rows, columns=("model", "metric", "value")))
    outputs = [out_dir / "report.csv"]
    if cfg["report"]["svg"]:
        events = bio.read_events(out_dir / "events.csv")
        labels = bio.read_labels(out_dir / "labels.csv")
        sids = sorted(labels)
        parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_W + 120}" '
            f'height="{len(sids) * SVG_ROW_H + 20}">'
        ]
        for r, sid in enumerate(sids):
            y0 = 10 + r * SVG_ROW_H
            parts.append(
                f'<text x="4" y="{y0 + 12}" font-size="10" font-family="monospace">{sid}</text>'
            )
            stress, nostress = _anchor_labels(labels[sid])
            lo = min((s.start for s in stress + nostress), default=0)
            hi = max((s.end for s in stress + nostress), default=1)
            g = [f'<g transform="translate(110,0)">']
            g += _svg_rects(nostress, lo, hi, y0, "#cccccc")
            g += _svg_rects(stress, lo, hi, y0, "#2a9d2a")
            g += _svg_rects(merge_spans(events.get(sid, [])), lo, hi, y0 + 10, "#d03030")
            g.append("</g>")
            parts += g
        parts.append("</svg>")
        bio._atomic_write_text(out_dir / "report.svg", "\n".join(parts) + "\n")
        outputs.append(out_dir / "report.svg")
    return outputs


COMMANDS = {
    "synth": cmd_synth,
    "preprocess": cmd_preprocess,
    "featurize": cmd_featurize,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


# ---------------------------------------------------------------------------
# Entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bodyresponse",
        description="Wearable stress-detection pipeline (batch).",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("-c", "--config", required=True, help="INI config file")
        p.add_argument("--seed", type=int, default=None, help="override master seed")
        p.add_argument("--mode", choices=("evaluation", "production"), default=None)
        p.add_argument("--jobs", type=int, default=1,
                       help="worker count (stages currently run single-process)")
    return parser


def run(argv: list[str]) -> int:
    args = build_parser().parse_args(argv)
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg["synth"]["master_seed"] = args.seed
        cfg["train"]["seed"] = args.seed
    if args.mode is not None:
        cfg["predict"]["mode"] = args.mode
    out_dir = Path(cfg["paths"]["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    inputs = _check_upstream(out_dir, args.command)
    outputs = COMMANDS[args.command](cfg, out_dir)
    _write_manifest(out_dir, args.command, inputs, outputs, cfg)
    return 0


def main() -> int:
    try:
        return run(sys.argv[1:])
    except (ConfigError, InvalidLabel) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (DataError, MissingData, AlignmentError, TrainError, SelectionError,
            MetricError, PlacementError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - internal failures
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
