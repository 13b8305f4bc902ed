"""Class-weighted L0-penalized logistic regression, LOSO cross-validation,
the three-tier model cascade, and event post-processing.

The sparse fit uses proximal gradient descent with hard thresholding: after
each gradient step a weight survives only if its quadratic-model loss
reduction exceeds the penalty, i.e. |w_j| > sqrt(2 * step * lam). Training is
deterministic for a given seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ConfigError, DataError, EventSpan
from .featurize import FeatureDescriptor, select_features

TIERS = ("eda_st", "eda_st_hr", "eda_st_hr_hrv")
TIER_GROUPS = {
    "eda_st": ("EDA", "ST"),
    "eda_st_hr": ("EDA", "ST", "HR"),
    "eda_st_hr_hrv": ("EDA", "ST", "HR", "HRV"),
}

EVALUATION_THRESHOLD = 0.50
PRODUCTION_THRESHOLD = 0.72
MIN_EVENT_MINUTES = 3
STITCH_GAP_MINUTES = 5

MAX_ITER = 5000
LOSS_TOL = 1e-8


class TrainError(ValueError):
    """Training inputs cannot produce a model."""


class MetricError(ValueError):
    """Metric computation lacks the required label classes."""


def _sigmoid(z):
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class TieredModel:
    tier: str
    descriptors: list[FeatureDescriptor]
    weights: np.ndarray
    intercept: float
    threshold: float
    train_meta: dict = field(default_factory=dict)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return _sigmoid(X @ self.weights + self.intercept)

    def to_dict(self) -> dict:
        return {
            "tier": self.tier,
            "threshold": self.threshold,
            "descriptors": [
                {
                    "channel": d.channel,
                    "function": d.function,
                    "params": [[k, v] for k, v in d.params],
                    "attribute": d.attribute,
                }
                for d in self.descriptors
            ],
            "weights": [float(w) for w in self.weights],
            "intercept": float(self.intercept),
            "train_meta": self.train_meta,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "TieredModel":
        descs = [
            FeatureDescriptor(
                channel=d["channel"],
                function=d["function"],
                params=tuple((k, v) for k, v in d["params"]),
                attribute=d["attribute"],
            )
            for d in obj["descriptors"]
        ]
        return cls(
            tier=obj["tier"],
            descriptors=descs,
            weights=np.asarray(obj["weights"], dtype=float),
            intercept=float(obj["intercept"]),
            threshold=float(obj["threshold"]),
            train_meta=obj.get("train_meta", {}),
        )


@dataclass
class ModelCascade:
    tiers: dict[str, TieredModel]
    min_duration: int = MIN_EVENT_MINUTES
    stitch_gap: int = STITCH_GAP_MINUTES

    def to_dict(self) -> dict:
        return {
            "format_version": 1,
            "tiers": [self.tiers[t].to_dict() for t in TIERS if t in self.tiers],
            "postprocess": {
                "min_duration_min": self.min_duration,
                "stitch_gap_min": self.stitch_gap,
            },
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ModelCascade":
        tiers = {t["tier"]: TieredModel.from_dict(t) for t in obj["tiers"]}
        pp = obj.get("postprocess", {})
        return cls(
            tiers=tiers,
            min_duration=pp.get("min_duration_min", MIN_EVENT_MINUTES),
            stitch_gap=pp.get("stitch_gap_min", STITCH_GAP_MINUTES),
        )


@dataclass
class StressPrediction:
    minute: int
    probability: float | None
    tier_used: str | None
    flag: bool


# ---------------------------------------------------------------------------
# Training

def balanced_class_weights(y: np.ndarray) -> np.ndarray:
    """w_c = N / (2 * N_c) per sample."""
    n = y.size
    n_pos = int(np.sum(y == 1))
    n_neg = n - n_pos
    if n_pos == 0 or n_neg == 0:
        raise TrainError("both classes required")
    w = np.where(y == 1, n / (2.0 * n_pos), n / (2.0 * n_neg))
    return w


def _weighted_logistic_loss(X, y, w, beta, intercept):
    z = X @ beta + intercept
    # log(1 + exp(-s*z)) with s = +-1, numerically stable
    s = np.where(y == 1, 1.0, -1.0)
    m = -s * z
    return float(np.sum(w * np.logaddexp(0.0, m)) / np.sum(w))


def train_logreg(X: np.ndarray, y: np.ndarray, lam: float = 0.0, seed: int = 0,
                 max_iter: int = MAX_ITER, tol: float = LOSS_TOL,
                 threshold: float = EVALUATION_THRESHOLD,
                 tier: str = "eda_st_hr_hrv",
                 descriptors: list[FeatureDescriptor] | None = None) -> TieredModel:
    """Fit class-weighted logistic regression with an L0 penalty.

    Columns are standardized internally for optimization and the weights are
    de-standardized on output. The intercept is never penalized.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if not np.all(np.isfinite(X)):
        raise DataError("non-finite feature values")
    w = balanced_class_weights(y)
    wsum = w.sum()

    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd_safe = np.where(sd < 1e-12, 1.0, sd)
    Xs = (X - mu) / sd_safe

    n, d = Xs.shape
    # Lipschitz bound for the weighted mean logistic loss gradient
    Xw = Xs * np.sqrt(w)[:, None]
    L = 0.25 * (np.linalg.norm(Xw, 2) ** 2) / wsum + 0.25
    step = 1.0 / L
    hard = np.sqrt(2.0 * step * lam) if lam > 0 else 0.0

    beta = np.zeros(d)
    intercept = 0.0
    loss = _weighted_logistic_loss(Xs, y, w, beta, intercept)
    it = 0
    for it in range(max_iter):
        z = Xs @ beta + intercept
        p = _sigmoid(z)
        resid = w * (p - (y == 1))
        grad_beta = Xs.T @ resid / wsum
        grad_b = float(resid.sum() / wsum)
        beta = beta - step * grad_beta
        intercept -= step * grad_b
        if hard > 0:
            beta[np.abs(beta) < hard] = 0.0
        new_loss = (
            _weighted_logistic_loss(Xs, y, w, beta, intercept)
            + lam * int(np.count_nonzero(beta))
        )
        if abs(loss - new_loss) < tol:
            loss = new_loss
            break
        loss = new_loss

    weights = beta / sd_safe
    weights[sd < 1e-12] = 0.0
    b0 = intercept - float((mu * weights).sum())
    return TieredModel(
        tier=tier,
        descriptors=descriptors or [],
        weights=weights,
        intercept=b0,
        threshold=threshold,
        train_meta={
            "seed": seed,
            "lam": lam,
            "class_weights": "balanced",
            "iterations": it + 1,
            "final_loss": loss,
        },
    )


# ---------------------------------------------------------------------------
# LOSO cross-validation

@dataclass
class LosoResult:
    subjects: np.ndarray
    anchors: np.ndarray
    labels: np.ndarray
    probs: dict[str, np.ndarray]  # tier -> pooled out-of-fold probabilities
    fold_models: dict[str, dict[str, TieredModel]]  # subject -> tier -> model
    selected: dict[str, list[FeatureDescriptor]]  # subject -> fold selection


def loso_cv(X: np.ndarray, y: np.ndarray, subjects: np.ndarray,
            anchors: np.ndarray, descriptors: list[FeatureDescriptor],
            lam: float = 0.0, seed: int = 0,
            tiers: tuple[str, ...] = TIERS) -> LosoResult:
    """Leave-one-subject-out: feature selection and training re-run inside
    each fold; each subject predicted exactly once."""
    uniq = sorted(set(subjects.tolist()))
    if len(uniq) < 2:
        raise ConfigError("LOSO needs at least 2 subjects")
    name_to_col = {d.name: j for j, d in enumerate(descriptors)}
    probs = {t: np.full(y.size, np.nan) for t in tiers}
    fold_models: dict[str, dict[str, TieredModel]] = {}
    selected: dict[str, list[FeatureDescriptor]] = {}
    for held in uniq:
        test = subjects == held
        train = ~test
        sel = select_features(X[train], y[train], descriptors)
        selected[held] = sel
        fold_models[held] = {}
        for tier in tiers:
            groups = set(TIER_GROUPS[tier])
            tier_descs = [d for d in sel if d.group in groups]
            cols = [name_to_col[d.name] for d in tier_descs]
            model = train_logreg(
                X[train][:, cols], y[train], lam=lam, seed=seed,
                tier=tier, descriptors=tier_descs,
            )
            fold_models[held][tier] = model
            probs[tier][test] = model.predict_proba(X[test][:, cols])
    return LosoResult(
        subjects=subjects, anchors=anchors, labels=y,
        probs=probs, fold_models=fold_models, selected=selected,
    )


# ---------------------------------------------------------------------------
# Operating point selection

def _fpr_at(probs: np.ndarray, labels: np.ndarray, threshold: float) -> float:
    neg = labels == 0
    return float(np.mean(probs[neg] >= threshold))


def pin_fpr(probs: np.ndarray, labels: np.ndarray, target_fpr: float) -> float:
    """Smallest candidate threshold whose empirical FPR <= target."""
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels)
    if not np.any(labels == 0):
        raise MetricError("no negatives")
    candidates = np.unique(np.concatenate([[0.0], probs, np.nextafter(probs, np.inf)]))
    for c in candidates:
        if _fpr_at(probs, labels, c) <= target_fpr:
            return float(c)
    return float(candidates[-1])


# ---------------------------------------------------------------------------
# Cascade inference

def cascade_predict(minute: int, group_valid: dict[str, bool],
                    tier_probs: dict[str, float | None],
                    cascade: ModelCascade) -> StressPrediction:
    """Pick the largest tier whose input groups are all valid; abstain when
    even EDA+ST is unavailable. Tier choice depends only on validity flags."""
    for tier in reversed(TIERS):
        if tier not in cascade.tiers:
            continue
        if all(group_valid.get(g, False) for g in TIER_GROUPS[tier]):
            p = tier_probs.get(tier)
            if p is None:
                continue
            thr = cascade.tiers[tier].threshold
            return StressPrediction(minute=minute, probability=float(p),
                                    tier_used=tier, flag=bool(p >= thr))
    return StressPrediction(minute=minute, probability=None, tier_used=None, flag=False)


# ---------------------------------------------------------------------------
# Event post-processing

def smooth_events(flags: np.ndarray, minutes: np.ndarray | None = None,
                  min_duration: int = MIN_EVENT_MINUTES,
                  stitch_gap: int = STITCH_GAP_MINUTES) -> list[EventSpan]:
    """Discard flag runs shorter than 3 minutes, then stitch surviving events
    whose gap is strictly less than 5 minutes. Flags must sit on a contiguous
    minute axis; abstained minutes are false."""
    flags = np.asarray(flags, dtype=bool)
    n = flags.size
    if minutes is None:
        minutes = np.arange(n, dtype=np.int64)
    else:
        minutes = np.asarray(minutes, dtype=np.int64)
        if minutes.size != n:
            raise ConfigError("flags and minutes length mismatch")
        if n > 1 and not np.all(np.diff(minutes) == 1):
            raise ConfigError("minute axis not contiguous")
    # maximal runs of true flags
    padded = np.concatenate([[False], flags, [False]])
    starts = np.flatnonzero(padded[1:] & ~padded[:-1])
    ends = np.flatnonzero(~padded[1:] & padded[:-1])
    runs = [(s, e) for s, e in zip(starts, ends) if e - s >= min_duration]
    merged: list[list[int]] = []
    for s, e in runs:
        if merged and s - merged[-1][1] < stitch_gap:
            merged[-1][1] = e
        else:
            merged.append([s, e])
    base = int(minutes[0]) if n else 0
    return [EventSpan(base + s, base + e) for s, e in merged]
