"""31-minute windowing, per-user normalization, the aggregation-function
catalog, and per-group feature selection.

The catalog ships twelve aggregation functions in an extensible registry;
each descriptor pins the exact reference semantics so an independent
brute-force oracle can check every value.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .core import CHANNEL_GROUP, CHANNELS, ConfigError, GROUP_NAMES, MinuteTable

WINDOW_MINUTES = 31
# "at least 20%" of 31 minutes, read strictly: ceil(0.2 * 31) = 7
MIN_VALID_MINUTES = 7
TOP_PER_GROUP = 20


class SelectionError(ValueError):
    """Feature selection needs both classes present."""


# ---------------------------------------------------------------------------
# Aggregation functions
#
# x is a 1-D float array (one channel over one window). Parameter values are
# fixed in the catalog below. Reference semantics:
#   mean_change            (x[-1] - x[0]) / (n - 1)
#   number_cross_m         sign alternations of (x > m)
#   energy_ratio_by_chunks sum(chunk_i^2) / sum(x^2), chunks via array_split
#   index_mass_quantile    (1 + first index where cumulative |x| mass >= q) / n
#   last_location_of_min   (1 + last index of the minimum) / n
#   quantile               linear interpolation between closest ranks
#   number_peaks           values strictly greater than n neighbors each side
#   change_quantiles       mean (abs) consecutive change inside the
#                          [ql, qh]-quantile corridor, 0 if empty
#   agg_linear_trend       OLS over per-chunk aggregates vs chunk index,
#                          trailing partial chunks discarded
#   linear_trend           OLS of x vs 0..n-1

def _ols(y: np.ndarray) -> tuple[float, float]:
    n = y.size
    t = np.arange(n, dtype=float)
    tc = t - t.mean()
    denom = float((tc**2).sum())
    slope = float((tc * y).sum() / denom) if denom > 0 else 0.0
    intercept = float(y.mean() - slope * t.mean())
    return slope, intercept


def f_sum_values(x, **_):
    return float(np.sum(x))


def f_median(x, **_):
    return float(np.median(x))


def f_quantile(x, q, **_):
    return float(np.quantile(x, q))


def f_mean_change(x, **_):
    if x.size < 2:
        return 0.0
    return float((x[-1] - x[0]) / (x.size - 1))


def f_number_cross_m(x, m, **_):
    if m == "median":
        m = float(np.median(x))
    above = x > m
    return float(np.count_nonzero(np.diff(above)))


def f_number_peaks(x, n, **_):
    count = 0
    for i in range(n, x.size - n):
        left = x[i - n : i]
        right = x[i + 1 : i + n + 1]
        if np.all(x[i] > left) and np.all(x[i] > right):
            count += 1
    return float(count)


def f_energy_ratio_by_chunks(x, num_segments, segment_focus, **_):
    total = float(np.sum(x**2))
    chunk = np.array_split(x, num_segments)[segment_focus]
    if total == 0.0:
        return 0.0
    return float(np.sum(chunk**2) / total)


def f_index_mass_quantile(x, q, **_):
    mass = np.abs(x)
    total = float(mass.sum())
    if total == 0.0:
        return 1.0 / x.size
    frac = np.cumsum(mass) / total
    return float((np.argmax(frac >= q) + 1) / x.size)


def f_last_location_of_minimum(x, **_):
    return float((x.size - np.argmin(x[::-1])) / x.size)


def f_change_quantiles(x, ql, qh, isabs, **_):
    lo, hi = np.quantile(x, ql), np.quantile(x, qh)
    inside = (x >= lo) & (x <= hi)
    both = inside[:-1] & inside[1:]
    if not np.any(both):
        return 0.0
    changes = np.diff(x)[both]
    if isabs:
        changes = np.abs(changes)
    return float(changes.mean())


def f_linear_trend(x, attr, **_):
    slope, intercept = _ols(x)
    return slope if attr == "slope" else intercept


def f_agg_linear_trend(x, chunk_len, attr, f_agg="mean", **_):
    k = x.size // chunk_len
    if k < 2:
        return 0.0
    agg = x[: k * chunk_len].reshape(k, chunk_len)
    if f_agg == "mean":
        y = agg.mean(axis=1)
    else:
        raise ConfigError(f"unknown chunk aggregate {f_agg!r}")
    slope, intercept = _ols(y)
    return slope if attr == "slope" else intercept


REGISTRY = {
    "sum_values": f_sum_values,
    "median": f_median,
    "quantile": f_quantile,
    "mean_change": f_mean_change,
    "number_cross_m": f_number_cross_m,
    "number_peaks": f_number_peaks,
    "energy_ratio_by_chunks": f_energy_ratio_by_chunks,
    "index_mass_quantile": f_index_mass_quantile,
    "last_location_of_minimum": f_last_location_of_minimum,
    "change_quantiles": f_change_quantiles,
    "linear_trend": f_linear_trend,
    "agg_linear_trend": f_agg_linear_trend,
}


@dataclass(frozen=True)
class FeatureDescriptor:
    channel: str
    function: str
    params: tuple[tuple[str, object], ...]  # sorted (key, value) pairs
    attribute: str = ""

    @property
    def name(self) -> str:
        ptxt = ",".join(f"{k}={v}" for k, v in self.params)
        return f"{self.channel}|{self.function}|{ptxt}|{self.attribute}"

    @property
    def group(self) -> str:
        base = self.channel[:-2] if self.channel.endswith("_z") else self.channel
        return CHANNEL_GROUP[base]

    def evaluate(self, x: np.ndarray) -> float:
        fn = REGISTRY.get(self.function)
        if fn is None:
            raise ConfigError(f"unknown aggregation function {self.function!r}")
        kwargs = dict(self.params)
        if self.attribute:
            kwargs["attr"] = self.attribute
        return fn(np.asarray(x, dtype=float), **kwargs)


def _p(**kwargs) -> tuple[tuple[str, object], ...]:
    return tuple(sorted(kwargs.items()))


def channel_descriptors(channel: str) -> list[FeatureDescriptor]:
    """The fixed parameter grid: 20 descriptors per channel."""
    d = FeatureDescriptor
    cross_m = 0.0 if channel.endswith("_z") else "median"
    out = [
        d(channel, "sum_values", _p()),
        d(channel, "median", _p()),
        d(channel, "quantile", _p(q=0.2)),
        d(channel, "quantile", _p(q=0.8)),
        d(channel, "mean_change", _p()),
        d(channel, "number_cross_m", _p(m=cross_m)),
        d(channel, "number_peaks", _p(n=3)),
        d(channel, "index_mass_quantile", _p(q=0.5)),
        d(channel, "last_location_of_minimum", _p()),
        d(channel, "change_quantiles", _p(ql=0.2, qh=0.8, isabs=True)),
        d(channel, "change_quantiles", _p(ql=0.2, qh=0.8, isabs=False)),
        d(channel, "linear_trend", _p(), "slope"),
        d(channel, "linear_trend", _p(), "intercept"),
        d(channel, "agg_linear_trend", _p(chunk_len=5, f_agg="mean"), "slope"),
        d(channel, "agg_linear_trend", _p(chunk_len=5, f_agg="mean"), "intercept"),
    ]
    out += [
        d(channel, "energy_ratio_by_chunks", _p(num_segments=5, segment_focus=i))
        for i in range(5)
    ]
    return out


def build_catalog(channels: list[str] | None = None) -> list[FeatureDescriptor]:
    if channels is None:
        channels = CHANNELS + [f"{c}_z" for c in CHANNELS]
    out = []
    for ch in channels:
        out.extend(channel_descriptors(ch))
    return out


# ---------------------------------------------------------------------------
# Per-user normalization

def normalize_per_user(table: MinuteTable, stats_by_channel: dict[str, tuple[float, float]]) -> MinuteTable:
    """Append per-user z-scored versions of the 14 channels (28 total).

    Channels with (near-)zero std z-score to 0 everywhere. Validity flags
    are shared between a raw channel and its z twin.
    """
    missing = [c for c in CHANNELS if c not in stats_by_channel]
    if missing:
        raise ConfigError(f"user stats missing channels: {missing}")
    out = table.copy()
    for ch in CHANNELS:
        mean, std = stats_by_channel[ch]
        col = table.channels[ch]
        if std < 1e-6:
            z = np.where(np.isfinite(col), 0.0, np.nan)
        else:
            z = (col - mean) / std
        out.channels[f"{ch}_z"] = z
    return out


# ---------------------------------------------------------------------------
# Windowing

@dataclass
class Window:
    anchor: int
    values: np.ndarray  # (31, C), oldest -> anchor, fully imputed
    availability: float


def _impute_column(col: np.ndarray) -> np.ndarray:
    """Linear interpolation of interior gaps; leading gaps backfilled."""
    out = col.copy()
    valid = np.isfinite(out)
    if not np.any(valid):
        return out
    idx = np.flatnonzero(valid)
    out[: idx[0]] = out[idx[0]]
    interior = np.flatnonzero(~valid)
    interior = interior[interior > idx[0]]
    if interior.size:
        out[interior] = np.interp(interior, idx, out[idx])
    return out


def make_windows(table: MinuteTable, channels: list[str] | None = None,
                 required_groups: tuple[str, ...] = GROUP_NAMES) -> list[Window]:
    """One candidate window per minute, stride 1, keeping those with a valid
    anchor minute and at least 7 of 31 valid minutes."""
    if channels is None:
        channels = [c for c in table.channels]
    valid = np.ones(table.minutes.size, dtype=bool)
    for g in required_groups:
        valid &= table.validity[g]
    mat = np.column_stack([table.channels[c] for c in channels])
    windows = []
    n = table.minutes.size
    for i in range(n):
        if not valid[i]:
            continue
        lo = i - WINDOW_MINUTES + 1
        if lo >= 0:
            vcount = int(np.count_nonzero(valid[lo : i + 1]))
            block = mat[lo : i + 1]
        else:
            vcount = int(np.count_nonzero(valid[: i + 1]))
            pad = np.full((-lo, len(channels)), np.nan)
            block = np.vstack([pad, mat[: i + 1]])
        if vcount < MIN_VALID_MINUTES:
            continue
        vals = block.copy()
        for c in range(vals.shape[1]):
            vals[:, c] = _impute_column(vals[:, c])
        if not np.all(np.isfinite(vals)):
            continue
        windows.append(
            Window(anchor=int(table.minutes[i]), values=vals,
                   availability=vcount / WINDOW_MINUTES)
        )
    return windows


def aggregate_window(window: Window, channels: list[str],
                     catalog: list[FeatureDescriptor]) -> np.ndarray:
    """Evaluate the catalog over one imputed window, in descriptor order."""
    col = {c: window.values[:, i] for i, c in enumerate(channels)}
    out = np.empty(len(catalog))
    for j, desc in enumerate(catalog):
        if desc.channel not in col:
            raise ConfigError(f"descriptor channel {desc.channel!r} not in window")
        out[j] = desc.evaluate(col[desc.channel])
    return out


# ---------------------------------------------------------------------------
# Feature selection

def bh_adjust(p: np.ndarray) -> np.ndarray:
    """Benjamini-Hochberg adjusted p-values (step-up, monotone)."""
    p = np.asarray(p, dtype=float)
    m = p.size
    order = np.argsort(p, kind="stable")
    ranked = p[order] * m / np.arange(1, m + 1)
    ranked = np.minimum.accumulate(ranked[::-1])[::-1]
    out = np.empty(m)
    out[order] = np.minimum(ranked, 1.0)
    return out


def bh_reject(p: np.ndarray, alpha: float) -> np.ndarray:
    """Classic BH rejection mask at level alpha."""
    return bh_adjust(p) <= alpha


def welch_p_values(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Two-sample Welch t-test p-value per column; degenerate columns get 1."""
    a, b = X[y == 1], X[y == 0]
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise SelectionError("both classes required")
    with np.errstate(invalid="ignore", divide="ignore"), warnings.catch_warnings():
        # constant columns trip scipy's precision-loss warning; they get p=1
        warnings.simplefilter("ignore", RuntimeWarning)
        _, p = stats.ttest_ind(a, b, equal_var=False)
    p = np.asarray(p, dtype=float)
    p[~np.isfinite(p)] = 1.0
    return p


def select_features(X: np.ndarray, y: np.ndarray,
                    descriptors: list[FeatureDescriptor],
                    top_per_group: int = TOP_PER_GROUP) -> list[FeatureDescriptor]:
    """BH-corrected univariate ranking; top-k per signal group, ties broken
    by descriptor name."""
    if len(descriptors) != X.shape[1]:
        raise ConfigError("descriptor count does not match feature matrix")
    p_adj = bh_adjust(welch_p_values(X, y))
    selected = []
    for g in GROUP_NAMES:
        members = [
            (p_adj[j], d.name, d) for j, d in enumerate(descriptors) if d.group == g
        ]
        members.sort(key=lambda t: (t[0], t[1]))
        selected.extend(d for _, _, d in members[:top_per_group])
    return selected
