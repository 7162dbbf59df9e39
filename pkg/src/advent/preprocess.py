"""Per-vehicle feature construction.

Two views of a vehicle's inbound traffic: per-second count series windowed
into lagged feature rows for onset detection, and per-neighbor counts over
fixed intervals for the MAD-based node detector.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .scenario import EventStream, GroundTruth

NORMAL_INTERVAL_S = 60.0
ALERT_INTERVAL_S = 10.0
DEFAULT_LAGS = 10

__all__ = [
    "CountSeries",
    "FeatureRow",
    "NeighborCounts",
    "build_count_series",
    "windowize",
    "windowize_arrays",
    "interval_counts",
    "export_feature_rows",
    "NORMAL_INTERVAL_S",
    "ALERT_INTERVAL_S",
    "DEFAULT_LAGS",
]


@dataclass
class CountSeries:
    vehicle: int
    counts: dict[int, int] = field(default_factory=dict)

    def total(self) -> int:
        return sum(self.counts.values())


@dataclass
class FeatureRow:
    t: int
    features: np.ndarray  # [Count(t), Count(t-1), ..., Count(t-(a-1))]
    label: int  # 1 = attack in progress at second t
    synthetic: bool = False


@dataclass
class NeighborCounts:
    vehicle: int
    interval: tuple[float, float]
    per_sender: dict[int, int] = field(default_factory=dict)


def build_count_series(events: EventStream, vehicle: int) -> CountSeries:
    """Per-second inbound packet counts; seconds with no traffic are absent."""
    inbound = events.inbound(vehicle)
    if len(inbound) == 0:
        return CountSeries(vehicle=vehicle)
    secs = np.floor(inbound.times).astype(np.int64)
    uniq, cnt = np.unique(secs, return_counts=True)
    return CountSeries(vehicle=vehicle, counts={int(t): int(c) for t, c in zip(uniq, cnt)})


def _presence_seconds(truth: GroundTruth, vehicle: int) -> tuple[int, int]:
    enter, exit_ = truth.presence[vehicle]
    first = int(np.floor(enter))
    last = int(np.ceil(exit_))  # exclusive
    return first, last


def windowize_arrays(
    series: CountSeries, truth: GroundTruth, a: int = DEFAULT_LAGS
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Array form of windowize: (seconds, features (n, a), labels (n,))."""
    if a < 1:
        raise ValueError("a must be >= 1")
    first, last = _presence_seconds(truth, series.vehicle)
    n = last - first
    if n <= 0:
        return np.empty(0, dtype=int), np.empty((0, a)), np.empty(0, dtype=int)
    counts = np.zeros(n, dtype=np.float64)
    for t, c in series.counts.items():
        if first <= t < last:
            counts[t - first] = c
    # Lags before the vehicle's first second are zero-padded.
    padded = np.concatenate([np.zeros(a - 1), counts])
    x = np.stack([padded[a - 1 - lag : a - 1 - lag + n] for lag in range(a)], axis=1)
    seconds = np.arange(first, last)
    labels = np.zeros(n, dtype=np.int64)
    for ws, we in truth.attack_windows:
        labels[(seconds >= ws) & (seconds < we)] = 1
    return seconds, x, labels


def windowize(series: CountSeries, truth: GroundTruth, a: int = DEFAULT_LAGS) -> list[FeatureRow]:
    """One row per present second: current count plus a-1 lagged counts.

    Label is positive whenever the second falls in any attack window while the
    vehicle is present, regardless of whether flood traffic reached it.
    """
    seconds, x, labels = windowize_arrays(series, truth, a)
    return [
        FeatureRow(t=int(t), features=x[i], label=int(labels[i]))
        for i, t in enumerate(seconds)
    ]


def interval_counts(
    events: EventStream,
    vehicle: int,
    mode: str = "normal",
    *,
    normal_interval_s: float = NORMAL_INTERVAL_S,
    alert_interval_s: float = ALERT_INTERVAL_S,
    anchor_s: float | None = None,
) -> list[NeighborCounts]:
    """Per-sender inbound counts over consecutive fixed-length intervals.

    Intervals are anchored at the vehicle's first observed second unless an
    explicit anchor is given (the runner anchors alert intervals at attack
    window starts).
    """
    if mode == "normal":
        length = normal_interval_s
    elif mode == "alert":
        length = alert_interval_s
    else:
        raise ValueError(f"unknown mode {mode!r}")
    inbound = events.inbound(vehicle)
    if len(inbound) == 0:
        return []
    if anchor_s is None:
        anchor_s = float(np.floor(inbound.times.min()))
    idx = np.floor((inbound.times - anchor_s) / length).astype(np.int64)
    keep = idx >= 0
    idx = idx[keep]
    senders = inbound.senders[keep]
    if len(idx) == 0:
        return []
    out: list[NeighborCounts] = []
    for i in np.unique(idx):
        mask = idx == i
        uniq, cnt = np.unique(senders[mask], return_counts=True)
        start = anchor_s + float(i) * length
        out.append(
            NeighborCounts(
                vehicle=vehicle,
                interval=(start, start + length),
                per_sender={int(s): int(c) for s, c in zip(uniq, cnt)},
            )
        )
    return out


def export_feature_rows(path, rows: list[FeatureRow], *, include_synthetic_flag: bool = False) -> None:
    """Write rows as CSV: t,f0..f9,label[,synthetic]."""
    if rows:
        a = len(rows[0].features)
    else:
        a = DEFAULT_LAGS
    header = ["t"] + [f"f{i}" for i in range(a)] + ["label"]
    if include_synthetic_flag:
        header.append("synthetic")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            feats = ",".join(repr(float(v)) for v in row.features)
            line = f"{row.t},{feats},{row.label}"
            if include_synthetic_flag:
                line += f",{1 if row.synthetic else 0}"
            fh.write(line + "\n")
