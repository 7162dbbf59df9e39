"""Malicious-node detection via Median Absolute Deviation thresholds.

Each vehicle compares per-neighbor inbound counts against a MAD-based
rejection band; senders exceeding the upper bound are reported as suspected.
Only the upper bound triggers suspicion (the attack model is flooding); the
lower bound is computed for the stats but never flags anyone.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .preprocess import NeighborCounts

__all__ = [
    "MadParams",
    "SuspicionReport",
    "mad",
    "rejection_bounds",
    "detect",
    "report_to_dict",
    "report_from_dict",
    "report_to_json",
    "report_from_json",
]

CONSISTENCY_B = 1.4826
EXCLUSION_CE = 3.0


@dataclass(frozen=True)
class MadParams:
    b: float = CONSISTENCY_B
    ce: float = EXCLUSION_CE

    def __post_init__(self):
        if self.b <= 0:
            raise ValueError("b must be > 0")
        if self.ce <= 0:
            raise ValueError("ce must be > 0")


@dataclass
class SuspicionReport:
    reporter: int
    interval: tuple[float, float]
    suspected: set[int] = field(default_factory=set)
    stats: dict[str, float] = field(default_factory=dict)  # median, mad, upper_tr


def _median(values: list[float]) -> float:
    s = sorted(values)
    n = len(s)
    mid = n // 2
    if n % 2:
        return float(s[mid])
    return 0.5 * (s[mid - 1] + s[mid])


def mad(values, b: float = CONSISTENCY_B) -> float:
    """b * median(|x - median(x)|)."""
    values = list(values)
    if not values:
        raise ValueError("mad of empty list")
    m = _median(values)
    return b * _median([abs(v - m) for v in values])


def rejection_bounds(values, params: MadParams = MadParams()) -> tuple[float, float]:
    """(median - ce*MAD, median + ce*MAD)."""
    values = list(values)
    if not values:
        raise ValueError("rejection_bounds of empty list")
    m = _median(values)
    spread = params.ce * mad(values, params.b)
    return (m - spread, m + spread)


def detect(counts: NeighborCounts, params: MadParams = MadParams()) -> SuspicionReport:
    """Flag senders whose count strictly exceeds the upper rejection bound.

    With fewer than two neighbors no detection is possible; the report is
    empty rather than an error since sparse neighborhoods are normal right
    after a vehicle joins.
    """
    senders = sorted(counts.per_sender)
    values = [float(counts.per_sender[s]) for s in senders]
    if len(values) < 2:
        stats = {}
        if values:
            stats = {"median": values[0], "mad": 0.0, "upper_tr": values[0]}
        return SuspicionReport(reporter=counts.vehicle, interval=counts.interval,
                               suspected=set(), stats=stats)
    m = _median(values)
    spread = params.ce * mad(values, params.b)
    upper = m + spread
    suspected = {s for s, v in zip(senders, values) if v > upper}
    return SuspicionReport(
        reporter=counts.vehicle,
        interval=counts.interval,
        suspected=suspected,
        stats={"median": m, "mad": mad(values, params.b), "upper_tr": upper},
    )


def report_to_dict(r: SuspicionReport) -> dict:
    return {
        "reporter": r.reporter,
        "interval": [r.interval[0], r.interval[1]],
        "suspected": sorted(r.suspected),
        "stats": {"M": r.stats.get("median"), "mad": r.stats.get("mad"),
                  "upper_tr": r.stats.get("upper_tr")},
    }


def report_from_dict(d: dict) -> SuspicionReport:
    stats = d.get("stats") or {}
    mapped = {}
    if stats.get("M") is not None:
        mapped = {"median": float(stats["M"]), "mad": float(stats["mad"]),
                  "upper_tr": float(stats["upper_tr"])}
    return SuspicionReport(
        reporter=int(d["reporter"]),
        interval=(float(d["interval"][0]), float(d["interval"][1])),
        suspected=set(int(v) for v in d.get("suspected", [])),
        stats=mapped,
    )


def report_to_json(r: SuspicionReport) -> str:
    return json.dumps(report_to_dict(r), sort_keys=True)


def report_from_json(s: str) -> SuspicionReport:
    return report_from_dict(json.loads(s))
