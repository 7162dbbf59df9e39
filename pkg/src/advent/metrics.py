"""Confusion-matrix bookkeeping and the evaluation metrics for both tiers.

DR = TP/(TP+FN), FAR = FP/(FP+TN), FNR = FN/(TP+FN), precision, recall, F1.
Zero-denominator metrics yield NaN so they can be excluded from averages
instead of distorting them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .scenario import GroundTruth

__all__ = [
    "Confusion",
    "EvalReport",
    "score",
    "mnd_confusion",
    "first_second_rate",
    "macro_average",
]


@dataclass
class Confusion:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    def __add__(self, other: "Confusion") -> "Confusion":
        return Confusion(self.tp + other.tp, self.tn + other.tn,
                         self.fp + other.fp, self.fn + other.fn)

    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass
class EvalReport:
    dr: float = math.nan
    far: float = math.nan
    fnr: float = math.nan
    precision: float = math.nan
    recall: float = math.nan
    f1: float = math.nan
    first_second_rate: float = math.nan
    timing: dict[str, float] = field(default_factory=dict)

    def metrics_dict(self) -> dict[str, float]:
        return {
            "dr": self.dr,
            "far": self.far,
            "fnr": self.fnr,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "first_second_rate": self.first_second_rate,
        }


def _ratio(num: int, den: int) -> float:
    return num / den if den > 0 else math.nan


def score(c: Confusion) -> EvalReport:
    dr = _ratio(c.tp, c.tp + c.fn)
    far = _ratio(c.fp, c.fp + c.tn)
    fnr = _ratio(c.fn, c.tp + c.fn)
    precision = _ratio(c.tp, c.tp + c.fp)
    recall = dr
    if math.isnan(precision) or math.isnan(recall) or precision + recall == 0:
        f1 = math.nan if (math.isnan(precision) or math.isnan(recall)) else 0.0
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return EvalReport(dr=dr, far=far, fnr=fnr, precision=precision, recall=recall, f1=f1)


def mnd_confusion(
    broadcast_lists: list[set[int]],
    truth: GroundTruth,
    vehicles_present: list[set[int]],
) -> Confusion:
    """Sum per-round confusion: listed/unlisted x attacker/benign among present.

    `vehicles_present` gives, per aggregation round, the vehicles present for
    the whole round; rounds and lists must be aligned.
    """
    if truth is None:
        raise ValueError("ground truth required for MND evaluation")
    if len(broadcast_lists) != len(vehicles_present):
        raise ValueError("one present-set per broadcast list required")
    c = Confusion()
    for listed, present in zip(broadcast_lists, vehicles_present):
        for v in present:
            if v in truth.attackers:
                if v in listed:
                    c.tp += 1
                else:
                    c.fn += 1
            else:
                if v in listed:
                    c.fp += 1
                else:
                    c.tn += 1
    return c


def first_second_rate(onset_flags: dict[int, set[int]], truth: GroundTruth) -> float:
    """Fraction of attack windows flagged by any vehicle at their first second.

    `onset_flags` maps vehicle -> set of seconds at which it declared attack.
    Zero-length windows are skipped.
    """
    windows = [(s, e) for s, e in truth.attack_windows if e > s]
    if not windows:
        return math.nan
    flagged = 0
    all_flags: set[int] = set()
    for secs in onset_flags.values():
        all_flags |= secs
    for s, _ in windows:
        if int(math.floor(s)) in all_flags:
            flagged += 1
    return flagged / len(windows)


def macro_average(reports: list[EvalReport]) -> EvalReport:
    """NaN-aware mean of each metric across per-vehicle reports."""
    out = EvalReport()
    if not reports:
        return out
    for name in ("dr", "far", "fnr", "precision", "recall", "f1", "first_second_rate"):
        vals = [getattr(r, name) for r in reports if not math.isnan(getattr(r, name))]
        setattr(out, name, sum(vals) / len(vals) if vals else math.nan)
    return out
