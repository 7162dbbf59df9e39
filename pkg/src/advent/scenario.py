"""Synthetic VANET packet-event scenarios with scheduled flooding attacks.

Generates a timeline of (time, sender, receiver) packet events for a set of
vehicles that enter and exit the network, with a subset of vehicles flooding
their neighbors during scheduled attack windows.  Also ingests externally
recorded event logs in the same CSV format.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ScenarioConfig",
    "PacketEvent",
    "EventStream",
    "GroundTruth",
    "ConfigError",
    "ParseError",
    "generate",
    "ingest",
    "write_events_csv",
    "write_ground_truth",
    "load_ground_truth",
]


class ConfigError(ValueError):
    """Raised when a scenario configuration violates an invariant."""


class ParseError(ValueError):
    """Raised when an event-log file cannot be parsed."""


@dataclass(frozen=True)
class ScenarioConfig:
    duration_s: int = 3600
    total_vehicles: int = 360
    concurrent_range: tuple[int, int] = (10, 30)
    arrival_interval_s: float = 9.5
    attacker_fraction: float = 0.05
    attack_count: int = 6
    attack_spacing_s: float = 600.0
    attack_duration_s: float = 25.0
    normal_rate_pps: float = 2.0
    flood_rate_pps: float = 30.0
    neighbor_degree: float = 10.0
    rng_seed: int = 0

    def validate(self) -> None:
        if self.duration_s <= 0:
            raise ConfigError("duration_s must be > 0")
        if not (0.0 <= self.attacker_fraction <= 1.0):
            raise ConfigError("attacker_fraction must be in [0, 1]")
        if self.attack_count * self.attack_spacing_s > self.duration_s:
            raise ConfigError("attack_count * attack_spacing_s must be <= duration_s")
        if self.attack_duration_s > self.attack_spacing_s:
            raise ConfigError("attack_duration_s must be <= attack_spacing_s")
        if self.flood_rate_pps <= self.normal_rate_pps:
            raise ConfigError("flood_rate_pps must be > normal_rate_pps")
        if self.concurrent_range[0] > self.concurrent_range[1]:
            raise ConfigError("concurrent_range.min must be <= concurrent_range.max")
        if self.total_vehicles < 1:
            raise ConfigError("total_vehicles must be >= 1")
        if self.arrival_interval_s <= 0:
            raise ConfigError("arrival_interval_s must be > 0")
        if self.normal_rate_pps < 0:
            raise ConfigError("normal_rate_pps must be >= 0")
        if self.neighbor_degree < 0:
            raise ConfigError("neighbor_degree must be >= 0")


@dataclass(frozen=True)
class PacketEvent:
    time_s: float
    sender: int
    receiver: int


class EventStream:
    """Time-sorted packet events held as parallel numpy arrays."""

    def __init__(self, times, senders, receivers):
        self.times = np.asarray(times, dtype=np.float64)
        self.senders = np.asarray(senders, dtype=np.int64)
        self.receivers = np.asarray(receivers, dtype=np.int64)
        if not (len(self.times) == len(self.senders) == len(self.receivers)):
            raise ValueError("event arrays must have equal length")

    def __len__(self) -> int:
        return len(self.times)

    def __iter__(self):
        for t, s, r in zip(self.times, self.senders, self.receivers):
            yield PacketEvent(float(t), int(s), int(r))

    def sorted(self) -> "EventStream":
        order = np.lexsort((self.receivers, self.senders, self.times))
        return EventStream(self.times[order], self.senders[order], self.receivers[order])

    def inbound(self, vehicle: int) -> "EventStream":
        mask = self.receivers == vehicle
        return EventStream(self.times[mask], self.senders[mask], self.receivers[mask])

    def between(self, start_s: float, end_s: float) -> "EventStream":
        mask = (self.times >= start_s) & (self.times < end_s)
        return EventStream(self.times[mask], self.senders[mask], self.receivers[mask])


@dataclass
class GroundTruth:
    attackers: set[int] = field(default_factory=set)
    attack_windows: list[tuple[float, float]] = field(default_factory=list)
    presence: dict[int, tuple[float, float]] = field(default_factory=dict)

    def is_attack_second(self, t: int) -> bool:
        return any(s <= t < e for s, e in self.attack_windows)

    def to_dict(self) -> dict:
        return {
            "attackers": sorted(self.attackers),
            "attack_windows": [[s, e] for s, e in self.attack_windows],
            "presence": {str(v): [a, b] for v, (a, b) in sorted(self.presence.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruth":
        return cls(
            attackers=set(d.get("attackers", [])),
            attack_windows=[(float(s), float(e)) for s, e in d.get("attack_windows", [])],
            presence={int(v): (float(a), float(b)) for v, (a, b) in d.get("presence", {}).items()},
        )


def _attack_windows(config: ScenarioConfig) -> list[tuple[float, float]]:
    windows = []
    for k in range(1, config.attack_count + 1):
        start = k * config.attack_spacing_s
        end = min(start + config.attack_duration_s, float(config.duration_s))
        windows.append((start, end))
    return windows


def generate(config: ScenarioConfig) -> tuple[EventStream, GroundTruth]:
    """Build a packet-event timeline plus ground truth for the given scenario.

    Deterministic for a fixed rng_seed.  Vehicles enter staggered by
    arrival_interval_s and stay for a trip length drawn so that the number of
    concurrently present vehicles tracks concurrent_range.  Neighbor links are
    re-sampled whenever the present set changes; every present vehicle emits
    Poisson traffic to each neighbor, attackers switching to flood_rate_pps
    inside attack windows.
    """
    config.validate()
    rng = np.random.default_rng(config.rng_seed)
    dur = float(config.duration_s)

    n = config.total_vehicles
    n_attackers = int(round(config.attacker_fraction * n))
    # Attackers are the earliest arrivals and stay on the road through the
    # last attack window, so every scheduled window carries flood traffic;
    # wall-clock labels are meaningless otherwise.
    attackers = set(range(n_attackers))

    cmin, cmax = config.concurrent_range
    enters = np.minimum(np.arange(n) * config.arrival_interval_s, dur)
    trips = rng.uniform(cmin, cmax, size=n) * config.arrival_interval_s
    exits = np.minimum(enters + trips, dur)
    windows = _attack_windows(config)
    if windows and attackers:
        last_end = max(e for _, e in windows)
        for v in attackers:
            exits[v] = min(max(exits[v], last_end), dur)
    presence = {int(v): (float(enters[v]), float(exits[v])) for v in range(n) if enters[v] < dur}
    truth = GroundTruth(attackers=attackers, attack_windows=windows, presence=presence)

    # Epoch boundaries: presence changes and attack window edges.
    cuts = {0.0, dur}
    for v, (a, b) in presence.items():
        cuts.add(a)
        cuts.add(b)
    for s, e in windows:
        cuts.add(s)
        cuts.add(e)
    bounds = sorted(c for c in cuts if 0.0 <= c <= dur)

    all_times: list[np.ndarray] = []
    all_senders: list[np.ndarray] = []
    all_receivers: list[np.ndarray] = []
    prev_present: tuple[int, ...] = ()
    adj = np.zeros((0, 0), dtype=bool)

    for t0, t1 in zip(bounds[:-1], bounds[1:]):
        dt = t1 - t0
        if dt <= 0:
            continue
        present = tuple(sorted(v for v, (a, b) in presence.items() if a <= t0 < b))
        m = len(present)
        if m < 2:
            prev_present = present
            continue
        if present != prev_present:
            # Erdos-Renyi link sampling targeting the configured mean degree.
            p = min(1.0, config.neighbor_degree / (m - 1))
            upper = rng.random((m, m)) < p
            adj = np.triu(upper, k=1)
            adj = adj | adj.T
            prev_present = present
        ids = np.asarray(present)
        si, ri = np.nonzero(adj)
        if len(si) == 0:
            continue
        in_window = any(s <= t0 and t1 <= e for s, e in windows)
        sender_ids = ids[si]
        rates = np.full(len(si), config.normal_rate_pps)
        if in_window and attackers:
            is_att = np.isin(sender_ids, sorted(attackers))
            rates[is_att] = config.flood_rate_pps
        counts = rng.poisson(rates * dt)
        total = int(counts.sum())
        if total == 0:
            continue
        times = t0 + rng.random(total) * dt
        all_times.append(times)
        all_senders.append(np.repeat(sender_ids, counts))
        all_receivers.append(np.repeat(ids[ri], counts))

    if all_times:
        stream = EventStream(
            np.concatenate(all_times),
            np.concatenate(all_senders),
            np.concatenate(all_receivers),
        ).sorted()
    else:
        stream = EventStream([], [], [])
    return stream, truth


# ---------------------------------------------------------------------------
# Event-log file I/O


_BASE_HEADER = ["time_s", "sender", "receiver"]
_ANNOT_HEADER = _BASE_HEADER + ["is_attacker_sender", "attack_active"]


def write_events_csv(path, stream: EventStream, truth: GroundTruth | None = None) -> None:
    """Write the event log; annotation columns are included when truth is given."""
    with open(path, "w", encoding="utf-8") as fh:
        times = stream.times.tolist()
        senders = stream.senders.tolist()
        receivers = stream.receivers.tolist()
        if truth is None:
            fh.write(",".join(_BASE_HEADER) + "\n")
            for t, s, r in zip(times, senders, receivers):
                fh.write(f"{t!r},{s},{r}\n")
        else:
            fh.write(",".join(_ANNOT_HEADER) + "\n")
            att = truth.attackers
            for t, s, r in zip(times, senders, receivers):
                ia = 1 if s in att else 0
                aa = 1 if any(ws <= t < we for ws, we in truth.attack_windows) else 0
                fh.write(f"{t!r},{s},{r},{ia},{aa}\n")


def write_ground_truth(path, truth: GroundTruth) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(truth.to_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_ground_truth(path) -> GroundTruth:
    with open(path, "r", encoding="utf-8") as fh:
        return GroundTruth.from_dict(json.load(fh))


def ingest(path) -> tuple[EventStream, GroundTruth | None]:
    """Read an event-log CSV; unsorted rows are sorted, malformed rows rejected.

    Ground truth is reconstructed only when the annotation columns are present:
    attackers from the sender flag, attack windows from contiguous runs of
    flagged seconds, presence from each vehicle's first/last observation.
    """
    times: list[float] = []
    senders: list[int] = []
    receivers: list[int] = []
    annotated = False
    att_flags: list[int] = []
    act_flags: list[int] = []

    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        if not header.strip():
            return EventStream([], [], []), None
        cols = [c.strip() for c in header.strip().split(",")]
        if cols == _ANNOT_HEADER:
            annotated = True
        elif cols != _BASE_HEADER:
            raise ParseError(f"line 1: unrecognized header {cols!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != len(cols):
                raise ParseError(f"line {lineno}: expected {len(cols)} fields, got {len(parts)}")
            try:
                t = float(parts[0])
                s = int(parts[1])
                r = int(parts[2])
            except ValueError as exc:
                raise ParseError(f"line {lineno}: {exc}") from None
            if t < 0:
                raise ParseError(f"line {lineno}: negative time_s")
            if s == r:
                raise ParseError(f"line {lineno}: sender == receiver ({s})")
            times.append(t)
            senders.append(s)
            receivers.append(r)
            if annotated:
                try:
                    att_flags.append(int(parts[3]))
                    act_flags.append(int(parts[4]))
                except ValueError as exc:
                    raise ParseError(f"line {lineno}: {exc}") from None

    stream = EventStream(times, senders, receivers).sorted()
    if not annotated:
        return stream, None

    order = np.lexsort((receivers, senders, times))
    att_arr = np.asarray(att_flags)[order]
    act_arr = np.asarray(act_flags)[order]
    attackers = set(int(v) for v in np.unique(stream.senders[att_arr == 1]))

    windows: list[tuple[float, float]] = []
    if len(stream) and act_arr.any():
        secs = np.unique(np.floor(stream.times[act_arr == 1]).astype(int))
        start = prev = int(secs[0])
        for t in secs[1:]:
            if int(t) != prev + 1:
                windows.append((float(start), float(prev + 1)))
                start = int(t)
            prev = int(t)
        windows.append((float(start), float(prev + 1)))

    presence: dict[int, tuple[float, float]] = {}
    for v in np.unique(np.concatenate([stream.senders, stream.receivers])):
        mask = (stream.senders == v) | (stream.receivers == v)
        ts = stream.times[mask]
        presence[int(v)] = (float(ts.min()), float(ts.max()))

    return stream, GroundTruth(attackers=attackers, attack_windows=windows, presence=presence)
