"""Federated attack-onset protocol: round-0 tree aggregation, weight rounds,
onset inference, quorum confirmation, and model-update policies.

Round 0 collects each client's tree ensemble, sorts them by client id, and
initializes the convolutional head.  The ensembles stay fixed afterwards;
rounds 1..R-1 broadcast the head weights, run client updates, and FedAvg the
results.  Transport is a JSON-lines message format carried over an in-process
queue here, but the same bytes round-trip through files.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from . import gbdt, head
from .gbdt import LocalEnsemble
from .head import HeadConfig, HeadWeights
from .preprocess import FeatureRow

__all__ = [
    "ProtocolError",
    "GlobalModel",
    "FedConfig",
    "FedClient",
    "MESSAGE_TYPES",
    "encode_message",
    "decode_message",
    "round0_aggregate",
    "fedavg",
    "run_training",
    "detect_onset",
    "detect_onset_batch",
    "confirm_onset",
    "StaticInterval",
    "NewNodeThreshold",
    "AttackCountThreshold",
    "WeightedIncidents",
    "RetrainState",
    "should_retrain",
]

log = logging.getLogger(__name__)

MESSAGE_TYPES = (
    "TREES_UPLOAD",
    "GLOBAL_ENSEMBLE",
    "WEIGHTS_BROADCAST",
    "WEIGHTS_UPDATE",
    "ONSET_REPORT",
    "ONSET_CONFIRMED",
)


class ProtocolError(RuntimeError):
    pass


class NotReadyError(RuntimeError):
    pass


@dataclass
class GlobalModel:
    ensembles: list[LocalEnsemble]  # sorted ascending by client id
    head: HeadWeights
    round: int = 0
    model_version: int = 0
    total_rounds: int = 1

    @property
    def complete(self) -> bool:
        return self.round >= self.total_rounds - 1


@dataclass(frozen=True)
class FedConfig:
    rounds: int = 10
    clients_per_round: int | None = None  # None = all available
    onset_quorum: int = 2
    confirm_window_s: float = 2.0

    def __post_init__(self):
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.onset_quorum < 1:
            raise ValueError("onset_quorum must be >= 1")


@dataclass
class FedClient:
    """A vehicle's training-side state: local rows and, later, the fixed trees."""

    cid: int
    x: np.ndarray
    y: np.ndarray
    tree_matrix: np.ndarray | None = None

    @classmethod
    def from_rows(cls, cid: int, rows: list[FeatureRow]) -> "FedClient":
        x = np.stack([np.asarray(r.features, dtype=np.float64) for r in rows])
        y = np.asarray([r.label for r in rows], dtype=np.float64)
        return cls(cid=cid, x=x, y=y)


# ---------------------------------------------------------------------------
# JSON-lines message protocol


def encode_message(msg_type: str, cid: int | None, round_: int, model_version: int, payload) -> str:
    if msg_type not in MESSAGE_TYPES:
        raise ValueError(f"unknown message type {msg_type!r}")
    return json.dumps(
        {
            "type": msg_type,
            "cid": cid,
            "round": round_,
            "model_version": model_version,
            "payload": payload,
        },
        sort_keys=True,
    )


def decode_message(line: str) -> dict:
    msg = json.loads(line)
    if msg.get("type") not in MESSAGE_TYPES:
        raise ProtocolError(f"unknown message type {msg.get('type')!r}")
    return msg


# ---------------------------------------------------------------------------
# Server-side aggregation


def round0_aggregate(
    submissions: list[tuple[int, LocalEnsemble]],
    head_config: HeadConfig = HeadConfig(),
    total_rounds: int = 1,
) -> GlobalModel:
    """Sort submitted ensembles by client id and initialize the head."""
    if not submissions:
        raise ProtocolError("round 0 requires at least one submission")
    seen: set[int] = set()
    for cid, _ in submissions:
        if cid in seen:
            raise ProtocolError(f"duplicate client id {cid} in round 0")
        seen.add(cid)
    ordered = [ens for _, ens in sorted(submissions, key=lambda s: s[0])]
    t = len(ordered[0].trees)
    for ens in ordered:
        if len(ens.trees) != t:
            raise ProtocolError("clients submitted differing tree counts")
    w = head.init(k=len(ordered), t=t, config=head_config)
    return GlobalModel(ensembles=ordered, head=w, round=0, model_version=0,
                       total_rounds=total_rounds)


def fedavg(updates: list[tuple[int, HeadWeights, int]]) -> HeadWeights:
    """Sample-count-weighted element-wise mean of client head weights."""
    if not updates:
        raise ProtocolError("fedavg requires at least one update")
    shape = (updates[0][1].conv_kernels.shape, len(updates[0][1].dense))
    total = 0
    for cid, w, count in updates:
        if count < 1:
            raise ProtocolError(f"client {cid}: sample_count must be >= 1")
        if (w.conv_kernels.shape, len(w.dense)) != shape:
            raise ProtocolError(f"client {cid}: weight shape mismatch")
        total += count
    first = updates[0][1]
    kernels = np.zeros_like(first.conv_kernels)
    bias = np.zeros_like(first.conv_bias)
    dense = np.zeros_like(first.dense)
    dbias = 0.0
    for _, w, count in updates:
        frac = count / total
        kernels += frac * w.conv_kernels
        bias += frac * w.conv_bias
        dense += frac * w.dense
        dbias += frac * w.dense_bias
    return HeadWeights(conv_kernels=kernels, conv_bias=bias, dense=dense, dense_bias=dbias)


def run_training(
    clients: list[FedClient],
    gbdt_config: gbdt.GbdtConfig,
    head_config: HeadConfig,
    fed_config: FedConfig,
    transcript: list[str] | None = None,
) -> GlobalModel:
    """Execute round 0 plus rounds-1 weight rounds over an in-process queue.

    Every message crosses the wire as a JSON line; pass `transcript` to
    capture them.  Client head-update seeds are derived from the head seed
    and the client id so runs are deterministic.
    """
    if not clients:
        raise ProtocolError("no clients available; training stalled")
    queue: list[str] = transcript if transcript is not None else []

    # Round 0: tree upload and aggregation.
    submissions: list[tuple[int, LocalEnsemble]] = []
    for c in clients:
        ens = gbdt.train(c.x, c.y, gbdt_config, client=c.cid)
        line = encode_message("TREES_UPLOAD", c.cid, 0, 0, gbdt.ensemble_to_dict(ens))
        queue.append(line)
        msg = decode_message(line)
        submissions.append((msg["cid"], gbdt.ensemble_from_dict(msg["payload"])))
    model = round0_aggregate(submissions, head_config, total_rounds=fed_config.rounds)
    global_line = encode_message(
        "GLOBAL_ENSEMBLE", None, 0, model.model_version,
        [gbdt.ensemble_to_dict(e) for e in model.ensembles],
    )
    queue.append(global_line)
    broadcast_ensembles = [
        gbdt.ensemble_from_dict(d) for d in decode_message(global_line)["payload"]
    ]
    for c in clients:
        c.tree_matrix = gbdt.per_tree_output_matrix(broadcast_ensembles, c.x)

    # Rounds 1..R-1: head-weight averaging.
    for r in range(1, fed_config.rounds):
        bcast = encode_message("WEIGHTS_BROADCAST", None, r, model.model_version,
                               head.weights_to_dict(model.head))
        queue.append(bcast)
        w_global = head.weights_from_dict(decode_message(bcast)["payload"])
        participants = clients
        if fed_config.clients_per_round is not None:
            participants = clients[: fed_config.clients_per_round]
        if not participants:
            raise ProtocolError(f"round {r}: no clients available; training stalled")
        updates: list[tuple[int, HeadWeights, int]] = []
        for c in participants:
            local_cfg = HeadConfig(
                filters=head_config.filters,
                learning_rate=head_config.learning_rate,
                epochs=head_config.epochs,
                batch_size=head_config.batch_size,
                rng_seed=head_config.rng_seed * 100003 + c.cid * 1009 + r,
            )
            w_new = head.train_on_matrix(w_global, c.tree_matrix, c.y, local_cfg)
            line = encode_message("WEIGHTS_UPDATE", c.cid, r, model.model_version,
                                  {"weights": head.weights_to_dict(w_new),
                                   "sample_count": len(c.y)})
            queue.append(line)
            msg = decode_message(line)
            updates.append((msg["cid"], head.weights_from_dict(msg["payload"]["weights"]),
                            msg["payload"]["sample_count"]))
        model.head = fedavg(updates)
        model.round = r
    model.model_version += 1
    return model


def cold_start_payload(model: GlobalModel) -> list[str]:
    """Messages handed to a newly authenticated client: current ensembles and
    head weights, stamped with the server's current model_version."""
    return [
        encode_message("GLOBAL_ENSEMBLE", None, model.round, model.model_version,
                       [gbdt.ensemble_to_dict(e) for e in model.ensembles]),
        encode_message("WEIGHTS_BROADCAST", None, model.round, model.model_version,
                       head.weights_to_dict(model.head)),
    ]


# ---------------------------------------------------------------------------
# Inference and confirmation


def detect_onset(model: GlobalModel, row: FeatureRow) -> str:
    """'attack' or 'normal' for one feature row; probability tie goes normal."""
    if not model.complete:
        raise NotReadyError(f"model at round {model.round} of {model.total_rounds}")
    vec = gbdt.per_tree_outputs(model.ensembles, row.features)
    p = head.forward(model.head, vec)
    return "attack" if p > 0.5 else "normal"


def detect_onset_batch(model: GlobalModel, x: np.ndarray) -> np.ndarray:
    """Boolean attack decisions for a batch of feature rows."""
    if not model.complete:
        raise NotReadyError(f"model at round {model.round} of {model.total_rounds}")
    v = gbdt.per_tree_output_matrix(model.ensembles, x)
    p = head.forward_batch(model.head, v)
    return p > 0.5


def confirm_onset(
    reports: list[tuple[int, float]],
    quorum: int = 2,
    window_s: float = 2.0,
) -> str:
    """'confirmed' iff >= quorum distinct clients report within a sliding window."""
    if quorum < 1:
        raise ValueError("quorum must be >= 1")
    ordered = sorted(reports, key=lambda r: r[1])
    for i in range(len(ordered)):
        t0 = ordered[i][1]
        cids = {cid for cid, t in ordered[i:] if t <= t0 + window_s}
        if len(cids) >= quorum:
            return "confirmed"
    return "unconfirmed"


# ---------------------------------------------------------------------------
# Model-update policies


@dataclass(frozen=True)
class StaticInterval:
    interval_s: float


@dataclass(frozen=True)
class NewNodeThreshold:
    count: int


@dataclass(frozen=True)
class AttackCountThreshold:
    count: int


@dataclass(frozen=True)
class WeightedIncidents:
    weights: dict[str, float]
    threshold: float


@dataclass
class RetrainState:
    now_s: float = 0.0
    last_train_s: float = 0.0
    new_nodes: int = 0
    confirmed_onsets: int = 0
    incident_counts: dict[str, int] = field(default_factory=dict)


def should_retrain(state: RetrainState, policy) -> bool:
    if isinstance(policy, StaticInterval):
        return state.now_s - state.last_train_s >= policy.interval_s
    if isinstance(policy, NewNodeThreshold):
        return state.new_nodes >= policy.count
    if isinstance(policy, AttackCountThreshold):
        return state.confirmed_onsets >= policy.count
    if isinstance(policy, WeightedIncidents):
        total = sum(w * state.incident_counts.get(kind, 0)
                    for kind, w in policy.weights.items())
        return total >= policy.threshold
    raise ValueError(f"unknown policy {policy!r}")
