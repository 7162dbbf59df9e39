"""VANET DDoS detection: simulation, federated onset detection, MAD-based
malicious-node identification."""

from . import balance, fed_mnd, fed_onset, gbdt, head, metrics, mnd, preprocess, runner, scenario

__all__ = [
    "balance",
    "fed_mnd",
    "fed_onset",
    "gbdt",
    "head",
    "metrics",
    "mnd",
    "preprocess",
    "runner",
    "scenario",
]

__version__ = "0.1.0"
