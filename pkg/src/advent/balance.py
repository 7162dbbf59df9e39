"""SMOTE oversampling of the minority (attack) class.

Synthetic minority rows are drawn on segments between a minority row and one
of its k nearest minority neighbors, until the normal-to-malicious ratio
drops to the configured target.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .preprocess import FeatureRow

__all__ = ["BalanceConfig", "smote", "smote_arrays"]

log = logging.getLogger(__name__)

# Reference normal/malicious ratio of the best-performing dataset family.
DEFAULT_TARGET_RATIO = 294.12


@dataclass(frozen=True)
class BalanceConfig:
    target_ratio: float = DEFAULT_TARGET_RATIO
    k_neighbors: int = 5

    def __post_init__(self):
        if self.target_ratio < 1:
            raise ValueError("target_ratio must be >= 1")
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")


def smote_arrays(
    x: np.ndarray, y: np.ndarray, config: BalanceConfig, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Array-level SMOTE; returns (x, y) with synthetic minority rows appended.

    Original rows are returned unmodified at their original positions.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n_min = int((y == 1).sum())
    n_maj = int((y == 0).sum())
    if n_min < 2:
        log.warning("smote: fewer than 2 minority rows; passing data through")
        return x, y
    target_min = int(np.ceil(n_maj / config.target_ratio))
    n_new = target_min - n_min
    if n_new <= 0:
        return x, y
    minority = x[y == 1]
    k = min(config.k_neighbors, n_min - 1)
    # Pairwise distances among minority rows; k nearest excluding self.
    d2 = ((minority[:, None, :] - minority[None, :, :]) ** 2).sum(axis=2)
    np.fill_diagonal(d2, np.inf)
    nn_idx = np.argsort(d2, axis=1, kind="stable")[:, :k]
    rng = np.random.default_rng(seed)
    base = rng.integers(0, n_min, size=n_new)
    pick = rng.integers(0, k, size=n_new)
    lam = rng.random(n_new)
    a = minority[base]
    bpts = minority[nn_idx[base, pick]]
    synth = a + lam[:, None] * (bpts - a)
    return np.concatenate([x, synth]), np.concatenate([y, np.ones(n_new, dtype=np.int64)])


def smote(rows: list[FeatureRow], config: BalanceConfig, seed: int) -> list[FeatureRow]:
    """Append synthetic positive rows until normal/malicious <= target_ratio.

    Synthetic rows carry the synthetic flag and t = -1 (they have no
    timestamp); original rows are passed through untouched.
    """
    if not rows:
        return rows
    x = np.stack([np.asarray(r.features, dtype=np.float64) for r in rows])
    y = np.asarray([r.label for r in rows], dtype=np.int64)
    x2, y2 = smote_arrays(x, y, config, seed)
    out = list(rows)
    for i in range(len(rows), len(x2)):
        out.append(FeatureRow(t=-1, features=x2[i], label=1, synthetic=True))
    return out
