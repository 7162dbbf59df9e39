"""One-layer 1D convolutional head over the per-tree output vector.

The K*T tree-output vector is convolved with kernel size T and stride T, so
each filter sees exactly one client's trees per window; the F*K activations
(identity activation) feed a dense layer and a sigmoid.  Each kernel weight
therefore acts as a learned per-tree learning rate.  Trained locally with
mini-batch SGD on binary cross-entropy; exchanged and averaged federally.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

__all__ = [
    "HeadConfig",
    "HeadWeights",
    "init",
    "forward",
    "forward_batch",
    "gradients",
    "train_on_matrix",
    "train_local",
    "weights_to_dict",
    "weights_from_dict",
    "weights_to_json",
    "weights_from_json",
]


@dataclass(frozen=True)
class HeadConfig:
    filters: int = 4
    learning_rate: float = 0.1
    epochs: int = 100
    batch_size: int = 64
    rng_seed: int = 0

    def __post_init__(self):
        if self.filters < 1:
            raise ValueError("filters must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class HeadWeights:
    conv_kernels: np.ndarray  # (F, T)
    conv_bias: np.ndarray  # (F,)
    dense: np.ndarray  # (F*K,)
    dense_bias: float

    @property
    def n_filters(self) -> int:
        return self.conv_kernels.shape[0]

    @property
    def kernel_size(self) -> int:
        return self.conv_kernels.shape[1]

    @property
    def n_clients(self) -> int:
        return len(self.dense) // self.n_filters

    def copy(self) -> "HeadWeights":
        return HeadWeights(
            conv_kernels=self.conv_kernels.copy(),
            conv_bias=self.conv_bias.copy(),
            dense=self.dense.copy(),
            dense_bias=float(self.dense_bias),
        )

    def allclose(self, other: "HeadWeights", **kw) -> bool:
        return (
            np.allclose(self.conv_kernels, other.conv_kernels, **kw)
            and np.allclose(self.conv_bias, other.conv_bias, **kw)
            and np.allclose(self.dense, other.dense, **kw)
            and np.isclose(self.dense_bias, other.dense_bias, **kw)
        )


def init(k: int, t: int, config: HeadConfig) -> HeadWeights:
    """Zero-mean uniform init scaled by fan-in; deterministic per rng_seed."""
    if k < 1 or t < 1:
        raise ValueError("k and t must be >= 1")
    rng = np.random.default_rng(config.rng_seed)
    f = config.filters
    conv_lim = 1.0 / np.sqrt(t)
    dense_lim = 1.0 / np.sqrt(f * k)
    return HeadWeights(
        conv_kernels=rng.uniform(-conv_lim, conv_lim, size=(f, t)),
        conv_bias=rng.uniform(-conv_lim, conv_lim, size=f),
        dense=rng.uniform(-dense_lim, dense_lim, size=f * k),
        dense_bias=float(rng.uniform(-dense_lim, dense_lim)),
    )


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))


def _flat_activations(w: HeadWeights, v: np.ndarray) -> np.ndarray:
    """(B, F*K) activations for a batch of (B, K*T) tree vectors."""
    b = v.shape[0]
    k, t = w.n_clients, w.kernel_size
    if v.shape[1] != k * t:
        raise ValueError(f"expected tree vectors of length {k * t}, got {v.shape[1]}")
    windows = v.reshape(b, k, t)
    act = windows @ w.conv_kernels.T + w.conv_bias[None, None, :]  # (B, K, F)
    # Flatten in (filter, client) order to match the dense-weight layout.
    return act.transpose(0, 2, 1).reshape(b, -1)


def forward_batch(w: HeadWeights, v: np.ndarray) -> np.ndarray:
    v = np.atleast_2d(np.asarray(v, dtype=np.float64))
    flat = _flat_activations(w, v)
    z = flat @ w.dense + w.dense_bias
    return _sigmoid(z)


def forward(w: HeadWeights, tree_vector) -> float:
    """Attack probability in (0, 1) for one K*T tree-output vector."""
    vec = np.asarray(tree_vector, dtype=np.float64)
    if vec.ndim != 1:
        raise ValueError("tree_vector must be 1-D")
    return float(forward_batch(w, vec[None, :])[0])


def gradients(w: HeadWeights, v: np.ndarray, y: np.ndarray):
    """Mean binary cross-entropy loss and its gradients over a batch."""
    v = np.asarray(v, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    b = len(v)
    k, t = w.n_clients, w.kernel_size
    windows = v.reshape(b, k, t)
    flat = _flat_activations(w, v)
    z = flat @ w.dense + w.dense_bias
    p = _sigmoid(z)
    eps = 1e-12
    loss = float(-np.mean(y * np.log(p + eps) + (1 - y) * np.log(1 - p + eps)))
    dz = (p - y) / b
    d_dense = flat.T @ dz
    d_dense_bias = float(dz.sum())
    d_act = dz[:, None] * w.dense[None, :]  # (B, F*K)
    d_act = d_act.reshape(b, w.n_filters, k)
    d_kernels = d_act.transpose(1, 0, 2).reshape(w.n_filters, -1) @ windows.reshape(b * k, t)
    d_bias = d_act.sum(axis=(0, 2))
    return loss, (d_kernels, d_bias, d_dense, d_dense_bias)


def train_on_matrix(w: HeadWeights, v: np.ndarray, y: np.ndarray, config: HeadConfig) -> HeadWeights:
    """Mini-batch SGD on BCE over shuffled batches; returns updated weights."""
    if len(v) == 0:
        raise ValueError("training rows must be non-empty")
    w = w.copy()
    rng = np.random.default_rng(config.rng_seed)
    lr = config.learning_rate
    n = len(v)
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            _, (dk, db, dd, ddb) = gradients(w, v[idx], y[idx])
            w.conv_kernels -= lr * dk
            w.conv_bias -= lr * db
            w.dense -= lr * dd
            w.dense_bias -= lr * ddb
    return w


def train_local(w: HeadWeights, rows, ensembles, config: HeadConfig) -> HeadWeights:
    """Client update: evaluate the fixed tree ensembles on local rows, then SGD.

    `rows` is a list of FeatureRow; the tree ensembles are read-only here
    (they stay fixed after round 0).
    """
    from .gbdt import per_tree_output_matrix

    if not rows:
        raise ValueError("rows must be non-empty")
    x = np.stack([np.asarray(r.features, dtype=np.float64) for r in rows])
    y = np.asarray([r.label for r in rows], dtype=np.float64)
    v = per_tree_output_matrix(ensembles, x)
    return train_on_matrix(w, v, y, config)


# ---------------------------------------------------------------------------
# JSON wire format (round-t payload)


def weights_to_dict(w: HeadWeights) -> dict:
    return {
        "conv_kernels": w.conv_kernels.tolist(),
        "conv_bias": w.conv_bias.tolist(),
        "dense": w.dense.tolist(),
        "dense_bias": w.dense_bias,
    }


def weights_from_dict(d: dict) -> HeadWeights:
    return HeadWeights(
        conv_kernels=np.asarray(d["conv_kernels"], dtype=np.float64),
        conv_bias=np.asarray(d["conv_bias"], dtype=np.float64),
        dense=np.asarray(d["dense"], dtype=np.float64),
        dense_bias=float(d["dense_bias"]),
    )


def weights_to_json(w: HeadWeights) -> str:
    return json.dumps(weights_to_dict(w))


def weights_from_json(s: str) -> HeadWeights:
    return weights_from_dict(json.loads(s))
