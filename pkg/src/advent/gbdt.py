"""Gradient-boosted regression trees for binary classification, from scratch.

Second-order boosting on the logistic loss: each tree fits the per-row
gradients/hessians of the current margin, splits maximize the standard
L2-regularized gain, and leaves carry -G/(H+lambda).  Leaf values are stored
pre-shrinkage; shrinkage is applied at prediction time so serialized trees
are scale-independent.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GbdtConfig",
    "TreeNode",
    "Tree",
    "LocalEnsemble",
    "train",
    "predict_margin",
    "predict_margin_batch",
    "per_tree_outputs",
    "per_tree_output_matrix",
    "ensemble_to_dict",
    "ensemble_from_dict",
    "ensemble_to_json",
    "ensemble_from_json",
]

_MAX_LOG_ODDS = 15.0


@dataclass(frozen=True)
class GbdtConfig:
    trees_per_client: int = 10
    max_depth: int = 3
    shrinkage: float = 0.3
    min_samples_leaf: int = 1
    lambda_l2: float = 1.0

    def __post_init__(self):
        if self.trees_per_client < 1:
            raise ValueError("trees_per_client must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if not (0.0 < self.shrinkage <= 1.0):
            raise ValueError("shrinkage must be in (0, 1]")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.lambda_l2 < 0:
            raise ValueError("lambda_l2 must be >= 0")


@dataclass
class TreeNode:
    # Leaf iff left is None; then `value` is the pre-shrinkage log-odds step.
    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    value: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass
class Tree:
    root: TreeNode
    max_depth: int


@dataclass
class LocalEnsemble:
    client: int
    trees: list[Tree] = field(default_factory=list)
    base_score: float = 0.0
    shrinkage: float = 0.3


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


# Gains within this tolerance of each other count as tied; ties resolve to
# the lowest feature index, then the lowest threshold.  The slack absorbs
# summation-order float noise so the choice is stable against a brute-force
# rescan of the same candidates.
GAIN_TOL_REL = 1e-9
GAIN_TOL_ABS = 1e-12
MIN_GAIN = 1e-12


def _gain_tol(m: float) -> float:
    return GAIN_TOL_REL * abs(m) + GAIN_TOL_ABS


def _find_best_split(x: np.ndarray, g: np.ndarray, h: np.ndarray, cfg: GbdtConfig):
    """Best (feature, threshold, gain) over exact midpoints of sorted unique values."""
    n, n_features = x.shape
    lam = cfg.lambda_l2
    g_total = float(g.sum())
    h_total = float(h.sum())
    parent = g_total * g_total / (h_total + lam)
    msl = cfg.min_samples_leaf
    candidates = []  # (feature, threshold, gain): per-feature best
    for f in range(n_features):
        order = np.argsort(x[:, f], kind="stable")
        xs = x[order, f]
        gs = np.cumsum(g[order])
        hs = np.cumsum(h[order])
        # Candidate split after position i (0-based) requires xs[i] < xs[i+1].
        distinct = xs[:-1] < xs[1:]
        if not distinct.any():
            continue
        pos = np.nonzero(distinct)[0]
        left_n = pos + 1
        ok = (left_n >= msl) & ((n - left_n) >= msl)
        pos = pos[ok]
        if len(pos) == 0:
            continue
        gl = gs[pos]
        hl = hs[pos]
        gr = g_total - gl
        hr = h_total - hl
        gains = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent)
        m = float(gains.max())
        i_best = int(np.argmax(gains >= m - _gain_tol(m)))  # first tied index
        candidates.append((f, float(0.5 * (xs[pos[i_best]] + xs[pos[i_best] + 1])),
                           float(gains[i_best])))
    if not candidates:
        return None
    m = max(c[2] for c in candidates)
    if m <= MIN_GAIN:
        return None
    for f, thr, gain in candidates:  # features ascend: first tied feature wins
        if gain >= m - _gain_tol(m):
            return (gain, f, thr)
    return None


def _build_node(x, g, h, depth, cfg: GbdtConfig) -> TreeNode:
    lam = cfg.lambda_l2
    if depth >= cfg.max_depth or len(x) < 2 * cfg.min_samples_leaf:
        return TreeNode(value=float(-g.sum() / (h.sum() + lam)))
    split = _find_best_split(x, g, h, cfg)
    if split is None:
        return TreeNode(value=float(-g.sum() / (h.sum() + lam)))
    _, f, thr = split
    mask = x[:, f] < thr
    left = _build_node(x[mask], g[mask], h[mask], depth + 1, cfg)
    right = _build_node(x[~mask], g[~mask], h[~mask], depth + 1, cfg)
    return TreeNode(feature=f, threshold=thr, left=left, right=right)


def _tree_apply(node: TreeNode, x: np.ndarray) -> np.ndarray:
    """Pre-shrinkage leaf values for each row of x."""
    out = np.empty(len(x), dtype=np.float64)
    stack = [(node, np.arange(len(x)))]
    while stack:
        nd, idx = stack.pop()
        if nd.is_leaf:
            out[idx] = nd.value
            continue
        mask = x[idx, nd.feature] < nd.threshold
        stack.append((nd.left, idx[mask]))
        stack.append((nd.right, idx[~mask]))
    return out


def train(x: np.ndarray, y: np.ndarray, config: GbdtConfig, client: int = 0) -> LocalEnsemble:
    """Fit trees_per_client trees sequentially on logistic-loss grad/hess.

    Single-class input degrades to zero-valued trees with a clamped log-odds
    base score instead of failing.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or len(x) == 0:
        raise ValueError("training rows must be a non-empty 2-D array")
    if len(x) != len(y):
        raise ValueError("x and y length mismatch")
    prevalence = float(y.mean())
    if prevalence <= 0.0 or prevalence >= 1.0:
        base = _MAX_LOG_ODDS if prevalence >= 1.0 else -_MAX_LOG_ODDS
        trees = [Tree(root=TreeNode(value=0.0), max_depth=config.max_depth)
                 for _ in range(config.trees_per_client)]
        return LocalEnsemble(client=client, trees=trees, base_score=base,
                             shrinkage=config.shrinkage)
    base = float(np.log(prevalence / (1.0 - prevalence)))
    margins = np.full(len(y), base)
    trees: list[Tree] = []
    for _ in range(config.trees_per_client):
        p = _sigmoid(margins)
        g = p - y
        h = p * (1.0 - p)
        root = _build_node(x, g, h, 0, config)
        trees.append(Tree(root=root, max_depth=config.max_depth))
        margins += config.shrinkage * _tree_apply(root, x)
    return LocalEnsemble(client=client, trees=trees, base_score=base,
                         shrinkage=config.shrinkage)


def _check_features(features, n_features: int | None = None) -> np.ndarray:
    arr = np.asarray(features, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError("features must be a 1-D vector")
    if n_features is not None and len(arr) != n_features:
        raise ValueError(f"expected {n_features} features, got {len(arr)}")
    return arr


def predict_margin(ensemble: LocalEnsemble, features) -> float:
    arr = _check_features(features)
    x = arr[None, :]
    total = ensemble.base_score
    for tree in ensemble.trees:
        total += ensemble.shrinkage * float(_tree_apply(tree.root, x)[0])
    return total


def predict_margin_batch(ensemble: LocalEnsemble, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    total = np.full(len(x), ensemble.base_score)
    for tree in ensemble.trees:
        total += ensemble.shrinkage * _tree_apply(tree.root, x)
    return total


def _check_uniform(ensembles: list[LocalEnsemble]) -> list[LocalEnsemble]:
    if not ensembles:
        raise ValueError("need at least one ensemble")
    ordered = sorted(ensembles, key=lambda e: e.client)
    t = len(ordered[0].trees)
    for e in ordered:
        if len(e.trees) != t:
            raise ValueError("ragged ensembles: differing tree counts")
    return ordered


def per_tree_outputs(ensembles: list[LocalEnsemble], features) -> np.ndarray:
    """Concatenated shrinkage-scaled tree outputs in (client, tree) order."""
    ordered = _check_uniform(ensembles)
    arr = _check_features(features)
    x = arr[None, :]
    out = []
    for e in ordered:
        for tree in e.trees:
            out.append(e.shrinkage * float(_tree_apply(tree.root, x)[0]))
    return np.asarray(out)


def per_tree_output_matrix(ensembles: list[LocalEnsemble], x: np.ndarray) -> np.ndarray:
    """(n_rows, K*T) matrix of per-tree outputs for a batch of feature rows."""
    ordered = _check_uniform(ensembles)
    x = np.asarray(x, dtype=np.float64)
    cols = []
    for e in ordered:
        for tree in e.trees:
            cols.append(e.shrinkage * _tree_apply(tree.root, x))
    return np.stack(cols, axis=1)


# ---------------------------------------------------------------------------
# JSON wire format (round-0 payload)


def _node_to_dict(node: TreeNode) -> dict:
    if node.is_leaf:
        return {"v": node.value}
    return {
        "f": node.feature,
        "t": node.threshold,
        "l": _node_to_dict(node.left),
        "r": _node_to_dict(node.right),
    }


def _node_from_dict(d: dict) -> TreeNode:
    if "v" in d:
        return TreeNode(value=float(d["v"]))
    return TreeNode(
        feature=int(d["f"]),
        threshold=float(d["t"]),
        left=_node_from_dict(d["l"]),
        right=_node_from_dict(d["r"]),
    )


def ensemble_to_dict(ensemble: LocalEnsemble) -> dict:
    return {
        "client": ensemble.client,
        "base_score": ensemble.base_score,
        "shrinkage": ensemble.shrinkage,
        "trees": [
            {"max_depth": t.max_depth, "root": _node_to_dict(t.root)} for t in ensemble.trees
        ],
    }


def ensemble_from_dict(d: dict) -> LocalEnsemble:
    return LocalEnsemble(
        client=int(d["client"]),
        base_score=float(d["base_score"]),
        shrinkage=float(d["shrinkage"]),
        trees=[Tree(root=_node_from_dict(t["root"]), max_depth=int(t["max_depth"]))
               for t in d["trees"]],
    )


def ensemble_to_json(ensemble: LocalEnsemble) -> str:
    return json.dumps(ensemble_to_dict(ensemble), sort_keys=True)


def ensemble_from_json(s: str) -> LocalEnsemble:
    return ensemble_from_dict(json.loads(s))
