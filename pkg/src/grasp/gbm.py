"""Stage-wise boosted regression trees under logistic loss.

Small deterministic stand-in for an XGBoost-style classifier: exact greedy
splits on sorted feature values, Newton leaf values with L2 smoothing, and
per-node sample covers recorded for path-dependent attribution.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .data import DesignMatrix
from .errors import DataError, NumericalError

_PBAR_CLIP = 1e-6


def sigmoid(z):
    """Numerically stable logistic function."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class TreeNode:
    """Binary tree node; leaves carry a margin contribution, internal nodes a split.

    cover is the training-sample count routed through the node and satisfies
    cover == left.cover + right.cover at every internal node.
    """

    cover: float
    value: float = 0.0
    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode" = None
    right: "TreeNode" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"value": self.value, "cover": self.cover}
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "cover": self.cover,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreeNode":
        if "feature" in d:
            return cls(
                cover=float(d["cover"]),
                feature=int(d["feature"]),
                threshold=float(d["threshold"]),
                left=cls.from_dict(d["left"]),
                right=cls.from_dict(d["right"]),
            )
        return cls(cover=float(d["cover"]), value=float(d["value"]))


@dataclass
class GbmConfig:
    n_trees: int = 50
    max_depth: int = 3
    learning_rate: float = 0.1
    min_samples_leaf: int = 5
    l2_leaf: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise DataError("n_trees must be >= 1")
        if self.max_depth < 1:
            raise DataError("max_depth must be >= 1")
        if not 0.0 < self.learning_rate <= 1.0:
            raise DataError("learning_rate must be in (0, 1]")
        if self.min_samples_leaf < 1:
            raise DataError("min_samples_leaf must be >= 1")
        if self.l2_leaf < 0:
            raise DataError("l2_leaf must be >= 0")


@dataclass
class TreeEnsemble:
    """Additive tree model on the margin (log-odds) scale."""

    trees: list
    base_margin: float
    learning_rate: float
    feature_count: int

    def to_dict(self) -> dict:
        return {
            "base_margin": self.base_margin,
            "learning_rate": self.learning_rate,
            "feature_count": self.feature_count,
            "n_trees": len(self.trees),
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreeEnsemble":
        return cls(
            trees=[TreeNode.from_dict(t) for t in d["trees"]],
            base_margin=float(d["base_margin"]),
            learning_rate=float(d["learning_rate"]),
            feature_count=int(d["feature_count"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "TreeEnsemble":
        return cls.from_dict(json.loads(s))


def _as_arrays(X, y):
    if isinstance(X, DesignMatrix):
        return X.values, X.labels.astype(float)
    if y is None:
        raise DataError("labels required when X is a plain matrix")
    return np.asarray(X, dtype=float), np.asarray(y, dtype=float)


def _grow_tree(X, order, g, h, mask, depth, cfg):
    n_node = int(mask.sum())
    G = float(g[mask].sum())
    H = float(h[mask].sum())
    denom = H + cfg.l2_leaf
    leaf_value = 0.0 if denom <= 0 else -G / denom * cfg.learning_rate
    if depth >= cfg.max_depth or n_node < 2 * cfg.min_samples_leaf:
        return TreeNode(cover=float(n_node), value=leaf_value)

    p = X.shape[1]
    # one sorted index matrix per node: each row of order.T keeps exactly
    # n_node members, so the flattened boolean take reshapes cleanly
    sorted_idx = order.T[mask[order.T]].reshape(p, n_node)
    gs = np.cumsum(g[sorted_idx], axis=1)[:, :-1]
    hs = np.cumsum(h[sorted_idx], axis=1)[:, :-1]
    xv = X[sorted_idx, np.arange(p)[:, None]]

    GL, HL = gs, hs
    GR, HR = G - GL, H - HL
    lam = cfg.l2_leaf
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = 0.5 * (GL**2 / (HL + lam) + GR**2 / (HR + lam) - G**2 / (H + lam))
    counts = np.arange(1, n_node)
    valid = (xv[:, :-1] < xv[:, 1:]) & (counts >= cfg.min_samples_leaf) & (n_node - counts >= cfg.min_samples_leaf)
    gain = np.where(valid, gain, -np.inf)

    pos = np.argmax(gain, axis=1)  # ties -> lowest threshold
    best = gain[np.arange(p), pos]
    feat = int(np.argmax(best))  # ties -> lowest feature index
    if not np.isfinite(best[feat]) or best[feat] <= 0.0:
        return TreeNode(cover=float(n_node), value=leaf_value)

    cut = pos[feat]
    threshold = 0.5 * (xv[feat, cut] + xv[feat, cut + 1])
    go_left = X[:, feat] < threshold
    left = _grow_tree(X, order, g, h, mask & go_left, depth + 1, cfg)
    right = _grow_tree(X, order, g, h, mask & ~go_left, depth + 1, cfg)
    return TreeNode(
        cover=float(n_node),
        feature=feat,
        threshold=float(threshold),
        left=left,
        right=right,
    )


def train_gbm(X, y=None, config: GbmConfig = None) -> TreeEnsemble:
    """Boost depth-limited trees against logistic-loss Newton targets.

    The base margin is the clipped log-odds of the label mean; each round
    fits one tree to the gradient/hessian of the logistic loss at the
    current margins with exact greedy splits (thresholds at midpoints of
    consecutive distinct sorted values, gain ties broken to the lowest
    feature index then lowest threshold) and Newton leaf values
    -G/(H + l2_leaf) scaled by the learning rate. Deterministic for a given
    input and config.
    """
    cfg = config or GbmConfig()
    X, y = _as_arrays(X, y)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DataError("empty training data")
    if y.shape[0] != X.shape[0]:
        raise DataError("labels length must match row count")
    n, p = X.shape

    pbar = float(np.clip(y.mean(), _PBAR_CLIP, 1.0 - _PBAR_CLIP))
    base_margin = float(np.log(pbar / (1.0 - pbar)))

    order = np.argsort(X, axis=0, kind="stable")
    margins = np.full(n, base_margin)
    trees = []
    for _ in range(cfg.n_trees):
        prob = sigmoid(margins)
        g = prob - y
        h = prob * (1.0 - prob)
        root = _grow_tree(X, order, g, h, np.ones(n, dtype=bool), 0, cfg)
        trees.append(root)
        margins += _predict_tree(root, X)
    return TreeEnsemble(trees=trees, base_margin=base_margin, learning_rate=cfg.learning_rate, feature_count=p)


def _predict_tree(node, X):
    out = np.empty(X.shape[0])
    _route(node, X, np.ones(X.shape[0], dtype=bool), out)
    return out


def _route(node, X, mask, out):
    if node.is_leaf:
        out[mask] = node.value
        return
    go_left = X[:, node.feature] < node.threshold
    _route(node.left, X, mask & go_left, out)
    _route(node.right, X, mask & ~go_left, out)


def predict_margin(model: TreeEnsemble, X, n_trees: int = None) -> np.ndarray:
    """Base margin plus routed leaf values (left branch iff value < threshold).

    n_trees truncates the ensemble to its first rounds, which makes per-round
    training curves cheap to reconstruct.
    """
    X = X.values if isinstance(X, DesignMatrix) else np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.feature_count:
        raise DataError(f"expected {model.feature_count} columns, got {X.shape[1] if X.ndim == 2 else 'non-matrix'}")
    margins = np.full(X.shape[0], model.base_margin)
    use = model.trees if n_trees is None else model.trees[:n_trees]
    for tree in use:
        margins += _predict_tree(tree, X)
    return margins


def predict_proba(model: TreeEnsemble, X, n_trees: int = None) -> np.ndarray:
    """Sigmoid of the predicted margin."""
    return sigmoid(predict_margin(model, X, n_trees=n_trees))


def check_covers(model: TreeEnsemble):
    """Raise if any node violates cover positivity or additivity."""

    def walk(node):
        if node.cover <= 0:
            raise NumericalError("non-positive node cover")
        if not node.is_leaf:
            if abs(node.cover - node.left.cover - node.right.cover) > 1e-9:
                raise NumericalError("cover of children does not sum to parent")
            walk(node.left)
            walk(node.right)

    for tree in model.trees:
        walk(tree)
