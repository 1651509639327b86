"""Stochastic gradient-boosted regression trees (squared-error loss).

Stage 0 predicts the target mean; each later stage fits a depth-limited
least-squares tree to the current residuals on a seeded subsample drawn
without replacement, and is added with shrinkage ``learning_rate``.
Features are ``(size, memory_mb)`` rows.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .basic import mape

FEATURE_NAMES = ("size", "memory_mb")


@dataclass(frozen=True)
class GBRTHyper:
    n_trees: int = 200
    max_depth: int = 3
    learning_rate: float = 0.1
    subsample_fraction: float = 0.8
    min_leaf: int = 5

    def __post_init__(self):
        if self.n_trees < 0:
            raise ValueError("n_trees must be >= 0")
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must be in (0, 1]")
        if not 0 < self.subsample_fraction <= 1:
            raise ValueError("subsample_fraction must be in (0, 1]")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")

    @classmethod
    def coerce(cls, h):
        if isinstance(h, cls):
            return h
        return cls(**h)

    def to_dict(self):
        return asdict(self)


@dataclass
class TreeNode:
    leaf_value: float | None = None
    feature: int | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self):
        return self.feature is None

    def predict_one(self, x):
        node = self
        while not node.is_leaf:
            node = node.left if x[node.feature] < node.threshold else node.right
        return node.leaf_value

    def depth(self):
        if self.is_leaf:
            return 0
        return 1 + max(self.left.depth(), self.right.depth())

    def to_dict(self):
        if self.is_leaf:
            return {"feature": None, "threshold": None, "left": None, "right": None,
                    "leaf_value": self.leaf_value}
        return {"feature": FEATURE_NAMES[self.feature], "threshold": self.threshold,
                "left": self.left.to_dict(), "right": self.right.to_dict(), "leaf_value": None}

    @classmethod
    def from_dict(cls, d):
        if d.get("feature") is None:
            return cls(leaf_value=float(d["leaf_value"]))
        return cls(feature=FEATURE_NAMES.index(d["feature"]), threshold=float(d["threshold"]),
                   left=cls.from_dict(d["left"]), right=cls.from_dict(d["right"]))


def best_split(X, y, min_leaf):
    """Best SSE-reducing axis split as ``(feature, threshold, gain)`` or None.

    Samples with ``x[feature] < threshold`` go left. Ties keep the first
    feature and the smallest threshold.
    """
    n = len(y)
    if n < 2 * min_leaf:
        return None
    total = y.sum()
    base = total * total / n
    best = None
    for j in range(X.shape[1]):
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        cl = np.cumsum(y[order])[:-1]
        k = np.arange(1, n)
        ok = (xs[:-1] < xs[1:]) & (k >= min_leaf) & (n - k >= min_leaf)
        if not ok.any():
            continue
        score = cl * cl / k + (total - cl) ** 2 / (n - k)
        score = np.where(ok, score, -np.inf)
        i = int(np.argmax(score))
        gain = float(score[i] - base)
        if best is None or gain > best[2]:
            lo, hi = xs[i], xs[i + 1]
            thr = 0.5 * (lo + hi)
            if not lo < thr <= hi:
                thr = hi
            best = (j, float(thr), gain)
    return best


def build_tree(X, y, max_depth, min_leaf, depth=0):
    value = float(y.mean())
    if depth >= max_depth or len(y) < 2 * min_leaf:
        return TreeNode(leaf_value=value)
    resid = y - value
    sse = float(resid @ resid)
    if sse <= 1e-24 * max(1.0, float(y @ y)):
        return TreeNode(leaf_value=value)
    split = best_split(X, y, min_leaf)
    if split is None:
        return TreeNode(leaf_value=value)
    j, thr, _ = split
    mask = X[:, j] < thr
    return TreeNode(feature=j, threshold=thr,
                    left=build_tree(X[mask], y[mask], max_depth, min_leaf, depth + 1),
                    right=build_tree(X[~mask], y[~mask], max_depth, min_leaf, depth + 1))


class GBRTModel:
    """Fitted boosted ensemble; treat as immutable once constructed."""

    def __init__(self, base_prediction, trees, learning_rate, subsample_fraction=1.0,
                 hyper=None, train_loss=None):
        self.base_prediction = float(base_prediction)
        self.trees = list(trees)
        self.learning_rate = float(learning_rate)
        self.subsample_fraction = float(subsample_fraction)
        self.hyper = hyper
        self.train_loss = list(train_loss or [])
        self._flatten()

    def _flatten(self):
        feat, thr, left, right, val, roots = [], [], [], [], [], []

        def add(node):
            idx = len(feat)
            feat.append(-1 if node.is_leaf else node.feature)
            thr.append(0.0 if node.is_leaf else node.threshold)
            left.append(-1)
            right.append(-1)
            val.append(0.0 if not node.is_leaf else node.leaf_value)
            if not node.is_leaf:
                left[idx] = add(node.left)
                right[idx] = add(node.right)
            return idx

        for tree in self.trees:
            roots.append(add(tree))
        self._feat = np.array(feat, dtype=np.int64)
        self._thr = np.array(thr, dtype=float)
        self._left = np.array(left, dtype=np.int64)
        self._right = np.array(right, dtype=np.int64)
        self._val = np.array(val, dtype=float)
        self._roots = np.array(roots, dtype=np.int64)
        self._depth = max((t.depth() for t in self.trees), default=0)

    def raw_predict(self, X):
        """Unclamped ensemble output for an (n, 2) feature array."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.full(len(X), self.base_prediction)
        if not self.trees or len(X) == 0:
            return out
        cols = np.arange(len(X))[None, :]
        nodes = np.repeat(self._roots[:, None], len(X), axis=1)
        for _ in range(self._depth):
            f = self._feat[nodes]
            inner = f >= 0
            xv = X[cols, np.maximum(f, 0)]
            nxt = np.where(xv < self._thr[nodes], self._left[nodes], self._right[nodes])
            nodes = np.where(inner, nxt, nodes)
        # Summing per tree in stage order keeps results identical to the fit loop.
        for row in self._val[nodes]:
            out += self.learning_rate * row
        return out

    def predict_many(self, sizes, memory_mb):
        sizes = np.asarray(sizes, dtype=float)
        mem = np.broadcast_to(np.asarray(memory_mb, dtype=float), sizes.shape)
        return np.maximum(0.0, self.raw_predict(np.column_stack([sizes, mem])))

    def predict(self, size, memory_mb=0):
        return float(self.predict_many([size], [memory_mb])[0])

    def to_dict(self):
        return {"kind": "gbrt", "base_prediction": self.base_prediction,
                "learning_rate": self.learning_rate,
                "subsample_fraction": self.subsample_fraction,
                "hyper": self.hyper.to_dict() if self.hyper else None,
                "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d):
        hyper = GBRTHyper(**d["hyper"]) if d.get("hyper") else None
        return cls(d["base_prediction"], [TreeNode.from_dict(t) for t in d["trees"]],
                   d["learning_rate"], d.get("subsample_fraction", 1.0), hyper)


def fit_gbrt(features, targets, hyper=None, seed=0) -> GBRTModel:
    hyper = GBRTHyper.coerce(hyper or {})
    X = np.atleast_2d(np.asarray(features, dtype=float))
    y = np.asarray(targets, dtype=float)
    if y.size == 0:
        raise ValueError("fit_gbrt needs training data")
    if X.shape != (len(y), 2):
        raise ValueError(f"features must be (n, 2) matching targets, got {X.shape}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite training data")
    n = len(y)
    rng = np.random.default_rng(seed)
    n_sub = min(n, max(1, int(round(hyper.subsample_fraction * n))))
    base = float(y.mean())
    fitted = np.full(n, base)
    loss = [float(np.mean((y - fitted) ** 2))]
    trees = []
    for _ in range(hyper.n_trees):
        if n_sub == n:
            idx = np.arange(n)
        else:
            idx = np.sort(rng.choice(n, size=n_sub, replace=False))
        tree = build_tree(X[idx], y[idx] - fitted[idx], hyper.max_depth, hyper.min_leaf)
        trees.append(tree)
        fitted += hyper.learning_rate * _tree_predict(tree, X)
        loss.append(float(np.mean((y - fitted) ** 2)))
    return GBRTModel(base, trees, hyper.learning_rate, hyper.subsample_fraction, hyper, loss)


def _tree_predict(tree, X):
    out = np.empty(len(X))
    stack = [(tree, np.arange(len(X)))]
    while stack:
        node, idx = stack.pop()
        if node.is_leaf:
            out[idx] = node.leaf_value
            continue
        go = X[idx, node.feature] < node.threshold
        stack.append((node.left, idx[go]))
        stack.append((node.right, idx[~go]))
    return out


def kfold_indices(n, k_folds, seed=0):
    """Seeded partition of ``range(n)`` into ``k_folds`` validation folds."""
    if k_folds < 2:
        raise ValueError("k_folds must be >= 2")
    if n < k_folds:
        raise ValueError(f"{n} samples cannot fill {k_folds} folds")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k_folds)]


def cv_score(hyper, X, y, k_folds=3, seed=0):
    """Mean validation-fold MAPE of one hyperparameter candidate."""
    folds = kfold_indices(len(y), k_folds, seed)
    scores = []
    for i, val in enumerate(folds):
        train = np.sort(np.concatenate([f for j, f in enumerate(folds) if j != i]))
        model = fit_gbrt(X[train], y[train], hyper, seed=seed + i)
        scores.append(mape(model.predict_many(X[val, 0], X[val, 1]), y[val]))
    return float(np.mean(scores))


def grid_search_cv(candidates, features, targets, k_folds=3, seed=0):
    """Candidate with the lowest mean fold MAPE; earlier candidates win ties.

    Returns ``(best_hyper, scores)``.
    """
    candidates = [GBRTHyper.coerce(c) for c in candidates]
    if not candidates:
        raise ValueError("no candidates")
    X = np.atleast_2d(np.asarray(features, dtype=float))
    y = np.asarray(targets, dtype=float)
    if len(y) < k_folds:
        raise ValueError(f"{len(y)} samples cannot fill {k_folds} folds")
    if len(candidates) == 1:
        return candidates[0], [math.nan]
    scores = [cv_score(c, X, y, k_folds, seed) for c in candidates]
    best = min(range(len(candidates)), key=lambda i: (scores[i], i))
    return candidates[best], scores
