"""CART decision tree with Gini impurity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from maskbench.classifiers.base import LabeledDataset, TrainedModel

LEAF = -1
_TIE_RTOL = 1e-12
_CHUNK = 512


@dataclass(frozen=True, eq=False)
class DtModel(TrainedModel):
    """Array-encoded binary tree; node 0 is the root.

    Internal nodes route ``x[feature] <= threshold`` to ``left``. Leaves have
    ``feature == -1`` and carry a class index in ``value``.
    """

    feature: np.ndarray = None
    threshold: np.ndarray = None
    left: np.ndarray = None
    right: np.ndarray = None
    value: np.ndarray = None
    n_features: int = 0

    kind = "dt"

    @property
    def dim(self) -> int:
        return self.n_features

    @property
    def node_count(self) -> int:
        return len(self.feature)

    def depth(self) -> int:
        best = 0
        stack = [(0, 0)]
        while stack:
            node, d = stack.pop()
            if self.feature[node] == LEAF:
                best = max(best, d)
            else:
                stack.append((self.left[node], d + 1))
                stack.append((self.right[node], d + 1))
        return best

    def apply(self, X) -> np.ndarray:
        """Leaf reached by each row."""
        out = np.empty(X.shape[0], dtype=np.int64)
        for r, x in enumerate(X):
            node = 0
            while self.feature[node] != LEAF:
                node = self.left[node] if x[self.feature[node]] <= self.threshold[node] else self.right[node]
            out[r] = node
        return out

    def scores(self, X):
        onehot = np.zeros((X.shape[0], len(self.classes)))
        onehot[np.arange(X.shape[0]), self.value[self.apply(X)]] = 1.0
        return onehot


def gini(counts: np.ndarray) -> float:
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    return 1.0 - float((p * p).sum())


def split_scores(X: np.ndarray, yi: np.ndarray, n_classes: int):
    """Score every midpoint split of every feature.

    Returns ``(scores, thresholds)`` of shape ``(m - 1, d)``. The score is
    ``sum cL^2 / nL + sum cR^2 / nR``, which orders splits exactly as the
    weighted child Gini impurity (reversed). Positions between equal values
    score ``-inf``.
    """
    m, d = X.shape
    onehot = np.zeros((m, n_classes))
    onehot[np.arange(m), yi] = 1.0
    total = onehot.sum(axis=0)
    n_left = np.arange(1, m, dtype=np.float64)[:, None]
    n_right = m - n_left
    scores = np.empty((m - 1, d))
    thresholds = np.empty((m - 1, d))
    for f0 in range(0, d, _CHUNK):
        cols = X[:, f0 : f0 + _CHUNK]
        order = np.argsort(cols, axis=0, kind="stable")
        vals = np.take_along_axis(cols, order, axis=0)
        left = np.cumsum(onehot[order], axis=0)[:-1]  # (m-1, f, C)
        right = total - left
        s = (left * left).sum(axis=2) / n_left + (right * right).sum(axis=2) / n_right
        lo, hi = vals[:-1], vals[1:]
        s[lo == hi] = -np.inf
        thr = (lo + hi) / 2.0
        # midpoint of adjacent floats can round up onto the upper value
        thr = np.where(thr >= hi, lo, thr)
        scores[:, f0 : f0 + _CHUNK] = s
        thresholds[:, f0 : f0 + _CHUNK] = thr
    return scores, thresholds


def best_split(X: np.ndarray, yi: np.ndarray, n_classes: int):
    """(feature, threshold) of the best split, or ``None`` if every feature is constant.

    Ties go to the lowest feature index, then the lowest threshold.
    """
    if X.shape[0] < 2:
        return None
    varying = np.flatnonzero(X.min(axis=0) < X.max(axis=0))
    if len(varying) == 0:
        return None
    scores, thresholds = split_scores(X[:, varying], yi, n_classes)
    top = scores.max()
    hits = scores >= top - _TIE_RTOL * abs(top)
    col = int(np.argmax(hits.any(axis=0)))
    pos = int(np.argmax(hits[:, col]))
    return int(varying[col]), float(thresholds[pos, col])


def _majority(yi: np.ndarray, n_classes: int) -> int:
    return int(np.argmax(np.bincount(yi, minlength=n_classes)))


def train_dt(ds: LabeledDataset, min_leaf: int = 1) -> DtModel:
    """Grow until pure, no feature separates the node, or the node has ``<= min_leaf`` samples."""
    if min_leaf < 1:
        raise ValueError("min_leaf must be >= 1")
    classes, yi = ds.encoded()
    X = ds.features
    C = len(classes)
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(idx):
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(_majority(yi[idx], C))
        return len(feature) - 1

    stack = [(new_node(np.arange(ds.n)), np.arange(ds.n))]
    while stack:
        node, idx = stack.pop()
        labels = yi[idx]
        if len(idx) <= min_leaf or np.all(labels == labels[0]):
            continue
        split = best_split(X[idx], labels, C)
        if split is None:
            continue
        f, thr = split
        go_left = X[idx, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        stack.append((right[node], ri))
        stack.append((left[node], li))

    model = DtModel(
        classes=classes,
        meta={"hyperparameters": {"min_leaf": min_leaf}},
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold, dtype=np.float64),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        value=np.array(value, dtype=np.int64),
        n_features=ds.dim,
    )
    model.meta["node_count"] = model.node_count
    model.meta["depth"] = model.depth()
    return model


def predict_dt(m: DtModel, x):
    return m.predict(x)
