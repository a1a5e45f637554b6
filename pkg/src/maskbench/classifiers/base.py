from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DimensionMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class LabeledDataset:
    """Feature matrix ``(n, d)`` with parallel subject labels."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        X = np.ascontiguousarray(np.asarray(self.features, dtype=np.float64))
        y = np.asarray(self.labels, dtype=np.int64).ravel()
        if X.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {X.shape}")
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"{X.shape[0]} feature rows but {y.shape[0]} labels")
        n_classes = len(np.unique(y))
        if n_classes < 2:
            raise ValueError("need at least two classes")
        if X.shape[0] < n_classes:
            raise ValueError("fewer samples than classes")
        if not np.all(np.isfinite(X)):
            raise ValueError("features must be finite")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def classes(self) -> np.ndarray:
        return np.unique(self.labels)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def encoded(self) -> tuple[np.ndarray, np.ndarray]:
        """Sorted class ids and labels as indices into them."""
        classes, idx = np.unique(self.labels, return_inverse=True)
        return classes, idx.astype(np.int64)


@dataclass(frozen=True, eq=False)
class TrainedModel:
    """Common part of every model: class ids (ascending) and metadata."""

    classes: np.ndarray
    meta: dict = field(default_factory=dict)

    kind = "base"

    @property
    def dim(self) -> int:
        raise NotImplementedError

    def scores(self, X: np.ndarray) -> np.ndarray:
        """Per-class scores ``(m, C)``; larger is better."""
        raise NotImplementedError

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.dim:
            raise DimensionMismatchError(f"model expects dimension {self.dim}, got {X.shape[1]}")
        return X, single

    def predict(self, X):
        X, single = self._check(X)
        labels = self.classes[argmax_first(self.scores(X))]
        return int(labels[0]) if single else labels


def argmax_first(scores: np.ndarray) -> np.ndarray:
    """Row-wise argmax; ties resolve to the lowest column (smallest class id)."""
    return np.argmax(scores, axis=1)


def fingerprint_meta(hyper: dict, lbp_fingerprint: str | None = None) -> dict:
    meta = {"hyperparameters": dict(hyper)}
    if lbp_fingerprint is not None:
        meta["lbp_config"] = lbp_fingerprint
    return meta
