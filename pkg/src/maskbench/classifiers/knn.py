"""Brute-force k-nearest-neighbors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from maskbench.classifiers.base import LabeledDataset, TrainedModel

METRICS = ("euclidean", "chi2")


def distances(stored: np.ndarray, x: np.ndarray, metric: str = "euclidean") -> np.ndarray:
    diff = stored - x
    if metric == "euclidean":
        return np.sqrt(np.einsum("ij,ij->i", diff, diff))
    if metric == "chi2":
        denom = stored + x
        with np.errstate(invalid="ignore", divide="ignore"):
            terms = np.where(denom > 0, diff * diff / denom, 0.0)
        return terms.sum(axis=1)
    raise ValueError(f"unknown metric {metric!r}")


@dataclass(frozen=True, eq=False)
class KnnModel(TrainedModel):
    features: np.ndarray = None
    labels: np.ndarray = None  # indices into classes
    k: int = 5
    metric: str = "euclidean"

    kind = "knn"

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def scores(self, X):
        """Neighbor vote counts per class."""
        C = len(self.classes)
        votes = np.zeros((X.shape[0], C))
        for row, x in enumerate(X):
            dist = distances(self.features, x, self.metric)
            # stable sort: equal distances keep stored order
            nearest = np.argsort(dist, kind="stable")[: self.k]
            votes[row] = np.bincount(self.labels[nearest], minlength=C)
        return votes


def train_knn(ds: LabeledDataset, k: int = 5, metric: str = "euclidean") -> KnnModel:
    if k < 1 or k > ds.n:
        raise ValueError(f"k={k} must lie in [1, {ds.n}]")
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    classes, yi = ds.encoded()
    return KnnModel(
        classes=classes,
        meta={"hyperparameters": {"k": k, "metric": metric}},
        features=ds.features.copy(),
        labels=yi,
        k=k,
        metric=metric,
    )


def predict_knn(m: KnnModel, x):
    return m.predict(x)
