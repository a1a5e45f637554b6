"""Linear one-vs-rest SVC trained by full-batch subgradient descent."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from maskbench.classifiers.base import LabeledDataset, TrainedModel

CHECKPOINT_EVERY = 100


@dataclass(frozen=True, eq=False)
class SvcModel(TrainedModel):
    weights: np.ndarray = None  # (d, C)
    biases: np.ndarray = None  # (C,)

    kind = "svc"

    @property
    def dim(self) -> int:
        return self.weights.shape[0]

    def scores(self, X):
        return X @ self.weights + self.biases


def _has_conflicting_duplicates(X: np.ndarray, y: np.ndarray) -> bool:
    seen = {}
    for row, label in zip(X, y):
        key = row.tobytes()
        if seen.setdefault(key, label) != label:
            return True
    return False


def svc_objective(W, b, X, Y, lam):
    """Per-class primal objective and its hinge part; ``Y`` is +/-1, shape (n, C).

    The bias is treated as the weight of a constant feature, so it is regularized.
    """
    margins = Y * (X @ W + b)
    hinge = np.maximum(0.0, 1.0 - margins).mean(axis=0)
    reg = 0.5 * lam * ((W * W).sum(axis=0) + b * b)
    return reg + hinge, hinge


def train_svc(ds: LabeledDataset, cost: float = 1.0, iters: int = 2000) -> SvcModel:
    """One-vs-rest L2-regularized hinge loss, step ``1 / (lam * t)``, ``lam = 1 / (n * cost)``.

    Iterates stay in the span of the (bias-augmented) training rows, so the
    updates run on expansion coefficients over the Gram matrix; the primal
    weights are recovered at the end. The best iterate seen per class is
    returned, and the checkpoint trace records the best objective so far.
    """
    if cost <= 0:
        raise ValueError("cost must be positive")
    classes, yi = ds.encoded()
    X = ds.features
    n, C = ds.n, len(classes)
    lam = 1.0 / (n * cost)
    Y = -np.ones((n, C))
    Y[np.arange(n), yi] = 1.0

    K = X @ X.T + 1.0  # augmented Gram matrix: constant feature carries the bias
    alpha = np.zeros((n, C))
    best_alpha = alpha.copy()
    best_obj = np.full(C, np.inf)
    trace = []
    for t in range(1, iters + 1):
        f = K @ alpha
        margins = Y * f
        hinge = np.maximum(0.0, 1.0 - margins).mean(axis=0)
        obj = 0.5 * lam * np.einsum("ic,ic->c", alpha, f) + hinge
        improved = obj < best_obj
        if improved.any():
            best_obj = np.where(improved, obj, best_obj)
            best_alpha[:, improved] = alpha[:, improved]
        if t % CHECKPOINT_EVERY == 0 or t == 1:
            trace.append(best_obj.tolist())
        active = margins < 1.0
        eta = 1.0 / (lam * t)
        alpha = (1.0 - eta * lam) * alpha + (eta / n) * (Y * active)

    # final iterate also counts
    f = K @ alpha
    obj = 0.5 * lam * np.einsum("ic,ic->c", alpha, f) + np.maximum(0.0, 1.0 - Y * f).mean(axis=0)
    improved = obj < best_obj
    best_obj = np.where(improved, obj, best_obj)
    best_alpha[:, improved] = alpha[:, improved]
    trace.append(best_obj.tolist())

    W = X.T @ best_alpha
    b = best_alpha.sum(axis=0)
    _, hinge = svc_objective(W, b, X, Y, lam)
    meta = {
        "hyperparameters": {"cost": cost, "iters": iters},
        "objective": best_obj.tolist(),
        "hinge": hinge.tolist(),
        "objective_trace": trace,
        "separable": not _has_conflicting_duplicates(X, ds.labels),
    }
    return SvcModel(classes=classes, meta=meta, weights=W, biases=b)


def predict_svc(m: SvcModel, x):
    return m.predict(x)
