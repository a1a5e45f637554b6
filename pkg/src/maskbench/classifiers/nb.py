"""Gaussian naive Bayes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from maskbench.classifiers.base import LabeledDataset, TrainedModel


@dataclass(frozen=True, eq=False)
class NbModel(TrainedModel):
    means: np.ndarray = None  # (C, d)
    variances: np.ndarray = None  # (C, d)
    log_priors: np.ndarray = None

    kind = "nb"

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def scores(self, X):
        """Joint log-likelihood ``log prior + sum_j log N(x_j; mean, var)``."""
        norm = -0.5 * np.log(2.0 * np.pi * self.variances).sum(axis=1)
        out = np.empty((X.shape[0], len(self.classes)))
        for c in range(len(self.classes)):
            z = (X - self.means[c]) ** 2 / self.variances[c]
            out[:, c] = self.log_priors[c] + norm[c] - 0.5 * z.sum(axis=1)
        return out


def train_nb(ds: LabeledDataset, var_smoothing: float = 1e-9) -> NbModel:
    """Population per-class variances, floored at ``var_smoothing * max feature variance``."""
    if var_smoothing <= 0:
        raise ValueError("var_smoothing must be positive")
    classes, yi = ds.encoded()
    X = ds.features
    C = len(classes)
    counts = np.bincount(yi, minlength=C).astype(np.float64)
    means = np.zeros((C, X.shape[1]))
    np.add.at(means, yi, X)
    means /= counts[:, None]
    variances = np.zeros_like(means)
    np.add.at(variances, yi, (X - means[yi]) ** 2)
    variances /= counts[:, None]
    max_var = X.var(axis=0).max()
    # all-constant data would give a zero floor
    floor = var_smoothing * max_var if max_var > 0 else var_smoothing
    variances = np.maximum(variances, floor)
    return NbModel(
        classes=classes,
        meta={"hyperparameters": {"var_smoothing": var_smoothing}, "variance_floor": float(floor)},
        means=means,
        variances=variances,
        log_priors=np.log(counts / ds.n),
    )


def predict_nb(m: NbModel, x):
    return m.predict(x)
