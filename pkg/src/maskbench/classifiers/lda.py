"""Linear discriminant analysis with a shrunk pooled covariance."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from maskbench.classifiers.base import LabeledDataset, TrainedModel


class LdaFactorizationError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True, eq=False)
class LdaModel(TrainedModel):
    """Covariance kept as ``V diag(eigvals) V^T + ridge * I`` (thin factor)."""

    means: np.ndarray = None  # (C, d)
    components: np.ndarray = None  # (d, r), orthonormal columns
    eigvals: np.ndarray = None  # (r,)
    ridge: float = 0.0
    log_priors: np.ndarray = None  # (C,)

    kind = "lda"

    def __post_init__(self):
        coef = self.solve(self.means.T)  # (d, C)
        intercept = -0.5 * np.einsum("dc,cd->c", coef, self.means) + self.log_priors
        object.__setattr__(self, "_coef", coef)
        object.__setattr__(self, "_intercept", intercept)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def solve(self, B: np.ndarray) -> np.ndarray:
        """Apply the inverse covariance to the columns of ``B``."""
        V, lam = self.components, self.eigvals
        proj = V.T @ B
        if self.ridge == 0.0:
            # full-rank, no shrinkage: V is square
            return V @ (proj / lam[:, None])
        inv_full = 1.0 / (lam + self.ridge)
        return (B - V @ proj) / self.ridge + V @ (proj * inv_full[:, None])

    @property
    def coef(self) -> np.ndarray:
        return self._coef

    @property
    def intercept(self) -> np.ndarray:
        return self._intercept

    def scores(self, X):
        return X @ self._coef + self._intercept


def train_lda(ds: LabeledDataset, shrinkage: float = 1e-3) -> LdaModel:
    """Class means, pooled covariance ``(1 - g) S + g * (tr S / d) I``, log priors."""
    if not 0.0 <= shrinkage <= 1.0:
        raise ValueError("shrinkage must lie in [0, 1]")
    classes, yi = ds.encoded()
    X = ds.features
    n, d = X.shape
    C = len(classes)
    counts = np.bincount(yi, minlength=C).astype(np.float64)
    means = np.zeros((C, d))
    np.add.at(means, yi, X)
    means /= counts[:, None]
    centered = X - means[yi]
    dof = n - C if n > C else n

    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    eig = s * s / dof
    trace = eig.sum()
    scale = trace / d if trace > 0 else 1.0

    if shrinkage == 0.0:
        tol = eig.max(initial=0.0) * max(n, d) * np.finfo(float).eps
        if len(eig) < d or np.any(eig <= tol):
            raise LdaFactorizationError(
                "pooled covariance is singular; use shrinkage > 0"
            )
        components, eigvals, ridge = vt.T, eig, 0.0
    else:
        components = vt.T
        eigvals = (1.0 - shrinkage) * eig
        ridge = shrinkage * scale

    log_priors = np.log(counts / n)
    meta = {"hyperparameters": {"shrinkage": shrinkage}, "trace_scale": float(scale)}
    return LdaModel(
        classes=classes,
        meta=meta,
        means=means,
        components=np.ascontiguousarray(components),
        eigvals=eigvals,
        ridge=float(ridge),
        log_priors=log_priors,
    )


def predict_lda(m: LdaModel, x):
    return m.predict(x)
