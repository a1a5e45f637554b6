"""Multinomial logistic regression, full-batch gradient descent with backtracking."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from maskbench.classifiers.base import LabeledDataset, TrainedModel

ARMIJO = 1e-4
MAX_HALVINGS = 60


class NonFiniteLossError(FloatingPointError):
    pass


@dataclass(frozen=True, eq=False)
class LrModel(TrainedModel):
    weights: np.ndarray = None  # (C, d)
    biases: np.ndarray = None  # (C,)

    kind = "lr"

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def scores(self, X):
        return X @ self.weights.T + self.biases

    def predict_proba(self, X):
        X, _ = self._check(X)
        return softmax(self.scores(X))


def log_softmax(Z: np.ndarray) -> np.ndarray:
    Z = Z - Z.max(axis=1, keepdims=True)
    return Z - np.log(np.exp(Z).sum(axis=1, keepdims=True))


def softmax(Z: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(Z))


def lr_loss(W, b, X, Y, l2):
    """Mean cross-entropy plus ``l2 / 2 * ||W||^2``; ``W`` is (C, d), ``Y`` one-hot (n, C)."""
    logp = log_softmax(X @ W.T + b)
    return -(Y * logp).sum() / X.shape[0] + 0.5 * l2 * (W * W).sum()


def lr_loss_and_grad(W, b, X, Y, l2):
    n = X.shape[0]
    logp = log_softmax(X @ W.T + b)
    loss = -(Y * logp).sum() / n + 0.5 * l2 * (W * W).sum()
    G = (np.exp(logp) - Y) / n
    return loss, G.T @ X + l2 * W, G.sum(axis=0)


def _trial_step(prev, A, KA, b, KG, gb, last_step):
    """Barzilai-Borwein step ``s.s / s.y`` in weight space; doubled last step as fallback."""
    if prev is None:
        return 2.0 * last_step
    A0, KA0, b0, KG0, gb0 = prev
    dA, db = A - A0, b - b0
    ss = np.einsum("ic,ic->", dA, KA - KA0) + db @ db
    sy = np.einsum("ic,ic->", dA, KG - KG0) + db @ (gb - gb0)
    if sy > 0 and np.isfinite(ss / sy):
        return ss / sy
    return 2.0 * last_step


def train_lr(
    ds: LabeledDataset, l2: float = 1e-4, tol: float = 1e-6, max_iters: int = 1000
) -> LrModel:
    """Minimize the L2-penalized softmax loss (bias unpenalized) from zero weights.

    Each iteration starts from a Barzilai-Borwein trial step and halves it
    until the Armijo condition holds, so the loss never increases. Weight iterates remain in the row span of ``X``
    (``W = A X``), so the descent runs on ``A`` against the Gram matrix, which
    is the same sequence of iterates at a fraction of the cost for ``d >> n``.
    """
    if l2 < 0:
        raise ValueError("l2 must be non-negative")
    classes, yi = ds.encoded()
    X = ds.features
    n, C = ds.n, len(classes)
    Y = np.zeros((n, C))
    Y[np.arange(n), yi] = 1.0
    K = X @ X.T

    A = np.zeros((n, C))  # W^T = X^T A
    b = np.zeros(C)
    KA = K @ A

    def loss_at(KA_, A_, b_):
        logp = log_softmax(KA_ + b_)
        val = -(Y * logp).sum() / n + 0.5 * l2 * np.einsum("ic,ic->", A_, KA_)
        return val, logp

    loss, logp = loss_at(KA, A, b)
    if not np.isfinite(loss):
        raise NonFiniteLossError("initial loss is not finite")
    step = 1.0
    trace = [float(loss)]
    grad_inf = np.inf
    iterations = 0
    sqrt_dc = np.sqrt(X.shape[1] * C)
    prev = None  # (A, KA, b, G, KG, gb) at the last accepted iterate
    for it in range(max_iters):
        G = (np.exp(logp) - Y) / n + l2 * A  # grad_W^T = X^T G
        gb = (np.exp(logp) - Y).sum(axis=0) / n
        KG = K @ G
        g_sq = np.einsum("ic,ic->", G, KG) + gb @ gb
        # ||.||_inf <= ||.||_F, so form the full gradient only when it can pass
        if np.sqrt(g_sq) <= tol * sqrt_dc:
            grad_inf = max(np.abs(X.T @ G).max(), np.abs(gb).max())
            if grad_inf <= tol:
                break
        step = _trial_step(prev, A, KA, b, KG, gb, step)
        for _ in range(MAX_HALVINGS):
            A_new = A - step * G
            KA_new = KA - step * KG
            b_new = b - step * gb
            new_loss, new_logp = loss_at(KA_new, A_new, b_new)
            if not np.isfinite(new_loss):
                raise NonFiniteLossError(f"loss became non-finite at iteration {it}")
            if new_loss <= loss - ARMIJO * step * g_sq:
                break
            step *= 0.5
        else:
            break  # no decrease representable at this precision
        prev = (A, KA, b, KG, gb)
        A, KA, b, loss, logp = A_new, KA_new, b_new, new_loss, new_logp
        trace.append(float(loss))
        iterations = it + 1

    W = (X.T @ A).T
    gW = X.T @ ((np.exp(logp) - Y) / n + l2 * A)
    gb = (np.exp(logp) - Y).sum(axis=0) / n
    grad_inf = float(max(np.abs(gW).max(), np.abs(gb).max()))
    meta = {
        "hyperparameters": {"l2": l2, "tol": tol, "max_iters": max_iters},
        "iterations": iterations,
        "final_loss": float(loss),
        "grad_inf_norm": grad_inf,
        "loss_trace": trace,
    }
    return LrModel(classes=classes, meta=meta, weights=np.ascontiguousarray(W), biases=b)


def predict_lr(m: LrModel, x):
    return m.predict(x)
