"""The six classifiers behind a shared train/predict contract."""

from maskbench.classifiers.base import DimensionMismatchError, LabeledDataset, TrainedModel
from maskbench.classifiers.dt import DtModel, predict_dt, train_dt
from maskbench.classifiers.knn import KnnModel, predict_knn, train_knn
from maskbench.classifiers.lda import LdaFactorizationError, LdaModel, predict_lda, train_lda
from maskbench.classifiers.lr import LrModel, NonFiniteLossError, predict_lr, train_lr
from maskbench.classifiers.nb import NbModel, predict_nb, train_nb
from maskbench.classifiers.serialize import (
    BadMagicError,
    ModelFormatError,
    TruncatedModelError,
    VersionMismatchError,
    deserialize_model,
    load_model,
    save_model,
    serialize_model,
)
from maskbench.classifiers.svc import SvcModel, predict_svc, train_svc

MODEL_NAMES = ("SVC", "LDA", "KNN", "DT", "LR", "NB")

TRAINERS = {
    "SVC": train_svc,
    "LDA": train_lda,
    "KNN": train_knn,
    "DT": train_dt,
    "LR": train_lr,
    "NB": train_nb,
}

DEFAULT_HYPERPARAMETERS = {
    "SVC": {"cost": 1.0, "iters": 2000},
    "LDA": {"shrinkage": 1e-3},
    "KNN": {"k": 5, "metric": "euclidean"},
    "DT": {"min_leaf": 1},
    "LR": {"l2": 1e-4, "tol": 1e-6, "max_iters": 1000},
    "NB": {"var_smoothing": 1e-9},
}


def train(name: str, ds: LabeledDataset, **hyper) -> TrainedModel:
    params = {**DEFAULT_HYPERPARAMETERS[name], **hyper}
    return TRAINERS[name](ds, **params)


def predict(m: TrainedModel, x):
    return m.predict(x)


__all__ = [
    "MODEL_NAMES", "TRAINERS", "DEFAULT_HYPERPARAMETERS", "train", "predict",
    "LabeledDataset", "TrainedModel", "DimensionMismatchError",
    "SvcModel", "LdaModel", "KnnModel", "DtModel", "LrModel", "NbModel",
    "train_svc", "train_lda", "train_knn", "train_dt", "train_lr", "train_nb",
    "predict_svc", "predict_lda", "predict_knn", "predict_dt", "predict_lr", "predict_nb",
    "LdaFactorizationError", "NonFiniteLossError",
    "serialize_model", "deserialize_model", "save_model", "load_model",
    "ModelFormatError", "BadMagicError", "VersionMismatchError", "TruncatedModelError",
]
