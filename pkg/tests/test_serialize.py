import struct

import numpy as np
import pytest

from maskbench.classifiers import (
    MODEL_NAMES,
    BadMagicError,
    LabeledDataset,
    ModelFormatError,
    TruncatedModelError,
    VersionMismatchError,
    deserialize_model,
    load_model,
    save_model,
    serialize_model,
    train,
)


@pytest.fixture(scope="module")
def dataset():
    rng = np.random.default_rng(5)
    X = np.vstack([rng.normal(c, 1.0, (8, 6)) for c in range(4)])
    return LabeledDataset(X, np.repeat([3, 7, 9, 11], 8))


@pytest.fixture(scope="module")
def models(dataset):
    return {name: train(name, dataset) for name in MODEL_NAMES}


@pytest.mark.parametrize("name", MODEL_NAMES)
def test_round_trip_predictions(models, name):
    m = models[name]
    blob = serialize_model(m)
    assert blob[:4] == b"MFRB"
    back = deserialize_model(blob)
    assert type(back) is type(m)
    assert np.array_equal(back.classes, m.classes)
    assert back.meta == m.meta
    Q = np.random.default_rng(1).normal(1.5, 2.0, (1000, 6))
    assert np.array_equal(back.predict(Q), m.predict(Q))
    assert np.array_equal(back.scores(Q), m.scores(Q))
    assert serialize_model(back) == blob


def test_file_round_trip(models, tmp_path):
    save_model(models["LR"], tmp_path / "lr.mfrb")
    assert np.array_equal(load_model(tmp_path / "lr.mfrb").weights, models["LR"].weights)


def test_bad_magic(models):
    blob = bytearray(serialize_model(models["NB"]))
    blob[0:4] = b"XXXX"
    with pytest.raises(BadMagicError):
        deserialize_model(bytes(blob))


def test_version_mismatch(models):
    blob = bytearray(serialize_model(models["NB"]))
    blob[4:8] = struct.pack("<I", 99)
    with pytest.raises(VersionMismatchError):
        deserialize_model(bytes(blob))


@pytest.mark.parametrize("cut", [2, 6, 20, -1, -100])
def test_truncation(models, cut):
    blob = serialize_model(models["DT"])
    with pytest.raises((TruncatedModelError, BadMagicError)):
        deserialize_model(blob[:cut])


def test_errors_are_distinct():
    assert len({BadMagicError, VersionMismatchError, TruncatedModelError}) == 3
    for exc in (BadMagicError, VersionMismatchError, TruncatedModelError):
        assert issubclass(exc, ModelFormatError)


def test_trailing_garbage(models):
    with pytest.raises(ModelFormatError):
        deserialize_model(serialize_model(models["KNN"]) + b"\x00")


def test_floats_little_endian(models):
    m = models["SVC"]
    blob = serialize_model(m)
    raw = m.biases.astype("<f8").tobytes()
    assert raw in blob
