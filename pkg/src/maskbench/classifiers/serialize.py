"""Binary model files: ``MFRB`` magic, format version, model tag, typed arrays.

Layout (all integers and floats little-endian)::

    b"MFRB" | u32 version | u8 tag | u32 header_len | header JSON (utf-8)
    repeated: u16 name_len | name | u8 dtype ('f' float64 / 'i' int64)
              | u8 ndim | u64 dims... | raw data
"""

from __future__ import annotations

import io
import json
import struct

import numpy as np

from maskbench.classifiers.base import TrainedModel
from maskbench.classifiers.dt import DtModel
from maskbench.classifiers.knn import KnnModel
from maskbench.classifiers.lda import LdaModel
from maskbench.classifiers.lr import LrModel
from maskbench.classifiers.nb import NbModel
from maskbench.classifiers.svc import SvcModel

MAGIC = b"MFRB"
FORMAT_VERSION = 1

_TAGS = {SvcModel: 1, LdaModel: 2, KnnModel: 3, DtModel: 4, LrModel: 5, NbModel: 6}
_BY_TAG = {v: k for k, v in _TAGS.items()}
_ARRAYS = {
    SvcModel: ("classes", "weights", "biases"),
    LdaModel: ("classes", "means", "components", "eigvals", "log_priors"),
    KnnModel: ("classes", "features", "labels"),
    DtModel: ("classes", "feature", "threshold", "left", "right", "value"),
    LrModel: ("classes", "weights", "biases"),
    NbModel: ("classes", "means", "variances", "log_priors"),
}
_SCALARS = {
    SvcModel: (),
    LdaModel: ("ridge",),
    KnnModel: ("k", "metric"),
    DtModel: ("n_features",),
    LrModel: (),
    NbModel: (),
}


class ModelFormatError(ValueError):
    pass


class BadMagicError(ModelFormatError):
    pass


class VersionMismatchError(ModelFormatError):
    pass


class TruncatedModelError(ModelFormatError):
    pass


def serialize_model(m: TrainedModel) -> bytes:
    cls = type(m)
    if cls not in _TAGS:
        raise TypeError(f"cannot serialize {cls.__name__}")
    header = {
        "kind": m.kind,
        "meta": m.meta,
        "scalars": {name: getattr(m, name) for name in _SCALARS[cls]},
    }
    blob = json.dumps(header, sort_keys=True, allow_nan=True).encode("utf-8")
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<IBI", FORMAT_VERSION, _TAGS[cls], len(blob)))
    out.write(blob)
    for name in _ARRAYS[cls]:
        arr = np.asarray(getattr(m, name))
        code = b"i" if arr.dtype.kind in "iu" else b"f"
        data = arr.astype("<i8" if code == b"i" else "<f8")
        encoded = name.encode("ascii")
        out.write(struct.pack("<H", len(encoded)))
        out.write(encoded)
        out.write(code)
        out.write(struct.pack("<B", arr.ndim))
        out.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        out.write(data.tobytes())
    return out.getvalue()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedModelError(
                f"model data truncated at byte {len(self.data)} (needed {self.pos + n})"
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def deserialize_model(data: bytes) -> TrainedModel:
    r = _Reader(bytes(data))
    magic = r.take(4) if len(data) >= 4 else data
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {bytes(magic)!r}, expected {MAGIC!r}")
    (version,) = r.unpack("<I")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"model format version {version}, expected {FORMAT_VERSION}")
    tag, header_len = r.unpack("<BI")
    if tag not in _BY_TAG:
        raise ModelFormatError(f"unknown model tag {tag}")
    cls = _BY_TAG[tag]
    header = json.loads(r.take(header_len).decode("utf-8"))
    arrays = {}
    for expected in _ARRAYS[cls]:
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("ascii")
        if name != expected:
            raise ModelFormatError(f"expected array {expected!r}, found {name!r}")
        code = r.take(1)
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}Q") if ndim else ()
        count = int(np.prod(shape)) if ndim else 1
        dtype = "<i8" if code == b"i" else "<f8"
        raw = r.take(8 * count)
        arrays[name] = np.frombuffer(raw, dtype=dtype).reshape(shape).astype(
            np.int64 if code == b"i" else np.float64
        )
    if r.pos != len(r.data):
        raise ModelFormatError(f"{len(r.data) - r.pos} trailing bytes after model")
    return cls(meta=header["meta"], **arrays, **header["scalars"])


def save_model(m: TrainedModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize_model(m))


def load_model(path) -> TrainedModel:
    with open(path, "rb") as fh:
        return deserialize_model(fh.read())
