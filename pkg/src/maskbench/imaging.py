"""Binary PGM (P5, maxval 255) decoding/encoding and the grayscale raster type."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_WHITESPACE = b" \t\n\r\v\f"


class PgmError(ValueError):
    """Raised when a byte stream is not a supported P5 graymap.

    ``offset`` is the byte position where decoding failed.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.reason = message
        self.offset = offset


class UnsupportedMagicError(PgmError):
    pass


class UnsupportedMaxvalError(PgmError):
    pass


class TruncatedRasterError(PgmError):
    pass


class HeaderTokenError(PgmError):
    pass


@dataclass(frozen=True, eq=False)
class GrayImage:
    """8-bit grayscale raster stored row-major.

    ``pixels`` is a read-only ``uint8`` array of shape ``(height, width)``.
    """

    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"image dimensions must be positive, got {self.width}x{self.height}")
        arr = np.asarray(self.pixels)
        if arr.size != self.width * self.height:
            raise ValueError(
                f"pixel count {arr.size} does not match {self.width}x{self.height}"
            )
        if arr.dtype != np.uint8:
            if arr.size and (arr.min() < 0 or arr.max() > 255):
                raise ValueError("pixel intensities must lie in [0, 255]")
            arr = arr.astype(np.uint8)
        arr = np.array(arr, dtype=np.uint8).reshape(self.height, self.width)
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @classmethod
    def from_array(cls, arr) -> "GrayImage":
        arr = np.asarray(arr)
        if arr.ndim != 2:
            raise ValueError(f"expected a 2-D array, got shape {arr.shape}")
        return cls(width=arr.shape[1], height=arr.shape[0], pixels=arr)

    @property
    def shape(self) -> tuple[int, int]:
        return self.height, self.width

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and np.array_equal(self.pixels, other.pixels)
        )

    def __hash__(self):
        return hash((self.width, self.height, self.pixels.tobytes()))

    def __repr__(self):
        return f"GrayImage(width={self.width}, height={self.height})"


def _skip_whitespace_and_comments(data: bytes, pos: int) -> int:
    n = len(data)
    while pos < n:
        c = data[pos : pos + 1]
        if c in _WHITESPACE:
            pos += 1
        elif c == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        else:
            break
    return pos


def _read_int_token(data: bytes, pos: int, what: str) -> tuple[int, int]:
    pos = _skip_whitespace_and_comments(data, pos)
    start = pos
    while pos < len(data) and data[pos : pos + 1] not in _WHITESPACE and data[pos : pos + 1] != b"#":
        pos += 1
    token = data[start:pos]
    if not token:
        raise HeaderTokenError(f"missing {what} in header", start)
    if not token.isdigit():
        raise HeaderTokenError(f"non-numeric {what} token {token[:16]!r}", start)
    return int(token), pos


def read_pgm(data: bytes) -> GrayImage:
    """Decode a binary P5 graymap with maxval 255."""
    data = bytes(data)
    if data[:2] != b"P5":
        raise UnsupportedMagicError(f"unsupported magic {data[:2]!r}", 0)
    pos = 2
    if pos < len(data) and data[pos : pos + 1] not in _WHITESPACE and data[pos : pos + 1] != b"#":
        raise UnsupportedMagicError(f"unsupported magic {data[:3]!r}", 0)
    width, pos = _read_int_token(data, pos, "width")
    height, pos = _read_int_token(data, pos, "height")
    maxval, maxval_end = _read_int_token(data, pos, "maxval")
    if maxval != 255:
        raise UnsupportedMaxvalError(f"unsupported maxval {maxval}", maxval_end)
    if width <= 0 or height <= 0:
        raise HeaderTokenError(f"non-positive dimensions {width}x{height}", pos)
    pos = maxval_end
    if pos >= len(data) or data[pos : pos + 1] not in _WHITESPACE:
        raise TruncatedRasterError("missing whitespace after maxval", pos)
    pos += 1
    need = width * height
    raster = data[pos : pos + need]
    if len(raster) < need:
        raise TruncatedRasterError(
            f"raster truncated: expected {need} bytes, found {len(raster)}", pos + len(raster)
        )
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
    return GrayImage(width=width, height=height, pixels=pixels)


def write_pgm(img: GrayImage) -> bytes:
    """Serialize to the canonical ``P5\\n<w> <h>\\n255\\n`` form."""
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + img.pixels.tobytes()


def load_pgm(path) -> GrayImage:
    with open(path, "rb") as fh:
        return read_pgm(fh.read())


def save_pgm(img: GrayImage, path) -> None:
    with open(path, "wb") as fh:
        fh.write(write_pgm(img))
