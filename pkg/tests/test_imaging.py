import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from maskbench.imaging import (
    GrayImage,
    HeaderTokenError,
    PgmError,
    TruncatedRasterError,
    UnsupportedMagicError,
    UnsupportedMaxvalError,
    read_pgm,
    write_pgm,
)

RASTER = bytes([0, 1, 2, 3])


def test_read_minimal():
    img = read_pgm(b"P5 2 2 255\n" + RASTER)
    assert (img.width, img.height) == (2, 2)
    assert img.pixels.ravel().tolist() == [0, 1, 2, 3]


def test_comments_are_skipped():
    plain = read_pgm(b"P5\n2 2\n255\n" + RASTER)
    commented = read_pgm(b"P5\n# created by hand\n2 # width\n2\n# maxval next\n255\n" + RASTER)
    assert plain == commented


def test_raster_bytes_that_look_like_header_are_kept():
    raster = b"# 9"
    img = read_pgm(b"P5 3 1 255\n" + raster)
    assert img.pixels.tobytes() == raster


@pytest.mark.parametrize(
    "data, exc",
    [
        (b"P2 2 2 255\n0 1 2 3", UnsupportedMagicError),
        (b"P6 2 2 255\n" + RASTER * 3, UnsupportedMagicError),
        (b"P5 2 2 65535\n" + RASTER * 2, UnsupportedMaxvalError),
        (b"P5 2 2 15\n" + RASTER, UnsupportedMaxvalError),
        (b"P5 2 2 255\n" + RASTER[:3], TruncatedRasterError),
        (b"P5 2 2 255", TruncatedRasterError),
        (b"P5 2 two 255\n" + RASTER, HeaderTokenError),
        (b"P5 2", HeaderTokenError),
    ],
)
def test_parse_errors(data, exc):
    with pytest.raises(exc) as info:
        read_pgm(data)
    assert isinstance(info.value, PgmError)
    assert "byte offset" in str(info.value)


def test_unsupported_magic_message():
    with pytest.raises(PgmError, match="unsupported magic"):
        read_pgm(b"P2 2 2 255\n0 1 2 3")


def test_error_offset_points_at_bad_token():
    data = b"P5 2 xx 255\n" + RASTER
    with pytest.raises(HeaderTokenError) as info:
        read_pgm(data)
    assert info.value.offset == data.index(b"xx")


def test_canonical_header():
    img = GrayImage(2, 2, [0, 1, 2, 3])
    assert write_pgm(img) == b"P5\n2 2\n255\n" + RASTER


def test_noncanonical_input_rewrites_canonically():
    src = b"P5  \n# c\n 2\t2 \n255\r" + RASTER
    out = write_pgm(read_pgm(src))
    assert out.startswith(b"P5\n2 2\n255\n")
    # independent decode of the raster: last w*h bytes
    assert out[-4:] == src[-4:]


def test_invariants_enforced():
    with pytest.raises(ValueError):
        GrayImage(2, 2, [0, 1, 2])
    with pytest.raises(ValueError):
        GrayImage(1, 1, [256])
    with pytest.raises(ValueError):
        GrayImage(0, 1, [])


def test_pixels_are_read_only():
    img = GrayImage(2, 1, [5, 6])
    with pytest.raises(ValueError):
        img.pixels[0, 0] = 1


@settings(max_examples=60, deadline=None)
@given(
    arrays(
        np.uint8,
        st.tuples(st.integers(1, 20), st.integers(1, 20)),
        elements=st.integers(0, 255),
    )
)
def test_round_trip(arr):
    img = GrayImage.from_array(arr)
    back = read_pgm(write_pgm(img))
    assert back == img
    assert back.pixels.dtype == np.uint8
