import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gridtangent.tasks import (DepthError, HeaderError, TruncatedError, encode_netpbm,
                               read_netpbm, write_netpbm)

from conftest import data_path


def test_one_pixel_p5(tmp_path):
    p = tmp_path / "a.pgm"
    p.write_bytes(b"P5\n1 1\n255\n\xff")
    px = read_netpbm(str(p))
    assert px.shape == (1, 1, 1) and px[0, 0, 0] == 255
    # Sample position of the single pixel is the unit-square centre.
    r, c = 0, 0
    assert ((r + 0.5) / 1, (c + 0.5) / 1) == (0.5, 0.5)


def test_one_pixel_value():
    px = read_netpbm(b"P5\n1 1\n255\n\xff")
    assert px.shape == (1, 1, 1) and px[0, 0, 0] == 255


def test_p6_gradient():
    px = read_netpbm(b"P6 2 2 255\n" + bytes([0, 0, 0, 85, 85, 85, 170, 170, 170, 255, 255, 255]))
    assert np.allclose(px[..., 0].ravel() / 255.0, [0, 1 / 3, 2 / 3, 1.0])


def test_plain_formats_with_comments():
    px = read_netpbm(b"P2\n# comment\n3 1 # trailing\n255\n1 2\n3\n")
    assert px[..., 0].tolist() == [[1, 2, 3]]
    rgb = read_netpbm(b"P3 1 1 255 10 20 30")
    assert rgb[0, 0].tolist() == [10, 20, 30]


def test_rejects_16_bit():
    with pytest.raises(DepthError) as err:
        read_netpbm(b"P5\n1 1\n65535\n\x00\x00")
    assert err.value.offset > 0


@pytest.mark.parametrize("data,exc", [
    (b"P7\n1 1\n255\n\x00", HeaderError),
    (b"P5\n1 x\n255\n\x00", HeaderError),
    (b"P5\n2 2\n255\n\x00\x01", TruncatedError),
    (b"P5\n2", TruncatedError),
    (b"P2\n2 1\n255\n1", TruncatedError),
    (b"P2\n1 1\n255\n300", HeaderError),
])
def test_parse_errors_name_offset(data, exc):
    with pytest.raises(exc) as err:
        read_netpbm(data)
    assert "byte" in str(err.value)
    assert 0 <= err.value.offset <= len(data)


@settings(max_examples=60, deadline=None)
@given(arrays(np.uint8, st.tuples(st.integers(1, 6), st.integers(1, 6), st.sampled_from([1, 3]))),
       st.booleans())
def test_roundtrip(px, binary):
    assert np.array_equal(read_netpbm(encode_netpbm(px, binary)), px)


def test_file_roundtrip(tmp_path):
    px = np.arange(12, dtype=np.uint8).reshape(3, 4)
    path = tmp_path / "x.pgm"
    write_netpbm(str(path), px)
    assert np.array_equal(read_netpbm(str(path))[..., 0], px)
    assert not (tmp_path / "x.pgm.tmp").exists()


def test_fixture_image():
    px = read_netpbm(data_path("camera64.pgm"))
    assert px.shape == (64, 64, 1)
