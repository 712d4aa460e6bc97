import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from satband.imaging import (
    MalformedHeaderError,
    RasterImage,
    TruncatedPayloadError,
    UnsupportedMaxvalError,
    color_convert,
    load_image,
    pad_to_dyadic,
    save_image,
)


def test_ascii_pgm_pixels():
    img = load_image(b"P2 2 2 255 0 64 128 255")
    assert img.color_space == "Gray"
    np.testing.assert_array_equal(img.planes[0], [[0, 64], [128, 255]])


def test_ascii_ppm_single_pixel():
    img = load_image(b"P3\n1 1\n255\n10 20 30\n")
    assert img.color_space == "RGB"
    np.testing.assert_array_equal(img.planes[:, 0, 0], [10, 20, 30])


def test_truncated_payload():
    with pytest.raises(TruncatedPayloadError):
        load_image(b"P2 4 4 255 " + b" ".join(b"1" for _ in range(8)))


def test_binary_truncated_payload():
    with pytest.raises(TruncatedPayloadError):
        load_image(b"P5\n4 4\n255\n" + bytes(10))


@pytest.mark.parametrize("data,error", [
    (b"P7 2 2 255 0 0 0 0", MalformedHeaderError),
    (b"P2 2 x 255 0 0 0 0", MalformedHeaderError),
    (b"P2 2 2 65535 0 0 0 0", UnsupportedMaxvalError),
    (b"P2 2", MalformedHeaderError),
])
def test_header_errors(data, error):
    with pytest.raises(error):
        load_image(data)


def test_comments_in_header():
    img = load_image(b"P2\n# made by hand\n2 1\n# max\n255\n3 4\n")
    np.testing.assert_array_equal(img.planes[0], [[3, 4]])


def test_write_clamps_and_rounds():
    img = RasterImage(np.array([[[255.7, -3.0, 10.4]]]), "Gray")
    np.testing.assert_array_equal(load_image(save_image(img)).planes[0], [[255, 0, 10]])


def test_save_rejects_ycbcr():
    img = RasterImage(np.zeros((3, 2, 2)), "YCbCr")
    with pytest.raises(ValueError):
        save_image(img)


@given(arrays(np.uint8, st.tuples(st.sampled_from([1, 3]), st.integers(1, 9), st.integers(1, 9))),
       st.booleans())
def test_save_load_roundtrip(pixels, binary):
    img = RasterImage(pixels.astype(float), "Gray" if pixels.shape[0] == 1 else "RGB")
    back = load_image(save_image(img, binary=binary))
    np.testing.assert_array_equal(back.planes, img.planes)
    assert back.color_space == img.color_space


def test_pgm_roundtrip_is_byte_identical():
    data = b"P5\n3 2\n255\n" + bytes([0, 7, 255, 128, 3, 9])
    assert save_image(load_image(data)) == data


@pytest.mark.parametrize("rgb,ycc", [((128, 128, 128), (128, 128, 128)), ((0, 0, 0), (0, 128, 128))])
def test_color_fixed_points(rgb, ycc):
    img = RasterImage(np.array(rgb, dtype=float)[:, None, None], "RGB")
    out = color_convert(img, "RGB->YCbCr")
    np.testing.assert_allclose(out.planes[:, 0, 0], ycc, atol=1e-12)


@given(arrays(np.float64, (3, 4, 5), elements=st.floats(-50, 300)))
def test_color_roundtrip(planes):
    img = RasterImage(planes, "RGB")
    back = color_convert(color_convert(img, "RGB->YCbCr"), "YCbCr->RGB")
    assert np.max(np.abs(back.planes - planes)) <= 1e-9


def test_color_convert_errors():
    gray = RasterImage(np.zeros((1, 2, 2)), "Gray")
    with pytest.raises(ValueError):
        color_convert(gray, "RGB->YCbCr")
    rgb = RasterImage(np.zeros((3, 2, 2)), "RGB")
    with pytest.raises(ValueError):
        color_convert(rgb, "YCbCr->RGB")


def test_pad_records_original_dims():
    img = RasterImage(np.arange(35, dtype=float).reshape(1, 7, 5), "Gray")
    out = pad_to_dyadic(img, 2)
    assert (out.width, out.height) == (8, 8)
    assert (out.original_width, out.original_height) == (5, 7)


def test_pad_identity_when_dyadic():
    img = RasterImage(np.ones((1, 8, 8)), "Gray")
    assert pad_to_dyadic(img, 3) is img


def test_pad_single_pixel():
    out = pad_to_dyadic(RasterImage(np.full((1, 1, 1), 42.0), "Gray"), 1)
    np.testing.assert_array_equal(out.planes, np.full((1, 2, 2), 42.0))


@given(st.integers(1, 13), st.integers(1, 13), st.integers(1, 3))
def test_pad_idempotent_and_edge_replicated(h, w, k):
    planes = np.random.default_rng(h * 100 + w).random((3, h, w))
    img = RasterImage(planes, "RGB")
    once = pad_to_dyadic(img, k)
    assert pad_to_dyadic(once, k) is once
    assert once.height % (1 << k) == 0 and once.width % (1 << k) == 0
    rows = np.minimum(np.arange(once.height), h - 1)
    cols = np.minimum(np.arange(once.width), w - 1)
    np.testing.assert_array_equal(once.planes, planes[:, rows][:, :, cols])


def test_crop_to_original():
    img = pad_to_dyadic(RasterImage(np.ones((1, 3, 3)), "Gray"), 2)
    assert img.crop_to_original().planes.shape == (1, 3, 3)
