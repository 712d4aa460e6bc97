"""Raster images: PNM ingestion/egress, BT.601 colour conversion, dyadic padding."""

from __future__ import annotations

import re
from dataclasses import dataclass, replace

import numpy as np

GRAY = "Gray"
RGB = "RGB"
YCBCR = "YCbCr"
COLOR_SPACES = (GRAY, RGB, YCBCR)


class PNMError(ValueError):
    """Base class for PNM parse failures."""


class MalformedHeaderError(PNMError):
    pass


class UnsupportedMaxvalError(PNMError):
    pass


class TruncatedPayloadError(PNMError):
    pass


class InvalidSampleError(PNMError):
    pass


@dataclass(frozen=True)
class RasterImage:
    """Multi-channel pixel grid stored as ``planes[channel, row, col]``.

    ``original_width``/``original_height`` hold the pre-padding size and are
    equal to ``width``/``height`` for unpadded images.
    """

    planes: np.ndarray
    color_space: str
    original_width: int | None = None
    original_height: int | None = None

    def __post_init__(self):
        planes = np.asarray(self.planes, dtype=np.float64)
        if planes.ndim == 2:
            planes = planes[np.newaxis]
        if planes.ndim != 3 or planes.shape[0] not in (1, 3):
            raise ValueError(f"planes must have shape (1|3, H, W), got {planes.shape}")
        if self.color_space not in COLOR_SPACES:
            raise ValueError(f"unknown color space {self.color_space!r}")
        if (self.color_space == GRAY) != (planes.shape[0] == 1):
            raise ValueError("Gray color space requires exactly one channel")
        object.__setattr__(self, "planes", planes)
        if self.original_width is None:
            object.__setattr__(self, "original_width", planes.shape[2])
        if self.original_height is None:
            object.__setattr__(self, "original_height", planes.shape[1])
        if not (0 < self.original_width <= self.width and 0 < self.original_height <= self.height):
            raise ValueError("original dimensions must be positive and not exceed the padded size")

    @property
    def channels(self) -> int:
        return self.planes.shape[0]

    @property
    def height(self) -> int:
        return self.planes.shape[1]

    @property
    def width(self) -> int:
        return self.planes.shape[2]

    def crop_to_original(self) -> RasterImage:
        planes = self.planes[:, : self.original_height, : self.original_width]
        return RasterImage(planes.copy(), self.color_space)


_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*([^\s#]+)")


def _header_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    tokens = []
    pos = 0
    for _ in range(count):
        m = _TOKEN.match(data, pos)
        if m is None:
            raise MalformedHeaderError("PNM header ended early")
        tokens.append(m.group(1))
        pos = m.end()
    return tokens, pos


def load_image(data: bytes) -> RasterImage:
    """Parse a PGM (P2/P5) or PPM (P3/P6) file with maxval 255."""
    (magic, w_tok, h_tok, max_tok), pos = _header_tokens(data, 4)
    if magic not in (b"P2", b"P3", b"P5", b"P6"):
        raise MalformedHeaderError(f"unsupported magic {magic!r}")
    try:
        width, height, maxval = int(w_tok), int(h_tok), int(max_tok)
    except ValueError:
        raise MalformedHeaderError("non-integer width/height/maxval") from None
    if width <= 0 or height <= 0:
        raise MalformedHeaderError(f"bad dimensions {width}x{height}")
    if maxval != 255:
        raise UnsupportedMaxvalError(f"maxval must be 255, got {maxval}")

    channels = 3 if magic in (b"P3", b"P6") else 1
    n = width * height * channels
    if magic in (b"P5", b"P6"):
        # exactly one whitespace byte separates header and raster
        if pos >= len(data) or not data[pos : pos + 1].isspace():
            raise MalformedHeaderError("missing whitespace after maxval")
        raw = data[pos + 1 : pos + 1 + n]
        if len(raw) < n:
            raise TruncatedPayloadError(f"expected {n} samples, found {len(raw)}")
        samples = np.frombuffer(raw, dtype=np.uint8).astype(np.float64)
    else:
        fields = data[pos:].split()
        if len(fields) < n:
            raise TruncatedPayloadError(f"expected {n} samples, found {len(fields)}")
        try:
            samples = np.array([int(f) for f in fields[:n]], dtype=np.float64)
        except ValueError:
            raise InvalidSampleError("non-integer sample in ASCII raster") from None
        if samples.size and (samples.min() < 0 or samples.max() > maxval):
            raise InvalidSampleError("sample outside [0, maxval]")

    planes = samples.reshape(height, width, channels).transpose(2, 0, 1)
    return RasterImage(planes, RGB if channels == 3 else GRAY)


def to_uint8(planes: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(planes), 0, 255).astype(np.uint8)


def save_image(image: RasterImage, binary: bool = True) -> bytes:
    """Serialize to PGM/PPM; samples are rounded and clamped to [0, 255]."""
    if image.color_space == YCBCR:
        raise ValueError("convert YCbCr images to RGB before saving")
    pixels = to_uint8(image.planes).transpose(1, 2, 0)
    gray = image.channels == 1
    magic = ("P5" if gray else "P6") if binary else ("P2" if gray else "P3")
    header = f"{magic}\n{image.width} {image.height}\n255\n".encode("ascii")
    if binary:
        return header + pixels.tobytes()
    rows = (" ".join(str(v) for v in row.ravel()) for row in pixels)
    return header + ("\n".join(rows) + "\n").encode("ascii")


def read_image(path) -> RasterImage:
    with open(path, "rb") as fh:
        return load_image(fh.read())


def write_image(path, image: RasterImage) -> None:
    with open(path, "wb") as fh:
        fh.write(save_image(image))


def color_convert(image: RasterImage, direction: str) -> RasterImage:
    """Full-range BT.601 conversion, ``direction`` is ``"RGB->YCbCr"`` or ``"YCbCr->RGB"``.

    Values stay real-valued; no rounding between conversions.
    """
    src, _, dst = direction.partition("->")
    if {src, dst} != {RGB, YCBCR}:
        raise ValueError(f"unsupported direction {direction!r}")
    if image.channels != 3:
        raise ValueError("color conversion needs a 3-channel image")
    if image.color_space != src:
        raise ValueError(f"image is {image.color_space}, expected {src}")

    a, b, c = image.planes
    if src == RGB:
        y = 0.299 * a + 0.587 * b + 0.114 * c
        out = np.stack([y, 128.0 + (c - y) * 0.564, 128.0 + (a - y) * 0.713])
    else:
        r = a + (c - 128.0) / 0.713
        bl = a + (b - 128.0) / 0.564
        g = (a - 0.299 * r - 0.114 * bl) / 0.587
        out = np.stack([r, g, bl])
    return replace(image, planes=out, color_space=dst)


def to_gray(image: RasterImage) -> np.ndarray:
    """Luma plane of an image (the single plane when already gray)."""
    if image.channels == 1:
        return image.planes[0]
    if image.color_space == YCBCR:
        return image.planes[0]
    r, g, b = image.planes
    return 0.299 * r + 0.587 * g + 0.114 * b


def dyadic_size(n: int, levels: int) -> int:
    step = 1 << levels
    return -(-n // step) * step


def pad_to_dyadic(image: RasterImage, levels: int) -> RasterImage:
    """Pad right/bottom by edge replication so both dims are multiples of ``2**levels``."""
    if levels < 1:
        raise ValueError("levels must be >= 1")
    h, w = image.height, image.width
    ph, pw = dyadic_size(h, levels) - h, dyadic_size(w, levels) - w
    if ph == 0 and pw == 0:
        return image
    planes = np.pad(image.planes, ((0, 0), (0, ph), (0, pw)), mode="edge")
    return RasterImage(planes, image.color_space, image.original_width, image.original_height)
