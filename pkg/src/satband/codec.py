"""Saliency-guided progressive Haar codec and its SGWC bitstream.

Bitstream layout (all integers little-endian)::

    "SGWC" | version u8 = 1
    width u32 | height u32 | original_width u32 | original_height u32
    levels u8 | channel_count u8 | box_count u16
    box_count x (x u16, y u16, w u16, h u16, level u8)
    channel_count x band_count x (mean f32, scale f32)
    selected_count u32
    entropy-coded payload

Bands within a channel follow :class:`~satband.wavelet.PyramidLayout`
order. The payload holds, channel after channel, the 8-bit codes of the
first ``selected_count`` coefficients of the saliency order. No addresses
are sent: the decoder rebuilds the order from the boxes.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .entropy import entropy_decode, entropy_encode
from .imaging import GRAY, RGB, YCBCR, RasterImage, color_convert, pad_to_dyadic
from .saliency import Box, SaliencyAnnotation, order_coefficients, raster_order, saliency_pyramid
from .wavelet import PyramidLayout, WaveletPyramid, haar_forward, haar_inverse

MAGIC = b"SGWC"
VERSION = 1
# codes are centred on this value; a band spans [0, 255] symmetrically
CODE_CENTER = 127.5

_FIXED = struct.Struct("<4sBIIIIBBH")
_BOX = struct.Struct("<HHHHB")
_COUNT = struct.Struct("<I")


class BitstreamError(ValueError):
    pass


def _f32_up(value: float) -> float:
    """Smallest float32 not below ``value``."""
    v = np.float32(value)
    if float(v) < value:
        v = np.nextafter(v, np.float32(np.inf))
    return float(v)


@dataclass
class QuantizedPyramid:
    """8-bit codes for every coefficient plus per-band ``(mean, scale)``.

    A coefficient dequantizes to ``mean + scale * (code - 127.5)``;
    ``scale == 0`` marks a constant band whose codes are all 0.
    """

    layout: PyramidLayout
    codes: np.ndarray
    means: np.ndarray
    scales: np.ndarray

    def dequantize(self, kept=None) -> WaveletPyramid:
        return dequantize_subbands(self, kept)


def quantize_subbands(pyramid: WaveletPyramid) -> QuantizedPyramid:
    h, w = pyramid.source_shape
    layout = PyramidLayout(h, w, pyramid.levels)
    values = layout.flatten(pyramid)
    codes = np.zeros(layout.size, dtype=np.uint8)
    means = np.zeros(layout.band_count)
    scales = np.zeros(layout.band_count)
    for i, (_, _, rows, cols, off) in enumerate(layout.bands):
        v = values[off : off + rows * cols]
        # header stores float32, so quantize against the float32 values
        mean = float(np.float32(v.mean()))
        means[i] = mean
        if v.max() == v.min():
            continue
        centred = v - mean
        scale = _f32_up(2.0 * np.abs(centred).max() / 255.0)
        scales[i] = scale
        codes[off : off + rows * cols] = np.clip(np.rint(centred / scale + CODE_CENTER), 0, 255)
    return QuantizedPyramid(layout, codes, means, scales)


def _kept_mask(kept, size: int) -> np.ndarray:
    if kept is None:
        return np.ones(size, dtype=bool)
    kept = np.asarray(kept)
    if kept.dtype == bool:
        if kept.shape != (size,):
            raise ValueError("kept mask has the wrong length")
        return kept
    mask = np.zeros(size, dtype=bool)
    if kept.size:
        if kept.min() < 0 or kept.max() >= size:
            raise IndexError("coefficient address out of range")
        mask[kept] = True
    return mask


def _fill_missing(values: np.ndarray, mask: np.ndarray, layout: PyramidLayout, ll_fill: float) -> np.ndarray:
    # missing detail coefficients are zero; missing top-LL ones take the band mean
    out = np.where(mask, values, 0.0)
    _, _, rows, cols, off = layout.bands[0]
    ll = slice(off, off + rows * cols)
    out[ll] = np.where(mask[ll], values[ll], ll_fill)
    return out


def dequantize_subbands(q: QuantizedPyramid, kept=None) -> WaveletPyramid:
    """Rebuild a pyramid from the coefficients in ``kept`` (indices or mask; all when None)."""
    layout = q.layout
    mask = _kept_mask(kept, layout.size)
    ids = layout.band_ids
    values = q.means[ids] + q.scales[ids] * (q.codes.astype(np.float64) - CODE_CENTER)
    values = np.where(q.scales[ids] == 0, q.means[ids], values)
    return layout.unflatten(_fill_missing(values, mask, layout, q.means[0]))


def selection_count(total: int, budget_fraction: float) -> int:
    if not 0 < budget_fraction <= 1:
        raise ValueError(f"budget fraction must lie in (0, 1], got {budget_fraction}")
    # rounding guards against 0.07 * 100 = 7.000000000000001
    return min(total, math.ceil(round(budget_fraction * total, 9)))


def select_coefficients(order: np.ndarray, budget_fraction: float) -> np.ndarray:
    """The first ``ceil(budget_fraction * total)`` addresses of ``order``."""
    return order[: selection_count(len(order), budget_fraction)]


@dataclass
class BitstreamHeader:
    width: int
    height: int
    original_width: int
    original_height: int
    levels: int
    channels: int
    boxes: tuple[tuple[int, int, int, int, int], ...]
    means: np.ndarray
    scales: np.ndarray
    selected_count: int
    version: int = VERSION

    @property
    def layout(self) -> PyramidLayout:
        return PyramidLayout(self.height, self.width, self.levels)

    def annotation(self) -> SaliencyAnnotation:
        return SaliencyAnnotation(
            tuple(Box(f"box{i}", x, y, w, h, lv) for i, (x, y, w, h, lv) in enumerate(self.boxes))
        )

    def __eq__(self, other):
        if not isinstance(other, BitstreamHeader):
            return NotImplemented
        scalars = ("width", "height", "original_width", "original_height", "levels",
                   "channels", "boxes", "selected_count", "version")
        return (all(getattr(self, f) == getattr(other, f) for f in scalars)
                and np.array_equal(self.means, other.means)
                and np.array_equal(self.scales, other.scales))


def emit_header(h: BitstreamHeader) -> bytes:
    bands = 1 + 3 * h.levels
    means = np.asarray(h.means, dtype="<f4").reshape(h.channels, bands)
    scales = np.asarray(h.scales, dtype="<f4").reshape(h.channels, bands)
    parts = [_FIXED.pack(MAGIC, h.version, h.width, h.height, h.original_width,
                         h.original_height, h.levels, h.channels, len(h.boxes))]
    parts += [_BOX.pack(*b) for b in h.boxes]
    parts.append(np.stack([means, scales], axis=-1).astype("<f4").tobytes())
    parts.append(_COUNT.pack(h.selected_count))
    return b"".join(parts)


def parse_header(data: bytes) -> tuple[BitstreamHeader, int]:
    """Returns the header and the offset where the payload starts."""
    if len(data) < _FIXED.size:
        raise BitstreamError("bitstream shorter than its fixed header")
    magic, version, w, h, ow, oh, levels, channels, nbox = _FIXED.unpack_from(data)
    if magic != MAGIC:
        raise BitstreamError(f"bad magic {magic!r}")
    if version != VERSION:
        raise BitstreamError(f"unsupported version {version}")
    if channels not in (1, 3) or levels < 1:
        raise BitstreamError("invalid channel count or level count")
    pos = _FIXED.size
    need = pos + nbox * _BOX.size + channels * (1 + 3 * levels) * 8 + _COUNT.size
    if len(data) < need:
        raise BitstreamError("bitstream header is truncated")
    boxes = []
    for _ in range(nbox):
        boxes.append(_BOX.unpack_from(data, pos))
        pos += _BOX.size
    bands = 1 + 3 * levels
    table = np.frombuffer(data, dtype="<f4", count=channels * bands * 2, offset=pos)
    table = table.reshape(channels, bands, 2).astype(np.float64)
    pos += table.size * 4
    (selected,) = _COUNT.unpack_from(data, pos)
    pos += _COUNT.size
    header = BitstreamHeader(w, h, ow, oh, levels, channels, tuple(boxes),
                             table[..., 0].copy(), table[..., 1].copy(), selected, version)
    try:
        layout = header.layout
    except ValueError as exc:
        raise BitstreamError(str(exc)) from None
    if not (0 < ow <= w and 0 < oh <= h) or selected > layout.size:
        raise BitstreamError("inconsistent header dimensions")
    return header, pos


def _analyze(image: RasterImage, levels: int) -> tuple[RasterImage, list[WaveletPyramid]]:
    """Colour-convert, pad and transform every channel; chroma loses its finest details."""
    if image.color_space not in (RGB, GRAY):
        raise ValueError("encoder input must be RGB or Gray")
    work = color_convert(image, "RGB->YCbCr") if image.color_space == RGB else image
    work = pad_to_dyadic(work, levels)
    pyramids = [haar_forward(p, levels) for p in work.planes]
    for pyr in pyramids[1:]:
        for plane in pyr.details[1].values():
            plane[...] = 0.0
    return work, pyramids


def _effective_annotation(annotation, selected_labels) -> SaliencyAnnotation:
    annotation = annotation or SaliencyAnnotation()
    return annotation.select(selected_labels)


def _synthesize(planes: list[np.ndarray], color_space: str, width: int, height: int) -> RasterImage:
    out = RasterImage(np.stack(planes), color_space)
    if color_space == YCBCR:
        out = color_convert(out, "YCbCr->RGB")
    out = RasterImage(out.planes[:, :height, :width], out.color_space)
    return RasterImage(np.clip(out.planes, 0.0, 255.0), out.color_space)


def coefficient_order(annotation: SaliencyAnnotation | None, layout: PyramidLayout) -> np.ndarray:
    sal = saliency_pyramid(annotation or SaliencyAnnotation(), (layout.height, layout.width), layout.levels)
    return order_coefficients(sal)


def encode_image(image: RasterImage, annotation: SaliencyAnnotation | None = None, levels: int = 3,
                 budget: float = 1.0, selected_labels: Iterable[str] | None = None) -> bytes:
    """Encode ``image`` keeping the ``budget`` fraction of coefficients, most salient first."""
    work, pyramids = _analyze(image, levels)
    layout = PyramidLayout(work.height, work.width, levels)
    ann = _effective_annotation(annotation, selected_labels)
    for b in ann.boxes:
        if max(b.x, b.y, b.w, b.h) > 0xFFFF or b.level > 0xFF:
            raise ValueError(f"box {b.label!r} does not fit the header field widths")
    order = coefficient_order(ann, layout)
    sel = select_coefficients(order, budget)
    quantized = [quantize_subbands(p) for p in pyramids]
    payload = b"".join(q.codes[sel].tobytes() for q in quantized)
    header = BitstreamHeader(
        work.width, work.height, image.width, image.height, levels, len(quantized),
        tuple((b.x, b.y, b.w, b.h, b.level) for b in ann.boxes),
        np.stack([q.means for q in quantized]), np.stack([q.scales for q in quantized]),
        len(sel),
    )
    return emit_header(header) + entropy_encode(payload)


def decoder_order(header: BitstreamHeader) -> np.ndarray:
    """Transmission order rebuilt from the header boxes alone."""
    try:
        return coefficient_order(header.annotation(), header.layout)
    except ValueError as exc:
        raise BitstreamError(f"invalid box data: {exc}") from None


def decode_image(data: bytes) -> RasterImage:
    header, pos = parse_header(data)
    layout = header.layout
    order = decoder_order(header)
    sel = order[: header.selected_count]
    payload = entropy_decode(data[pos:])
    if len(payload) != header.selected_count * header.channels:
        raise BitstreamError(
            f"payload holds {len(payload)} codes, header announces "
            f"{header.selected_count} x {header.channels}"
        )
    codes = np.frombuffer(payload, dtype=np.uint8).reshape(header.channels, -1)
    planes = []
    for c in range(header.channels):
        full = np.zeros(layout.size, dtype=np.uint8)
        full[sel] = codes[c]
        q = QuantizedPyramid(layout, full, header.means[c], header.scales[c])
        planes.append(haar_inverse(q.dequantize(sel)))
    space = YCBCR if header.channels == 3 else GRAY
    return _synthesize(planes, space, header.original_width, header.original_height)


def reconstruct(image: RasterImage, annotation: SaliencyAnnotation | None = None, levels: int = 3,
                budget: float = 1.0, selected_labels: Iterable[str] | None = None,
                order: str = "saliency", quantize: bool = True) -> RasterImage:
    """Simulate encode + decode in memory.

    ``order="raster"`` transmits coefficients coarse-to-fine ignoring
    saliency; ``quantize=False`` carries the raw coefficients.
    """
    work, pyramids = _analyze(image, levels)
    layout = PyramidLayout(work.height, work.width, levels)
    if order == "saliency":
        ranking = coefficient_order(_effective_annotation(annotation, selected_labels), layout)
    elif order == "raster":
        ranking = raster_order(layout)
    else:
        raise ValueError(f"unknown order {order!r}")
    sel = select_coefficients(ranking, budget)
    planes = []
    for pyr in pyramids:
        if quantize:
            rebuilt = quantize_subbands(pyr).dequantize(sel)
        else:
            values = layout.flatten(pyr)
            mask = _kept_mask(sel, layout.size)
            ll = pyr.ll.mean()
            rebuilt = layout.unflatten(_fill_missing(values, mask, layout, ll))
        planes.append(haar_inverse(rebuilt))
    space = YCBCR if image.color_space == RGB else GRAY
    return _synthesize(planes, space, image.width, image.height)


def encode_to_size(image: RasterImage, target_bytes: int, annotation: SaliencyAnnotation | None = None,
                   levels: int = 3, selected_labels: Iterable[str] | None = None,
                   rel_tol: float = 0.05, max_iter: int = 30) -> tuple[bytes, float]:
    """Binary-search the budget fraction whose bitstream best fits ``target_bytes``.

    Returns the largest stream not above the target together with its
    budget; stops early once the size is within ``rel_tol`` of the target.
    When even the smallest budget overshoots, that stream is returned.
    """
    total = PyramidLayout(*pad_to_dyadic(image, levels).planes.shape[1:], levels).size
    lo, hi = 1, total
    best = None
    while lo <= hi and max_iter > 0:
        max_iter -= 1
        mid = (lo + hi) // 2
        frac = mid / total
        data = encode_image(image, annotation, levels, frac, selected_labels)
        if len(data) <= target_bytes:
            best = (data, frac)
            if len(data) >= (1 - rel_tol) * target_bytes:
                break
            lo = mid + 1
        else:
            hi = mid - 1
    if best is None:
        frac = 1 / total
        best = (encode_image(image, annotation, levels, frac, selected_labels), frac)
    return best


def box_mask(shape: tuple[int, int], box: Box) -> np.ndarray:
    """Boolean pixel mask of ``box`` clipped to ``shape = (height, width)``."""
    mask = np.zeros(shape, dtype=bool)
    mask[box.y : box.y + box.h, box.x : box.x + box.w] = True
    return mask


def quality_metrics(original: RasterImage, reconstructed: RasterImage, mask=None) -> dict:
    """MSE and PSNR (dB, peak 255) over all channels, optionally restricted to ``mask``.

    Identical inputs give ``psnr_db = math.inf``.
    """
    a, b = original.planes, reconstructed.planes
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    diff = a - b
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != a.shape[1:]:
            raise ValueError("mask must match the image height and width")
        if not mask.any():
            raise ValueError("mask selects no pixels")
        diff = diff[:, mask]
    mse = float(np.mean(diff**2))
    psnr = math.inf if mse == 0 else 10.0 * math.log10(255.0**2 / mse)
    return {"mse": mse, "psnr_db": psnr}


class SaliencyWaveletCodec(BaseEstimator, TransformerMixin):
    """Estimator wrapper around the codec.

    ``transform`` round-trips each image (optionally paired with its
    annotation) through encode/decode, which lets the codec sit inside a
    preprocessing pipeline that studies compression damage.
    """

    def __init__(self, levels=3, budget=0.25, selected_labels=None):
        self.levels = levels
        self.budget = budget
        self.selected_labels = selected_labels

    def fit(self, X=None, y=None):
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        selection_count(1, self.budget)
        return self

    def encode(self, image: RasterImage, annotation: SaliencyAnnotation | None = None) -> bytes:
        return encode_image(image, annotation, self.levels, self.budget, self.selected_labels)

    def decode(self, data: bytes) -> RasterImage:
        return decode_image(data)

    def transform(self, X):
        out = []
        for item in X:
            image, ann = item if isinstance(item, tuple) else (item, None)
            out.append(self.decode(self.encode(image, ann)))
        return out
