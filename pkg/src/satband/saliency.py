"""Spatial saliency from bounding boxes and its propagation to wavelet coefficients.

Background pixels carry saliency 1 and a box with head-start level ``k'``
carries ``4**k' + 1``. Each wavelet level sums 2x2 blocks of the level
below, so uniform background reaches ``4**k`` at level k while a salient
region stays ahead of background by ``k'`` levels.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .wavelet import DETAIL_BANDS, PyramidLayout, WaveletPyramid


@dataclass(frozen=True)
class Box:
    label: str
    x: int
    y: int
    w: int
    h: int
    level: int = 1

    def __post_init__(self):
        if self.level < 1:
            raise ValueError(f"box {self.label!r}: saliency level must be >= 1")
        if self.w <= 0 or self.h <= 0 or self.x < 0 or self.y < 0:
            raise ValueError(f"box {self.label!r}: invalid geometry")

    @property
    def value(self) -> int:
        return 4**self.level + 1


@dataclass(frozen=True)
class SaliencyAnnotation:
    boxes: tuple[Box, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))
        labels = self.labels
        if len(set(labels)) != len(labels):
            raise ValueError("object labels must be unique per image")
        if any(not lbl for lbl in labels):
            raise ValueError("object labels must be non-empty")

    @property
    def labels(self) -> list[str]:
        return [b.label for b in self.boxes]

    def select(self, labels: Iterable[str] | None) -> SaliencyAnnotation:
        """Keep only boxes whose label is in ``labels`` (all boxes when None)."""
        if labels is None:
            return self
        keep = set(labels)
        unknown = keep - set(self.labels)
        if unknown:
            raise ValueError(f"unknown labels selected: {sorted(unknown)}")
        return SaliencyAnnotation(tuple(b for b in self.boxes if b.label in keep))

    @classmethod
    def from_json(cls, text: str | bytes) -> SaliencyAnnotation:
        items = json.loads(text)
        if not isinstance(items, list):
            raise ValueError("annotation file must hold a JSON list")
        boxes = []
        for i, item in enumerate(items):
            try:
                boxes.append(
                    Box(str(item["label"]), int(item["x"]), int(item["y"]),
                        int(item["w"]), int(item["h"]), int(item.get("level", 1)))
                )
            except (KeyError, TypeError) as exc:
                raise ValueError(f"annotation[{i}]: missing or invalid field {exc}") from None
        return cls(tuple(boxes))

    def to_json(self) -> str:
        return json.dumps(
            [{"label": b.label, "x": b.x, "y": b.y, "w": b.w, "h": b.h, "level": b.level}
             for b in self.boxes],
            indent=2,
        )


def read_annotation(path) -> SaliencyAnnotation:
    with open(path, "rb") as fh:
        return SaliencyAnnotation.from_json(fh.read())


def rasterize_saliency(annotation: SaliencyAnnotation, shape: tuple[int, int], levels: int,
                       selected_labels: Iterable[str] | None = None) -> np.ndarray:
    """Integer spatial saliency map of ``shape = (height, width)``.

    Overlapping boxes take the maximum value; boxes outside
    ``selected_labels`` (when given) fall back to background.
    """
    height, width = shape
    step = 1 << levels
    if height % step or width % step:
        raise ValueError(f"map {shape} is not dyadic for {levels} levels")
    sal = np.ones(shape, dtype=np.int64)
    for box in annotation.select(selected_labels).boxes:
        if box.x + box.w > width or box.y + box.h > height:
            raise ValueError(f"box {box.label!r} lies outside the {width}x{height} frame")
        region = sal[box.y : box.y + box.h, box.x : box.x + box.w]
        np.maximum(region, box.value, out=region)
    return sal


def wavelet_saliency(spatial: np.ndarray, levels: int) -> list[np.ndarray]:
    """LL saliency chain ``[s0, s1, ..., sK]`` with ``s0`` the spatial map.

    Each level sums the 2x2 blocks of the previous one; integer input stays
    integer, so the sum is exact.
    """
    s = np.asarray(spatial)
    step = 1 << levels
    if levels < 1 or s.ndim != 2 or s.shape[0] % step or s.shape[1] % step:
        raise ValueError(f"saliency map {s.shape} is not dyadic for {levels} levels")
    chain = [s]
    for _ in range(levels):
        s = s[0::2, 0::2] + s[0::2, 1::2] + s[1::2, 0::2] + s[1::2, 1::2]
        chain.append(s)
    return chain


def replicate_bands(chain: list[np.ndarray]) -> WaveletPyramid:
    """Copy each level's LL saliency into that level's LH, HL and HH bands."""
    levels = len(chain) - 1
    if levels < 1:
        raise ValueError("chain needs at least one level")
    for k in range(1, levels + 1):
        if chain[k].shape != (chain[k - 1].shape[0] // 2, chain[k - 1].shape[1] // 2):
            raise ValueError(f"chain level {k} has inconsistent shape")
    details = {k: {b: chain[k].copy() for b in DETAIL_BANDS} for k in range(1, levels + 1)}
    return WaveletPyramid(levels, chain[levels].copy(), details)


def saliency_pyramid(annotation: SaliencyAnnotation, shape: tuple[int, int], levels: int,
                     selected_labels: Iterable[str] | None = None) -> WaveletPyramid:
    spatial = rasterize_saliency(annotation, shape, levels, selected_labels)
    return replicate_bands(wavelet_saliency(spatial, levels))


def order_coefficients(sal_pyramid: WaveletPyramid) -> np.ndarray:
    """Transmission order as flat indices into :class:`PyramidLayout`.

    Sorted by saliency descending; ties keep canonical layout order
    (coarser level first, LL < LH < HL < HH, row-major).
    """
    h, w = sal_pyramid.source_shape
    layout = PyramidLayout(h, w, sal_pyramid.levels)
    values = layout.flatten(sal_pyramid)
    return np.argsort(-values, kind="stable")


def raster_order(layout: PyramidLayout) -> np.ndarray:
    """Plain coarse-to-fine order, ignoring saliency."""
    return np.arange(layout.size)


def order_addresses(order: np.ndarray, layout: PyramidLayout) -> list[tuple[int, str, int, int]]:
    return [layout.address(int(i)) for i in order]
