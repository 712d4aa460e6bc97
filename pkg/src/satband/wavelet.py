"""Multi-level orthonormal 2D Haar transform.

Per 2x2 block ``[[a, b], [c, d]]``::

    LL = (a + b + c + d) / 2      HL = (a - b + c - d) / 2   (horizontal difference)
    LH = (a + b - c - d) / 2      HH = (a - b - c + d) / 2   (vertical / diagonal)

The recursion continues on LL. Normalisation by 2 keeps the transform
orthonormal, so coefficient energy equals pixel energy.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

BANDS = ("LL", "LH", "HL", "HH")
DETAIL_BANDS = ("LH", "HL", "HH")


@dataclass
class WaveletPyramid:
    """K-level decomposition: one top LL plus LH/HL/HH per level.

    ``details[k]`` maps band name to the level-``k`` plane, ``k = 1..levels``;
    level-k planes are ``(H / 2**k, W / 2**k)``.
    """

    levels: int
    ll: np.ndarray
    details: dict[int, dict[str, np.ndarray]]

    @property
    def source_shape(self) -> tuple[int, int]:
        h, w = self.ll.shape
        return h << self.levels, w << self.levels

    def band(self, level: int, name: str) -> np.ndarray:
        if name == "LL":
            if level != self.levels:
                raise KeyError("only the top level keeps an LL band")
            return self.ll
        return self.details[level][name]

    def copy(self) -> WaveletPyramid:
        return WaveletPyramid(
            self.levels,
            self.ll.copy(),
            {k: {b: p.copy() for b, p in d.items()} for k, d in self.details.items()},
        )

    def validate(self) -> None:
        h, w = self.source_shape
        for k in range(1, self.levels + 1):
            if k not in self.details:
                raise ValueError(f"missing detail level {k}")
            for name in DETAIL_BANDS:
                if self.details[k][name].shape != (h >> k, w >> k):
                    raise ValueError(f"level {k} {name} has shape {self.details[k][name].shape}")


def _check_dyadic(shape: tuple[int, int], levels: int) -> None:
    if levels < 1:
        raise ValueError("levels must be >= 1")
    step = 1 << levels
    if shape[0] % step or shape[1] % step or 0 in shape:
        raise ValueError(f"plane {shape} is not a multiple of 2**{levels}")


def haar_forward(plane, levels: int) -> WaveletPyramid:
    x = np.asarray(plane, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("haar_forward expects a single 2D plane")
    _check_dyadic(x.shape, levels)
    details = {}
    for k in range(1, levels + 1):
        a, b = x[0::2, 0::2], x[0::2, 1::2]
        c, d = x[1::2, 0::2], x[1::2, 1::2]
        details[k] = {
            "LH": (a + b - c - d) / 2,
            "HL": (a - b + c - d) / 2,
            "HH": (a - b - c + d) / 2,
        }
        x = (a + b + c + d) / 2
    return WaveletPyramid(levels, x, details)


def haar_inverse(pyramid: WaveletPyramid) -> np.ndarray:
    pyramid.validate()
    x = np.asarray(pyramid.ll, dtype=np.float64)
    for k in range(pyramid.levels, 0, -1):
        d = pyramid.details[k]
        lh, hl, hh = d["LH"], d["HL"], d["HH"]
        out = np.empty((x.shape[0] * 2, x.shape[1] * 2))
        out[0::2, 0::2] = (x + hl + lh + hh) / 2
        out[0::2, 1::2] = (x - hl + lh - hh) / 2
        out[1::2, 0::2] = (x + hl - lh - hh) / 2
        out[1::2, 1::2] = (x - hl - lh + hh) / 2
        x = out
    return x


@dataclass(frozen=True)
class PyramidLayout:
    """Canonical flat enumeration of every coefficient address.

    Bands run coarse to fine: top LL, then LH, HL, HH at level K, then
    LH, HL, HH at K-1 and so on; within a band positions are row-major.
    This is also the tie-break order used when ranking coefficients.
    """

    height: int
    width: int
    levels: int

    def __post_init__(self):
        _check_dyadic((self.height, self.width), self.levels)

    @cached_property
    def bands(self) -> tuple[tuple[int, str, int, int, int], ...]:
        """``(level, band, rows, cols, offset)`` for each band in canonical order."""
        out = []
        offset = 0
        for k in range(self.levels, 0, -1):
            rows, cols = self.height >> k, self.width >> k
            for name in (BANDS if k == self.levels else DETAIL_BANDS):
                out.append((k, name, rows, cols, offset))
                offset += rows * cols
        return tuple(out)

    @property
    def size(self) -> int:
        return self.height * self.width

    @property
    def band_count(self) -> int:
        return 1 + 3 * self.levels

    @cached_property
    def band_ids(self) -> np.ndarray:
        """Band index of every flat position."""
        ids = np.empty(self.size, dtype=np.int64)
        for i, (_, _, rows, cols, off) in enumerate(self.bands):
            ids[off : off + rows * cols] = i
        return ids

    def flatten(self, pyramid: WaveletPyramid) -> np.ndarray:
        if pyramid.levels != self.levels or pyramid.source_shape != (self.height, self.width):
            raise ValueError("pyramid does not match layout")
        return np.concatenate([pyramid.band(k, name).ravel() for k, name, *_ in self.bands])

    def unflatten(self, vector) -> WaveletPyramid:
        vector = np.asarray(vector)
        if vector.shape != (self.size,):
            raise ValueError(f"expected {self.size} coefficients, got {vector.shape}")
        ll = None
        details: dict[int, dict[str, np.ndarray]] = {k: {} for k in range(1, self.levels + 1)}
        for k, name, rows, cols, off in self.bands:
            plane = vector[off : off + rows * cols].reshape(rows, cols).copy()
            if name == "LL":
                ll = plane
            else:
                details[k][name] = plane
        return WaveletPyramid(self.levels, ll, details)

    def address(self, index: int) -> tuple[int, str, int, int]:
        """``(level, band, row, col)`` of flat position ``index``."""
        if not 0 <= index < self.size:
            raise IndexError(index)
        for k, name, rows, cols, off in self.bands:
            if index < off + rows * cols:
                r, c = divmod(index - off, cols)
                return k, name, r, c
        raise AssertionError("unreachable")

    def index(self, level: int, band: str, row: int, col: int) -> int:
        for k, name, rows, cols, off in self.bands:
            if k == level and name == band:
                if not (0 <= row < rows and 0 <= col < cols):
                    raise IndexError((level, band, row, col))
                return off + row * cols + col
        raise KeyError((level, band))
