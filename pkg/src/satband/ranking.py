"""Object ranking from a customer's image repository via spatial pyramid matching."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .imaging import RasterImage, read_image, to_gray
from .saliency import SaliencyAnnotation

ORIENTATION_BINS = 8


@dataclass(frozen=True)
class RepositoryEntry:
    image: RasterImage
    labels: frozenset[str]
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "labels", frozenset(self.labels))
        if not self.labels or any(not isinstance(lbl, str) or not lbl for lbl in self.labels):
            raise ValueError("repository entry labels must be non-empty strings")


@dataclass
class Repository:
    owner: str = ""
    entries: list[RepositoryEntry] = field(default_factory=list)

    @classmethod
    def from_manifest(cls, path, owner: str = "") -> Repository:
        """Load a JSON manifest ``[{"image_path": ..., "labels": [...]}, ...]``.

        Relative image paths resolve against the manifest's directory.
        """
        with open(path) as fh:
            items = json.load(fh)
        if not isinstance(items, list):
            raise ValueError("repository manifest must hold a JSON list")
        base = os.path.dirname(os.path.abspath(path))
        entries = []
        for i, item in enumerate(items):
            if not isinstance(item, dict) or "image_path" not in item or "labels" not in item:
                raise ValueError(f"manifest[{i}] needs image_path and labels")
            img_path = os.path.join(base, item["image_path"])
            entries.append(RepositoryEntry(read_image(img_path), item["labels"], item["image_path"]))
        return cls(owner, entries)


def _orientation_histograms(gray: np.ndarray, levels: int) -> list[np.ndarray]:
    gy, gx = np.gradient(gray.astype(np.float64))
    # drop rounding noise so a brightness shift cannot move a pixel across a bin edge
    gy, gx = np.round(gy, 9), np.round(gx, 9)
    mag = np.hypot(gx, gy)
    angle = np.mod(np.arctan2(gy, gx), np.pi)
    bins = np.minimum((angle / (np.pi / ORIENTATION_BINS)).astype(np.int64), ORIENTATION_BINS - 1)
    h, w = gray.shape
    out = []
    for level in range(levels + 1):
        cells = 1 << level
        rows = np.minimum(np.arange(h) * cells // h, cells - 1)
        cols = np.minimum(np.arange(w) * cells // w, cells - 1)
        cell_id = rows[:, None] * cells + cols[None, :]
        flat = (cell_id * ORIENTATION_BINS + bins).ravel()
        hist = np.bincount(flat, weights=mag.ravel(), minlength=cells * cells * ORIENTATION_BINS)
        total = hist.sum()
        # a gradient-free image spreads its mass uniformly
        hist = hist / total if total > 0 else np.full(hist.shape, 1.0 / hist.size)
        out.append(hist)
    return out


def _level_weights(levels: int) -> np.ndarray:
    w = np.array([1.0 / 2 ** (levels - lv + 1) for lv in range(levels + 1)])
    w[0] = 1.0 / 2**levels
    return w


def _match(ha: list[np.ndarray], hb: list[np.ndarray]) -> float:
    levels = len(ha) - 1
    scores = np.array([np.minimum(a, b).sum() for a, b in zip(ha, hb)])
    return float(min(1.0, max(0.0, _level_weights(levels) @ scores)))


def spm_similarity(a: RasterImage, b: RasterImage, levels: int = 2) -> float:
    """Pyramid match of magnitude-weighted gradient-orientation histograms.

    Level ``l`` splits the frame into ``2**l x 2**l`` cells, each holding an
    8-bin unsigned-orientation histogram; the level's histograms are
    L1-normalised jointly and compared by intersection. Level scores are
    combined with weights ``1/2**L`` (level 0) and ``1/2**(L-l+1)``.
    """
    if levels < 0:
        raise ValueError("levels must be >= 0")
    return _match(_orientation_histograms(to_gray(a), levels),
                  _orientation_histograms(to_gray(b), levels))


@dataclass
class ObjectRanking:
    ranked_labels: list[str]
    similarities: list[float]
    closest: list[int | None]
    """Repository index of the closest image holding each ranked label."""

    @property
    def p(self) -> int:
        return len(self.ranked_labels)

    def top(self, q: int) -> list[str]:
        scm(q, self.p)
        return self.ranked_labels[:q]

    def to_dict(self) -> dict:
        return {
            "ranked_labels": self.ranked_labels,
            "similarities": self.similarities,
            "closest": self.closest,
        }


def rank_from_similarities(labels: list[str], label_sets: list[frozenset[str]],
                           similarity: np.ndarray) -> ObjectRanking:
    """Rank ``labels`` given a precomputed similarity per repository entry.

    Each label takes its closest entry among those containing it (first
    entry wins ties). Labels sort by that similarity, descending; labels
    absent from the repository go last; ties keep annotation order.
    """
    keyed = []
    for idx, label in enumerate(labels):
        members = [j for j, s in enumerate(label_sets) if label in s]
        if members:
            j = max(members, key=lambda m: (similarity[m], -m))
            keyed.append(((0, -float(similarity[j]), idx), label, float(similarity[j]), j))
        else:
            keyed.append(((1, 0.0, idx), label, 0.0, None))
    keyed.sort(key=lambda t: t[0])
    return ObjectRanking([k[1] for k in keyed], [k[2] for k in keyed], [k[3] for k in keyed])


def rank_objects(image: RasterImage, annotation: SaliencyAnnotation, repository: Repository,
                 levels: int = 2) -> ObjectRanking:
    return ObjectRanker(levels=levels).fit(repository).rank(image, annotation)


def scm(q: int, p: int) -> float:
    """Saliency concordance: the share ``q/p`` of objects transmitted."""
    if p < 1 or q < 1 or q > p:
        raise ValueError(f"need 1 <= q <= p, got q={q}, p={p}")
    return q / p


class ObjectRanker(BaseEstimator):
    """Caches repository pyramid histograms at ``fit``; ``rank`` orders an image's objects."""

    def __init__(self, levels=2):
        self.levels = levels

    def fit(self, repository: Repository, y=None):
        if not 0 <= self.levels <= 4:
            raise ValueError("levels must lie in 0..4")
        self.label_sets_ = [e.labels for e in repository.entries]
        self.histograms_ = [_orientation_histograms(to_gray(e.image), self.levels)
                            for e in repository.entries]
        return self

    def similarities(self, image: RasterImage) -> np.ndarray:
        check_is_fitted(self, "histograms_")
        query = _orientation_histograms(to_gray(image), self.levels)
        return np.array([_match(query, h) for h in self.histograms_])

    def rank(self, image: RasterImage, annotation: SaliencyAnnotation) -> ObjectRanking:
        labels = annotation.labels
        if not labels:
            raise ValueError("annotation has no objects to rank")
        return rank_from_similarities(labels, self.label_sets_, self.similarities(image))
