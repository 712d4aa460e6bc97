import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import gray_image, textured_gray
from oracles import brute_force_ranking, spm_loops
from satband.imaging import write_image
from satband.ranking import (
    ObjectRanker,
    Repository,
    RepositoryEntry,
    rank_from_similarities,
    rank_objects,
    scm,
    spm_similarity,
)
from satband.saliency import Box, SaliencyAnnotation


def stripes(horizontal: bool, size: int = 32):
    idx = np.arange(size)
    band = (idx // 3 % 2) * 200.0 + 20
    plane = np.repeat(band[:, None], size, 1) if horizontal else np.repeat(band[None, :], size, 0)
    return gray_image(plane)


def test_self_similarity():
    img = textured_gray(0, 32)
    assert spm_similarity(img, img, 2) == pytest.approx(1.0, abs=1e-9)


def test_symmetry_exact():
    a, b = textured_gray(1, 32), textured_gray(2, 32)
    assert spm_similarity(a, b, 2) == spm_similarity(b, a, 2)


def test_orthogonal_stripes_dissimilar():
    assert spm_similarity(stripes(True), stripes(False), 2) < 0.5


@pytest.mark.parametrize("levels", [0, 1, 2])
def test_matches_loop_oracle(levels):
    a, b = textured_gray(3, 12), textured_gray(4, 12)
    assert spm_similarity(a, b, levels) == pytest.approx(spm_loops(a.planes[0], b.planes[0], levels), abs=1e-12)


def test_gradient_free_images():
    flat = gray_image(np.full((8, 8), 50.0))
    assert spm_similarity(flat, flat, 1) == pytest.approx(1.0)
    assert 0.0 <= spm_similarity(flat, textured_gray(0, 8), 1) <= 1.0


@given(st.integers(0, 10**6), st.floats(-40, 40))
def test_range_and_brightness_invariance(seed, shift):
    a, b = textured_gray(seed % 50, 16), textured_gray(seed % 50 + 1, 16)
    s = spm_similarity(a, b, 2)
    assert 0.0 <= s <= 1.0
    shifted = gray_image(a.planes[0] + shift)
    assert spm_similarity(shifted, b, 2) == pytest.approx(s, abs=1e-9)


def test_negative_levels():
    with pytest.raises(ValueError):
        spm_similarity(textured_gray(0, 8), textured_gray(0, 8), -1)


def _ann(*labels):
    return SaliencyAnnotation(tuple(Box(lbl, 0, 0, 1, 1) for lbl in labels))


def test_single_object():
    repo = Repository("c", [RepositoryEntry(textured_gray(5, 16), {"x"})])
    assert rank_objects(textured_gray(6, 16), _ann("solo"), repo).ranked_labels == ["solo"]


def test_self_in_repository_ranks_first():
    img = textured_gray(7, 32)
    repo = Repository("c", [RepositoryEntry(textured_gray(8, 32), {"B2"}), RepositoryEntry(img, {"A"})])
    r = rank_objects(img, _ann("B", "A"), repo)
    assert r.ranked_labels == ["A", "B"]
    assert r.similarities[0] == pytest.approx(1.0)
    assert r.closest == [1, None]


@given(st.lists(st.floats(0, 1), min_size=4, max_size=4),
       st.lists(st.sets(st.sampled_from("abc"), min_size=1), min_size=4, max_size=4))
def test_ranking_matches_brute_force(sims, sets):
    labels = ["a", "b", "c"]
    r = rank_from_similarities(labels, [frozenset(s) for s in sets], np.array(sims))
    assert r.ranked_labels == brute_force_ranking(labels, sets, sims)
    assert sorted(r.ranked_labels) == sorted(labels)
    present = [s for s, c in zip(r.similarities, r.closest) if c is not None]
    assert present == sorted(present, reverse=True)


def test_ties_keep_annotation_order():
    r = rank_from_similarities(["z", "y"], [frozenset({"y", "z"})], np.array([0.4]))
    assert r.ranked_labels == ["z", "y"]


@pytest.mark.parametrize("q,p,expected", [(3, 5, 0.6), (4, 4, 1.0)])
def test_scm(q, p, expected):
    assert scm(q, p) == expected


@pytest.mark.parametrize("q,p", [(6, 5), (0, 3), (1, 0)])
def test_scm_errors(q, p):
    with pytest.raises(ValueError):
        scm(q, p)


def test_top_q_and_scm():
    r = rank_from_similarities(["a", "b", "c"], [frozenset("b"), frozenset("a")], np.array([0.9, 0.2]))
    assert r.top(2) == ["b", "a"]
    assert scm(len(r.top(2)), r.p) == pytest.approx(2 / 3)


def test_manifest_loading(tmp_path):
    write_image(tmp_path / "one.pgm", textured_gray(1, 16))
    (tmp_path / "m.json").write_text(json.dumps([{"image_path": "one.pgm", "labels": ["cat"]}]))
    repo = Repository.from_manifest(tmp_path / "m.json")
    assert repo.entries[0].labels == frozenset({"cat"})
    (tmp_path / "bad.json").write_text(json.dumps([{"image_path": "one.pgm", "labels": []}]))
    with pytest.raises(ValueError):
        Repository.from_manifest(tmp_path / "bad.json")


def test_ranker_estimator():
    est = ObjectRanker(levels=1)
    assert est.get_params() == {"levels": 1}
    with pytest.raises(ValueError):
        ObjectRanker(levels=5).fit(Repository())
    with pytest.raises(ValueError):
        est.fit(Repository()).rank(textured_gray(0, 8), SaliencyAnnotation())


def test_ranking_deterministic():
    repo = Repository("c", [RepositoryEntry(textured_gray(i, 16), {"ab"[i % 2]}) for i in range(4)])
    img, ann = textured_gray(9, 16), _ann("a", "b")
    assert rank_objects(img, ann, repo).to_dict() == rank_objects(img, ann, repo).to_dict()
