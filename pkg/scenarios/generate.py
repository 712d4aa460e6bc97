"""Regenerate the bundled example data (images, annotations, repositories, survey).

Run from anywhere: ``python3 scenarios/generate.py``. Output is fully
determined by the seeds below, so the committed files can be rebuilt.
"""

import json
import os

import numpy as np

from satband.imaging import RasterImage, write_image
from satband.satisfaction import synthesize_survey

HERE = os.path.dirname(os.path.abspath(__file__))
SIZE = 128

# each object is a textured patch; orientation sets its gradient signature
TEXTURES = {
    "car": 0.0,
    "tree": np.pi / 2,
    "person": np.pi / 4,
    "sign": 3 * np.pi / 4,
}


def _background(rng, size):
    yy, xx = np.mgrid[0:size, 0:size]
    base = 90 + 40 * np.sin(xx / 17.0) * np.cos(yy / 23.0)
    return base + rng.normal(0, 6, (size, size))


def _patch(kind, h, w, rng):
    yy, xx = np.mgrid[0:h, 0:w]
    theta = TEXTURES[kind]
    phase = xx * np.cos(theta) + yy * np.sin(theta)
    return 128 + 90 * np.sign(np.sin(phase / 2.5)) + rng.normal(0, 4, (h, w))


def scene(objects, seed, size=SIZE):
    """RGB scene holding ``objects = [(kind, x, y, w, h), ...]``."""
    rng = np.random.default_rng(seed)
    gray = _background(rng, size)
    for kind, x, y, w, h in objects:
        gray[y : y + h, x : x + w] = _patch(kind, h, w, rng)
    tint = np.array([1.0, 0.9, 0.8])[:, None, None]
    planes = np.clip(gray[None] * tint + rng.normal(0, 2, (3, size, size)), 0, 255)
    return RasterImage(np.rint(planes), "RGB")


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1)
        fh.write("\n")


CUSTOMERS = {
    "alice": [("car", 10, 12, 40, 28), ("tree", 70, 20, 30, 60), ("person", 30, 80, 24, 36)],
    "bob": [("sign", 60, 60, 40, 40), ("car", 8, 70, 44, 30)],
    "carol": [("person", 20, 20, 30, 50), ("tree", 80, 10, 30, 70), ("sign", 70, 90, 30, 30)],
}

# what each customer's photo library is full of
REPOSITORIES = {
    "alice": [("tree", 3), ("car", 1), ("person", 1)],
    "bob": [("car", 3), ("sign", 1)],
    "carol": [("sign", 2), ("person", 1), ("tree", 1)],
}


def main():
    os.makedirs(os.path.join(HERE, "images"), exist_ok=True)
    for n, (name, objects) in enumerate(sorted(CUSTOMERS.items())):
        write_image(os.path.join(HERE, "images", f"{name}.ppm"), scene(objects, 100 + n))
        ann = [{"label": kind, "x": x, "y": y, "w": w, "h": h, "level": 2} for kind, x, y, w, h in objects]
        _write_json(os.path.join(HERE, "images", f"{name}.json"), ann)

        repo_dir = os.path.join(HERE, "repositories", name)
        os.makedirs(repo_dir, exist_ok=True)
        manifest = []
        k = 0
        for kind, count in REPOSITORIES[name]:
            for _ in range(count):
                # a close-up of one object, framed like a holiday snapshot
                img = scene([(kind, 16, 16, 96, 96)], 1000 + 37 * n + k)
                fname = f"{k:02d}_{kind}.ppm"
                write_image(os.path.join(repo_dir, fname), img)
                manifest.append({"image_path": fname, "labels": [kind]})
                k += 1
        _write_json(os.path.join(repo_dir, "manifest.json"), manifest)

    # single-object test image used by the determinism checks
    write_image(os.path.join(HERE, "images", "test.ppm"), scene([("car", 40, 40, 48, 48)], 7))
    _write_json(os.path.join(HERE, "images", "test.json"),
                [{"label": "car", "x": 40, "y": 40, "w": 48, "h": 48, "level": 2}])

    table = synthesize_survey(500, noise_sd=0.02, seed=11)
    with open(os.path.join(HERE, "survey.csv"), "w", newline="") as fh:
        fh.write(table.to_csv())


if __name__ == "__main__":
    main()
