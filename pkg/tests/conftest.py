import os
import sys

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

from satband.imaging import RasterImage  # noqa: E402

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
SCENARIOS = os.path.join(ROOT, "scenarios")

# numba compiles on first use, so per-example deadlines are meaningless
settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


@pytest.fixture
def scenarios_dir():
    return SCENARIOS


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def gray_image(values) -> RasterImage:
    return RasterImage(np.asarray(values, dtype=float)[None], "Gray")


def textured_gray(seed: int, size: int = 64) -> RasterImage:
    """Smooth field plus texture, clipped to the 8-bit range."""
    from scipy.ndimage import gaussian_filter

    r = np.random.default_rng(seed)
    field = gaussian_filter(r.normal(0, 1, (size, size)), 3) * 300 + 128
    return gray_image(np.clip(np.rint(field + r.normal(0, 6, (size, size))), 0, 255))


_ACCEPTANCE = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or report.when != "call":
        return
    detail = dict(item.user_properties).get("detail", "")
    _ACCEPTANCE.append((marker.args[0], marker.kwargs.get("name", item.name), report.passed,
                        report.duration, detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num, name, passed, duration, detail in sorted(_ACCEPTANCE):
        status = "PASS" if passed else "FAIL"
        extra = f" [{detail}]" if detail else ""
        terminalreporter.write_line(f"criterion {num:2d} {status}  {name} ({duration:.1f} s){extra}")
