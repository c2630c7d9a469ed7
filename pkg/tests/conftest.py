from __future__ import annotations

import re

import numpy as np
import pytest

from tokensight.imgio import Image


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion."""
    lines = {}
    for status, label in (("passed", "PASS"), ("failed", "FAIL"), ("error", "FAIL")):
        for report in terminalreporter.stats.get(status, []):
            if "test_acceptance" not in getattr(report, "nodeid", ""):
                continue
            if status == "passed" and report.when != "call":
                continue
            name = report.nodeid.split("::")[-1]
            match = re.match(r"test_c(\d+)_(\w+)", name)
            if match:
                number = int(match.group(1))
                title = match.group(2).replace("_", " ")
                lines[number] = f"criterion {number:>2} {label}: {title}"
    if lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for number in sorted(lines):
            terminalreporter.write_line(lines[number])


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def solid_image(width: int, height: int, color=(200, 200, 200)) -> Image:
    px = np.empty((height, width, 3), dtype=np.uint8)
    px[:] = color
    return Image(px)


def random_image(rng, width: int, height: int) -> Image:
    return Image(rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8))
