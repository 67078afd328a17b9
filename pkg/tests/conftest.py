import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def textured(rng, h, w, scale=4):
    """Smooth random texture with strong gradients (for flow tests)."""
    import cv2
    coarse = rng.uniform(0, 255, (h // scale + 2, w // scale + 2)).astype(np.float32)
    big = cv2.resize(coarse, ((w // scale + 2) * scale, (h // scale + 2) * scale), interpolation=cv2.INTER_CUBIC)
    return np.clip(big[:h, :w], 0, 255).astype(np.uint8)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
