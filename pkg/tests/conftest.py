import sys

import numpy as np
import pytest

from pddm.data import SceneSpec, sample_random, synth_scene


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_scene():
    """16x16 scene with 64 random samples (image, gt, samples)."""
    image, gt = synth_scene(SceneSpec(width=16, height=16, n_boxes=1, n_spheres=1, seed=3))
    return image, gt, sample_random(gt, 64, 3)


@pytest.fixture(scope="session")
def toy_scene():
    """The default 64x48 scene with 500 random samples."""
    image, gt = synth_scene(SceneSpec(seed=0))
    return image, gt, sample_random(gt, 500, 0)


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance verdicts, one line per criterion, after the run."""
    results = next((getattr(m, "RESULTS") for name, m in list(sys.modules.items())
                    if name.endswith("test_acceptance") and hasattr(m, "RESULTS")), None)
    if results:
        terminalreporter.section("acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])
