import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from peelkit.body import generate_toy_model  # noqa: E402
from peelkit.geometry import Camera  # noqa: E402
from peelkit.scenes import box, icosphere  # noqa: E402


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def toy_model():
    return generate_toy_model(6, 6000, seed=0)


@pytest.fixture(scope="session")
def cube():
    return box(1.0)


@pytest.fixture(scope="session")
def ico():
    return icosphere(1.0, 2)


@pytest.fixture
def ortho64():
    return Camera.default(64, projection="orthographic")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
