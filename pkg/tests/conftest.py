import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from cartan_kill.frontends import chart_for  # noqa: E402


@pytest.fixture(scope="session")
def sphere_chart():
    return chart_for("sphere2")


@pytest.fixture(scope="session")
def flat_chart():
    return chart_for("flat2")


@pytest.fixture(scope="session")
def revolution_chart():
    return chart_for("revolution")


@pytest.fixture(scope="session")
def bump_chart():
    return chart_for("bump")


@pytest.fixture(scope="session")
def so3_chart():
    return chart_for("klein:so3")


@pytest.fixture(scope="session")
def heisenberg_chart():
    return chart_for("klein:heisenberg")


@pytest.fixture
def rng():
    return np.random.default_rng(7)
