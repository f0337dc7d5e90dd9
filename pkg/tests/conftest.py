import os

import pytest
from hypothesis import settings

from spiked_langevin.chsck import Moments
from spiked_langevin.spectral import Discrete, semicircle_quadrature

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def rule200():
    return semicircle_quadrature(1.0, 200)


@pytest.fixture(scope="session")
def zero_atom():
    return Discrete([0.0], [1.0])


@pytest.fixture(scope="session")
def moments_ref():
    return Moments.from_params(1.0, 0.5)


def pytest_configure(config):
    config._acceptance_lines = []


@pytest.fixture(scope="session")
def acceptance_log(request):
    return request.config._acceptance_lines


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line[1])
