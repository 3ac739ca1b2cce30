import numpy as np
import pytest
from hypothesis import settings

from qdsom.grid_env import BuildingProfile, EnvConfig

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")


def flat_profile(name="Household", need=1000.0, hours=24, **overrides):
    return BuildingProfile.from_needs(name, np.full(hours, need), **overrides)


def make_config(counts=(2,), needs=(1000.0,), **kwargs):
    roster = [(flat_profile(f"P{i}", need), c) for i, (c, need) in enumerate(zip(counts, needs))]
    return EnvConfig(roster=roster, **kwargs)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from _acceptance_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
