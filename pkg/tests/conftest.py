import pytest

from intensity_hybrids.attenuation import slit_packets
from intensity_hybrids.packets import build_setup

# flight path long enough for swept slit-2 trajectories to reach x = 3d
SWEEPER_L = 25.0


@pytest.fixture(scope="session")
def setup():
    return build_setup()


@pytest.fixture(scope="session")
def sweeper_setup():
    return build_setup(forward_screen_distance=SWEEPER_L)


@pytest.fixture(scope="session")
def packets(setup):
    return slit_packets(setup)
