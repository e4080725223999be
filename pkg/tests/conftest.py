import numpy as np
import pytest

from amp2d.character import make_pointmass, make_walker5
from amp2d.clipgen import oscillate_clip
from amp2d.motion import MotionDataset


@pytest.fixture(scope="session")
def pointmass():
    return make_pointmass()


@pytest.fixture(scope="session")
def walker():
    return make_walker5()


@pytest.fixture(scope="session")
def oscillate_dataset(pointmass):
    clip = oscillate_clip(pointmass, duration=2.0, amplitude=0.8, frequency=1.0)
    return MotionDataset([clip], pointmass)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
