import pytest

from leanloc.raster import CameraIntrinsics
from leanloc.scene import SynthCityConfig, synth_city

SEED7_CONFIG = SynthCityConfig(
    extent_x=200.0, extent_y=200.0, block=40.0, street=10.0,
    height_min=8.0, height_max=24.0, jitter=0.3, seed=7,
)


@pytest.fixture(scope="session")
def seed7_city():
    return synth_city(SEED7_CONFIG)


@pytest.fixture(scope="session")
def cam():
    return CameraIntrinsics()
